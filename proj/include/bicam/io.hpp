#pragma once

// File formats: binary PPM/PGM (maxval 255), CSV grids, heatmap rendering,
// and the BICAMW1 weight container.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bicam/evaluation.hpp"
#include "bicam/tensor.hpp"
#include "bicam/vit.hpp"

namespace bicam::io {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  std::uint8_t r(std::size_t x, std::size_t y) const { return pixels[(y * width + x) * 3]; }
  std::uint8_t g(std::size_t x, std::size_t y) const { return pixels[(y * width + x) * 3 + 1]; }
  std::uint8_t b(std::size_t x, std::size_t y) const { return pixels[(y * width + x) * 3 + 2]; }
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

RgbImage read_ppm(const std::filesystem::path& path);
RgbImage read_ppm(std::istream& in);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
void write_ppm(std::ostream& out, const RgbImage& image);

GrayImage read_pgm(const std::filesystem::path& path);
GrayImage read_pgm(std::istream& in);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// PGM ground truth: pixel > 127 -> 1.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// RGB bytes -> image[1, 3, H, W] with values byte / 255.
Tensor to_tensor(const RgbImage& image);
/// image[1, 3, H, W] in [0, 1] -> RGB bytes, round(v * 255) after clamping.
RgbImage to_rgb(const Tensor& image);

Tensor load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Tensor& image);

// Diverging colormap for signed maps. With s = max|M| (or the given scale)
// and v = M / s: v >= 0 -> (255, 255 - round(255 v), 255 - round(255 v));
// v < 0 -> (255 - round(255 |v|), 255 - round(255 |v|), 255). Zero, and any
// map with s = 0, renders white.
RgbImage render_signed(const Tensor& map);
RgbImage render_signed(const Tensor& map, double scale);

struct ChannelRenders {
  RgbImage positive;  // red shades, white where M <= 0
  RgbImage negative;  // blue shades, white where M >= 0
};

/// Both channels rendered with the full map's symmetric scale, so the
/// signed rendering equals `positive` where M >= 0 and `negative` elsewhere.
ChannelRenders render_channels(const Tensor& map);

/// Trailing two axes of `grid` as CSV rows; leading axes must be 1.
/// Values use %.17g so a read back is bit-exact.
void write_grid_csv(std::ostream& out, const Tensor& grid);
void write_grid_csv(const std::filesystem::path& path, const Tensor& grid);
Tensor read_grid_csv(std::istream& in);
Tensor read_grid_csv(const std::filesystem::path& path);

std::string format_double(double value);

// ---- BICAMW1 weights ------------------------------------------------------
//
//   "BICAMW1"                                      7 bytes
//   u32 x 10: image_height, image_width, patch_size, num_layers, num_heads,
//             embed_dim, ffn_dim, num_classes, distillation_token (0/1),
//             layer_window
//   f64: temperature
//   u32: tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 x rank dims,
//               f64 x prod(dims) row-major payload
//
// All integers little-endian, doubles IEEE-754 binary64 little-endian.

inline constexpr char kWeightsMagic[] = "BICAMW1";

std::vector<std::uint8_t> serialize_model(const ViTModel& model);
ViTModel deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const std::filesystem::path& path, const ViTModel& model);
ViTModel load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace bicam::io
