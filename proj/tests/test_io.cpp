#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "bicam/error.hpp"
#include "bicam/io.hpp"
#include "test_support.hpp"

namespace bicam {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() /
                     ("bicam_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                      "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

io::RgbImage random_rgb(std::size_t w, std::size_t h, std::uint64_t seed) {
  io::RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  const Tensor r = random_tensor({w * h * 3}, seed, 0.0, 256.0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(r[i]);
  return img;
}

TEST(Netpbm, PpmRoundTrip) {
  const auto img = random_rgb(5, 3, 1);
  std::stringstream ss;
  io::write_ppm(ss, img);
  EXPECT_EQ(ss.str().substr(0, 11), "P6\n5 3\n255\n");
  const auto back = io::read_ppm(ss);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.pixels, img.pixels);

  const fs::path d = temp_dir();
  io::write_ppm(d / "a.ppm", img);
  EXPECT_EQ(io::read_ppm(d / "a.ppm").pixels, img.pixels);
}

TEST(Netpbm, HeaderCommentsAreSkipped) {
  std::string s = "P6\n# comment\n2 1 # trailing\n255\n";
  s += std::string("\x01\x02\x03\x04\x05\x06", 6);
  std::stringstream ss(s);
  const auto img = io::read_ppm(ss);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6}));
}

TEST(Netpbm, CorruptInputIsFormatError) {
  auto parse = [](const std::string& s) {
    std::stringstream ss(s);
    return io::read_ppm(ss);
  };
  EXPECT_THROW(parse("P5\n1 1\n255\n\x01"), FormatError);
  EXPECT_THROW(parse("P6\nx 1\n255\n"), FormatError);
  EXPECT_THROW(parse("P6\n1 1\n65535\n"), FormatError);
  EXPECT_THROW(parse("P6\n0 1\n255\n"), FormatError);
  EXPECT_THROW(parse("P6\n2 2\n255\nabc"), FormatError);
  EXPECT_THROW(parse(""), FormatError);
  EXPECT_THROW(io::read_ppm(fs::path("/nonexistent/x.ppm")), IoError);
}

TEST(Netpbm, PgmAndMasks) {
  const fs::path d = temp_dir();
  io::GrayImage g{3, 2, {0, 127, 128, 255, 10, 200}};
  io::write_pgm(d / "m.pgm", g);
  EXPECT_EQ(io::read_pgm(d / "m.pgm").pixels, g.pixels);
  const BinaryMask m = io::read_mask(d / "m.pgm");
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 0, 1, 1, 0, 1}));
  io::write_mask(d / "w.pgm", m);
  EXPECT_EQ(io::read_mask(d / "w.pgm"), m);
  std::stringstream ss("P6\n1 1\n255\nabc");
  EXPECT_THROW(io::read_pgm(ss), FormatError);
}

TEST(Images, TensorConversion) {
  const auto img = random_rgb(4, 2, 2);
  const Tensor t = io::to_tensor(img);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 2, 4}));
  EXPECT_EQ(t.at({0, 1, 1, 3}), img.g(3, 1) / 255.0);
  EXPECT_EQ(io::to_rgb(t).pixels, img.pixels);
  Tensor out_of_range(Shape{1, 3, 1, 1}, std::vector<double>{-0.5, 1.5, 0.5});
  const auto c = io::to_rgb(out_of_range);
  EXPECT_EQ(c.pixels, (std::vector<std::uint8_t>{0, 255, 128}));
}

TEST(Colormap, TwoByTwoHandValues) {
  const Tensor m(Shape{2, 2}, std::vector<double>{2.0, -1.0, 0.0, -2.0});
  const auto img = io::render_signed(m);
  // s = 2: +1 -> red, -0.5 -> light blue, 0 -> white, -1 -> blue.
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{255, 0, 0, 127, 127, 255, 255, 255, 255, 0, 0, 255}));
  const auto ch = io::render_channels(m);
  EXPECT_EQ(ch.positive.pixels,
            (std::vector<std::uint8_t>{255, 0, 0, 255, 255, 255, 255, 255, 255, 255, 255, 255}));
  EXPECT_EQ(ch.negative.pixels,
            (std::vector<std::uint8_t>{255, 255, 255, 127, 127, 255, 255, 255, 255, 0, 0, 255}));
}

TEST(Colormap, ZeroMapRendersWhite) {
  const auto img = io::render_signed(Tensor(Shape{1, 1, 3, 3}));
  for (auto b : img.pixels) EXPECT_EQ(b, 255);
}

TEST(Colormap, ChannelsComposeToSigned) {
  const Tensor m = random_tensor({1, 1, 6, 5}, 3);
  const auto s = io::render_signed(m);
  const auto ch = io::render_channels(m);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& src = m[i] >= 0 ? ch.positive : ch.negative;
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s.pixels[i * 3 + k], src.pixels[i * 3 + k]);
  }
}

TEST(GridCsv, BitExactRoundTrip) {
  Tensor g = random_tensor({1, 3, 4}, 4, -1e3, 1e3);
  g[0] = 1e-300;
  g[1] = -0.0;
  g[2] = 0.1;
  std::stringstream ss;
  io::write_grid_csv(ss, g);
  const Tensor back = io::read_grid_csv(ss);
  EXPECT_EQ(back.shape(), (Shape{3, 4}));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a = back[i], b = g[i];
    EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0) << i;
  }
  std::stringstream bad("1,2\n3\n");
  EXPECT_THROW(io::read_grid_csv(bad), FormatError);
  std::stringstream junk("1,x\n");
  EXPECT_THROW(io::read_grid_csv(junk), FormatError);
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
}

TEST(Weights, RoundTripIsExact) {
  ViTConfig c;
  c.distillation_token = true;
  c.layer_window = 2;
  c.temperature = 1.5;
  const auto m = init_model(c, 7);
  const auto bytes = io::serialize_model(m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), "BICAMW1");
  const auto back = io::deserialize_model(bytes);
  EXPECT_EQ(back.config(), c);
  EXPECT_EQ(back.weights().checksum(), m.weights().checksum());
  EXPECT_EQ(io::serialize_model(back), bytes);

  const fs::path d = temp_dir();
  io::save_model(d / "w.bin", m);
  EXPECT_EQ(io::read_file_bytes(d / "w.bin"), bytes);
  EXPECT_EQ(io::load_model(d / "w.bin").weights().checksum(), m.weights().checksum());
}

TEST(Weights, LayoutIsLittleEndianAsDocumented) {
  const auto m = init_model(ViTConfig{}, 8);
  const auto b = io::serialize_model(m);
  auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) |
                                      (static_cast<std::uint32_t>(b[off + 3]) << 24));
  };
  EXPECT_EQ(u32(7), 16u);        // image_height
  EXPECT_EQ(u32(7 + 4 * 3), 4u);  // num_layers
  EXPECT_EQ(u32(7 + 4 * 7), 2u);  // num_classes
  double t;
  std::memcpy(&t, b.data() + 7 + 40, 8);
  EXPECT_EQ(t, 2.0);
  EXPECT_EQ(u32(7 + 48), m.weights().names().size());
}

TEST(Weights, CorruptionIsDetected) {
  const auto m = init_model(ViTConfig{}, 9);
  const auto good = io::serialize_model(m);
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(io::deserialize_model(bad), FormatError);
  bad = good;
  bad.resize(bad.size() - 3);
  EXPECT_THROW(io::deserialize_model(bad), FormatError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(io::deserialize_model(bad), FormatError);
  bad = good;
  bad[7 + 4 * 5] = 15;  // embed_dim not divisible by heads
  EXPECT_THROW(io::deserialize_model(bad), FormatError);
  bad = good;
  bad[7 + 4 * 7] = 3;  // num_classes changes the head shape
  EXPECT_THROW(io::deserialize_model(bad), FormatError);
  EXPECT_THROW(io::deserialize_model({}), FormatError);

  const fs::path d = temp_dir();
  std::ofstream(d / "junk.bin") << "not weights";
  EXPECT_THROW(io::load_model(d / "junk.bin"), FormatError);
  EXPECT_THROW(io::load_model(d / "missing.bin"), IoError);
}

}  // namespace
}  // namespace bicam
