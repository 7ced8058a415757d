#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "bicam/tensor.hpp"
#include "bicam/vit.hpp"

namespace bicam {

enum class Upsample { Bilinear, Nearest };

struct AttributionMap {
  Tensor patch_scores;  // [B, grid_h, grid_w], signed
  Tensor heatmap;       // [B, 1, H, W], upsampled patch_scores
  std::size_t class_index = 0;
  std::size_t window = 0;
  double temperature = 0.0;
  bool is_signed = true;  // false for class-agnostic baselines
};

struct AttributionOptions {
  std::optional<std::size_t> window;   // default: config.layer_window
  std::optional<double> temperature;   // default: config.temperature
  Upsample upsample = Upsample::Bilinear;
};

/// Temperature-scaled softmax over each head's [CLS] row of the captured
/// attention logits: [B, H, N].
Tensor attribution_alpha(const LayerCapture& capture, double temperature);

/// sum_h (V_h . w_{c,h}) * alpha_h for one layer, where w_{c,h} is the
/// head-h slice of d y_c / d o_cls. Returns [B, N], signed.
Tensor layer_mask(const LayerCapture& capture, const Tensor& alpha);

/// Sum of layer masks over all captures: [B, N].
Tensor aggregate_masks(const std::vector<LayerCapture>& captures, double temperature);

/// Drops the special tokens of a token mask [B, N] and lays the patch
/// tokens out on the grid: [B, grid_h, grid_w].
Tensor tokens_to_grid(const Tensor& token_mask, const ViTConfig& config);

/// grid [B, gh, gw] -> [B, 1, height, width]. Bilinear uses half-pixel
/// centers with edge clamping.
Tensor upsample(const Tensor& grid, std::size_t height, std::size_t width, Upsample mode);

/// Signed attribution from one instrumented forward pass and one backward
/// pass of y_c.
AttributionMap bicam(const ViTModel& model, const Tensor& image, std::size_t class_index,
                     const AttributionOptions& options = {});

/// [CLS] row of prod_l (row_normalize(mean_h A_l + I)), later layers on
/// the left. `attention` holds post-softmax [B, H, N, N] per layer in order.
Tensor rollout_from_attention(const std::vector<Tensor>& attention);

/// Class-agnostic Attention Rollout over every layer.
AttributionMap attention_rollout(const ViTModel& model, const Tensor& image,
                                 Upsample mode = Upsample::Bilinear);

struct ChannelSplit {
  Tensor positive;  // max(M, 0)
  Tensor negative;  // max(-M, 0)
};

ChannelSplit split_channels(const Tensor& map);

}  // namespace bicam
