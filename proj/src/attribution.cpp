#include "bicam/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "bicam/error.hpp"

namespace bicam {

Tensor attribution_alpha(const LayerCapture& capture, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("attribution temperature must be positive");
  const Tensor& a = capture.attn_logits;
  if (a.rank() != 4 || a.dim(2) != a.dim(3)) {
    throw DimensionError("attention logits must be [B,H,N,N], got " + shape_str(a.shape()));
  }
  const std::size_t B = a.dim(0), H = a.dim(1), N = a.dim(2);
  Tensor cls_rows(Shape{B, H, N});
  for (std::size_t bh = 0; bh < B * H; ++bh) {
    std::copy_n(a.data().data() + bh * N * N, N, cls_rows.data().data() + bh * N);
  }
  return ad::softmax_values(cls_rows, temperature);
}

Tensor layer_mask(const LayerCapture& capture, const Tensor& alpha) {
  if (!capture.cls_out_grad) {
    throw StateError("layer " + std::to_string(capture.layer) +
                     ": cls_out_grad missing; run backward_class first");
  }
  const Tensor& v = capture.values;
  const Tensor& w = *capture.cls_out_grad;
  if (v.rank() != 4) throw DimensionError("values must be [B,H,N,d_h]");
  const std::size_t B = v.dim(0), H = v.dim(1), N = v.dim(2), dh = v.dim(3);
  if (w.shape() != Shape{B, H * dh}) {
    throw DimensionError("cls_out_grad " + shape_str(w.shape()) + " does not match values " +
                         shape_str(v.shape()));
  }
  if (alpha.shape() != Shape{B, H, N}) {
    throw DimensionError("alpha " + shape_str(alpha.shape()) + " does not match values");
  }
  Tensor mask(Shape{B, N});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      const double* wh = w.data().data() + b * H * dh + h * dh;
      for (std::size_t i = 0; i < N; ++i) {
        const double* vi = v.data().data() + ((b * H + h) * N + i) * dh;
        double proj = 0.0;
        for (std::size_t j = 0; j < dh; ++j) proj += vi[j] * wh[j];
        mask[b * N + i] += proj * alpha[(b * H + h) * N + i];
      }
    }
  }
  return mask;
}

Tensor aggregate_masks(const std::vector<LayerCapture>& captures, double temperature) {
  if (captures.empty()) throw ContractError("no layer captures to aggregate");
  Tensor total;
  for (const auto& cap : captures) {
    Tensor m = layer_mask(cap, attribution_alpha(cap, temperature));
    if (total.size() == 0) {
      total = std::move(m);
    } else {
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += m[i];
    }
  }
  return total;
}

Tensor tokens_to_grid(const Tensor& token_mask, const ViTConfig& config) {
  const std::size_t N = config.num_tokens();
  if (token_mask.rank() != 2 || token_mask.dim(1) != N) {
    throw DimensionError("token mask " + shape_str(token_mask.shape()) + " does not have " +
                         std::to_string(N) + " tokens");
  }
  const std::size_t B = token_mask.dim(0);
  const std::size_t skip = config.num_special_tokens();
  const std::size_t P = config.num_patches();
  Tensor grid(Shape{B, config.grid_height(), config.grid_width()});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(token_mask.data().data() + b * N + skip, P, grid.data().data() + b * P);
  }
  return grid;
}

Tensor upsample(const Tensor& grid, std::size_t height, std::size_t width, Upsample mode) {
  if (grid.rank() != 3) throw DimensionError("upsample expects grid [B, gh, gw]");
  const std::size_t B = grid.dim(0), gh = grid.dim(1), gw = grid.dim(2);
  if (gh == 0 || gw == 0 || height == 0 || width == 0) throw DimensionError("empty upsample");
  Tensor out(Shape{B, 1, height, width});
  const double sy = static_cast<double>(gh) / static_cast<double>(height);
  const double sx = static_cast<double>(gw) / static_cast<double>(width);
  for (std::size_t b = 0; b < B; ++b) {
    const double* g = grid.data().data() + b * gh * gw;
    double* o = out.data().data() + b * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        if (mode == Upsample::Nearest) {
          const auto iy = std::min(gh - 1, static_cast<std::size_t>(static_cast<double>(y) * sy));
          const auto ix = std::min(gw - 1, static_cast<std::size_t>(static_cast<double>(x) * sx));
          o[y * width + x] = g[iy * gw + ix];
          continue;
        }
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(gh - 1));
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(gw - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t y1 = std::min(y0 + 1, gh - 1);
        const std::size_t x1 = std::min(x0 + 1, gw - 1);
        const double ty = fy - static_cast<double>(y0);
        const double tx = fx - static_cast<double>(x0);
        const double top = g[y0 * gw + x0] * (1.0 - tx) + g[y0 * gw + x1] * tx;
        const double bottom = g[y1 * gw + x0] * (1.0 - tx) + g[y1 * gw + x1] * tx;
        o[y * width + x] = top * (1.0 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

AttributionMap bicam(const ViTModel& model, const Tensor& image, std::size_t class_index,
                     const AttributionOptions& options) {
  const ViTConfig& c = model.config();
  const std::size_t window = options.window.value_or(c.layer_window);
  const double temperature = options.temperature.value_or(c.temperature);
  if (window < 1 || window > c.num_layers) {
    throw ParameterError("layer window " + std::to_string(window) + " outside [1, " +
                         std::to_string(c.num_layers) + "]");
  }
  if (!(temperature > 0.0)) throw ParameterError("attribution temperature must be positive");
  if (class_index >= c.num_classes) {
    throw ParameterError("class index " + std::to_string(class_index) + " out of range");
  }

  ForwardPass pass = forward(model, image, ForwardOptions{.capture_window = window});
  pass.backward_class(class_index);

  AttributionMap map;
  map.patch_scores = tokens_to_grid(aggregate_masks(pass.captures(), temperature), c);
  map.heatmap = upsample(map.patch_scores, c.image_height, c.image_width, options.upsample);
  map.class_index = class_index;
  map.window = window;
  map.temperature = temperature;
  map.is_signed = true;
  return map;
}

Tensor rollout_from_attention(const std::vector<Tensor>& attention) {
  if (attention.empty()) throw ContractError("rollout needs at least one attention layer");
  const Tensor& first = attention.front();
  if (first.rank() != 4 || first.dim(2) != first.dim(3)) {
    throw DimensionError("attention must be [B,H,N,N]");
  }
  const std::size_t B = first.dim(0), N = first.dim(2);
  Tensor cls_rows(Shape{B, N});
  for (std::size_t b = 0; b < B; ++b) {
    // joint starts as identity; each layer left-multiplies.
    std::vector<double> joint(N * N, 0.0);
    for (std::size_t i = 0; i < N; ++i) joint[i * N + i] = 1.0;
    for (const Tensor& att : attention) {
      if (att.shape() != first.shape()) throw DimensionError("attention shapes differ by layer");
      const std::size_t H = att.dim(1);
      std::vector<double> aug(N * N, 0.0);
      for (std::size_t h = 0; h < H; ++h) {
        const double* a = att.data().data() + (b * H + h) * N * N;
        for (std::size_t k = 0; k < N * N; ++k) aug[k] += a[k];
      }
      for (std::size_t i = 0; i < N; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
          aug[i * N + j] = aug[i * N + j] / static_cast<double>(H) + (i == j ? 1.0 : 0.0);
          row += aug[i * N + j];
        }
        for (std::size_t j = 0; j < N; ++j) aug[i * N + j] /= row;
      }
      std::vector<double> next(N * N, 0.0);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < N; ++k) {
          const double aik = aug[i * N + k];
          for (std::size_t j = 0; j < N; ++j) next[i * N + j] += aik * joint[k * N + j];
        }
      joint = std::move(next);
    }
    std::copy_n(joint.begin(), N, cls_rows.data().data() + b * N);
  }
  return cls_rows;
}

AttributionMap attention_rollout(const ViTModel& model, const Tensor& image, Upsample mode) {
  const ViTConfig& c = model.config();
  ForwardPass pass = forward(model, image, ForwardOptions{.capture_window = c.num_layers});
  std::vector<Tensor> attention;
  for (const auto& cap : pass.captures()) {
    attention.push_back(ad::softmax_values(cap.attn_logits, 1.0));
  }
  AttributionMap map;
  map.patch_scores = tokens_to_grid(rollout_from_attention(attention), c);
  map.heatmap = upsample(map.patch_scores, c.image_height, c.image_width, mode);
  map.window = c.num_layers;
  map.temperature = 1.0;
  map.is_signed = false;
  return map;
}

ChannelSplit split_channels(const Tensor& map) {
  ChannelSplit out{Tensor(map.shape()), Tensor(map.shape())};
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double v = map[i];
    out.positive[i] = v > 0.0 ? v : 0.0;
    out.negative[i] = v < 0.0 ? -v : 0.0;
  }
  return out;
}

}  // namespace bicam
