#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bicam/autodiff.hpp"
#include "bicam/classifier.hpp"
#include "bicam/tensor.hpp"

namespace bicam {

struct ViTConfig {
  std::size_t image_height = 16;
  std::size_t image_width = 16;
  std::size_t patch_size = 4;
  std::size_t num_layers = 4;
  std::size_t num_heads = 2;
  std::size_t embed_dim = 16;
  std::size_t ffn_dim = 32;
  std::size_t num_classes = 2;
  bool distillation_token = false;
  // Attribution knobs; the forward network never reads them.
  std::size_t layer_window = 3;
  double temperature = 2.0;

  /// round(2L/3), clamped to [1, L].
  static std::size_t default_window(std::size_t num_layers);

  void validate() const;

  std::size_t grid_height() const { return image_height / patch_size; }
  std::size_t grid_width() const { return image_width / patch_size; }
  std::size_t num_patches() const { return grid_height() * grid_width(); }
  std::size_t num_special_tokens() const { return distillation_token ? 2 : 1; }
  std::size_t num_tokens() const { return num_patches() + num_special_tokens(); }
  std::size_t head_dim() const { return embed_dim / num_heads; }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

/// Named parameter tensors. Shapes are fixed by the config; set() rejects
/// anything else.
class ViTWeights {
 public:
  ViTWeights() = default;
  explicit ViTWeights(const ViTConfig& config);  // all zeros, LayerNorm gains one

  static std::map<std::string, Shape> expected_shapes(const ViTConfig& config);

  const Tensor& get(const std::string& name) const;
  std::shared_ptr<const Tensor> share(const std::string& name) const;
  void set(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  /// FNV-1a over names, shapes and the IEEE-754 bytes of every value, in
  /// name order. Identical weights give identical checksums.
  std::uint64_t checksum() const;

 private:
  std::map<std::string, Shape> shapes_;
  std::map<std::string, std::shared_ptr<const Tensor>> tensors_;
};

/// One layer's recorded quantities. `layer` is 1-based.
struct LayerCapture {
  std::size_t layer = 0;
  Tensor attn_logits;  // [B, H, N, N], already scaled by 1/sqrt(d_h)
  Tensor values;       // [B, H, N, d_h]
  Tensor cls_out;      // [B, d], concat over heads of softmax(logits[h,0,:]) . V_h
  std::optional<Tensor> cls_out_grad;  // [B, d] after backward_class
};

/// Additive offset applied to the [CLS] attention output of one layer.
/// Exists so tests can differentiate numerically with respect to o_cls.
struct ClsOffset {
  std::size_t layer = 0;  // 1-based
  Tensor offset;          // [B, d]
};

struct ForwardOptions {
  // Capture the last `capture_window` layers; 0 disables capture.
  std::size_t capture_window = 0;
  // Parameters become graph leaves (needed only for training).
  bool parameter_gradients = false;
  std::optional<ClsOffset> cls_offset;
};

class ViTModel;

/// Result of one instrumented forward pass. Owns the autodiff graph so the
/// captures can be completed by a later backward sweep.
class ForwardPass {
 public:
  const Tensor& logits() const { return logits_.value(); }
  std::vector<LayerCapture>& captures() { return captures_; }
  const std::vector<LayerCapture>& captures() const { return captures_; }

  /// Backpropagates y_c (summed over the batch) and fills every capture's
  /// cls_out_grad with d y_c / d o_cls.
  void backward_class(std::size_t class_index);

  /// d y_c / d image from the last backward_class().
  Tensor input_gradient() const;
  /// d y_c / d parameter (requires ForwardOptions::parameter_gradients).
  Tensor parameter_gradient(const std::string& name) const;

  /// Backpropagates an arbitrary scalar built on top of logits_var().
  void backward(ad::Var root);
  ad::Var logits_var() const { return logits_; }
  ad::Graph& graph() { return *graph_; }

 private:
  friend ForwardPass forward(const ViTModel&, const Tensor&, const ForwardOptions&);

  std::unique_ptr<ad::Graph> graph_;
  std::size_t num_classes_ = 0;
  ad::Var image_;
  ad::Var logits_;
  std::vector<ad::Var> attn_out_nodes_;  // [B, N, d] per capture
  std::map<std::string, ad::Var> params_;
  std::vector<LayerCapture> captures_;
};

class ViTModel final : public ImageClassifier {
 public:
  ViTModel(ViTConfig config, ViTWeights weights);

  const ViTConfig& config() const noexcept { return config_; }
  ViTConfig& mutable_config() noexcept { return config_; }
  const ViTWeights& weights() const noexcept { return weights_; }
  ViTWeights& mutable_weights() noexcept { return weights_; }

  ad::Var logits(ad::Graph& graph, ad::Var image) const override;
  std::size_t image_height() const override { return config_.image_height; }
  std::size_t image_width() const override { return config_.image_width; }
  std::size_t patch_size() const override { return config_.patch_size; }
  std::size_t num_classes() const override { return config_.num_classes; }

 private:
  friend ForwardPass forward(const ViTModel&, const Tensor&, const ForwardOptions&);

  struct Trace {
    std::size_t capture_from = 0;  // first 1-based layer captured; 0 = none
    const ClsOffset* cls_offset = nullptr;
    const std::map<std::string, ad::Var>* params = nullptr;
    std::vector<ad::Var>* attn_out_nodes = nullptr;
    std::vector<LayerCapture>* captures = nullptr;
  };

  ad::Var build(ad::Graph& graph, ad::Var image, const Trace& trace) const;

  ViTConfig config_;
  ViTWeights weights_;
};

/// Truncated-normal(0.02) initialization keyed by seed. LayerNorm gains are
/// one and all biases zero.
ViTModel init_model(const ViTConfig& config, std::uint64_t seed);

ForwardPass forward(const ViTModel& model, const Tensor& image, const ForwardOptions& options);

/// Process-wide counters of instrumented passes (forward() and
/// ForwardPass::backward_class / backward).
struct PassCounters {
  std::uint64_t forwards = 0;
  std::uint64_t backwards = 0;
};
PassCounters pass_counters();

}  // namespace bicam
