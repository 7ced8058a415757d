#include "bicam/vit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bicam/error.hpp"
#include "bicam/rng.hpp"

namespace bicam {

namespace {

std::atomic<std::uint64_t> g_forwards{0};
std::atomic<std::uint64_t> g_backwards{0};

std::string block_name(std::size_t index, const char* suffix) {
  return "blocks." + std::to_string(index) + "." + suffix;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_norm_gain(const std::string& name) {
  return ends_with(name, "norm1.weight") || ends_with(name, "norm2.weight") ||
         name == "norm.weight";
}

}  // namespace

PassCounters pass_counters() { return {g_forwards.load(), g_backwards.load()}; }

// ---- ViTConfig ------------------------------------------------------------

std::size_t ViTConfig::default_window(std::size_t num_layers) {
  const auto w = static_cast<std::size_t>(std::lround(2.0 * static_cast<double>(num_layers) / 3.0));
  return std::clamp<std::size_t>(w, 1, std::max<std::size_t>(num_layers, 1));
}

void ViTConfig::validate() const {
  auto fail = [](const std::string& m) { throw ParameterError("invalid ViT config: " + m); };
  if (patch_size == 0) fail("patch_size must be positive");
  if (image_height == 0 || image_width == 0) fail("image size must be positive");
  if (image_height % patch_size || image_width % patch_size) {
    fail("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
         " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (num_layers == 0) fail("num_layers must be positive");
  if (num_heads == 0 || embed_dim == 0 || embed_dim % num_heads) {
    fail("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (ffn_dim == 0) fail("ffn_dim must be positive");
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (layer_window < 1 || layer_window > num_layers) {
    fail("layer_window must lie in [1, " + std::to_string(num_layers) + "]");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be positive");
}

// ---- ViTWeights -----------------------------------------------------------

std::map<std::string, Shape> ViTWeights::expected_shapes(const ViTConfig& c) {
  const std::size_t d = c.embed_dim;
  std::map<std::string, Shape> s;
  s["patch_embed.weight"] = {3 * c.patch_size * c.patch_size, d};
  s["patch_embed.bias"] = {d};
  s["cls_token"] = {1, d};
  if (c.distillation_token) s["dist_token"] = {1, d};
  s["pos_embed"] = {c.num_tokens(), d};
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    s[block_name(i, "norm1.weight")] = {d};
    s[block_name(i, "norm1.bias")] = {d};
    for (const char* p : {"attn.q", "attn.k", "attn.v", "attn.proj"}) {
      s[block_name(i, (std::string(p) + ".weight").c_str())] = {d, d};
      s[block_name(i, (std::string(p) + ".bias").c_str())] = {d};
    }
    s[block_name(i, "norm2.weight")] = {d};
    s[block_name(i, "norm2.bias")] = {d};
    s[block_name(i, "mlp.fc1.weight")] = {d, c.ffn_dim};
    s[block_name(i, "mlp.fc1.bias")] = {c.ffn_dim};
    s[block_name(i, "mlp.fc2.weight")] = {c.ffn_dim, d};
    s[block_name(i, "mlp.fc2.bias")] = {d};
  }
  s["norm.weight"] = {d};
  s["norm.bias"] = {d};
  s["head.weight"] = {d, c.num_classes};
  s["head.bias"] = {c.num_classes};
  return s;
}

ViTWeights::ViTWeights(const ViTConfig& config) : shapes_(expected_shapes(config)) {
  for (const auto& [name, shape] : shapes_) {
    tensors_[name] = std::make_shared<const Tensor>(shape, is_norm_gain(name) ? 1.0 : 0.0);
  }
}

const Tensor& ViTWeights::get(const std::string& name) const { return *share(name); }

std::shared_ptr<const Tensor> ViTWeights::share(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ParameterError("unknown weight tensor '" + name + "'");
  return it->second;
}

void ViTWeights::set(const std::string& name, Tensor value) {
  auto it = shapes_.find(name);
  if (it == shapes_.end()) throw FormatError("unexpected weight tensor '" + name + "'");
  if (value.shape() != it->second) {
    throw FormatError("weight '" + name + "' has shape " + shape_str(value.shape()) +
                      ", config requires " + shape_str(it->second));
  }
  tensors_[name] = std::make_shared<const Tensor>(std::move(value));
}

std::vector<std::string> ViTWeights::names() const {
  std::vector<std::string> out;
  for (const auto& kv : shapes_) out.push_back(kv.first);
  return out;
}

std::size_t ViTWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& kv : tensors_) n += kv.second->size();
  return n;
}

std::uint64_t ViTWeights::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : tensors_) {
    mix(name.data(), name.size());
    for (auto dim : t->shape()) {
      const auto d64 = static_cast<std::uint64_t>(dim);
      mix(&d64, sizeof d64);
    }
    for (double v : t->data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      mix(&bits, sizeof bits);
    }
  }
  return h;
}

// ---- model ----------------------------------------------------------------

ViTModel::ViTModel(ViTConfig config, ViTWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  for (const auto& [name, shape] : ViTWeights::expected_shapes(config_)) {
    if (!weights_.contains(name) || weights_.get(name).shape() != shape) {
      throw FormatError("weights do not match config at tensor '" + name + "'");
    }
  }
}

ViTModel init_model(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  ViTWeights w(config);
  for (const auto& [name, shape] : ViTWeights::expected_shapes(config)) {
    if (ends_with(name, ".bias") || is_norm_gain(name)) continue;
    Rng rng(derive_seed(seed, name));
    Tensor t(shape);
    for (auto& v : t.data()) v = truncated_normal(rng, 0.02);
    w.set(name, std::move(t));
  }
  return ViTModel(config, std::move(w));
}

ad::Var ViTModel::logits(ad::Graph& graph, ad::Var image) const {
  return build(graph, image, Trace{});
}

ad::Var ViTModel::build(ad::Graph& graph, ad::Var image, const Trace& trace) const {
  using namespace ad;
  check_image_shape(*this, image.value());
  g_forwards.fetch_add(1, std::memory_order_relaxed);

  const ViTConfig& c = config_;
  const std::size_t B = image.value().dim(0);
  const std::size_t N = c.num_tokens();
  const std::size_t d = c.embed_dim;
  const std::size_t H = c.num_heads;
  const std::size_t dh = c.head_dim();

  auto param = [&](const std::string& name) -> Var {
    if (trace.params) return trace.params->at(name);
    return graph.constant(weights_.share(name));
  };
  auto linear = [&](Var x, const std::string& prefix) {
    return add(matmul(x, param(prefix + ".weight")), param(prefix + ".bias"));
  };
  auto repeat_batch = [&](Var token) {  // [1, d] -> [B, 1, d]
    Var t = reshape(token, {1, 1, d});
    std::vector<Var> copies(B, t);
    return B == 1 ? t : concat(copies, 0);
  };

  Var x = linear(patchify(image, c.patch_size), "patch_embed");
  std::vector<Var> parts{repeat_batch(param("cls_token"))};
  if (c.distillation_token) parts.push_back(repeat_batch(param("dist_token")));
  parts.push_back(x);
  Var tokens = add(concat(parts, 1), param("pos_embed"));

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::size_t layer = i + 1;
    const std::string pre = "blocks." + std::to_string(i) + ".";
    try {
      Var h = layernorm(tokens, param(pre + "norm1.weight"), param(pre + "norm1.bias"));
      auto heads = [&](Var t) { return transpose(reshape(t, {B, N, H, dh}), 1, 2); };
      Var q = heads(linear(h, pre + "attn.q"));
      Var k = heads(linear(h, pre + "attn.k"));
      Var v = heads(linear(h, pre + "attn.v"));
      Var scores = scale(matmul(q, transpose(k, -1, -2)), inv_sqrt_dh);
      Var ctx = matmul(softmax(scores, 1.0), v);
      Var merged = reshape(transpose(ctx, 1, 2), {B, N, d});

      if (trace.cls_offset && trace.cls_offset->layer == layer) {
        const Tensor& off = trace.cls_offset->offset;
        if (off.shape() != Shape{B, d}) throw DimensionError("cls offset must be [B, d]");
        Tensor full(Shape{B, N, d});
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < d; ++j) full[(b * N) * d + j] = off[b * d + j];
        merged = add(merged, graph.constant(std::move(full)));
      }

      if (trace.capture_from != 0 && layer >= trace.capture_from) {
        LayerCapture cap;
        cap.layer = layer;
        cap.attn_logits = scores.value();
        cap.values = v.value();
        cap.cls_out = Tensor(Shape{B, d});
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t j = 0; j < d; ++j)
            cap.cls_out[b * d + j] = merged.value()[(b * N) * d + j];
        trace.captures->push_back(std::move(cap));
        trace.attn_out_nodes->push_back(merged);
      }

      tokens = add(tokens, linear(merged, pre + "attn.proj"));
      Var h2 = layernorm(tokens, param(pre + "norm2.weight"), param(pre + "norm2.bias"));
      Var f = linear(gelu(linear(h2, pre + "mlp.fc1")), pre + "mlp.fc2");
      tokens = add(tokens, f);
    } catch (const NumericError& e) {
      throw NumericError("layer " + std::to_string(layer) + ": " + e.what());
    }
  }

  try {
    Var final_tokens = layernorm(tokens, param("norm.weight"), param("norm.bias"));
    Var cls = reshape(slice(final_tokens, 1, 0, 1), {B, d});
    return linear(cls, "head");
  } catch (const NumericError& e) {
    throw NumericError(std::string("classifier head: ") + e.what());
  }
}

ForwardPass forward(const ViTModel& model, const Tensor& image, const ForwardOptions& options) {
  const ViTConfig& c = model.config();
  if (options.capture_window > c.num_layers) {
    throw ParameterError("capture window " + std::to_string(options.capture_window) +
                         " exceeds layer count " + std::to_string(c.num_layers));
  }
  check_image_shape(model, image);

  ForwardPass pass;
  pass.graph_ = std::make_unique<ad::Graph>();
  pass.num_classes_ = c.num_classes;
  pass.image_ = pass.graph_->leaf(image);

  ViTModel::Trace trace;
  if (options.capture_window > 0) trace.capture_from = c.num_layers - options.capture_window + 1;
  if (options.cls_offset) trace.cls_offset = &*options.cls_offset;
  if (options.parameter_gradients) {
    for (const auto& name : model.weights().names()) {
      pass.params_[name] = pass.graph_->leaf(model.weights().get(name));
    }
    trace.params = &pass.params_;
  }
  trace.attn_out_nodes = &pass.attn_out_nodes_;
  trace.captures = &pass.captures_;
  pass.logits_ = model.build(*pass.graph_, pass.image_, trace);
  return pass;
}

void ForwardPass::backward_class(std::size_t class_index) {
  if (class_index >= num_classes_) {
    throw ParameterError("class index " + std::to_string(class_index) + " out of range [0, " +
                         std::to_string(num_classes_) + ")");
  }
  backward(ad::sum(ad::slice(logits_, 1, class_index, class_index + 1)));
}

void ForwardPass::backward(ad::Var root) {
  g_backwards.fetch_add(1, std::memory_order_relaxed);
  graph_->backward(root);
  for (std::size_t i = 0; i < captures_.size(); ++i) {
    const Tensor g = graph_->grad(attn_out_nodes_[i]);
    const std::size_t B = g.dim(0), N = g.dim(1), d = g.dim(2);
    Tensor cls_grad(Shape{B, d});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < d; ++j) cls_grad[b * d + j] = g[(b * N) * d + j];
    captures_[i].cls_out_grad = std::move(cls_grad);
  }
}

Tensor ForwardPass::input_gradient() const { return graph_->grad(image_); }

Tensor ForwardPass::parameter_gradient(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw StateError("parameter gradients were not requested for '" + name + "'");
  }
  return graph_->grad(it->second);
}

}  // namespace bicam
