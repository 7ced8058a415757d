#include "bicam/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "bicam/error.hpp"

namespace bicam {

SyntheticSample synthetic_sample(std::size_t height, std::size_t width, std::size_t num_classes,
                                 std::size_t label, Rng& rng, const SyntheticTask& task) {
  if (label >= num_classes) throw ParameterError("synthetic label out of range");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double base = 0.5 + task.brightness_jitter * unit(rng);
  const bool top = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
  const double angle = std::numbers::pi * static_cast<double>(label) / static_cast<double>(num_classes);
  const double cx = std::cos(angle), cy = std::sin(angle);

  SyntheticSample s{Tensor(Shape{1, 3, height, width}), BinaryMask(height, width)};
  for (std::size_t y = 0; y < height; ++y) {
    const bool textured = (y < height / 2) == top;
    for (std::size_t x = 0; x < width; ++x) {
      double v = base;
      if (textured) {
        // Period-2 square wave; the 0.25 offset keeps samples off the zero crossings.
        const double wave = std::cos(std::numbers::pi * (cx * static_cast<double>(x) +
                                                         cy * static_cast<double>(y)) + 0.25);
        v += wave >= 0.0 ? task.amplitude : -task.amplitude;
        s.target.bits[y * width + x] = 1;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        s.image[(c * height + y) * width + x] = std::clamp(v + task.noise * unit(rng), 0.0, 1.0);
      }
    }
  }
  return s;
}

namespace {

struct Batch {
  Tensor images;
  std::vector<std::size_t> labels;
};

Batch make_batch(const ViTConfig& c, std::size_t n, Rng& rng, const SyntheticTask& task) {
  Batch b{Tensor(Shape{n, 3, c.image_height, c.image_width}), {}};
  const std::size_t per = 3 * c.image_height * c.image_width;
  std::uniform_int_distribution<std::size_t> pick(0, c.num_classes - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = pick(rng);
    Tensor img = synthetic_sample(c.image_height, c.image_width, c.num_classes, label, rng, task).image;
    std::copy(img.data().begin(), img.data().end(), b.images.data().begin() + static_cast<long>(i * per));
    b.labels.push_back(label);
  }
  return b;
}

}  // namespace

TrainStats train_toy(ViTModel& model, const TrainOptions& options) {
  if (options.batch_size == 0) throw ParameterError("batch_size must be positive");
  if (!(options.learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  const ViTConfig& c = model.config();
  Rng rng(options.seed);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::map<std::string, std::pair<Tensor, Tensor>> moments;
  for (const auto& name : model.weights().names()) {
    const Shape& s = model.weights().get(name).shape();
    moments.emplace(name, std::make_pair(Tensor(s), Tensor(s)));
  }

  TrainStats stats;
  for (std::size_t step = 1; step <= options.steps; ++step) {
    SyntheticTask task = options.task;
    const double half = std::max(1.0, static_cast<double>(options.steps) / 2.0);
    const double ramp = std::max(0.0, 1.0 - static_cast<double>(step - 1) / half);
    task.amplitude += (options.warmup_amplitude - task.amplitude) * ramp;
    Batch batch = make_batch(c, options.batch_size, rng, task);
    ForwardPass pass = forward(model, batch.images, ForwardOptions{.parameter_gradients = true});
    ad::Var loss = ad::cross_entropy(pass.logits_var(), batch.labels);
    pass.backward(loss);
    if (step == 1) stats.initial_loss = loss.value().item();
    stats.final_loss = loss.value().item();

    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (auto& [name, mv] : moments) {
      if (name == "pos_embed") continue;
      const Tensor g = pass.parameter_gradient(name);
      Tensor w = model.weights().get(name);
      auto& [m, v] = mv;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        w[i] -= options.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
      model.mutable_weights().set(name, std::move(w));
    }
    stats.steps = step;
  }

  Rng eval_rng(derive_seed(options.seed, "heldout"));
  Batch heldout = make_batch(c, 64, eval_rng, options.task);
  Tensor logits = predict_logits(model, heldout.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < heldout.labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c.num_classes; ++k) {
      if (logits[i * c.num_classes + k] > logits[i * c.num_classes + best]) best = k;
    }
    if (best == heldout.labels[i]) ++correct;
  }
  stats.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(heldout.labels.size());
  return stats;
}

}  // namespace bicam
