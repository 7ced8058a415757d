#include "bicam/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bicam/error.hpp"
#include "bicam/rng.hpp"

namespace bicam {

const char* to_string(AttackMethod method) noexcept {
  return method == AttackMethod::Pgd ? "pgd" : "mifgsm";
}

AttackMethod parse_attack_method(const std::string& name) {
  if (name == "pgd" || name == "PGD") return AttackMethod::Pgd;
  if (name == "mifgsm" || name == "mi-fgsm" || name == "MI-FGSM") return AttackMethod::MiFgsm;
  throw ParameterError("unknown attack method '" + name + "' (expected pgd or mifgsm)");
}

void AttackConfig::validate() const {
  // epsilon == 0 is accepted: the projection then returns the input.
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be >= 0");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ParameterError("step_size must be positive");
  }
  if (num_steps < 1) throw ParameterError("num_steps must be at least 1");
  if (!(momentum_decay >= 0.0 && momentum_decay <= 1.0)) {
    throw ParameterError("momentum_decay must lie in [0, 1]");
  }
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Onto the epsilon ball around `origin`, then onto [0, 1].
void project(Tensor& x, const Tensor& origin, double epsilon) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = origin[i] - epsilon;
    const double hi = origin[i] + epsilon;
    x[i] = std::clamp(std::clamp(x[i], lo, hi), 0.0, 1.0);
  }
}

void check_inputs(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                  const AttackConfig& cfg) {
  cfg.validate();
  check_image_shape(model, image);
  if (image.dim(0) != 1) throw DimensionError("attacks operate on a single image [1,3,H,W]");
  if (true_class >= model.num_classes()) throw ParameterError("true class out of range");
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("image values must lie in [0, 1]");
  }
}

}  // namespace

Tensor pgd_attack(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                  const AttackConfig& cfg, const IterateObserver& observer) {
  check_inputs(model, image, true_class, cfg);
  Tensor x = image;
  if (cfg.random_start && cfg.epsilon > 0.0) {
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
    for (auto& v : x.data()) v += u(rng);
    project(x, image, cfg.epsilon);
  }
  const std::vector<std::size_t> labels{true_class};
  for (std::size_t step = 1; step <= cfg.num_steps; ++step) {
    const Tensor g = cross_entropy_gradient(model, x, labels).gradient;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg.step_size * sign(g[i]);
    project(x, image, cfg.epsilon);
    if (observer) observer(step, x);
  }
  return x;
}

Tensor mifgsm_attack(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                     const AttackConfig& cfg, const IterateObserver& observer) {
  check_inputs(model, image, true_class, cfg);
  Tensor x = image;
  Tensor momentum(image.shape());
  const std::vector<std::size_t> labels{true_class};
  for (std::size_t step = 1; step <= cfg.num_steps; ++step) {
    const Tensor g = cross_entropy_gradient(model, x, labels).gradient;
    double l1 = 0.0;
    for (double v : g.data()) l1 += std::abs(v);
    const double inv = l1 > 0.0 ? 1.0 / l1 : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      momentum[i] = cfg.momentum_decay * momentum[i] + g[i] * inv;
      x[i] += cfg.step_size * sign(momentum[i]);
    }
    project(x, image, cfg.epsilon);
    if (observer) observer(step, x);
  }
  return x;
}

Tensor run_attack(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                  const AttackConfig& cfg, const IterateObserver& observer) {
  return cfg.method == AttackMethod::Pgd ? pgd_attack(model, image, true_class, cfg, observer)
                                         : mifgsm_attack(model, image, true_class, cfg, observer);
}

}  // namespace bicam
