#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "bicam/classifier.hpp"
#include "bicam/tensor.hpp"

namespace bicam {

enum class AttackMethod { Pgd, MiFgsm };

const char* to_string(AttackMethod method) noexcept;
AttackMethod parse_attack_method(const std::string& name);

// Untargeted L-infinity attacks on images in [0, 1].
struct AttackConfig {
  AttackMethod method = AttackMethod::Pgd;
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  std::size_t num_steps = 10;
  double momentum_decay = 1.0;  // MI-FGSM only
  bool random_start = true;     // PGD only
  std::uint64_t seed = 0;

  void validate() const;
};

/// Called after every iterate with (step index starting at 1, iterate).
using IterateObserver = std::function<void(std::size_t, const Tensor&)>;

Tensor pgd_attack(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                  const AttackConfig& cfg, const IterateObserver& observer = {});

Tensor mifgsm_attack(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                     const AttackConfig& cfg, const IterateObserver& observer = {});

/// Dispatches on cfg.method.
Tensor run_attack(const ImageClassifier& model, const Tensor& image, std::size_t true_class,
                  const AttackConfig& cfg, const IterateObserver& observer = {});

}  // namespace bicam
