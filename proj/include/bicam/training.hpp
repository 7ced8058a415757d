#pragma once

#include <cstddef>
#include <cstdint>

#include "bicam/evaluation.hpp"
#include "bicam/rng.hpp"
#include "bicam/tensor.hpp"
#include "bicam/vit.hpp"

namespace bicam {

// Synthetic classification task. Class k is a square-wave stripe texture
// of period 2 pixels at angle pi*k/num_classes (k = 0: vertical stripes,
// k = 1 of 2: horizontal). The texture fills either the top or the bottom
// half of the image, picked at random; the other half is flat. Both sit on
// a random global brightness with per-pixel noise.
struct SyntheticTask {
  double amplitude = 0.04;  // half peak-to-peak stripe contrast
  double brightness_jitter = 0.1;
  double noise = 0.03;
};

struct SyntheticSample {
  Tensor image;       // [1, 3, H, W], values in [0, 1]
  BinaryMask target;  // the textured half
};

SyntheticSample synthetic_sample(std::size_t height, std::size_t width, std::size_t num_classes,
                                 std::size_t label, Rng& rng, const SyntheticTask& task = {});

struct TrainOptions {
  // Training batches start at this stripe contrast and anneal linearly to
  // task.amplitude over the first half of the steps.
  double warmup_amplitude = 0.3;
  std::size_t steps = 300;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  SyntheticTask task;
};

struct TrainStats {
  std::size_t steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double heldout_accuracy = 0.0;
};

/// Adam on the synthetic task; deterministic given options. Positional
/// embeddings stay at their initial values.
TrainStats train_toy(ViTModel& model, const TrainOptions& options);

}  // namespace bicam
