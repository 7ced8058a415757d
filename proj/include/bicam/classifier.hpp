#pragma once

#include <cstddef>
#include <vector>

#include "bicam/autodiff.hpp"
#include "bicam/tensor.hpp"

namespace bicam {

/// Anything that maps image[B, 3, H, W] to logits[B, C] through autodiff
/// primitives. Attacks and the faithfulness protocol are written against
/// this interface so they can be checked on analytically simple models.
class ImageClassifier {
 public:
  virtual ~ImageClassifier() = default;

  virtual ad::Var logits(ad::Graph& graph, ad::Var image) const = 0;

  virtual std::size_t image_height() const = 0;
  virtual std::size_t image_width() const = 0;
  virtual std::size_t patch_size() const = 0;
  virtual std::size_t num_classes() const = 0;

  std::size_t grid_height() const { return image_height() / patch_size(); }
  std::size_t grid_width() const { return image_width() / patch_size(); }
  std::size_t num_patches() const { return grid_height() * grid_width(); }
};

// Checks image is [B, 3, H, W] with the classifier's spatial size.
void check_image_shape(const ImageClassifier& model, const Tensor& image);

/// Logits for every image in the batch; no gradient tape is kept.
Tensor predict_logits(const ImageClassifier& model, const Tensor& image);

/// Softmax probabilities (T = 1) of a single image [1, 3, H, W].
std::vector<double> predict_proba(const ImageClassifier& model, const Tensor& image);

std::size_t predict_class(const ImageClassifier& model, const Tensor& image);

struct LossAndGradient {
  double loss = 0.0;
  Tensor gradient;  // d loss / d image, same shape as image
};

/// Mean cross-entropy against `labels` and its gradient w.r.t. the image.
LossAndGradient cross_entropy_gradient(const ImageClassifier& model, const Tensor& image,
                                       const std::vector<std::size_t>& labels);

}  // namespace bicam
