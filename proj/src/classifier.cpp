#include "bicam/classifier.hpp"

#include <algorithm>

#include "bicam/error.hpp"

namespace bicam {

void check_image_shape(const ImageClassifier& model, const Tensor& image) {
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != model.image_height() ||
      s[3] != model.image_width() || s[0] == 0) {
    throw DimensionError("expected image [B,3," + std::to_string(model.image_height()) + "," +
                         std::to_string(model.image_width()) + "], got " + shape_str(s));
  }
}

Tensor predict_logits(const ImageClassifier& model, const Tensor& image) {
  check_image_shape(model, image);
  ad::Graph graph;
  return model.logits(graph, graph.constant(image)).value();
}

std::vector<double> predict_proba(const ImageClassifier& model, const Tensor& image) {
  Tensor logits = predict_logits(model, image);
  if (logits.dim(0) != 1) throw DimensionError("predict_proba expects a single image");
  Tensor p = ad::softmax_values(logits, 1.0);
  return std::vector<double>(p.data().begin(), p.data().end());
}

std::size_t predict_class(const ImageClassifier& model, const Tensor& image) {
  auto p = predict_proba(model, image);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

LossAndGradient cross_entropy_gradient(const ImageClassifier& model, const Tensor& image,
                                       const std::vector<std::size_t>& labels) {
  check_image_shape(model, image);
  ad::Graph graph;
  ad::Var x = graph.leaf(image);
  ad::Var loss = ad::cross_entropy(model.logits(graph, x), labels);
  graph.backward(loss);
  return {loss.value().item(), graph.grad(x)};
}

}  // namespace bicam
