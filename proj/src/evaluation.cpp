#include "bicam/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "bicam/attribution.hpp"
#include "bicam/error.hpp"
#include "bicam/rng.hpp"

namespace bicam {

BinaryMask::BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values)
    : height(h), width(w), bits(std::move(values)) {
  if (bits.empty()) bits.assign(h * w, 0);
  if (bits.size() != h * w) throw DimensionError("mask data does not match its size");
  for (auto b : bits) {
    if (b > 1) throw FormatError("mask values must be 0 or 1");
  }
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& b : out.bits) b = static_cast<std::uint8_t>(1 - b);
  return out;
}

BinaryMask binarize(const Tensor& map) {
  if (map.rank() < 2) throw DimensionError("binarize expects a 2-D map");
  for (std::size_t i = 0; i + 2 < map.rank(); ++i) {
    if (map.shape()[i] != 1) throw DimensionError("binarize expects a single map");
  }
  BinaryMask out(map.dim(-2), map.dim(-1));
  if (map.size() == 0) return out;
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) return out;
  for (std::size_t i = 0; i < map.size(); ++i) {
    out.bits[i] = (map[i] - mn) / (mx - mn) > 0.5 ? 1 : 0;
  }
  return out;
}

const char* to_string(Channel channel) noexcept {
  switch (channel) {
    case Channel::Unified: return "unified";
    case Channel::Positive: return "positive";
    case Channel::Negative: return "negative";
  }
  return "unified";
}

LocalizationReport localization_metrics(const BinaryMask& pred, const BinaryMask& gt,
                                        Channel channel) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError("prediction " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + " vs ground truth " +
                         std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  LocalizationReport r;
  r.channel = channel;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    if (p && g) ++r.tp;
    else if (p) ++r.fp;
    else if (g) ++r.fn;
    else ++r.tn;
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  r.iou = ratio(r.tp, r.tp + r.fp + r.fn);
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.pixel_accuracy = ratio(r.tp + r.tn, pred.size());
  const double pr = r.precision + r.recall;
  r.f1 = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
  return r;
}

LocalizationReport evaluate_unified(const Tensor& heatmap, const BinaryMask& gt) {
  return localization_metrics(binarize(heatmap), gt, Channel::Unified);
}

BidirectionalReport evaluate_bidirectional(const Tensor& heatmap, const BinaryMask& target,
                                           const BinaryMask* nontarget) {
  BidirectionalReport out;
  if (!nontarget) {
    out.positive = evaluate_unified(heatmap, target);
    out.unified_fallback = true;
    return out;
  }
  const ChannelSplit split = split_channels(heatmap);
  out.positive = localization_metrics(binarize(split.positive), target, Channel::Positive);
  out.negative = localization_metrics(binarize(split.negative), *nontarget, Channel::Negative);
  return out;
}

std::vector<std::size_t> most_important_first(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> least_important_first(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

void zero_patches(Tensor& image, std::span<const std::size_t> patches, std::size_t patch_size) {
  if (image.rank() != 4) throw DimensionError("zero_patches expects image [B,C,H,W]");
  const std::size_t B = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  const std::size_t gw = W / patch_size;
  const std::size_t count = (H / patch_size) * gw;
  for (std::size_t p : patches) {
    if (p >= count) throw DimensionError("patch index " + std::to_string(p) + " out of range");
    const std::size_t y0 = (p / gw) * patch_size, x0 = (p % gw) * patch_size;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = y0; y < y0 + patch_size; ++y)
          for (std::size_t x = x0; x < x0 + patch_size; ++x)
            image[((b * C + c) * H + y) * W + x] = 0.0;
  }
}

std::vector<double> removal_curve(const ImageClassifier& model, const Tensor& image,
                                  std::size_t class_index, std::span<const std::size_t> order) {
  check_image_shape(model, image);
  if (image.dim(0) != 1) throw DimensionError("removal curves operate on a single image");
  if (class_index >= model.num_classes()) throw ParameterError("class index out of range");
  if (order.size() != model.num_patches()) {
    throw DimensionError("removal order must list all " + std::to_string(model.num_patches()) +
                         " patches");
  }
  std::vector<double> curve;
  curve.reserve(order.size() + 1);
  Tensor work = image;
  curve.push_back(predict_proba(model, work)[class_index]);
  for (std::size_t k = 0; k < order.size(); ++k) {
    zero_patches(work, order.subspan(k, 1), model.patch_size());
    curve.push_back(predict_proba(model, work)[class_index]);
  }
  return curve;
}

double curve_auc(std::span<const double> curve) {
  if (curve.empty()) return 0.0;
  return std::accumulate(curve.begin(), curve.end(), 0.0) / static_cast<double>(curve.size());
}

namespace {

FaithfulnessReport from_orders(const ImageClassifier& model, const Tensor& image,
                               std::size_t class_index, std::span<const std::size_t> mif,
                               std::span<const std::size_t> lif) {
  FaithfulnessReport r;
  r.mif_curve = removal_curve(model, image, class_index, mif);
  r.lif_curve = removal_curve(model, image, class_index, lif);
  r.mif_auc = curve_auc(r.mif_curve);
  r.lif_auc = curve_auc(r.lif_curve);
  r.faithfulness = r.lif_auc - r.mif_auc;
  return r;
}

}  // namespace

FaithfulnessReport faithfulness(const ImageClassifier& model, const Tensor& image,
                                std::size_t class_index, std::span<const double> patch_scores) {
  if (patch_scores.size() != model.num_patches()) {
    throw DimensionError("expected " + std::to_string(model.num_patches()) +
                         " patch scores, got " + std::to_string(patch_scores.size()));
  }
  return from_orders(model, image, class_index, most_important_first(patch_scores),
                     least_important_first(patch_scores));
}

FaithfulnessReport random_baseline_faithfulness(const ImageClassifier& model, const Tensor& image,
                                                std::size_t class_index, std::uint64_t seed) {
  std::vector<std::size_t> order(model.num_patches());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> reversed(order.rbegin(), order.rend());
  return from_orders(model, image, class_index, order, reversed);
}

}  // namespace bicam
