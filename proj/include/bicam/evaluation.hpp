#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bicam/classifier.hpp"
#include "bicam/tensor.hpp"

namespace bicam {

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;  // row-major, values 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values = {});

  std::size_t size() const noexcept { return bits.size(); }
  BinaryMask complement() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Per-map min-max scaling to [0, 1] followed by a strict > 0.5 cut.
/// `map` is [H, W] or any shape whose leading dims are all 1. Constant maps
/// give an all-zero mask.
BinaryMask binarize(const Tensor& map);

enum class Channel { Unified, Positive, Negative };
const char* to_string(Channel channel) noexcept;

struct LocalizationReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double pixel_accuracy = 0.0;
  double iou = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  Channel channel = Channel::Unified;
};

/// Per-pixel confusion counts and the derived ratios; a ratio with a zero
/// denominator is reported as 0.
LocalizationReport localization_metrics(const BinaryMask& pred, const BinaryMask& gt,
                                        Channel channel = Channel::Unified);

/// Binarizes the signed map itself and scores it against `gt`.
LocalizationReport evaluate_unified(const Tensor& heatmap, const BinaryMask& gt);

struct BidirectionalReport {
  LocalizationReport positive;               // unified report on fallback
  std::optional<LocalizationReport> negative;
  bool unified_fallback = false;             // set when no non-target mask was given
};

/// Positive channel vs target, negative channel vs non-target. Without a
/// non-target mask, falls back to unified scoring and flags it.
BidirectionalReport evaluate_bidirectional(const Tensor& heatmap, const BinaryMask& target,
                                           const BinaryMask* nontarget);

struct FaithfulnessReport {
  std::vector<double> mif_curve;  // P + 1 class probabilities
  std::vector<double> lif_curve;
  double mif_auc = 0.0;
  double lif_auc = 0.0;
  double faithfulness = 0.0;  // lif_auc - mif_auc
};

/// Patch indices by descending score (MIF) or ascending score (LIF); ties
/// keep ascending patch index.
std::vector<std::size_t> most_important_first(std::span<const double> scores);
std::vector<std::size_t> least_important_first(std::span<const double> scores);

/// Sets the pixel block of every listed patch to zero, in all channels.
void zero_patches(Tensor& image, std::span<const std::size_t> patches, std::size_t patch_size);

/// Class-c probability after removing 0..P patches in `order`.
std::vector<double> removal_curve(const ImageClassifier& model, const Tensor& image,
                                  std::size_t class_index, std::span<const std::size_t> order);

/// Mean of the curve samples (rectangle rule on a unit step axis).
double curve_auc(std::span<const double> curve);

/// MIF and LIF removal curves ordered by `patch_scores` (grid order).
FaithfulnessReport faithfulness(const ImageClassifier& model, const Tensor& image,
                                std::size_t class_index, std::span<const double> patch_scores);

/// Same protocol with a uniformly random order: MIF follows the shuffled
/// order and LIF its reverse.
FaithfulnessReport random_baseline_faithfulness(const ImageClassifier& model, const Tensor& image,
                                                std::size_t class_index, std::uint64_t seed);

}  // namespace bicam
