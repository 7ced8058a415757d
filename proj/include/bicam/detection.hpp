#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bicam/attribution.hpp"

namespace bicam {

inline constexpr double kDefaultPnrEpsilon = 1e-8;

/// sum_i max(M_i, 0) / (sum_i max(-M_i, 0) + epsilon).
double pnr(std::span<const double> scores, double epsilon = kDefaultPnrEpsilon);

/// PNR over the patch grid (never the upsampled heatmap).
double pnr(const AttributionMap& map, double epsilon = kDefaultPnrEpsilon);

/// PNR(adv) - PNR(clean).
double delta_pnr(const AttributionMap& clean, const AttributionMap& adversarial,
                 double epsilon = kDefaultPnrEpsilon);

enum class SampleLabel { Clean, Adversarial };

const char* to_string(SampleLabel label) noexcept;
SampleLabel parse_sample_label(const std::string& text);

struct PnrRecord {
  std::string id;
  SampleLabel label = SampleLabel::Clean;
  double pnr = 0.0;
};

struct DetectionReport {
  std::size_t num_clean = 0;
  std::size_t num_adversarial = 0;
  // Mean/std of PNR(adv) - PNR(clean) over ids present with both labels.
  std::size_t num_pairs = 0;
  double delta_pnr_mean = 0.0;
  double delta_pnr_std = 0.0;  // sample std (n - 1); 0 when fewer than two pairs
  double auroc = 0.0;
  double aupr = 0.0;
  double threshold = 0.0;  // Youden-optimal cutoff on raw PNR
  double sensitivity = 0.0;
  double specificity = 0.0;
  bool higher_is_adversarial = true;
};

/// Mann-Whitney AUROC with midrank tie correction: probability that a
/// random positive outscores a random negative, ties counting one half.
double auroc(std::span<const double> positives, std::span<const double> negatives);

/// Average precision: sum over distinct thresholds (descending) of
/// (R_k - R_{k-1}) * P_k, tied scores entering together.
double aupr(std::span<const double> positives, std::span<const double> negatives);

struct YoudenPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

/// Threshold over the observed scores maximizing sensitivity + specificity
/// - 1, predicting positive when score >= threshold. Ties go to the
/// smaller threshold.
YoudenPoint youden_threshold(std::span<const double> positives,
                             std::span<const double> negatives);

/// Scores detection on raw PNR with adversarial as the positive class.
/// With higher_is_adversarial = false, lower PNR is treated as more
/// adversarial and the threshold predicts adversarial when pnr <= threshold.
DetectionReport roc_analysis(std::span<const PnrRecord> records,
                             bool higher_is_adversarial = true);

// CSV with header "id,label,pnr".
void write_pnr_records(std::ostream& out, std::span<const PnrRecord> records);
std::vector<PnrRecord> read_pnr_records(std::istream& in);

}  // namespace bicam
