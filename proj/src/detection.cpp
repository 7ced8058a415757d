#include "bicam/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "bicam/error.hpp"

namespace bicam {

double pnr(std::span<const double> scores, double epsilon) {
  if (!(epsilon > 0.0)) throw ParameterError("PNR epsilon must be positive");
  double positive = 0.0;
  double negative = 0.0;
  for (double m : scores) {
    if (m > 0.0) positive += m;
    else if (m < 0.0) negative -= m;
  }
  return positive / (negative + epsilon);
}

double pnr(const AttributionMap& map, double epsilon) {
  return pnr(map.patch_scores.data(), epsilon);
}

double delta_pnr(const AttributionMap& clean, const AttributionMap& adversarial, double epsilon) {
  return pnr(adversarial, epsilon) - pnr(clean, epsilon);
}

const char* to_string(SampleLabel label) noexcept {
  return label == SampleLabel::Clean ? "clean" : "adversarial";
}

SampleLabel parse_sample_label(const std::string& text) {
  if (text == "clean") return SampleLabel::Clean;
  if (text == "adversarial" || text == "adv") return SampleLabel::Adversarial;
  throw FormatError("unknown sample label '" + text + "'");
}

namespace {

struct Scored {
  double score;
  bool positive;
};

std::vector<Scored> merge(std::span<const double> positives, std::span<const double> negatives) {
  std::vector<Scored> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  for (const auto& s : all) {
    if (std::isnan(s.score)) throw NumericError("NaN detection score");
  }
  return all;
}

void require_both(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw ContractError("detection scoring needs at least one sample of each label");
  }
}

}  // namespace

double auroc(std::span<const double> positives, std::span<const double> negatives) {
  require_both(positives, negatives);
  auto all = merge(positives, negatives);
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // Midranks, 1-based; rank sums of tied groups stay exact half-integers.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const auto n1 = static_cast<double>(positives.size());
  const auto n0 = static_cast<double>(negatives.size());
  const double u = rank_sum - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n0);
}

double aupr(std::span<const double> positives, std::span<const double> negatives) {
  require_both(positives, negatives);
  auto all = merge(positives, negatives);
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  const auto total_pos = static_cast<double>(positives.size());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].positive ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

YoudenPoint youden_threshold(std::span<const double> positives,
                             std::span<const double> negatives) {
  require_both(positives, negatives);
  auto all = merge(positives, negatives);
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  const auto np = static_cast<double>(positives.size());
  const auto nn = static_cast<double>(negatives.size());
  // Ascending sweep: at candidate t, everything before index i is < t.
  std::size_t pos_below = 0, neg_below = 0;
  YoudenPoint best;
  long double best_j = -1.0L;
  std::size_t i = 0;
  while (i < all.size()) {
    const double t = all[i].score;
    // J * np * nn = tp * nn + tn * np - np * nn; compared exactly so that
    // rationally equal J values tie.
    const std::size_t tp = positives.size() - pos_below;
    const auto j_scaled = static_cast<long double>(tp) * negatives.size() +
                          static_cast<long double>(neg_below) * positives.size();
    if (j_scaled > best_j) {
      best_j = j_scaled;
      best = {t, static_cast<double>(tp) / np, static_cast<double>(neg_below) / nn};
    }
    while (i < all.size() && all[i].score == t) {
      (all[i].positive ? pos_below : neg_below) += 1;
      ++i;
    }
  }
  return best;
}

DetectionReport roc_analysis(std::span<const PnrRecord> records, bool higher_is_adversarial) {
  std::vector<double> adv, clean;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_id;
  for (const auto& r : records) {
    if (!std::isfinite(r.pnr) || r.pnr < 0.0) {
      throw NumericError("record '" + r.id + "' has invalid PNR");
    }
    const double s = higher_is_adversarial ? r.pnr : -r.pnr;
    if (r.label == SampleLabel::Adversarial) {
      adv.push_back(s);
      by_id[r.id].second.push_back(r.pnr);
    } else {
      clean.push_back(s);
      by_id[r.id].first.push_back(r.pnr);
    }
  }
  if (adv.empty() || clean.empty()) {
    throw ContractError("roc_analysis needs at least one clean and one adversarial record");
  }

  DetectionReport rep;
  rep.higher_is_adversarial = higher_is_adversarial;
  rep.num_clean = clean.size();
  rep.num_adversarial = adv.size();
  rep.auroc = auroc(adv, clean);
  rep.aupr = aupr(adv, clean);
  const YoudenPoint y = youden_threshold(adv, clean);
  rep.threshold = higher_is_adversarial ? y.threshold : -y.threshold;
  rep.sensitivity = y.sensitivity;
  rep.specificity = y.specificity;

  std::vector<double> deltas;
  for (const auto& [id, pair] : by_id) {
    if (pair.first.size() == 1 && pair.second.size() == 1) {
      deltas.push_back(pair.second.front() - pair.first.front());
    }
  }
  rep.num_pairs = deltas.size();
  if (!deltas.empty()) {
    const double n = static_cast<double>(deltas.size());
    rep.delta_pnr_mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / n;
    if (deltas.size() > 1) {
      double ss = 0.0;
      for (double d : deltas) ss += (d - rep.delta_pnr_mean) * (d - rep.delta_pnr_mean);
      rep.delta_pnr_std = std::sqrt(ss / (n - 1.0));
    }
  }
  return rep;
}

void write_pnr_records(std::ostream& out, std::span<const PnrRecord> records) {
  out << "id,label,pnr\n";
  char buf[64];
  for (const auto& r : records) {
    if (r.id.find_first_of(",\n\r") != std::string::npos) {
      throw FormatError("record id '" + r.id + "' contains a separator");
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.pnr);
    out << r.id << ',' << to_string(r.label) << ',' << buf << '\n';
  }
}

std::vector<PnrRecord> read_pnr_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty PNR record file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,label,pnr") {
    throw FormatError("PNR record header must be 'id,label,pnr', got '" + line + "'");
  }
  std::vector<PnrRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, label, value;
    if (!std::getline(ss, id, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, value)) {
      throw FormatError("line " + std::to_string(line_no) + ": expected id,label,pnr");
    }
    PnrRecord r;
    r.id = id;
    try {
      r.label = parse_sample_label(label);
      std::size_t used = 0;
      r.pnr = std::stod(value, &used);
      if (used != value.size()) throw FormatError("trailing characters");
    } catch (const std::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bicam
