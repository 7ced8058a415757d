#pragma once

// Directory-level experiment drivers behind the CLI commands. Every driver
// is deterministic given its files and seed: items are processed in
// parallel but results are aggregated in filename order, and each item's
// random stream is derive_seed(seed, item id).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bicam/adversarial.hpp"
#include "bicam/attribution.hpp"
#include "bicam/detection.hpp"
#include "bicam/error.hpp"
#include "bicam/evaluation.hpp"
#include "bicam/vit.hpp"

namespace bicam::drivers {

namespace fs = std::filesystem;

/// *.ppm files directly inside `dir`, sorted by filename.
std::vector<fs::path> list_images(const fs::path& dir);

/// Optional `labels.csv` ("id,class" with header) next to the images.
std::map<std::string, std::size_t> read_labels(const fs::path& dir);

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct ItemFailure {
  std::string id;
  ErrorKind kind = ErrorKind::Io;
  std::string message;
};

/// Thrown by drivers when items failed and skip_errors was not set. The
/// outputs for the items that succeeded are still written.
class ItemErrors : public Error {
 public:
  explicit ItemErrors(std::vector<ItemFailure> failures);
  const std::vector<ItemFailure>& failures() const noexcept { return failures_; }

 private:
  std::vector<ItemFailure> failures_;
};

// ---- attribute / rollout ---------------------------------------------------

struct AttributeArgs {
  fs::path image;
  std::optional<std::size_t> class_index;  // default: predicted class
  AttributionOptions attribution;
  double pnr_epsilon = kDefaultPnrEpsilon;
  fs::path out_prefix;          // writes <prefix>_patches.csv, <prefix>_heatmap.csv, <prefix>.ppm
  bool write_channels = false;  // also <prefix>_pos.ppm and <prefix>_neg.ppm
};

struct AttributeResult {
  AttributionMap map;
  double pnr = 0.0;
  std::size_t class_index = 0;
  std::vector<fs::path> written;
};

AttributeResult run_attribute(const ViTModel& model, const AttributeArgs& args);

/// Attention Rollout with the same outputs as run_attribute (no PNR).
AttributeResult run_rollout(const ViTModel& model, const AttributeArgs& args);

// ---- attack ------------------------------------------------------------------

struct AttackDirArgs {
  fs::path input_dir;
  fs::path output_dir;
  AttackConfig attack;  // attack.seed is replaced per item by derive_seed(seed, id)
  std::uint64_t seed = 0;
  bool skip_errors = false;
};

struct AttackItem {
  std::string id;
  std::size_t true_class = 0;
  double prob_before = 0.0;  // true-class probability on the clean image
  double prob_after = 0.0;   // ... on the saved (8-bit) adversarial image
  double linf = 0.0;         // of the saved image against the clean one
};

struct AttackSummary {
  std::vector<AttackItem> items;
  std::vector<ItemFailure> failures;
  double mean_prob_before = 0.0;
  double mean_prob_after = 0.0;
};

/// Attacks every image, writes <output_dir>/<name>.ppm plus
/// attack_report.csv. Saved pixels are snapped to the 8-bit grid without
/// leaving the epsilon ball.
AttackSummary run_attack_dir(const ViTModel& model, const AttackDirArgs& args);

/// 8-bit quantization of `adv` that stays within epsilon of `clean`
/// whenever `clean` is itself on the 8-bit grid.
Tensor quantize_within_ball(const Tensor& adv, const Tensor& clean, double epsilon);

// ---- PNR detection -------------------------------------------------------------

struct PnrDetectArgs {
  fs::path clean_dir;
  fs::path adv_dir;
  AttributionOptions attribution;
  double pnr_epsilon = kDefaultPnrEpsilon;
  bool higher_is_adversarial = true;
  fs::path records_out;  // id,label,pnr
  fs::path report_out;   // one-row report CSV
  bool skip_errors = false;
};

struct PnrDetectResult {
  std::vector<PnrRecord> records;
  DetectionReport report;
  std::vector<ItemFailure> failures;
};

/// Attributes every clean and adversarial image for the same class (label
/// file, else the class predicted on the clean image), records PNR and
/// scores detection.
PnrDetectResult run_pnr_detect(const ViTModel& model, const PnrDetectArgs& args);

/// Scoring only, from a previously written record file.
DetectionReport score_pnr_records(const fs::path& records, bool higher_is_adversarial,
                                  const fs::path& report_out);

void write_detection_report(const fs::path& path, const DetectionReport& report);
std::string format_detection_table(const DetectionReport& report);

// ---- localization ---------------------------------------------------------------

struct EvalLocArgs {
  fs::path dir;  // <stem>.ppm, <stem>_target.pgm, optional <stem>_nontarget.pgm
  AttributionOptions attribution;
  fs::path report_out;
  bool skip_errors = false;
};

struct LocRow {
  std::string id;
  std::size_t class_index = 0;
  LocalizationReport report;
  bool unified_fallback = false;
};

struct EvalLocResult {
  std::vector<LocRow> rows;
  std::map<Channel, LocalizationReport> means;  // counts zero; ratios averaged
  std::vector<ItemFailure> failures;
};

EvalLocResult run_eval_loc(const ViTModel& model, const EvalLocArgs& args);
std::string format_localization_table(const EvalLocResult& result);

// ---- faithfulness ---------------------------------------------------------------

struct EvalFaithArgs {
  fs::path dir;
  AttributionOptions attribution;
  std::size_t random_seeds = 5;
  std::uint64_t seed = 0;
  fs::path report_out;  // per-item rows
  fs::path curves_out;  // optional: per-step curves
  bool skip_errors = false;
};

struct FaithRow {
  std::string id;
  std::string method;  // "bicam" or "random"
  double lif_auc = 0.0;
  double mif_auc = 0.0;
  double faithfulness = 0.0;
};

struct EvalFaithResult {
  std::vector<FaithRow> rows;
  std::map<std::string, FaithRow> means;  // keyed by method
  std::map<std::string, double> stds;     // faithfulness std by method
  std::vector<ItemFailure> failures;
};

EvalFaithResult run_eval_faith(const ViTModel& model, const EvalFaithArgs& args);
std::string format_faithfulness_table(const EvalFaithResult& result);

}  // namespace bicam::drivers
