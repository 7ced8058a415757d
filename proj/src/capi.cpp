#include "bicam/bicam.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "bicam/adversarial.hpp"
#include "bicam/attribution.hpp"
#include "bicam/detection.hpp"
#include "bicam/drivers.hpp"
#include "bicam/io.hpp"
#include "bicam/training.hpp"
#include "bicam/vit.hpp"

struct bicam_model {
  bicam::ViTModel model;
};

struct bicam_image {
  bicam::Tensor pixels;  // [1, 3, H, W]
};

struct bicam_map {
  bicam::AttributionMap map;
};

namespace {

thread_local std::string g_last_error;

bicam_status status_of(bicam::ErrorKind kind) {
  using bicam::ErrorKind;
  switch (kind) {
    case ErrorKind::Dimension: return BICAM_ERR_DIMENSION;
    case ErrorKind::Parameter: return BICAM_ERR_PARAMETER;
    case ErrorKind::Contract: return BICAM_ERR_CONTRACT;
    case ErrorKind::State: return BICAM_ERR_STATE;
    case ErrorKind::Numeric: return BICAM_ERR_NUMERIC;
    case ErrorKind::Format: return BICAM_ERR_FORMAT;
    case ErrorKind::Io: return BICAM_ERR_IO;
  }
  return BICAM_ERR_INTERNAL;
}

bicam_status fail(bicam_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <class Fn>
bicam_status guarded(Fn&& fn) {
  try {
    fn();
    return BICAM_OK;
  } catch (const bicam::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(BICAM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BICAM_ERR_INTERNAL, e.what());
  }
}

#define BICAM_REQUIRE(ptr)                                                   \
  do {                                                                       \
    if ((ptr) == nullptr) return fail(BICAM_ERR_NULL_ARGUMENT, #ptr " is NULL"); \
  } while (0)

bicam::ViTConfig to_cpp(const bicam_config& c) {
  bicam::ViTConfig v;
  v.image_height = c.image_height;
  v.image_width = c.image_width;
  v.patch_size = c.patch_size;
  v.num_layers = c.num_layers;
  v.num_heads = c.num_heads;
  v.embed_dim = c.embed_dim;
  v.ffn_dim = c.ffn_dim;
  v.num_classes = c.num_classes;
  v.distillation_token = c.distillation_token != 0;
  v.layer_window = c.layer_window == 0 ? bicam::ViTConfig::default_window(c.num_layers)
                                       : c.layer_window;
  v.temperature = c.temperature;
  return v;
}

bicam_config to_c(const bicam::ViTConfig& v) {
  bicam_config c{};
  c.image_height = static_cast<uint32_t>(v.image_height);
  c.image_width = static_cast<uint32_t>(v.image_width);
  c.patch_size = static_cast<uint32_t>(v.patch_size);
  c.num_layers = static_cast<uint32_t>(v.num_layers);
  c.num_heads = static_cast<uint32_t>(v.num_heads);
  c.embed_dim = static_cast<uint32_t>(v.embed_dim);
  c.ffn_dim = static_cast<uint32_t>(v.ffn_dim);
  c.num_classes = static_cast<uint32_t>(v.num_classes);
  c.distillation_token = v.distillation_token ? 1 : 0;
  c.layer_window = static_cast<uint32_t>(v.layer_window);
  c.temperature = v.temperature;
  return c;
}

bicam::AttributionOptions to_cpp(const bicam_attribution_options* o) {
  bicam::AttributionOptions a;
  if (o == nullptr) return a;
  if (o->layer_window != 0) a.window = o->layer_window;
  if (o->temperature > 0.0) a.temperature = o->temperature;
  if (o->upsample == BICAM_UPSAMPLE_NEAREST) {
    a.upsample = bicam::Upsample::Nearest;
  } else if (o->upsample != BICAM_UPSAMPLE_BILINEAR) {
    throw bicam::ParameterError("unknown upsample mode");
  }
  return a;
}

bicam::AttackConfig to_cpp(const bicam_attack_config& c) {
  bicam::AttackConfig a;
  switch (c.method) {
    case BICAM_ATTACK_PGD: a.method = bicam::AttackMethod::Pgd; break;
    case BICAM_ATTACK_MIFGSM: a.method = bicam::AttackMethod::MiFgsm; break;
    default: throw bicam::ParameterError("unknown attack method");
  }
  a.epsilon = c.epsilon;
  a.step_size = c.step_size;
  a.num_steps = c.num_steps;
  a.momentum_decay = c.momentum_decay;
  a.random_start = c.random_start != 0;
  a.seed = c.seed;
  return a;
}

bicam_detection_report to_c(const bicam::DetectionReport& r) {
  bicam_detection_report out{};
  out.num_clean = r.num_clean;
  out.num_adversarial = r.num_adversarial;
  out.num_pairs = r.num_pairs;
  out.delta_pnr_mean = r.delta_pnr_mean;
  out.delta_pnr_std = r.delta_pnr_std;
  out.auroc = r.auroc;
  out.aupr = r.aupr;
  out.threshold = r.threshold;
  out.sensitivity = r.sensitivity;
  out.specificity = r.specificity;
  out.higher_is_adversarial = r.higher_is_adversarial ? 1 : 0;
  return out;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::filesystem::path opt_path(const char* p) { return p == nullptr ? std::filesystem::path{} : p; }

void copy_out(const bicam::Tensor& t, double* out, size_t count) {
  if (count < t.size()) {
    throw bicam::ParameterError("output buffer holds " + std::to_string(count) + " values, need " +
                                std::to_string(t.size()));
  }
  std::copy(t.data().begin(), t.data().end(), out);
}

std::string skipped_note(const std::vector<bicam::drivers::ItemFailure>& failures) {
  std::string note;
  for (const auto& f : failures) note += "skipped " + f.id + ": " + f.message + "\n";
  return note;
}

// Shared tail of the directory drivers: table out, failure count out.
template <class Fn>
bicam_status run_driver(char** table, size_t* num_failures, Fn&& fn) {
  if (num_failures != nullptr) *num_failures = 0;
  if (table != nullptr) *table = nullptr;
  try {
    auto [text, failures] = fn();
    if (num_failures != nullptr) *num_failures = failures;
    if (table != nullptr) *table = dup_string(text);
    return BICAM_OK;
  } catch (const bicam::drivers::ItemErrors& e) {
    if (num_failures != nullptr) *num_failures = e.failures().size();
    return fail(status_of(e.kind()), e.what());
  } catch (const bicam::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail(BICAM_ERR_INTERNAL, e.what());
  }
}

}  // namespace

extern "C" {

const char* bicam_version(void) { return "0.1.0"; }

const char* bicam_status_string(bicam_status status) {
  switch (status) {
    case BICAM_OK: return "ok";
    case BICAM_ERR_DIMENSION: return "dimension error";
    case BICAM_ERR_PARAMETER: return "parameter error";
    case BICAM_ERR_CONTRACT: return "contract error";
    case BICAM_ERR_STATE: return "state error";
    case BICAM_ERR_NUMERIC: return "numeric error";
    case BICAM_ERR_FORMAT: return "format error";
    case BICAM_ERR_IO: return "i/o error";
    case BICAM_ERR_NULL_ARGUMENT: return "null argument";
    case BICAM_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case BICAM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* bicam_last_error(void) { return g_last_error.c_str(); }

void bicam_string_free(char* str) { std::free(str); }

// ---- model ----

void bicam_config_default(bicam_config* config) {
  if (config != nullptr) *config = to_c(bicam::ViTConfig{});
}

bicam_status bicam_model_init(const bicam_config* config, uint64_t seed, bicam_model** out) {
  BICAM_REQUIRE(config);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new bicam_model{bicam::init_model(to_cpp(*config), seed)}; });
}

bicam_status bicam_model_load(const char* path, bicam_model** out) {
  BICAM_REQUIRE(path);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new bicam_model{bicam::io::load_model(path)}; });
}

bicam_status bicam_model_save(const bicam_model* model, const char* path) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(path);
  return guarded([&] { bicam::io::save_model(path, model->model); });
}

bicam_status bicam_model_config(const bicam_model* model, bicam_config* out) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(out);
  *out = to_c(model->model.config());
  return BICAM_OK;
}

bicam_status bicam_model_checksum(const bicam_model* model, uint64_t* out) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(out);
  return guarded([&] { *out = model->model.weights().checksum(); });
}

bicam_status bicam_model_parameter_count(const bicam_model* model, size_t* out) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(out);
  *out = model->model.weights().parameter_count();
  return BICAM_OK;
}

void bicam_model_free(bicam_model* model) { delete model; }

void bicam_train_options_default(bicam_train_options* options) {
  if (options == nullptr) return;
  const bicam::TrainOptions d;
  options->steps = static_cast<uint32_t>(d.steps);
  options->batch_size = static_cast<uint32_t>(d.batch_size);
  options->learning_rate = d.learning_rate;
  options->seed = d.seed;
}

bicam_status bicam_model_train_toy(bicam_model* model, const bicam_train_options* options,
                                   bicam_train_stats* stats) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(options);
  return guarded([&] {
    bicam::TrainOptions o;
    o.steps = options->steps;
    o.batch_size = options->batch_size;
    o.learning_rate = options->learning_rate;
    o.seed = options->seed;
    const auto s = bicam::train_toy(model->model, o);
    if (stats != nullptr) {
      stats->steps = static_cast<uint32_t>(s.steps);
      stats->initial_loss = s.initial_loss;
      stats->final_loss = s.final_loss;
      stats->heldout_accuracy = s.heldout_accuracy;
    }
  });
}

bicam_status bicam_write_synthetic_sample(const bicam_model* model, uint32_t label,
                                          uint64_t seed, const char* dir, const char* id) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(dir);
  BICAM_REQUIRE(id);
  return guarded([&] {
    const auto& c = model->model.config();
    bicam::Rng rng(seed);
    const auto sample =
        bicam::synthetic_sample(c.image_height, c.image_width, c.num_classes, label, rng);
    const std::filesystem::path base = dir;
    std::filesystem::create_directories(base);
    bicam::io::save_image(base / (std::string(id) + ".ppm"), sample.image);
    bicam::io::write_mask(base / (std::string(id) + "_target.pgm"), sample.target);
    bicam::io::write_mask(base / (std::string(id) + "_nontarget.pgm"), sample.target.complement());
  });
}

// ---- images ----

bicam_status bicam_image_load(const char* path, bicam_image** out) {
  BICAM_REQUIRE(path);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new bicam_image{bicam::io::load_image(path)}; });
}

bicam_status bicam_image_from_rgb(uint32_t width, uint32_t height, const uint8_t* rgb,
                                  bicam_image** out) {
  BICAM_REQUIRE(rgb);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    if (width == 0 || height == 0) throw bicam::DimensionError("image must be non-empty");
    bicam::io::RgbImage img{width, height,
                            std::vector<uint8_t>(rgb, rgb + size_t{width} * height * 3)};
    *out = new bicam_image{bicam::io::to_tensor(img)};
  });
}

bicam_status bicam_image_save(const bicam_image* image, const char* path) {
  BICAM_REQUIRE(image);
  BICAM_REQUIRE(path);
  return guarded([&] { bicam::io::save_image(path, image->pixels); });
}

bicam_status bicam_image_size(const bicam_image* image, uint32_t* width, uint32_t* height) {
  BICAM_REQUIRE(image);
  if (width != nullptr) *width = static_cast<uint32_t>(image->pixels.shape()[3]);
  if (height != nullptr) *height = static_cast<uint32_t>(image->pixels.shape()[2]);
  return BICAM_OK;
}

bicam_status bicam_image_values(const bicam_image* image, double* out, size_t count) {
  BICAM_REQUIRE(image);
  BICAM_REQUIRE(out);
  if (count < image->pixels.size()) return fail(BICAM_ERR_BUFFER_TOO_SMALL, "image buffer too small");
  std::copy(image->pixels.data().begin(), image->pixels.data().end(), out);
  return BICAM_OK;
}

void bicam_image_free(bicam_image* image) { delete image; }

bicam_status bicam_predict(const bicam_model* model, const bicam_image* image, double* probs,
                           size_t count, uint32_t* predicted) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(image);
  if (probs != nullptr && count < model->model.num_classes()) {
    return fail(BICAM_ERR_BUFFER_TOO_SMALL, "probability buffer too small");
  }
  return guarded([&] {
    const auto p = bicam::predict_proba(model->model, image->pixels);
    if (probs != nullptr) std::copy(p.begin(), p.end(), probs);
    if (predicted != nullptr) {
      *predicted = static_cast<uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
    }
  });
}

// ---- attribution ----

void bicam_attribution_options_default(bicam_attribution_options* options) {
  if (options == nullptr) return;
  options->layer_window = 0;
  options->temperature = 0.0;
  options->upsample = BICAM_UPSAMPLE_BILINEAR;
}

bicam_status bicam_attribute(const bicam_model* model, const bicam_image* image,
                             int64_t class_index, const bicam_attribution_options* options,
                             bicam_map** out) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(image);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    const auto opts = to_cpp(options);
    const std::size_t cls = class_index < 0 ? bicam::predict_class(model->model, image->pixels)
                                            : static_cast<std::size_t>(class_index);
    *out = new bicam_map{bicam::bicam(model->model, image->pixels, cls, opts)};
  });
}

bicam_status bicam_rollout(const bicam_model* model, const bicam_image* image,
                           bicam_upsample upsample, bicam_map** out) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(image);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    bicam_attribution_options o;
    bicam_attribution_options_default(&o);
    o.upsample = upsample;
    *out = new bicam_map{bicam::attention_rollout(model->model, image->pixels, to_cpp(&o).upsample)};
  });
}

bicam_status bicam_map_info_get(const bicam_map* map, bicam_map_info* out) {
  BICAM_REQUIRE(map);
  BICAM_REQUIRE(out);
  const auto& m = map->map;
  out->grid_height = static_cast<uint32_t>(m.patch_scores.shape()[1]);
  out->grid_width = static_cast<uint32_t>(m.patch_scores.shape()[2]);
  out->height = static_cast<uint32_t>(m.heatmap.shape()[2]);
  out->width = static_cast<uint32_t>(m.heatmap.shape()[3]);
  out->class_index = static_cast<uint32_t>(m.class_index);
  out->layer_window = static_cast<uint32_t>(m.window);
  out->temperature = m.temperature;
  out->is_signed = m.is_signed ? 1 : 0;
  return BICAM_OK;
}

bicam_status bicam_map_patch_scores(const bicam_map* map, double* out, size_t count) {
  BICAM_REQUIRE(map);
  BICAM_REQUIRE(out);
  if (count < map->map.patch_scores.size()) return fail(BICAM_ERR_BUFFER_TOO_SMALL, "patch buffer too small");
  return guarded([&] { copy_out(map->map.patch_scores, out, count); });
}

bicam_status bicam_map_heatmap(const bicam_map* map, double* out, size_t count) {
  BICAM_REQUIRE(map);
  BICAM_REQUIRE(out);
  if (count < map->map.heatmap.size()) return fail(BICAM_ERR_BUFFER_TOO_SMALL, "heatmap buffer too small");
  return guarded([&] { copy_out(map->map.heatmap, out, count); });
}

bicam_status bicam_map_pnr(const bicam_map* map, double epsilon, double* out) {
  BICAM_REQUIRE(map);
  BICAM_REQUIRE(out);
  return guarded([&] { *out = bicam::pnr(map->map, epsilon); });
}

bicam_status bicam_map_write(const bicam_map* map, const char* prefix, int32_t channels) {
  BICAM_REQUIRE(map);
  BICAM_REQUIRE(prefix);
  return guarded([&] {
    const std::filesystem::path base = prefix;
    if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
    const std::string p = base.string();
    bicam::io::write_grid_csv(p + "_patches.csv", map->map.patch_scores);
    bicam::io::write_grid_csv(p + "_heatmap.csv", map->map.heatmap);
    bicam::io::write_ppm(p + ".ppm", bicam::io::render_signed(map->map.heatmap));
    if (channels != 0) {
      const auto ch = bicam::io::render_channels(map->map.heatmap);
      bicam::io::write_ppm(p + "_pos.ppm", ch.positive);
      bicam::io::write_ppm(p + "_neg.ppm", ch.negative);
    }
  });
}

void bicam_map_free(bicam_map* map) { delete map; }

// ---- adversarial ----

void bicam_attack_config_default(bicam_attack_config* config) {
  if (config == nullptr) return;
  const bicam::AttackConfig d;
  config->method = BICAM_ATTACK_PGD;
  config->epsilon = d.epsilon;
  config->step_size = d.step_size;
  config->num_steps = static_cast<uint32_t>(d.num_steps);
  config->momentum_decay = d.momentum_decay;
  config->random_start = d.random_start ? 1 : 0;
  config->seed = d.seed;
}

bicam_status bicam_attack(const bicam_model* model, const bicam_image* image, uint32_t true_class,
                          const bicam_attack_config* config, bicam_image** out) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(image);
  BICAM_REQUIRE(config);
  BICAM_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    *out = new bicam_image{bicam::run_attack(model->model, image->pixels, true_class, to_cpp(*config))};
  });
}

// ---- detection ----

bicam_status bicam_pnr(const double* scores, size_t count, double epsilon, double* out) {
  BICAM_REQUIRE(out);
  if (count > 0) BICAM_REQUIRE(scores);
  return guarded([&] { *out = bicam::pnr(std::span<const double>(scores, count), epsilon); });
}

bicam_status bicam_roc_analysis(const double* pnr_values, const int32_t* is_adversarial,
                                const char* const* ids, size_t count,
                                int32_t higher_is_adversarial, bicam_detection_report* out) {
  BICAM_REQUIRE(out);
  if (count > 0) {
    BICAM_REQUIRE(pnr_values);
    BICAM_REQUIRE(is_adversarial);
  }
  return guarded([&] {
    std::vector<bicam::PnrRecord> records(count);
    for (size_t i = 0; i < count; ++i) {
      if (ids != nullptr && ids[i] == nullptr) throw bicam::ParameterError("ids[" + std::to_string(i) + "] is NULL");
      // Without ids every record gets its own, so nothing pairs up.
      records[i].id = ids != nullptr ? std::string(ids[i]) : "#" + std::to_string(i);
      records[i].label = is_adversarial[i] != 0 ? bicam::SampleLabel::Adversarial
                                                : bicam::SampleLabel::Clean;
      records[i].pnr = pnr_values[i];
    }
    *out = to_c(bicam::roc_analysis(records, higher_is_adversarial != 0));
  });
}

// ---- drivers ----

bicam_status bicam_run_attack_dir(const bicam_model* model, const bicam_attack_dir_args* args,
                                  char** table, size_t* num_failures) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(args);
  BICAM_REQUIRE(args->input_dir);
  BICAM_REQUIRE(args->output_dir);
  return run_driver(table, num_failures, [&] {
    bicam::drivers::AttackDirArgs a;
    a.input_dir = args->input_dir;
    a.output_dir = args->output_dir;
    a.attack = to_cpp(args->attack);
    a.seed = args->seed;
    a.skip_errors = args->skip_errors != 0;
    const auto s = bicam::drivers::run_attack_dir(model->model, a);
    std::string text = "attacked " + std::to_string(s.items.size()) + " image(s) with " +
                       bicam::to_string(a.attack.method) + "\n" +
                       "mean true-class probability " + bicam::io::format_double(s.mean_prob_before) +
                       " -> " + bicam::io::format_double(s.mean_prob_after) + "\n" +
                       skipped_note(s.failures);
    return std::pair{text, s.failures.size()};
  });
}

bicam_status bicam_run_pnr_detect(const bicam_model* model, const bicam_pnr_detect_args* args,
                                  bicam_detection_report* report, char** table,
                                  size_t* num_failures) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(args);
  BICAM_REQUIRE(args->clean_dir);
  BICAM_REQUIRE(args->adv_dir);
  return run_driver(table, num_failures, [&] {
    bicam::drivers::PnrDetectArgs a;
    a.clean_dir = args->clean_dir;
    a.adv_dir = args->adv_dir;
    a.attribution = to_cpp(&args->attribution);
    a.pnr_epsilon = args->pnr_epsilon;
    a.higher_is_adversarial = args->higher_is_adversarial != 0;
    a.records_out = opt_path(args->records_out);
    a.report_out = opt_path(args->report_out);
    a.skip_errors = args->skip_errors != 0;
    const auto r = bicam::drivers::run_pnr_detect(model->model, a);
    if (report != nullptr) *report = to_c(r.report);
    return std::pair{bicam::drivers::format_detection_table(r.report) + skipped_note(r.failures),
                     r.failures.size()};
  });
}

bicam_status bicam_score_pnr_records(const char* records_path, int32_t higher_is_adversarial,
                                     const char* report_out, bicam_detection_report* report,
                                     char** table) {
  BICAM_REQUIRE(records_path);
  return run_driver(table, nullptr, [&] {
    const auto r = bicam::drivers::score_pnr_records(records_path, higher_is_adversarial != 0,
                                                     opt_path(report_out));
    if (report != nullptr) *report = to_c(r);
    return std::pair{bicam::drivers::format_detection_table(r), std::size_t{0}};
  });
}

bicam_status bicam_run_eval_loc(const bicam_model* model, const bicam_eval_loc_args* args,
                                char** table, size_t* num_failures) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(args);
  BICAM_REQUIRE(args->dir);
  return run_driver(table, num_failures, [&] {
    bicam::drivers::EvalLocArgs a;
    a.dir = args->dir;
    a.attribution = to_cpp(&args->attribution);
    a.report_out = opt_path(args->report_out);
    a.skip_errors = args->skip_errors != 0;
    const auto r = bicam::drivers::run_eval_loc(model->model, a);
    std::size_t fallbacks = 0;
    for (const auto& row : r.rows) fallbacks += row.unified_fallback ? 1 : 0;
    std::string text = bicam::drivers::format_localization_table(r);
    if (fallbacks > 0) {
      text += std::to_string(fallbacks) + " image(s) without a non-target mask scored as unified\n";
    }
    return std::pair{text + skipped_note(r.failures), r.failures.size()};
  });
}

bicam_status bicam_run_eval_faith(const bicam_model* model, const bicam_eval_faith_args* args,
                                  char** table, size_t* num_failures) {
  BICAM_REQUIRE(model);
  BICAM_REQUIRE(args);
  BICAM_REQUIRE(args->dir);
  return run_driver(table, num_failures, [&] {
    bicam::drivers::EvalFaithArgs a;
    a.dir = args->dir;
    a.attribution = to_cpp(&args->attribution);
    a.random_seeds = args->random_seeds;
    a.seed = args->seed;
    a.report_out = opt_path(args->report_out);
    a.curves_out = opt_path(args->curves_out);
    a.skip_errors = args->skip_errors != 0;
    const auto r = bicam::drivers::run_eval_faith(model->model, a);
    return std::pair{bicam::drivers::format_faithfulness_table(r) + skipped_note(r.failures),
                     r.failures.size()};
  });
}

}  // extern "C"
