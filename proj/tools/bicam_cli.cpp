// bicam: command-line front end over the C API.
//
// Exit codes: 0 success, 2 usage, 3 data/format/io, 4 numeric.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bicam/bicam.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Failure : std::runtime_error {
  bicam_status status;
  Failure(bicam_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(bicam_status status) {
  if (status != BICAM_OK) throw Failure(status, bicam_last_error());
}

int exit_code(bicam_status status) {
  switch (status) {
    case BICAM_OK: return 0;
    case BICAM_ERR_PARAMETER:
    case BICAM_ERR_NULL_ARGUMENT: return kExitUsage;
    case BICAM_ERR_NUMERIC: return kExitNumeric;
    default: return kExitData;
  }
}

struct ModelDeleter { void operator()(bicam_model* m) const { bicam_model_free(m); } };
struct ImageDeleter { void operator()(bicam_image* i) const { bicam_image_free(i); } };
struct MapDeleter { void operator()(bicam_map* m) const { bicam_map_free(m); } };
struct StringDeleter { void operator()(char* s) const { bicam_string_free(s); } };
using ModelPtr = std::unique_ptr<bicam_model, ModelDeleter>;
using ImagePtr = std::unique_ptr<bicam_image, ImageDeleter>;
using MapPtr = std::unique_ptr<bicam_map, MapDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

ModelPtr load_model(const std::string& path) {
  bicam_model* m = nullptr;
  check(bicam_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

ImagePtr load_image(const std::string& path) {
  bicam_image* i = nullptr;
  check(bicam_image_load(path.c_str(), &i));
  return ImagePtr(i);
}

const char* opt_c(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// Accepts plain decimals and fractions such as "8/255".
double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto slash = text.find('/');
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } else {
      const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
      std::size_t u2 = 0;
      const double a = std::stod(num, &used);
      const double b = std::stod(den, &u2);
      if (used == num.size() && u2 == den.size() && b != 0.0) return a / b;
    }
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError(what, "'" + text + "' is not a number");
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
  return buf;
}

void print_table(char* table) {
  StringPtr owned(table);
  if (owned) std::cout << owned.get();
}

// ---- shared option groups ---------------------------------------------------

struct AttributionFlags {
  std::uint32_t layer_window = 0;
  double temperature = 0.0;
  std::string upsample = "bilinear";

  void add(CLI::App* app) {
    app->add_option("--layer-window", layer_window, "Layers aggregated (0 = model default)");
    app->add_option("--temperature", temperature, "Attribution softmax temperature (0 = model default)");
    app->add_option("--upsample", upsample, "bilinear or nearest")
        ->check(CLI::IsMember({"bilinear", "nearest"}));
  }
  bicam_attribution_options options() const {
    bicam_attribution_options o;
    bicam_attribution_options_default(&o);
    o.layer_window = layer_window;
    o.temperature = temperature;
    o.upsample = upsample == "nearest" ? BICAM_UPSAMPLE_NEAREST : BICAM_UPSAMPLE_BILINEAR;
    return o;
  }
};

// ---- config files -----------------------------------------------------------
//
// Each subcommand takes --config FILE with flat key=value lines whose keys
// are that subcommand's long option names. Values from the file are placed
// before the command-line arguments, so explicit flags win. --save-config
// writes the effective settings in the same format.

std::vector<std::string> config_tokens(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure(BICAM_ERR_IO, "cannot open config file '" + path + "'");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw Failure(BICAM_ERR_FORMAT, path + ": " + e.what());
  }
  std::vector<std::string> tokens;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty()) {
      throw Failure(BICAM_ERR_FORMAT, path + ": sections are not supported ('" + item.fullname() + "')");
    }
    if (item.name == "config" || item.name == "save-config") {
      throw Failure(BICAM_ERR_FORMAT, path + ": '" + item.name + "' cannot be set from a config file");
    }
    const CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr) {
      throw Failure(BICAM_ERR_FORMAT, path + ": unknown key '" + item.name + "' for " + sub->get_name());
    }
    if (item.inputs.size() != 1) {
      throw Failure(BICAM_ERR_FORMAT, path + ": key '" + item.name + "' needs exactly one value");
    }
    tokens.push_back("--" + item.name + "=" + item.inputs.front());
  }
  return tokens;
}

// Returns the argv to parse: program, subcommand, config values, then the
// remaining command-line tokens.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.size() < 2) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[1]);
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (path.empty()) return args;
  auto tokens = config_tokens(sub, path);
  args.insert(args.begin() + 2, tokens.begin(), tokens.end());
  return args;
}

void add_config_flags(CLI::App* sub, std::string& save_path) {
  // --config is consumed by expand_config; declared here for --help.
  sub->add_option("--config", "Read settings from a key=value file");
  sub->add_option("--save-config", save_path, "Write the effective settings as key=value");
}

void maybe_save_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure(BICAM_ERR_IO, "cannot write '" + path + "'");
  std::string text = sub->config_to_str(true, false);
  // Drop unset options and the two config options themselves.
  std::string filtered;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    const bool unset = line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0;
    if (!line.empty() && !unset && line.rfind("config=", 0) != 0 &&
        line.rfind("save-config=", 0) != 0) {
      filtered += line + "\n";
    }
    start = end + 1;
  }
  out << filtered;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BiCAM attribution and adversarial detection on small vision transformers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bicam_version()));
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  std::string save_config;
  std::uint64_t seed = 0;
  std::string model_path;
  bool skip_errors = false;

  // init-model
  auto* init = app.add_subcommand("init-model", "Create a randomly initialized model file");
  bicam_config cfg;
  bicam_config_default(&cfg);
  cfg.layer_window = 0;
  std::string init_out;
  bool distill = false;
  init->add_option("--out", init_out, "Weight file to write")->required();
  init->add_option("--image-height", cfg.image_height);
  init->add_option("--image-width", cfg.image_width);
  init->add_option("--patch-size", cfg.patch_size);
  init->add_option("--layers", cfg.num_layers);
  init->add_option("--heads", cfg.num_heads);
  init->add_option("--embed-dim", cfg.embed_dim);
  init->add_option("--ffn-dim", cfg.ffn_dim);
  init->add_option("--classes", cfg.num_classes);
  init->add_flag("--distill", distill, "Add a distillation token");
  init->add_option("--layer-window", cfg.layer_window, "Default attribution window (0 = round(2L/3))");
  init->add_option("--temperature", cfg.temperature, "Default attribution temperature");
  init->add_option("--seed", seed);
  add_config_flags(init, save_config);

  // train-toy
  auto* train = app.add_subcommand("train-toy", "Train a model on the synthetic stripe task");
  bicam_train_options topts;
  bicam_train_options_default(&topts);
  std::string train_out;
  train->add_option("--model", model_path, "Input weight file")->required();
  train->add_option("--out", train_out, "Output weight file (default: overwrite --model)");
  train->add_option("--steps", topts.steps);
  train->add_option("--batch-size", topts.batch_size);
  train->add_option("--learning-rate", topts.learning_rate);
  train->add_option("--seed", seed);
  add_config_flags(train, save_config);

  // synth
  auto* synth = app.add_subcommand("synth", "Write synthetic images, labels.csv and target masks");
  std::string synth_dir;
  std::uint32_t synth_count = 8;
  synth->add_option("--model", model_path, "Weight file (fixes the image size)")->required();
  synth->add_option("--out-dir", synth_dir)->required();
  synth->add_option("--count", synth_count);
  synth->add_option("--seed", seed);
  add_config_flags(synth, save_config);

  // attribute / rollout
  auto* attribute = app.add_subcommand("attribute", "Signed BiCAM attribution for one image");
  auto* rollout = app.add_subcommand("rollout", "Attention Rollout baseline for one image");
  std::string image_path, out_prefix, pnr_eps_text = "1e-8";
  std::int64_t class_index = -1;
  bool channels = false;
  AttributionFlags attr;
  for (auto* sub : {attribute, rollout}) {
    sub->add_option("--model", model_path)->required();
    sub->add_option("--image", image_path)->required();
    sub->add_option("--out", out_prefix, "Output prefix for CSV and PPM files");
    sub->add_flag("--channels", channels, "Also write the positive and negative channel images");
    add_config_flags(sub, save_config);
  }
  attribute->add_option("--class", class_index, "Target class (default: predicted)");
  attribute->add_option("--pnr-epsilon", pnr_eps_text);
  attr.add(attribute);
  rollout->add_option("--upsample", attr.upsample)->check(CLI::IsMember({"bilinear", "nearest"}));

  // attack
  auto* attack = app.add_subcommand("attack", "Adversarial copies of every image in a directory");
  std::string in_dir, out_dir, method = "pgd", eps_text = "8/255", step_text = "2/255";
  bicam_attack_config acfg;
  bicam_attack_config_default(&acfg);
  bool no_random_start = false;
  attack->add_option("--model", model_path)->required();
  attack->add_option("--input-dir", in_dir)->required();
  attack->add_option("--output-dir", out_dir)->required();
  attack->add_option("--method", method)->check(CLI::IsMember({"pgd", "mifgsm"}));
  attack->add_option("--epsilon", eps_text, "L-infinity budget, e.g. 8/255");
  attack->add_option("--step-size", step_text);
  attack->add_option("--steps", acfg.num_steps);
  attack->add_option("--momentum", acfg.momentum_decay, "MI-FGSM decay");
  attack->add_flag("--no-random-start", no_random_start, "PGD starts at the clean image");
  attack->add_option("--seed", seed);
  attack->add_flag("--skip-errors", skip_errors);
  add_config_flags(attack, save_config);

  // pnr-detect
  auto* detect = app.add_subcommand("pnr-detect", "PNR-based adversarial detection");
  std::string clean_dir, adv_dir, records_out, report_out, records_in, direction = "higher";
  detect->add_option("--model", model_path);
  detect->add_option("--clean-dir", clean_dir);
  detect->add_option("--adv-dir", adv_dir);
  detect->add_option("--records", records_in, "Score an existing id,label,pnr file instead");
  detect->add_option("--records-out", records_out);
  detect->add_option("--report-out", report_out);
  detect->add_option("--pnr-epsilon", pnr_eps_text);
  detect->add_option("--direction", direction, "higher: larger PNR is more adversarial")
      ->check(CLI::IsMember({"higher", "lower"}));
  detect->add_flag("--skip-errors", skip_errors);
  attr.add(detect);
  add_config_flags(detect, save_config);

  // eval-loc
  auto* loc = app.add_subcommand("eval-loc", "Localization metrics against PGM masks");
  std::string eval_dir;
  loc->add_option("--model", model_path)->required();
  loc->add_option("--dir", eval_dir)->required();
  loc->add_option("--report-out", report_out);
  loc->add_flag("--skip-errors", skip_errors);
  attr.add(loc);
  add_config_flags(loc, save_config);

  // eval-faith
  auto* faith = app.add_subcommand("eval-faith", "MIF/LIF patch-removal faithfulness");
  std::uint32_t random_seeds = 5;
  std::string curves_out;
  faith->add_option("--model", model_path)->required();
  faith->add_option("--dir", eval_dir)->required();
  faith->add_option("--random-seeds", random_seeds, "Random-order baselines per image");
  faith->add_option("--seed", seed);
  faith->add_option("--report-out", report_out);
  faith->add_option("--curves-out", curves_out);
  faith->add_flag("--skip-errors", skip_errors);
  attr.add(faith);
  add_config_flags(faith, save_config);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(app, std::move(args));
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  } catch (const Failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.status);
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    maybe_save_config(active, save_config);
    const double pnr_eps = parse_number(pnr_eps_text, "--pnr-epsilon");

    if (init->parsed()) {
      cfg.distillation_token = distill ? 1 : 0;
      bicam_model* m = nullptr;
      check(bicam_model_init(&cfg, seed, &m));
      ModelPtr model(m);
      check(bicam_model_save(model.get(), init_out.c_str()));
      std::uint64_t sum = 0;
      std::size_t params = 0;
      check(bicam_model_checksum(model.get(), &sum));
      check(bicam_model_parameter_count(model.get(), &params));
      std::cout << "wrote " << init_out << " (" << params << " parameters)\n"
                << "checksum " << hex64(sum) << "\n";
    } else if (train->parsed()) {
      ModelPtr model = load_model(model_path);
      topts.seed = seed;
      bicam_train_stats stats{};
      check(bicam_model_train_toy(model.get(), &topts, &stats));
      const std::string out = train_out.empty() ? model_path : train_out;
      check(bicam_model_save(model.get(), out.c_str()));
      std::uint64_t sum = 0;
      check(bicam_model_checksum(model.get(), &sum));
      std::printf("steps %u  loss %.4f -> %.4f  held-out accuracy %.4f\n", stats.steps,
                  stats.initial_loss, stats.final_loss, stats.heldout_accuracy);
      std::cout << "wrote " << out << "\nchecksum " << hex64(sum) << "\n";
    } else if (synth->parsed()) {
      ModelPtr model = load_model(model_path);
      bicam_config mc;
      check(bicam_model_config(model.get(), &mc));
      std::filesystem::create_directories(synth_dir);
      std::ofstream labels(std::filesystem::path(synth_dir) / "labels.csv", std::ios::binary);
      if (!labels) throw Failure(BICAM_ERR_IO, "cannot write labels.csv in '" + synth_dir + "'");
      labels << "id,class\n";
      for (std::uint32_t i = 0; i < synth_count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "img%04u", i);
        const std::uint32_t label = i % mc.num_classes;
        check(bicam_write_synthetic_sample(model.get(), label, seed * 1000003ULL + i,
                                           synth_dir.c_str(), id));
        labels << id << ',' << label << '\n';
      }
      std::cout << "wrote " << synth_count << " sample(s) to " << synth_dir << "\n";
    } else if (attribute->parsed() || rollout->parsed()) {
      ModelPtr model = load_model(model_path);
      ImagePtr image = load_image(image_path);
      bicam_map* raw = nullptr;
      const auto opts = attr.options();
      if (attribute->parsed()) {
        check(bicam_attribute(model.get(), image.get(), class_index, &opts, &raw));
      } else {
        check(bicam_rollout(model.get(), image.get(), opts.upsample, &raw));
      }
      MapPtr map(raw);
      bicam_map_info info{};
      check(bicam_map_info_get(map.get(), &info));
      if (!out_prefix.empty()) check(bicam_map_write(map.get(), out_prefix.c_str(), channels ? 1 : 0));
      if (attribute->parsed()) {
        double value = 0.0;
        check(bicam_map_pnr(map.get(), pnr_eps, &value));
        std::printf("class %u  window %u  temperature %g\npnr %.17g\n", info.class_index,
                    info.layer_window, info.temperature, value);
      } else {
        std::printf("rollout over %ux%u patches\n", info.grid_height, info.grid_width);
      }
    } else if (attack->parsed()) {
      ModelPtr model = load_model(model_path);
      bicam_attack_dir_args a{};
      a.input_dir = in_dir.c_str();
      a.output_dir = out_dir.c_str();
      a.attack = acfg;
      a.attack.method = method == "mifgsm" ? BICAM_ATTACK_MIFGSM : BICAM_ATTACK_PGD;
      a.attack.epsilon = parse_number(eps_text, "--epsilon");
      a.attack.step_size = parse_number(step_text, "--step-size");
      a.attack.random_start = no_random_start ? 0 : 1;
      a.seed = seed;
      a.skip_errors = skip_errors ? 1 : 0;
      char* table = nullptr;
      check(bicam_run_attack_dir(model.get(), &a, &table, nullptr));
      print_table(table);
    } else if (detect->parsed()) {
      const int higher = direction == "higher" ? 1 : 0;
      char* table = nullptr;
      bicam_detection_report report{};
      if (!records_in.empty()) {
        if (!clean_dir.empty() || !adv_dir.empty()) {
          throw CLI::ValidationError("--records", "cannot be combined with --clean-dir/--adv-dir");
        }
        check(bicam_score_pnr_records(records_in.c_str(), higher, opt_c(report_out), &report, &table));
      } else {
        if (model_path.empty() || clean_dir.empty() || adv_dir.empty()) {
          throw CLI::ValidationError("pnr-detect", "needs --model, --clean-dir and --adv-dir (or --records)");
        }
        ModelPtr model = load_model(model_path);
        bicam_pnr_detect_args a{};
        a.clean_dir = clean_dir.c_str();
        a.adv_dir = adv_dir.c_str();
        a.attribution = attr.options();
        a.pnr_epsilon = pnr_eps;
        a.higher_is_adversarial = higher;
        a.records_out = opt_c(records_out);
        a.report_out = opt_c(report_out);
        a.skip_errors = skip_errors ? 1 : 0;
        check(bicam_run_pnr_detect(model.get(), &a, &report, &table, nullptr));
      }
      print_table(table);
    } else if (loc->parsed()) {
      ModelPtr model = load_model(model_path);
      bicam_eval_loc_args a{};
      a.dir = eval_dir.c_str();
      a.attribution = attr.options();
      a.report_out = opt_c(report_out);
      a.skip_errors = skip_errors ? 1 : 0;
      char* table = nullptr;
      check(bicam_run_eval_loc(model.get(), &a, &table, nullptr));
      print_table(table);
    } else if (faith->parsed()) {
      ModelPtr model = load_model(model_path);
      bicam_eval_faith_args a{};
      a.dir = eval_dir.c_str();
      a.attribution = attr.options();
      a.random_seeds = random_seeds;
      a.seed = seed;
      a.report_out = opt_c(report_out);
      a.curves_out = opt_c(curves_out);
      a.skip_errors = skip_errors ? 1 : 0;
      char* table = nullptr;
      check(bicam_run_eval_faith(model.get(), &a, &table, nullptr));
      print_table(table);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.status);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
