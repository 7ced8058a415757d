#include "bicam/drivers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "bicam/io.hpp"
#include "bicam/rng.hpp"

namespace bicam::drivers {

namespace {

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string join_failures(const std::vector<ItemFailure>& failures) {
  std::string msg = std::to_string(failures.size()) + " item(s) failed:";
  for (const auto& f : failures) msg += "\n  " + f.id + ": " + f.message;
  return msg;
}

// Runs `fn` over every item in parallel; slots of failed items stay empty.
template <class R>
std::vector<std::optional<R>> run_items(const std::vector<std::string>& ids,
                                        const std::function<R(std::size_t)>& fn,
                                        std::vector<ItemFailure>& failures) {
  std::vector<std::optional<R>> results(ids.size());
  std::vector<std::optional<ItemFailure>> errs(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    try {
      results[i] = fn(i);
    } catch (const Error& e) {
      errs[i] = ItemFailure{ids[i], e.kind(), e.what()};
    } catch (const std::exception& e) {
      errs[i] = ItemFailure{ids[i], ErrorKind::Io, e.what()};
    }
  });
  for (auto& e : errs) {
    if (e) failures.push_back(std::move(*e));
  }
  return results;
}

void check_failures(const std::vector<ItemFailure>& failures, bool skip_errors) {
  if (!failures.empty() && !skip_errors) throw ItemErrors(failures);
}

std::size_t resolve_class(const ViTModel& model, const std::map<std::string, std::size_t>& labels,
                          const std::string& id, const Tensor& image) {
  auto it = labels.find(id);
  if (it == labels.end()) return predict_class(model, image);
  if (it->second >= model.config().num_classes) {
    throw ParameterError("label for '" + id + "' is out of range");
  }
  return it->second;
}

std::vector<std::string> stems(const std::vector<fs::path>& files) {
  std::vector<std::string> out;
  for (const auto& f : files) out.push_back(f.stem().string());
  return out;
}

std::string fmt(double v) { return io::format_double(v); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

ItemErrors::ItemErrors(std::vector<ItemFailure> failures)
    : Error(failures.empty() ? ErrorKind::Io : failures.front().kind, join_failures(failures)),
      failures_(std::move(failures)) {}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

std::map<std::string, std::size_t> read_labels(const fs::path& dir) {
  std::map<std::string, std::size_t> labels;
  const fs::path file = dir / "labels.csv";
  if (!fs::exists(file)) return labels;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,class") throw FormatError(file.string() + ": header must be 'id,class'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError(file.string() + ":" + std::to_string(line_no) + ": expected id,class");
    }
    try {
      std::size_t used = 0;
      const std::string value = line.substr(comma + 1);
      const unsigned long cls = std::stoul(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing characters");
      labels[line.substr(0, comma)] = cls;
    } catch (const std::exception&) {
      throw FormatError(file.string() + ":" + std::to_string(line_no) + ": bad class value");
    }
  }
  return labels;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---- attribute / rollout -----------------------------------------------------

namespace {

AttributeResult write_map_outputs(const AttributeArgs& args, AttributeResult result) {
  if (args.out_prefix.empty()) return result;
  const fs::path prefix = args.out_prefix;
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  auto with_suffix = [&](const std::string& suffix) {
    return fs::path(prefix.string() + suffix);
  };
  // Batch size is 1 here, so the leading axes of both maps are singletons.
  const fs::path patches = with_suffix("_patches.csv");
  const fs::path heatmap = with_suffix("_heatmap.csv");
  const fs::path render = with_suffix(".ppm");
  io::write_grid_csv(patches, result.map.patch_scores);
  io::write_grid_csv(heatmap, result.map.heatmap);
  io::write_ppm(render, io::render_signed(result.map.heatmap));
  result.written = {patches, heatmap, render};
  if (args.write_channels) {
    const auto ch = io::render_channels(result.map.heatmap);
    io::write_ppm(with_suffix("_pos.ppm"), ch.positive);
    io::write_ppm(with_suffix("_neg.ppm"), ch.negative);
    result.written.push_back(with_suffix("_pos.ppm"));
    result.written.push_back(with_suffix("_neg.ppm"));
  }
  return result;
}

}  // namespace

AttributeResult run_attribute(const ViTModel& model, const AttributeArgs& args) {
  const Tensor image = io::load_image(args.image);
  check_image_shape(model, image);
  AttributeResult result;
  result.class_index = args.class_index ? *args.class_index : predict_class(model, image);
  result.map = bicam(model, image, result.class_index, args.attribution);
  result.pnr = pnr(result.map, args.pnr_epsilon);
  return write_map_outputs(args, std::move(result));
}

AttributeResult run_rollout(const ViTModel& model, const AttributeArgs& args) {
  const Tensor image = io::load_image(args.image);
  check_image_shape(model, image);
  AttributeResult result;
  result.map = attention_rollout(model, image, args.attribution.upsample);
  result.class_index = 0;
  return write_map_outputs(args, std::move(result));
}

// ---- attack ----------------------------------------------------------------

Tensor quantize_within_ball(const Tensor& adv, const Tensor& clean, double epsilon) {
  if (adv.shape() != clean.shape()) throw DimensionError("quantize: shape mismatch");
  Tensor out(adv.shape());
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double k = std::round(clean[i] * 255.0);
    double q = std::clamp(std::round(adv[i] * 255.0), 0.0, 255.0);
    if (std::abs(q - k) > epsilon * 255.0 + 1e-9) q += q > k ? -1.0 : 1.0;
    out[i] = q / 255.0;
  }
  return out;
}

AttackSummary run_attack_dir(const ViTModel& model, const AttackDirArgs& args) {
  args.attack.validate();
  const auto files = list_images(args.input_dir);
  if (files.empty()) throw ContractError("no .ppm images in '" + args.input_dir.string() + "'");
  const auto labels = read_labels(args.input_dir);
  fs::create_directories(args.output_dir);
  const auto ids = stems(files);

  AttackSummary summary;
  auto results = run_items<AttackItem>(ids, [&](std::size_t i) {
    const Tensor clean = io::load_image(files[i]);
    check_image_shape(model, clean);
    AttackItem item;
    item.id = ids[i];
    item.true_class = resolve_class(model, labels, ids[i], clean);
    AttackConfig cfg = args.attack;
    cfg.seed = derive_seed(args.seed, ids[i]);
    const Tensor adv = quantize_within_ball(run_attack(model, clean, item.true_class, cfg),
                                            clean, cfg.epsilon);
    io::save_image(args.output_dir / files[i].filename(), adv);
    item.prob_before = predict_proba(model, clean)[item.true_class];
    item.prob_after = predict_proba(model, adv)[item.true_class];
    for (std::size_t k = 0; k < adv.size(); ++k) {
      item.linf = std::max(item.linf, std::abs(adv[k] - clean[k]));
    }
    return item;
  }, summary.failures);

  for (auto& r : results) {
    if (r) summary.items.push_back(std::move(*r));
  }
  if (!summary.items.empty()) {
    for (const auto& it : summary.items) {
      summary.mean_prob_before += it.prob_before;
      summary.mean_prob_after += it.prob_after;
    }
    summary.mean_prob_before /= static_cast<double>(summary.items.size());
    summary.mean_prob_after /= static_cast<double>(summary.items.size());
  }

  auto out = open_csv(args.output_dir / "attack_report.csv");
  out << "id,true_class,prob_before,prob_after,linf\n";
  for (const auto& it : summary.items) {
    out << it.id << ',' << it.true_class << ',' << fmt(it.prob_before) << ','
        << fmt(it.prob_after) << ',' << fmt(it.linf) << '\n';
  }
  check_failures(summary.failures, args.skip_errors);
  return summary;
}

// ---- PNR detection -------------------------------------------------------------

void write_detection_report(const fs::path& path, const DetectionReport& r) {
  auto out = open_csv(path);
  out << "num_clean,num_adversarial,num_pairs,delta_pnr_mean,delta_pnr_std,auroc,aupr,"
         "threshold,sensitivity,specificity,direction\n";
  out << r.num_clean << ',' << r.num_adversarial << ',' << r.num_pairs << ','
      << fmt(r.delta_pnr_mean) << ',' << fmt(r.delta_pnr_std) << ',' << fmt(r.auroc) << ','
      << fmt(r.aupr) << ',' << fmt(r.threshold) << ',' << fmt(r.sensitivity) << ','
      << fmt(r.specificity) << ',' << (r.higher_is_adversarial ? "higher" : "lower") << '\n';
}

std::string format_detection_table(const DetectionReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "samples" << r.num_clean << " clean / "
     << r.num_adversarial << " adversarial (" << r.num_pairs << " pairs)\n"
     << std::setw(14) << "dPNR" << (r.delta_pnr_mean >= 0 ? "+" : "") << fixed(r.delta_pnr_mean)
     << " (std " << fixed(r.delta_pnr_std) << ")\n"
     << std::setw(14) << "AUROC" << fixed(r.auroc) << '\n'
     << std::setw(14) << "AUPR" << fixed(r.aupr) << '\n'
     << std::setw(14) << "threshold" << fixed(r.threshold, 6) << " ("
     << (r.higher_is_adversarial ? "pnr >= t" : "pnr <= t") << " -> adversarial)\n"
     << std::setw(14) << "sensitivity" << fixed(r.sensitivity) << '\n'
     << std::setw(14) << "specificity" << fixed(r.specificity) << '\n';
  return os.str();
}

PnrDetectResult run_pnr_detect(const ViTModel& model, const PnrDetectArgs& args) {
  const auto clean_files = list_images(args.clean_dir);
  const auto adv_files = list_images(args.adv_dir);
  if (clean_files.empty()) throw ContractError("no clean images in '" + args.clean_dir.string() + "'");
  if (adv_files.empty()) throw ContractError("no adversarial images in '" + args.adv_dir.string() + "'");
  const auto labels = read_labels(args.clean_dir);

  struct Job {
    std::string id;
    SampleLabel label;
    fs::path image;
    fs::path clean_counterpart;  // for the class query of adversarial images
  };
  std::vector<Job> jobs;
  for (const auto& f : clean_files) jobs.push_back({f.stem().string(), SampleLabel::Clean, f, f});
  for (const auto& f : adv_files) {
    const fs::path clean = args.clean_dir / f.filename();
    jobs.push_back({f.stem().string(), SampleLabel::Adversarial, f,
                    fs::exists(clean) ? clean : fs::path{}});
  }
  std::vector<std::string> ids;
  for (const auto& j : jobs) ids.push_back(std::string(to_string(j.label)) + ":" + j.id);

  PnrDetectResult result;
  auto recs = run_items<PnrRecord>(ids, [&](std::size_t i) {
    const Job& job = jobs[i];
    const Tensor image = io::load_image(job.image);
    check_image_shape(model, image);
    const Tensor query = job.clean_counterpart.empty() ? image : io::load_image(job.clean_counterpart);
    const std::size_t cls = resolve_class(model, labels, job.id, query);
    const AttributionMap map = bicam(model, image, cls, args.attribution);
    return PnrRecord{job.id, job.label, pnr(map, args.pnr_epsilon)};
  }, result.failures);
  for (auto& r : recs) {
    if (r) result.records.push_back(std::move(*r));
  }

  if (!args.records_out.empty()) {
    auto out = open_csv(args.records_out);
    write_pnr_records(out, result.records);
  }
  check_failures(result.failures, args.skip_errors);
  result.report = roc_analysis(result.records, args.higher_is_adversarial);
  if (!args.report_out.empty()) write_detection_report(args.report_out, result.report);
  return result;
}

DetectionReport score_pnr_records(const fs::path& records, bool higher_is_adversarial,
                                  const fs::path& report_out) {
  std::ifstream in(records);
  if (!in) throw IoError("cannot open '" + records.string() + "'");
  const auto recs = read_pnr_records(in);
  DetectionReport report = roc_analysis(recs, higher_is_adversarial);
  if (!report_out.empty()) write_detection_report(report_out, report);
  return report;
}

// ---- localization -----------------------------------------------------------------

EvalLocResult run_eval_loc(const ViTModel& model, const EvalLocArgs& args) {
  const auto files = list_images(args.dir);
  if (files.empty()) throw ContractError("no .ppm images in '" + args.dir.string() + "'");
  const auto labels = read_labels(args.dir);
  const auto ids = stems(files);
  const ViTConfig& c = model.config();

  EvalLocResult result;
  auto per_item = run_items<std::vector<LocRow>>(ids, [&](std::size_t i) {
    const Tensor image = io::load_image(files[i]);
    check_image_shape(model, image);
    const fs::path target_path = args.dir / (ids[i] + "_target.pgm");
    const fs::path nontarget_path = args.dir / (ids[i] + "_nontarget.pgm");
    const BinaryMask target = io::read_mask(target_path);
    std::optional<BinaryMask> nontarget;
    if (fs::exists(nontarget_path)) nontarget = io::read_mask(nontarget_path);
    const std::size_t cls = resolve_class(model, labels, ids[i], image);
    const AttributionMap map = bicam(model, image, cls, args.attribution);
    const Tensor heat = map.heatmap.reshaped({c.image_height, c.image_width});
    const auto rep = evaluate_bidirectional(heat, target, nontarget ? &*nontarget : nullptr);
    std::vector<LocRow> rows{{ids[i], cls, rep.positive, rep.unified_fallback}};
    if (rep.negative) rows.push_back({ids[i], cls, *rep.negative, false});
    return rows;
  }, result.failures);

  std::map<Channel, std::size_t> counts;
  for (auto& item : per_item) {
    if (!item) continue;
    for (auto& row : *item) {
      auto& m = result.means[row.report.channel];
      m.channel = row.report.channel;
      m.pixel_accuracy += row.report.pixel_accuracy;
      m.iou += row.report.iou;
      m.f1 += row.report.f1;
      m.precision += row.report.precision;
      m.recall += row.report.recall;
      ++counts[row.report.channel];
      result.rows.push_back(std::move(row));
    }
  }
  for (auto& [ch, m] : result.means) {
    const auto n = static_cast<double>(counts[ch]);
    m.pixel_accuracy /= n;
    m.iou /= n;
    m.f1 /= n;
    m.precision /= n;
    m.recall /= n;
  }

  if (!args.report_out.empty()) {
    auto out = open_csv(args.report_out);
    out << "id,class,channel,pixel_accuracy,iou,f1,precision,recall,tp,fp,fn,tn,unified_fallback\n";
    for (const auto& r : result.rows) {
      const auto& m = r.report;
      out << r.id << ',' << r.class_index << ',' << to_string(m.channel) << ','
          << fmt(m.pixel_accuracy) << ',' << fmt(m.iou) << ',' << fmt(m.f1) << ','
          << fmt(m.precision) << ',' << fmt(m.recall) << ',' << m.tp << ',' << m.fp << ','
          << m.fn << ',' << m.tn << ',' << (r.unified_fallback ? 1 : 0) << '\n';
    }
  }
  check_failures(result.failures, args.skip_errors);
  return result;
}

std::string format_localization_table(const EvalLocResult& result) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "channel" << std::right << std::setw(10) << "Pix.Acc"
     << std::setw(10) << "IoU" << std::setw(10) << "F1" << std::setw(10) << "Prec."
     << std::setw(10) << "Rec." << '\n';
  for (const auto& [ch, m] : result.means) {
    os << std::left << std::setw(10) << to_string(ch) << std::right << std::setw(10)
       << fixed(m.pixel_accuracy) << std::setw(10) << fixed(m.iou) << std::setw(10)
       << fixed(m.f1) << std::setw(10) << fixed(m.precision) << std::setw(10)
       << fixed(m.recall) << '\n';
  }
  return os.str();
}

// ---- faithfulness -----------------------------------------------------------------

EvalFaithResult run_eval_faith(const ViTModel& model, const EvalFaithArgs& args) {
  const auto files = list_images(args.dir);
  if (files.empty()) throw ContractError("no .ppm images in '" + args.dir.string() + "'");
  const auto labels = read_labels(args.dir);
  const auto ids = stems(files);

  struct ItemOut {
    std::vector<FaithRow> rows;
    FaithfulnessReport bicam_report;
  };
  EvalFaithResult result;
  auto per_item = run_items<ItemOut>(ids, [&](std::size_t i) {
    const Tensor image = io::load_image(files[i]);
    check_image_shape(model, image);
    const std::size_t cls = resolve_class(model, labels, ids[i], image);
    const AttributionMap map = bicam(model, image, cls, args.attribution);
    ItemOut out;
    out.bicam_report = faithfulness(model, image, cls, map.patch_scores.data());
    out.rows.push_back({ids[i], "bicam", out.bicam_report.lif_auc, out.bicam_report.mif_auc,
                        out.bicam_report.faithfulness});
    if (args.random_seeds > 0) {
      FaithRow rnd{ids[i], "random", 0.0, 0.0, 0.0};
      for (std::size_t s = 0; s < args.random_seeds; ++s) {
        const auto r = random_baseline_faithfulness(
            model, image, cls, derive_seed(derive_seed(args.seed, ids[i]), s));
        rnd.lif_auc += r.lif_auc;
        rnd.mif_auc += r.mif_auc;
        rnd.faithfulness += r.faithfulness;
      }
      const auto n = static_cast<double>(args.random_seeds);
      rnd.lif_auc /= n;
      rnd.mif_auc /= n;
      rnd.faithfulness /= n;
      out.rows.push_back(rnd);
    }
    return out;
  }, result.failures);

  std::map<std::string, std::vector<double>> faith_by_method;
  for (auto& item : per_item) {
    if (!item) continue;
    for (const auto& row : item->rows) {
      auto& m = result.means[row.method];
      m.method = row.method;
      m.id = "mean";
      m.lif_auc += row.lif_auc;
      m.mif_auc += row.mif_auc;
      faith_by_method[row.method].push_back(row.faithfulness);
      result.rows.push_back(row);
    }
  }
  for (auto& [method, m] : result.means) {
    const auto& f = faith_by_method[method];
    const auto n = static_cast<double>(f.size());
    m.lif_auc /= n;
    m.mif_auc /= n;
    m.faithfulness = std::accumulate(f.begin(), f.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : f) ss += (v - m.faithfulness) * (v - m.faithfulness);
    result.stds[method] = f.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }

  if (!args.report_out.empty()) {
    auto out = open_csv(args.report_out);
    out << "id,method,lif_auc,mif_auc,faithfulness\n";
    for (const auto& r : result.rows) {
      out << r.id << ',' << r.method << ',' << fmt(r.lif_auc) << ',' << fmt(r.mif_auc) << ','
          << fmt(r.faithfulness) << '\n';
    }
  }
  if (!args.curves_out.empty()) {
    auto out = open_csv(args.curves_out);
    out << "id,step,mif,lif\n";
    for (std::size_t i = 0; i < per_item.size(); ++i) {
      if (!per_item[i]) continue;
      const auto& rep = per_item[i]->bicam_report;
      for (std::size_t k = 0; k < rep.mif_curve.size(); ++k) {
        out << ids[i] << ',' << k << ',' << fmt(rep.mif_curve[k]) << ',' << fmt(rep.lif_curve[k])
            << '\n';
      }
    }
  }
  check_failures(result.failures, args.skip_errors);
  return result;
}

std::string format_faithfulness_table(const EvalFaithResult& result) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "method" << std::right << std::setw(10) << "LIF"
     << std::setw(10) << "MIF" << std::setw(10) << "Faith" << std::setw(10) << "std" << '\n';
  for (const auto& [method, m] : result.means) {
    os << std::left << std::setw(10) << method << std::right << std::setw(10) << fixed(m.lif_auc)
       << std::setw(10) << fixed(m.mif_auc) << std::setw(10) << fixed(m.faithfulness)
       << std::setw(10) << fixed(result.stds.at(method)) << '\n';
  }
  return os.str();
}

}  // namespace bicam::drivers
