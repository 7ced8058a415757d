// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bicam/adversarial.hpp"
#include "bicam/attribution.hpp"
#include "bicam/detection.hpp"
#include "bicam/drivers.hpp"
#include "bicam/evaluation.hpp"
#include "bicam/io.hpp"
#include "bicam/training.hpp"
#include "bicam/vit.hpp"
#include "test_support.hpp"

namespace {

using namespace bicam;
using testing::LinearPatchModel;
using testing::random_tensor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-10});
}

Tensor tiny_image(std::uint64_t seed) { return random_tensor({1, 3, 16, 16}, seed, 0.0, 1.0); }

// ---- 1 -----------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const ViTConfig cfg;  // L=4, H=2, d=16, 4x4 patch grid
  const auto m = init_model(cfg, 2024);
  const Tensor img = tiny_image(1);
  auto logit = [&](const Tensor& x, std::size_t c, const std::optional<ClsOffset>& off) {
    ForwardOptions o;
    o.cls_offset = off;
    return forward(m, x, o).logits()[c];
  };
  const double h = 1e-5;
  double worst_in = 0.0, worst_cls = 0.0;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    ForwardPass pass = forward(m, img, ForwardOptions{.capture_window = cfg.num_layers});
    pass.backward_class(c);
    const Tensor g = pass.input_gradient();
    for (std::size_t i = 0; i < img.size(); ++i) {
      Tensor p = img, q = img;
      p[i] += h;
      q[i] -= h;
      worst_in = std::max(worst_in, rel_err(g[i], (logit(p, c, {}) - logit(q, c, {})) / (2 * h)));
    }
    for (const auto& cap : pass.captures()) {
      for (std::size_t k = 0; k < cfg.embed_dim; ++k) {
        Tensor up(Shape{1, cfg.embed_dim}), down(Shape{1, cfg.embed_dim});
        up[k] = h;
        down[k] = -h;
        const double n = (logit(img, c, ClsOffset{cap.layer, up}) -
                          logit(img, c, ClsOffset{cap.layer, down})) / (2 * h);
        worst_cls = std::max(worst_cls, rel_err((*cap.cls_out_grad)[k], n));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst_in < 1e-4 && worst_cls < 1e-4 && secs < 30.0,
          "max rel err input " + fmt("%.2e", worst_in) + ", o_cls (layers 1-4) " +
              fmt("%.2e", worst_cls) + ", " + fmt("%.2f", secs) + " s"};
}

// ---- 2 -----------------------------------------------------------------------

Outcome algorithm_decomposition() {
  const ViTConfig cfg;
  const auto m = init_model(cfg, 7);
  const Tensor img = tiny_image(2);
  const std::size_t L = cfg.num_layers;
  const double T = cfg.temperature;
  // Independent per-layer masks from one full capture.
  ForwardPass pass = forward(m, img, ForwardOptions{.capture_window = L});
  const std::size_t cls = predict_class(m, img);
  pass.backward_class(cls);
  std::vector<Tensor> layer;
  for (const auto& cap : pass.captures()) {
    layer.push_back(tokens_to_grid(layer_mask(cap, attribution_alpha(cap, T)), cfg));
  }
  double worst = 0.0;
  const std::size_t mid = (2 * L + 2) / 3;  // ceil(2L/3)
  for (std::size_t w : {std::size_t{1}, mid, L}) {
    const AttributionMap map = bicam::bicam(m, img, cls, AttributionOptions{.window = w});
    for (std::size_t i = 0; i < map.patch_scores.size(); ++i) {
      double s = 0.0;
      for (std::size_t l = L - w; l < L; ++l) s += layer[l][i];
      worst = std::max(worst, std::abs(map.patch_scores[i] - s));
    }
  }
  const bool exact = bicam::bicam(m, img, cls, AttributionOptions{.window = 1}).patch_scores == layer.back();
  return {worst <= 1e-12 && exact, "windows {1," + std::to_string(mid) + "," + std::to_string(L) +
                                       "}: max abs diff " + fmt("%.1e", worst) +
                                       (exact ? ", window 1 bitwise equal" : ", window 1 differs")};
}

// ---- 3 -----------------------------------------------------------------------

Outcome sign_preservation() {
  const ViTConfig cfg;
  // Hand-built capture: V.w alternates sign across tokens.
  LayerCapture cap;
  cap.layer = cfg.num_layers;
  const std::size_t N = cfg.num_tokens(), H = cfg.num_heads, dh = cfg.head_dim();
  cap.attn_logits = random_tensor({1, H, N, N}, 5);
  cap.values = Tensor(Shape{1, H, N, dh});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < N; ++i) cap.values.at({0, h, i, 0}) = (i % 2 ? 1.0 : -1.0) * (1.0 + i);
  Tensor w(Shape{1, H * dh});
  for (std::size_t h = 0; h < H; ++h) w[h * dh] = 1.0;
  cap.cls_out_grad = w;
  const Tensor grid = tokens_to_grid(aggregate_masks({cap}, cfg.temperature), cfg);
  AttributionMap map;
  map.patch_scores = grid;
  map.heatmap = upsample(grid, cfg.image_height, cfg.image_width, Upsample::Bilinear);
  const auto [lo, hi] = std::minmax_element(grid.data().begin(), grid.data().end());
  const auto [hlo, hhi] = std::minmax_element(map.heatmap.data().begin(), map.heatmap.data().end());
  const ChannelSplit s = split_channels(map.patch_scores);
  bool bitwise = true;
  for (std::size_t i = 0; i < grid.size(); ++i) bitwise &= (s.positive[i] - s.negative[i]) == grid[i];
  const ChannelSplit hs = split_channels(map.heatmap);
  for (std::size_t i = 0; i < map.heatmap.size(); ++i) {
    bitwise &= (hs.positive[i] - hs.negative[i]) == map.heatmap[i];
  }
  const bool ok = *lo < 0.0 && *hi > 0.0 && *hlo < 0.0 && *hhi > 0.0 && bitwise;
  return {ok, "patch scores in [" + fmt("%.3g", *lo) + ", " + fmt("%.3g", *hi) +
                  "], heatmap keeps both signs, channel split " +
                  (bitwise ? "reconstructs bitwise" : "does NOT reconstruct")};
}

// ---- 4 -----------------------------------------------------------------------

Outcome temperature_behavior() {
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    LayerCapture cap;
    cap.attn_logits = random_tensor({1, 2, 17, 17}, 1000 + s, -3.0, 3.0);
    auto entropy = [&](double T) {
      const Tensor a = attribution_alpha(cap, T);
      double e = 0.0;
      for (double p : a.data()) e -= p > 0 ? p * std::log(p) : 0.0;
      return e / 2.0;  // mean over heads
    };
    e1 += entropy(1.0) / 100;
    e2 += entropy(2.0) / 100;
    e3 += entropy(3.0) / 100;
  }
  const ViTConfig cfg;
  const auto m = init_model(cfg, 3);
  const AttributionMap map = bicam::bicam(m, tiny_image(3), 0);
  const bool defaults = cfg.temperature == 2.0 && map.temperature == 2.0 && map.window == 3 &&
                        ViTConfig::default_window(6) == 4 && ViTConfig::default_window(12) == 8;
  return {e3 > e2 && e2 > e1 && defaults,
          "mean entropy T=1 " + fmt("%.4f", e1) + " < T=2 " + fmt("%.4f", e2) + " < T=3 " +
              fmt("%.4f", e3) + "; defaults T=2, window round(2L/3) " + (defaults ? "hold" : "WRONG")};
}

// ---- 5 -----------------------------------------------------------------------

Outcome pnr_oracle() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Tensor m = random_tensor({1 + s % 196}, 5000 + s);
    double pos = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) pos += m[i] > 0 ? m[i] : 0.0;
    double neg = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) neg += m[i] < 0 ? -m[i] : 0.0;
    worst = std::max(worst, rel_err(pnr(m.data(), 1e-8), pos / (neg + 1e-8)));
  }
  const std::vector<double> a{1.0, 1.0, -1.0}, b{2.0, 3.0};
  const bool worked = pnr(a, 1e-8) == 2.0 / (1.0 + 1e-8) && pnr(b, 1e-8) == 5.0 / 1e-8;
  return {worst <= 1e-12 && worked, "1000 maps, max rel err " + fmt("%.1e", worst) +
                                        "; [1,1,-1] -> " + fmt("%.10g", pnr(a, 1e-8)) +
                                        ", [2,3] -> " + fmt("%.3g", pnr(b, 1e-8))};
}

// ---- 6 -----------------------------------------------------------------------

Outcome detection_statistics() {
  std::size_t auroc_bad = 0, youden_bad = 0;
  double worst_aupr = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const std::size_t nc = 5 + s % 40, na = 5 + (s * 7) % 40;
    std::vector<double> clean = random_tensor({nc}, 9000 + s, 0.0, 2.0).vec();
    std::vector<double> adv = random_tensor({na}, 19000 + s, 0.3, 2.3).vec();
    if (s % 3 == 0) {  // ties within and across classes
      for (auto& v : clean) v = std::round(v * 4) / 4;
      for (auto& v : adv) v = std::round(v * 4) / 4;
    }
    std::vector<PnrRecord> recs;
    for (std::size_t i = 0; i < nc; ++i) recs.push_back({"c" + std::to_string(i), SampleLabel::Clean, clean[i]});
    for (std::size_t i = 0; i < na; ++i) recs.push_back({"a" + std::to_string(i), SampleLabel::Adversarial, adv[i]});
    const DetectionReport r = roc_analysis(recs);

    double wins = 0.0;
    for (double p : adv)
      for (double n : clean) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    if (r.auroc != wins / static_cast<double>(na * nc)) ++auroc_bad;

    std::set<double, std::greater<>> thr(clean.begin(), clean.end());
    thr.insert(adv.begin(), adv.end());
    double ap = 0.0, prev = 0.0;
    double best_j = -2.0;
    for (double t : thr) {
      const auto tp = static_cast<double>(std::count_if(adv.begin(), adv.end(), [&](double v) { return v >= t; }));
      const auto fp = static_cast<double>(std::count_if(clean.begin(), clean.end(), [&](double v) { return v >= t; }));
      ap += (tp / na - prev) * (tp / (tp + fp));
      prev = tp / na;
      best_j = std::max(best_j, tp / na + (nc - fp) / nc - 1.0);
    }
    worst_aupr = std::max(worst_aupr, std::abs(r.aupr - ap));
    if (r.sensitivity + r.specificity - 1.0 < best_j - 1e-12) ++youden_bad;
  }
  return {auroc_bad == 0 && worst_aupr <= 1e-12 && youden_bad == 0,
          "200 sets: AUROC mismatches " + std::to_string(auroc_bad) + ", max AUPR diff " +
              fmt("%.1e", worst_aupr) + ", non-optimal Youden " + std::to_string(youden_bad)};
}

// ---- 7 -----------------------------------------------------------------------

Outcome directional_delta_pnr() {
  const auto t0 = Clock::now();
  const ViTConfig cfg;
  auto m = init_model(cfg, 11);
  TrainOptions topts;  // 300 steps
  topts.seed = 11;
  const TrainStats stats = train_toy(m, topts);

  const fs::path root = fs::temp_directory_path() / "bicam_acceptance_c7";
  fs::remove_all(root);
  fs::create_directories(root / "clean");
  Rng rng(77);
  std::ofstream labels(root / "clean" / "labels.csv");
  labels << "id,class\n";
  for (std::size_t i = 0; i < 16; ++i) {
    const std::size_t label = i % 2;
    const SyntheticSample s = synthetic_sample(16, 16, 2, label, rng);
    char id[16];
    std::snprintf(id, sizeof id, "s%02zu", i);
    io::save_image(root / "clean" / (std::string(id) + ".ppm"), s.image);
    labels << id << ',' << label << '\n';
  }
  labels.close();

  std::string detail = "train " + std::to_string(stats.steps) + " steps, held-out acc " +
                       fmt("%.2f", stats.heldout_accuracy);
  bool ok = stats.steps <= 500;
  for (auto method : {AttackMethod::Pgd, AttackMethod::MiFgsm}) {
    drivers::AttackDirArgs a;
    a.input_dir = root / "clean";
    a.output_dir = root / to_string(method);
    a.attack.method = method;  // epsilon 8/255, 10 steps
    a.seed = 5;
    const auto summary = drivers::run_attack_dir(m, a);
    const double drop = summary.mean_prob_before - summary.mean_prob_after;

    drivers::PnrDetectArgs d;
    d.clean_dir = a.input_dir;
    d.adv_dir = a.output_dir;
    const auto det = drivers::run_pnr_detect(m, d);
    const auto& r = det.report;
    const bool finite = std::isfinite(r.delta_pnr_mean) && std::isfinite(r.delta_pnr_std) &&
                        std::isfinite(r.auroc) && std::isfinite(r.aupr) && std::isfinite(r.threshold) &&
                        r.num_pairs == 16;
    ok = ok && drop >= 0.2 && finite && a.attack.num_steps == 10 &&
         std::abs(a.attack.epsilon - 8.0 / 255.0) < 1e-15;
    detail += std::string("; ") + to_string(method) + " p(true) " + fmt("%.3f", summary.mean_prob_before) +
              " -> " + fmt("%.3f", summary.mean_prob_after) + " (drop " + fmt("%.3f", drop) +
              "), dPNR mean " + fmt("%.4g", r.delta_pnr_mean) + " [" +
              (r.delta_pnr_mean > 0 ? "positive" : "non-positive") + ", not asserted], AUROC " +
              fmt("%.3f", r.auroc) + (finite ? "" : " NON-FINITE");
  }
  detail += "; " + fmt("%.1f", seconds_since(t0)) + " s";
  return {ok, detail};
}

// ---- 8 -----------------------------------------------------------------------

Outcome faithfulness_oracle() {
  const auto t0 = Clock::now();
  const std::vector<double> coeffs = random_tensor({16}, 808, -0.6, 0.6).vec();
  const LinearPatchModel model(16, 4, coeffs);
  const Tensor img = tiny_image(809);
  // Exact per-patch contribution to the logit.
  std::vector<double> contrib(16);
  for (std::size_t p = 0; p < 16; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = (p / 4) * 4; y < (p / 4) * 4 + 4; ++y)
        for (std::size_t x = (p % 4) * 4; x < (p % 4) * 4 + 4; ++x) s += img.at({0, c, y, x});
    contrib[p] = coeffs[p] * s / 48.0;
  }
  const FaithfulnessReport best = faithfulness(model, img, 0, contrib);
  std::size_t pointwise_bad = 0, faith_bad = 0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    std::vector<std::size_t> order(16);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(31337 + k);
    std::shuffle(order.begin(), order.end(), rng);
    const auto curve = removal_curve(model, img, 0, order);
    for (std::size_t i = 0; i < curve.size(); ++i) pointwise_bad += best.mif_curve[i] > curve[i] + 1e-12;
    std::vector<std::size_t> rev(order.rbegin(), order.rend());
    const double f = curve_auc(removal_curve(model, img, 0, rev)) - curve_auc(curve);
    faith_bad += f > best.faithfulness + 1e-12;
  }
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) mean += random_baseline_faithfulness(model, img, 0, s).faithfulness / 50;
  const double secs = seconds_since(t0);
  return {pointwise_bad == 0 && faith_bad == 0 && std::abs(mean) <= 0.02 && secs < 120.0,
          "MIF above a random curve at " + std::to_string(pointwise_bad) + " points, orderings beating it " +
              std::to_string(faith_bad) + "/200, faithfulness " + fmt("%.4f", best.faithfulness) +
              "; random mean over 50 seeds " + fmt("%+.4f", mean) + "; " + fmt("%.2f", secs) + " s"};
}

// ---- 9 -----------------------------------------------------------------------

Outcome localization_metrics_check() {
  std::size_t bad = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const Tensor a = random_tensor({64}, 40000 + s, 0.0, 1.0), b = random_tensor({64}, 50000 + s, 0.0, 1.0);
    BinaryMask p(8, 8), g(8, 8);
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      p.bits[i] = a[i] > 0.5;
      g.bits[i] = b[i] > 0.5;
      tp += p.bits[i] && g.bits[i];
      fp += p.bits[i] && !g.bits[i];
      fn += !p.bits[i] && g.bits[i];
      tn += !p.bits[i] && !g.bits[i];
    }
    auto ratio = [](double n, double d) { return d == 0 ? 0.0 : n / d; };
    const double P = ratio(tp, tp + fp), R = ratio(tp, tp + fn);
    const auto r = localization_metrics(p, g);
    bad += r.iou != ratio(tp, tp + fp + fn) || r.precision != P || r.recall != R ||
           r.pixel_accuracy != (tp + tn) / 64.0 || r.f1 != (P + R > 0 ? 2 * P * R / (P + R) : 0.0);
  }
  const auto hand = localization_metrics(BinaryMask(1, 4, {1, 1, 0, 0}), BinaryMask(1, 4, {1, 0, 1, 0}));
  const bool hand_ok = hand.iou == 1.0 / 3.0 && hand.f1 == 0.5;

  // Perfect signed attribution: +1 on target, -1 on non-target, 0 elsewhere.
  Tensor heat(Shape{1, 1, 16, 16});
  BinaryMask target(16, 16), other(16, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      if (y < 8 && x < 8) {
        heat[y * 16 + x] = 1.0;
        target.bits[y * 16 + x] = 1;
      } else if (y >= 8) {
        heat[y * 16 + x] = -1.0;
        other.bits[y * 16 + x] = 1;
      }
    }
  const auto bi = evaluate_bidirectional(heat, target, &other);
  auto ones = [](const LocalizationReport& r) {
    return r.pixel_accuracy == 1 && r.iou == 1 && r.f1 == 1 && r.precision == 1 && r.recall == 1;
  };
  const bool perfect = ones(bi.positive) && bi.negative && ones(*bi.negative);
  return {bad == 0 && hand_ok && perfect,
          "500 pairs, oracle mismatches " + std::to_string(bad) + "; hand case IoU " +
              fmt("%.6f", hand.iou) + " F1 " + fmt("%.2f", hand.f1) + "; perfect construction " +
              (perfect ? "all ones" : "NOT all ones")};
}

// ---- 10 ----------------------------------------------------------------------

Outcome monotone_invariance() {
  const auto m = init_model(ViTConfig{}, 12);
  const Tensor img = tiny_image(12);
  const AttributionMap map = bicam::bicam(m, img, 1);
  const auto s = map.patch_scores.vec();
  std::vector<double> affine(s), cube(s);
  for (auto& v : affine) v = 2 * v + 7;
  for (auto& v : cube) v = v * v * v;
  const auto a = faithfulness(m, img, 1, s);
  const auto b = faithfulness(m, img, 1, affine);
  const auto c = faithfulness(m, img, 1, cube);
  auto same = [](const FaithfulnessReport& x, const FaithfulnessReport& y) {
    return x.mif_curve == y.mif_curve && x.lif_curve == y.lif_curve && x.mif_auc == y.mif_auc &&
           x.lif_auc == y.lif_auc && x.faithfulness == y.faithfulness;
  };
  return {same(a, b) && same(a, c), std::string("2x+7 ") + (same(a, b) ? "identical" : "DIFFERS") +
                                        ", x^3 " + (same(a, c) ? "identical" : "DIFFERS") +
                                        " (faithfulness " + fmt("%.6f", a.faithfulness) + ")"};
}

// ---- 11 ----------------------------------------------------------------------

Outcome one_pass_cost() {
  const auto m = init_model(ViTConfig{}, 13);
  const Tensor img = tiny_image(13);
  bool counts = true;
  double slowest = 0.0;
  for (int i = 0; i < 5; ++i) {
    const PassCounters before = pass_counters();
    const auto t0 = Clock::now();
    (void)bicam::bicam(m, img, i % 2);
    slowest = std::max(slowest, seconds_since(t0));
    const PassCounters after = pass_counters();
    counts &= after.forwards - before.forwards == 1 && after.backwards - before.backwards == 1;
  }
  return {counts && slowest < 0.050, std::string("passes per call ") + (counts ? "1 fwd + 1 bwd" : "WRONG") +
                                         ", slowest of 5 calls " + fmt("%.2f", slowest * 1e3) + " ms"};
}

// ---- 12 ----------------------------------------------------------------------

int sh(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs every command into `dir` and returns the first failing command.
std::string run_pipeline(const fs::path& dir) {
  const std::string cli = BICAM_CLI_PATH;
  const std::string d = dir.string();
  const std::vector<std::string> cmds = {
      "init-model --out " + d + "/m.bin --seed 4",
      "train-toy --model " + d + "/m.bin --out " + d + "/t.bin --steps 40 --seed 4",
      "synth --model " + d + "/t.bin --out-dir " + d + "/data --count 6 --seed 4",
      "attribute --model " + d + "/t.bin --image " + d + "/data/img0000.ppm --out " + d + "/attr --channels",
      "rollout --model " + d + "/t.bin --image " + d + "/data/img0001.ppm --out " + d + "/roll",
      "attack --model " + d + "/t.bin --input-dir " + d + "/data --output-dir " + d + "/pgd --seed 4",
      "attack --model " + d + "/t.bin --input-dir " + d + "/data --output-dir " + d + "/mi --method mifgsm",
      "pnr-detect --model " + d + "/t.bin --clean-dir " + d + "/data --adv-dir " + d + "/pgd --records-out " + d +
          "/records.csv --report-out " + d + "/report.csv",
      "pnr-detect --records " + d + "/records.csv --report-out " + d + "/rescored.csv",
      "eval-loc --model " + d + "/t.bin --dir " + d + "/data --report-out " + d + "/loc.csv",
      "eval-faith --model " + d + "/t.bin --dir " + d + "/data --seed 4 --report-out " + d +
          "/faith.csv --curves-out " + d + "/curves.csv",
  };
  for (const auto& c : cmds) {
    if (sh(cli + " " + c) != 0) return c;
  }
  return {};
}

std::vector<fs::path> outputs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".bin" || ext == ".ppm" || ext == ".pgm")) {
      out.push_back(fs::relative(e.path(), dir));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "bicam_acceptance_c12";
  fs::remove_all(root);
  const fs::path a = root / "a", b = root / "b";
  fs::create_directories(a);
  fs::create_directories(b);
  for (const auto& d : {a, b}) {
    const std::string failed = run_pipeline(d);
    if (!failed.empty()) return {false, "command failed: bicam " + failed};
  }
  const auto fa = outputs(a), fb = outputs(b);
  if (fa != fb) return {false, "runs produced different file sets"};
  std::size_t csv = 0, differ = 0;
  for (const auto& f : fa) {
    csv += f.extension() == ".csv";
    if (slurp(a / f) != slurp(b / f)) ++differ;
  }
  // Weights round trip: load then save reproduces the file bitwise.
  const auto model = io::load_model(a / "t.bin");
  const bool weights = io::serialize_model(model) == io::read_file_bytes(a / "t.bin");
  return {differ == 0 && weights && csv >= 10,
          std::to_string(fa.size()) + " output files (" + std::to_string(csv) + " CSV) over 11 commands, " +
              std::to_string(differ) + " differ between runs; weight round trip " +
              (weights ? "bitwise" : "NOT bitwise")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Gradient fidelity", gradient_fidelity},
      {"Layer decomposition", algorithm_decomposition},
      {"Sign preservation", sign_preservation},
      {"Temperature behavior", temperature_behavior},
      {"PNR oracle", pnr_oracle},
      {"Detection statistics", detection_statistics},
      {"Directional dPNR pipeline", directional_delta_pnr},
      {"Faithfulness oracle", faithfulness_oracle},
      {"Localization metrics", localization_metrics_check},
      {"Monotone invariance", monotone_invariance},
      {"One-pass cost", one_pass_cost},
      {"Reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-26s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
