#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bicam/attribution.hpp"
#include "bicam/error.hpp"
#include "bicam/vit.hpp"
#include "test_support.hpp"

namespace bicam {
namespace {

using testing::random_tensor;

// Capture with B = 1 built from explicit values.
LayerCapture make_capture(std::size_t H, std::size_t N, std::size_t dh, std::uint64_t seed,
                          bool with_grad = true) {
  LayerCapture c;
  c.layer = 1;
  c.attn_logits = random_tensor({1, H, N, N}, seed, -2.0, 2.0);
  c.values = random_tensor({1, H, N, dh}, seed + 1);
  c.cls_out = Tensor(Shape{1, H * dh});
  if (with_grad) c.cls_out_grad = random_tensor({1, H * dh}, seed + 2);
  return c;
}

// Naive per-token loop with its own softmax.
std::vector<double> naive_mask(const LayerCapture& c, double T) {
  const std::size_t H = c.values.dim(1), N = c.values.dim(2), dh = c.values.dim(3);
  std::vector<double> mask(N, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    std::vector<double> e(N);
    double z = 0.0;
    for (std::size_t j = 0; j < N; ++j) z += e[j] = std::exp(c.attn_logits.at({0, h, 0, j}) / T);
    for (std::size_t i = 0; i < N; ++i) {
      double proj = 0.0;
      for (std::size_t k = 0; k < dh; ++k) {
        proj += c.values.at({0, h, i, k}) * (*c.cls_out_grad).at({0, h * dh + k});
      }
      mask[i] += proj * (e[i] / z);
    }
  }
  return mask;
}

Tensor image(std::uint64_t seed) { return random_tensor({1, 3, 16, 16}, seed, 0.0, 1.0); }

TEST(AttributionAlpha, ConstantRowIsUniform) {
  LayerCapture c = make_capture(2, 5, 3, 1);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t j = 0; j < 5; ++j) c.attn_logits.at({0, h, 0, j}) = 0.7;
  const Tensor a = attribution_alpha(c, 2.0);
  for (double v : a.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(AttributionAlpha, LargeTemperatureApproachesUniform) {
  const LayerCapture c = make_capture(2, 7, 3, 2);
  const Tensor a = attribution_alpha(c, 1e4);
  for (double v : a.data()) EXPECT_LT(std::abs(v - 1.0 / 7.0), 1e-3);
}

TEST(AttributionAlpha, TemperatureTwoHandValues) {
  LayerCapture c = make_capture(1, 2, 1, 3);
  c.attn_logits.at({0, 0, 0, 0}) = 0.0;
  c.attn_logits.at({0, 0, 0, 1}) = 2.0 * std::log(3.0);
  const Tensor a = attribution_alpha(c, 2.0);
  EXPECT_NEAR(a[0], 0.25, 1e-15);
  EXPECT_NEAR(a[1], 0.75, 1e-15);
}

TEST(AttributionAlpha, RowsSumToOneAndTemperatureMustBePositive) {
  const LayerCapture c = make_capture(3, 6, 2, 4);
  const Tensor a = attribution_alpha(c, 0.5);
  for (std::size_t h = 0; h < 3; ++h) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += a.at({0, h, j});
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  EXPECT_THROW(attribution_alpha(c, 0.0), ParameterError);
  EXPECT_THROW(attribution_alpha(c, -1.0), ParameterError);
}

TEST(AttributionEntropy, HigherTemperatureFlattensAlpha) {
  const LayerCapture c = make_capture(1, 9, 2, 5);
  auto entropy = [&](double T) {
    const Tensor a = attribution_alpha(c, T);
    double e = 0.0;
    for (double p : a.data()) e -= p * std::log(p);
    return e;
  };
  EXPECT_LT(entropy(0.5), entropy(1.0));
  EXPECT_LT(entropy(1.0), entropy(2.0));
  EXPECT_LT(entropy(2.0), entropy(8.0));
}

TEST(LayerMask, ZeroGradientGivesZeroMask) {
  LayerCapture c = make_capture(2, 5, 3, 6);
  c.cls_out_grad = Tensor(Shape{1, 6});
  const Tensor m = layer_mask(c, attribution_alpha(c, 2.0));
  for (double v : m.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerMask, MissingGradientIsStateError) {
  const LayerCapture c = make_capture(2, 5, 3, 7, false);
  EXPECT_THROW(layer_mask(c, attribution_alpha(c, 2.0)), StateError);
}

TEST(LayerMask, UnitVectorProjection) {
  LayerCapture c = make_capture(1, 4, 3, 8);
  c.cls_out_grad = Tensor(Shape{1, 3}, std::vector<double>{1.0, 0.0, 0.0});
  const Tensor alpha = attribution_alpha(c, 1.0);
  const Tensor m = layer_mask(c, alpha);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(m[i], c.values.at({0, 0, i, 0}) * alpha[i]);
  }
}

TEST(LayerMask, MatchesNaiveLoop) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const LayerCapture c = make_capture(4, 11, 5, seed);
    const Tensor m = layer_mask(c, attribution_alpha(c, 2.0));
    const auto ref = naive_mask(c, 2.0);
    for (std::size_t i = 0; i < 11; ++i) EXPECT_NEAR(m[i], ref[i], 1e-12);
  }
}

TEST(LayerMask, HeadSumDecomposition) {
  const LayerCapture c = make_capture(3, 6, 4, 20);
  const Tensor alpha = attribution_alpha(c, 2.0);
  const Tensor full = layer_mask(c, alpha);
  std::vector<double> total(6, 0.0);
  for (std::size_t h = 0; h < 3; ++h) {
    LayerCapture single = c;
    for (std::size_t k = 0; k < 12; ++k) {
      if (k / 4 != h) (*single.cls_out_grad)[k] = 0.0;
    }
    const Tensor m = layer_mask(single, alpha);
    for (std::size_t i = 0; i < 6; ++i) total[i] += m[i];
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(full[i], total[i], 1e-14);
}

TEST(LayerMask, SignsArePreserved) {
  LayerCapture c = make_capture(1, 3, 1, 21);
  c.values = Tensor(Shape{1, 1, 3, 1}, std::vector<double>{0.5, 2.0, -3.0});
  c.cls_out_grad = Tensor(Shape{1, 1}, std::vector<double>{1.0});
  const Tensor m = layer_mask(c, attribution_alpha(c, 2.0));
  EXPECT_GT(m[1], 0.0);
  EXPECT_LT(m[2], 0.0);

  const auto model = init_model(ViTConfig{}, 3);
  const AttributionMap map = bicam(model, image(2), 0);
  const auto [lo, hi] = std::minmax_element(map.patch_scores.data().begin(),
                                            map.patch_scores.data().end());
  EXPECT_LT(*lo, 0.0);
  EXPECT_GT(*hi, 0.0);
}

// Per-layer masks from a full capture, summed independently.
std::vector<Tensor> per_layer_grids(const ViTModel& m, const Tensor& img, std::size_t cls,
                                    double T) {
  ForwardPass pass = forward(m, img, ForwardOptions{.capture_window = m.config().num_layers});
  pass.backward_class(cls);
  std::vector<Tensor> out;
  for (const auto& cap : pass.captures()) {
    out.push_back(tokens_to_grid(layer_mask(cap, attribution_alpha(cap, T)), m.config()));
  }
  return out;  // index l - 1
}

TEST(Bicam, WindowOneIsFinalLayerMask) {
  const auto m = init_model(ViTConfig{}, 4);
  const Tensor img = image(3);
  const auto layers = per_layer_grids(m, img, 1, 2.0);
  const AttributionMap map = bicam(m, img, 1, AttributionOptions{.window = 1});
  EXPECT_EQ(map.patch_scores, layers.back());
}

TEST(Bicam, WindowSumsPerLayerMasks) {
  const auto m = init_model(ViTConfig{}, 4);
  const Tensor img = image(4);
  const auto layers = per_layer_grids(m, img, 0, 2.0);
  const std::size_t L = 4;
  for (std::size_t w = 1; w <= L; ++w) {
    const AttributionMap map = bicam(m, img, 0, AttributionOptions{.window = w});
    for (std::size_t i = 0; i < 16; ++i) {
      double s = 0.0;
      for (std::size_t l = L - w; l < L; ++l) s += layers[l][i];
      EXPECT_NEAR(map.patch_scores[i], s, 1e-13) << "window " << w;
    }
    if (w >= 2) {
      const AttributionMap prev = bicam(m, img, 0, AttributionOptions{.window = w - 1});
      for (std::size_t i = 0; i < 16; ++i) {
        EXPECT_NEAR(map.patch_scores[i] - prev.patch_scores[i], layers[L - w][i], 1e-13);
      }
    }
  }
}

TEST(Bicam, DoublingHeadRowDoublesScores) {
  auto m = init_model(ViTConfig{}, 5);
  const Tensor img = image(5);
  const AttributionMap before = bicam(m, img, 1);
  Tensor head = m.weights().get("head.weight");
  for (std::size_t k = 0; k < 16; ++k) head.at({k, 1}) *= 2.0;
  m.mutable_weights().set("head.weight", head);
  const AttributionMap after = bicam(m, img, 1);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(after.patch_scores[i], 2.0 * before.patch_scores[i],
                1e-10 * std::max(1.0, std::abs(before.patch_scores[i])));
  }
}

TEST(Bicam, ClassesDiffer) {
  const auto m = init_model(ViTConfig{}, 6);
  const Tensor img = image(6);
  EXPECT_NE(bicam(m, img, 0).patch_scores, bicam(m, img, 1).patch_scores);
}

TEST(Bicam, OneForwardOneBackward) {
  const auto m = init_model(ViTConfig{}, 7);
  const Tensor img = image(7);
  const PassCounters before = pass_counters();
  (void)bicam(m, img, 0);
  const PassCounters after = pass_counters();
  EXPECT_EQ(after.forwards - before.forwards, 1u);
  EXPECT_EQ(after.backwards - before.backwards, 1u);
}

TEST(Bicam, MetadataAndValidation) {
  const auto m = init_model(ViTConfig{}, 8);
  const AttributionMap map = bicam(m, image(8), 1);
  EXPECT_EQ(map.patch_scores.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(map.heatmap.shape(), (Shape{1, 1, 16, 16}));
  EXPECT_EQ(map.window, 3u);
  EXPECT_EQ(map.temperature, 2.0);
  EXPECT_TRUE(map.is_signed);
  EXPECT_THROW(bicam(m, image(8), 2), ParameterError);
  EXPECT_THROW(bicam(m, image(8), 0, AttributionOptions{.window = 5}), ParameterError);
  EXPECT_THROW(bicam(m, image(8), 0, AttributionOptions{.temperature = 0.0}), ParameterError);
}

TEST(Bicam, DistillationTokenIsDropped) {
  ViTConfig c;
  c.distillation_token = true;
  const auto m = init_model(c, 9);
  const Tensor img = image(9);
  ForwardPass pass = forward(m, img, ForwardOptions{.capture_window = 1});
  pass.backward_class(0);
  const auto& cap = pass.captures()[0];
  const Tensor mask = layer_mask(cap, attribution_alpha(cap, 2.0));
  const AttributionMap map = bicam(m, img, 0, AttributionOptions{.window = 1});
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(map.patch_scores[i], mask[i + 2]);
}

TEST(Upsample, NearestReplicatesAndBilinearInterpolates) {
  const Tensor grid(Shape{1, 2, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  const Tensor near = upsample(grid, 4, 4, Upsample::Nearest);
  EXPECT_EQ(near.at({0, 0, 0, 1}), 1.0);
  EXPECT_EQ(near.at({0, 0, 0, 2}), 2.0);
  EXPECT_EQ(near.at({0, 0, 3, 3}), 4.0);
  const Tensor bil = upsample(grid, 4, 4, Upsample::Bilinear);
  // Half-pixel centers: output x=1 sits at grid 0.25, x=0 clamps to 0.
  EXPECT_DOUBLE_EQ(bil.at({0, 0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(bil.at({0, 0, 0, 1}), 1.25);
  EXPECT_DOUBLE_EQ(bil.at({0, 0, 1, 1}), 1.75);
  EXPECT_DOUBLE_EQ(bil.at({0, 0, 3, 3}), 4.0);
  // Signed values interpolate directly.
  const Tensor s(Shape{1, 1, 2}, std::vector<double>{-1.0, 1.0});
  const Tensor sb = upsample(s, 1, 4, Upsample::Bilinear);
  EXPECT_DOUBLE_EQ(sb[1], -0.5);
  EXPECT_DOUBLE_EQ(sb[2], 0.5);
}

TEST(Rollout, OneLayerUniformAttention) {
  const std::size_t N = 5;
  const Tensor att(Shape{1, 2, N, N}, 1.0 / N);
  const Tensor r = rollout_from_attention({att});
  // (U + I) / 2 row 0: CLS gets (1/N + 1)/2, every patch 1/(2N).
  EXPECT_NEAR(r[0], (1.0 / N + 1.0) / 2.0, 1e-15);
  for (std::size_t j = 1; j < N; ++j) EXPECT_NEAR(r[j], 0.5 / N, 1e-15);
}

TEST(Rollout, IdentityAttentionKeepsMassOnCls) {
  Tensor eye(Shape{1, 1, 4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at({0, 0, i, i}) = 1.0;
  const Tensor r = rollout_from_attention({eye, eye, eye});
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_EQ(r[j], 0.0);
}

TEST(Rollout, TwoLayerHandProduct) {
  // Single head, 3 tokens.
  const Tensor a1(Shape{1, 1, 3, 3}, std::vector<double>{0.5, 0.25, 0.25, 0.2, 0.6, 0.2, 0.1, 0.1, 0.8});
  const Tensor a2(Shape{1, 1, 3, 3}, std::vector<double>{0.2, 0.3, 0.5, 0.4, 0.4, 0.2, 0.0, 0.5, 0.5});
  // (A + I) / 2 per layer; rows already sum to one.
  auto aug = [](const Tensor& a) {
    std::vector<double> m(9);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) m[i * 3 + j] = (a[i * 3 + j] + (i == j)) / 2.0;
    return m;
  };
  const auto m1 = aug(a1), m2 = aug(a2);
  // Row 0 of m2 . m1.
  std::vector<double> want(3, 0.0);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = 0; k < 3; ++k) want[j] += m2[k] * m1[k * 3 + j];
  const Tensor r = rollout_from_attention({a1, a2});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r[j], want[j], 1e-15);
}

TEST(Rollout, RowsStayStochastic) {
  std::vector<Tensor> layers;
  for (std::uint64_t s = 0; s < 6; ++s) {
    Tensor a = random_tensor({1, 3, 8, 8}, 40 + s, 0.0, 1.0);
    for (std::size_t r = 0; r < 24; ++r) {
      double z = 0.0;
      for (std::size_t j = 0; j < 8; ++j) z += a[r * 8 + j];
      for (std::size_t j = 0; j < 8; ++j) a[r * 8 + j] /= z;
    }
    layers.push_back(a);
    const Tensor row = rollout_from_attention(layers);
    const double s_row = std::accumulate(row.data().begin(), row.data().end(), 0.0);
    EXPECT_NEAR(s_row, 1.0, 1e-10) << "layers " << layers.size();
    for (double v : row.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(Rollout, ModelRolloutIsClassAgnosticAndUnsigned) {
  const auto m = init_model(ViTConfig{}, 11);
  const AttributionMap r = attention_rollout(m, image(11));
  EXPECT_FALSE(r.is_signed);
  EXPECT_EQ(r.patch_scores.shape(), (Shape{1, 4, 4}));
  double s = 0.0;
  for (double v : r.patch_scores.data()) {
    EXPECT_GT(v, 0.0);
    s += v;
  }
  EXPECT_LT(s, 1.0);
}

TEST(SplitChannels, HandValuesAndReconstruction) {
  const Tensor m(Shape{3}, std::vector<double>{1.0, -2.0, 0.0});
  const ChannelSplit s = split_channels(m);
  EXPECT_EQ(s.positive.vec(), (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_EQ(s.negative.vec(), (std::vector<double>{0.0, 2.0, 0.0}));

  const ChannelSplit p = split_channels(Tensor(Shape{4}, std::vector<double>{1, 2, 3, 4}));
  for (double v : p.negative.data()) EXPECT_EQ(v, 0.0);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor r = random_tensor({1, 6, 6}, seed);
    const ChannelSplit c = split_channels(r);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(c.positive[i] - c.negative[i], r[i]);
      EXPECT_GE(c.positive[i], 0.0);
      EXPECT_GE(c.negative[i], 0.0);
    }
  }
}

}  // namespace
}  // namespace bicam
