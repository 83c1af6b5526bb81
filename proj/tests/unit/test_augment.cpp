#include "hbac/augment.hpp"

#include "fixtures.hpp"

#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace hbac;
using namespace hbac::augment;

namespace {

MatrixF ramp(std::size_t rows, std::size_t cols) {
  MatrixF m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<float>(1 + r * cols + c);
  return m;
}

// Probability that one band of the declared law covers cell (r, c).
double cover_probability(std::size_t r, std::size_t c, std::size_t rows, std::size_t cols, std::size_t max_w) {
  auto along = [&](std::size_t x, std::size_t extent) {
    double acc = 0;
    for (std::size_t w = 1; w <= max_w; ++w) {
      const std::size_t positions = extent - w + 1;
      const std::size_t lo = x + 1 >= w ? x + 1 - w : 0;
      const std::size_t hi = std::min(x, extent - w);
      acc += static_cast<double>(hi - lo + 1) / static_cast<double>(positions);
    }
    return acc / static_cast<double>(max_w);
  };
  return 0.5 * along(c, cols) + 0.5 * along(r, rows);
}

// Exact expected masked-cell fraction under the declared law.
double expected_masked_fraction(std::size_t rows, std::size_t cols, const AugmentConfig& cfg) {
  const auto max_w = static_cast<std::size_t>(cfg.xy_mask_max_width);
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double q = 1.0 - cover_probability(r, c, rows, cols, max_w);
      double uncovered = 0;
      for (int k = 1; k <= cfg.xy_mask_max_nodes; ++k) uncovered += std::pow(q, k);
      uncovered /= cfg.xy_mask_max_nodes;
      total += 1.0 - uncovered;
    }
  return cfg.xy_mask_prob * total / static_cast<double>(rows * cols);
}

// Independent sampler of the same law on a separate generator.
double simulate_masked_fraction(std::size_t rows, std::size_t cols, const AugmentConfig& cfg, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  if (u(rng) >= cfg.xy_mask_prob) return 0.0;
  std::vector<char> hit(rows * cols, 0);
  const int k = 1 + static_cast<int>(u(rng) * cfg.xy_mask_max_nodes);
  for (int i = 0; i < k; ++i) {
    const bool time = u(rng) < 0.5;
    const auto w = 1 + static_cast<std::size_t>(u(rng) * cfg.xy_mask_max_width);
    const std::size_t extent = time ? cols : rows;
    const auto s = static_cast<std::size_t>(u(rng) * static_cast<double>(extent - w + 1));
    for (std::size_t a = s; a < s + w; ++a)
      for (std::size_t b = 0; b < (time ? rows : cols); ++b) hit[time ? b * cols + a : a * cols + b] = 1;
  }
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / static_cast<double>(hit.size());
}

}  // namespace

TEST(AugmentConfig, JsonRoundTripAndValidation) {
  AugmentConfig c;
  c.xy_mask_prob = 0.3;
  c.rng_seed = 17;
  const auto back = AugmentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(AugmentConfig::from_json({{"xy_mask_probability", 0.5}}), std::invalid_argument);
  EXPECT_THROW(AugmentConfig::from_json({{"flip_time_prob", 1.5}}), std::invalid_argument);
  EXPECT_THROW(AugmentConfig::from_json({{"window_shift_max_s", 6.0}}), std::invalid_argument);
}

TEST(XyMask, ProbabilityZeroIsIdentity) {
  AugmentConfig cfg;
  cfg.xy_mask_prob = 0.0;
  Rng rng(1);
  const auto img = ramp(40, 625);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(xy_mask(img, cfg, rng), img);
}

TEST(XyMask, SpecificBandsZeroExactlyTheirCells) {
  auto img = ramp(40, 625);
  const std::vector<MaskBand> bands = {{MaskBand::Axis::time, 100, 5}, {MaskBand::Axis::freq, 10, 3}};
  apply_masks(img, bands);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 625; ++c) {
      const bool masked = (c >= 100 && c < 105) || (r >= 10 && r < 13);
      ASSERT_EQ(img(r, c) == 0.0f, masked) << r << "," << c;
    }
}

TEST(XyMask, DrawnBandsRespectTheLaw) {
  AugmentConfig cfg;
  cfg.xy_mask_prob = 1.0;
  Rng rng(2);
  std::size_t time = 0, freq = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto bands = draw_xy_masks(40, 625, cfg, rng);
    ASSERT_GE(bands.size(), 1u);
    ASSERT_LE(bands.size(), 8u);
    for (const auto& b : bands) {
      ASSERT_GE(b.width, 1u);
      ASSERT_LE(b.width, 8u);
      ASSERT_LE(b.start + b.width, b.axis == MaskBand::Axis::time ? 625u : 40u);
      (b.axis == MaskBand::Axis::time ? time : freq)++;
    }
  }
  const double n = static_cast<double>(time + freq);
  EXPECT_NEAR(static_cast<double>(time) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(XyMask, MaskedFractionMatchesAnalyticAndSimulatedLaw) {
  AugmentConfig cfg;
  cfg.xy_mask_prob = 0.5;
  constexpr std::size_t rows = 40, cols = 625, trials = 10000;
  Rng rng(3);
  double sum = 0, sum_sq = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto img = xy_mask(MatrixF(rows, cols, 1.0f), cfg, rng);
    double zeros = 0;
    for (float v : img.values()) zeros += v == 0.0f;
    const double f = zeros / static_cast<double>(rows * cols);
    sum += f;
    sum_sq += f * f;
  }
  const double mean = sum / trials;
  const double var = sum_sq / trials - mean * mean;
  const double sigma = std::sqrt(var / trials);
  const double analytic = expected_masked_fraction(rows, cols, cfg);
  EXPECT_NEAR(mean, analytic, 3.0 * sigma);

  std::mt19937 oracle_rng(99);
  double sim = 0;
  for (std::size_t i = 0; i < trials; ++i) sim += simulate_masked_fraction(rows, cols, cfg, oracle_rng);
  sim /= trials;
  EXPECT_NEAR(sim, analytic, 3.0 * sigma);
}

TEST(XyMask, RejectsImagesSmallerThanMaxWidth) {
  AugmentConfig cfg;
  cfg.xy_mask_prob = 1.0;
  Rng rng(4);
  EXPECT_THROW(draw_xy_masks(4, 100, cfg, rng), std::invalid_argument);
  cfg.xy_mask_prob = 0.0;
  EXPECT_TRUE(draw_xy_masks(4, 5, cfg, rng).empty());
}

TEST(Mixup, LambdaEndpointsReturnOneInput) {
  const std::vector<float> a = {1, 2, 3}, b = {7, 8, 9};
  const auto pa = ClassDistribution::one_hot(0), pb = ClassDistribution::one_hot(3);
  const auto one = mixup(a, pa, b, pb, 1.0);
  EXPECT_EQ(one.input, a);
  EXPECT_EQ(one.label, pa);
  const auto zero = mixup(a, pa, b, pb, 0.0);
  EXPECT_EQ(zero.input, b);
  EXPECT_EQ(zero.label, pb);
}

TEST(Mixup, HalfMixOfOneHots) {
  const std::vector<float> a = {0, 4}, b = {2, 0};
  const auto m = mixup(a, ClassDistribution::one_hot(1), b, ClassDistribution::one_hot(2), 0.5);
  EXPECT_EQ(m.input, (std::vector<float>{1, 2}));
  EXPECT_DOUBLE_EQ(m.label[1], 0.5);
  EXPECT_DOUBLE_EQ(m.label[2], 0.5);
  EXPECT_DOUBLE_EQ(m.label.sum(), 1.0);
}

TEST(Mixup, MassAndLinearityOverRandomPairs) {
  std::mt19937_64 rng(5);
  Rng lrng(6);
  for (int i = 0; i < 500; ++i) {
    ClassDistribution pa, pb;
    double sa = 0, sb = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      pa.p[c] = std::uniform_real_distribution<double>(0, 1)(rng);
      pb.p[c] = std::uniform_real_distribution<double>(0, 1)(rng);
      sa += pa.p[c];
      sb += pb.p[c];
    }
    for (auto& v : pa.p) v /= sa;
    for (auto& v : pb.p) v /= sb;
    const double lambda = draw_mixup_lambda(0.4, lrng);
    ASSERT_GE(lambda, 0.0);
    ASSERT_LE(lambda, 1.0);
    const auto xa = fixture::random_signal(64, rng), xb = fixture::random_signal(64, rng);
    const auto m = mixup(xa, pa, xb, pb, lambda);
    ASSERT_NEAR(m.label.sum(), 1.0, 1e-12);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      ASSERT_GE(m.label[c], 0.0);
      ASSERT_NEAR(m.label[c], lambda * pa[c] + (1 - lambda) * pb[c], 1e-15);
    }
    for (std::size_t t = 0; t < xa.size(); ++t)
      ASSERT_NEAR(m.input[t], lambda * xa[t] + (1 - lambda) * xb[t], 1e-5);
  }
}

TEST(Mixup, LambdaFollowsSymmetricBeta) {
  Rng rng(7);
  constexpr int n = 20000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    const double l = draw_mixup_lambda(0.4, rng);
    sum += l;
    sum_sq += l * l;
  }
  const double mean = sum / n, var = sum_sq / n - mean * mean;
  // Beta(a, a): mean 1/2, variance 1 / (4 (2a + 1)).
  const double want_var = 1.0 / (4.0 * (2 * 0.4 + 1));
  EXPECT_NEAR(mean, 0.5, 3.0 * std::sqrt(want_var / n));
  EXPECT_NEAR(var, want_var, 0.01);
}

TEST(Mixup, SizeMismatchThrows) {
  const std::vector<float> a(3), b(4);
  EXPECT_THROW(mix_inputs(a, b, 0.5), std::invalid_argument);
}

TEST(Shift, FiveSecondsMovesOneThousandSamples) {
  const auto ctx = fixture::random_window(60.0, 200.0, 8);
  const auto base = signals::crop_center(ctx, 50.0, 0.0);
  const auto moved = signals::crop_center(ctx, 50.0, 5.0);
  ASSERT_EQ(moved.n_samples(), 10000u);
  for (std::size_t ch = 0; ch < ctx.n_channels(); ++ch)
    for (std::size_t i = 0; i + 1000 < 10000; i += 97) ASSERT_EQ(moved.samples(ch, i), base.samples(ch, i + 1000));
  EXPECT_EQ(signals::crop_center(ctx, 50.0, -5.0).samples(0, 1000), base.samples(0, 0));
}

TEST(Shift, DrawnShiftsStayInRangeAndMatchCrop) {
  const auto ctx = fixture::random_window(60.0, 200.0, 9);
  Rng rng(10);
  double lo = 0, hi = 0;
  for (int i = 0; i < 300; ++i) {
    double applied = 99;
    const auto w = shift_window(ctx, 50.0, rng, 5.0, &applied);
    ASSERT_LE(std::abs(applied), 5.0 + 1e-12);
    ASSERT_EQ(w.n_samples(), 10000u);
    ASSERT_EQ(w, signals::crop_center(ctx, 50.0, applied));
    lo = std::min(lo, applied);
    hi = std::max(hi, applied);
  }
  EXPECT_LT(lo, -4.0);
  EXPECT_GT(hi, 4.0);
  EXPECT_EQ(shift_window(ctx, 50.0, rng, 0.0), signals::crop_center(ctx, 50.0, 0.0));
}

TEST(Shift, ShortContextFallsBackToCenter) {
  const auto ctx = fixture::random_window(52.0, 200.0, 11);
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    double applied = 0;
    const auto w = shift_window(ctx, 50.0, rng, 5.0, &applied);
    ASSERT_LE(std::abs(applied), 1.0 + 1e-9);
    ASSERT_EQ(w, signals::crop_center(ctx, 50.0, applied));
  }
}

TEST(Flip, TimeReversalIsAnInvolutionAndReversesARamp) {
  const auto img = ramp(3, 7);
  auto once = img;
  reverse_time(once);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(once(r, c), img(r, 6 - c));
  reverse_time(once);
  EXPECT_EQ(once, img);
  Rng rng(13);
  EXPECT_EQ(flip_time(img, rng, 0.0), img);
  auto rev = img;
  reverse_time(rev);
  EXPECT_EQ(flip_time(img, rng, 1.0), rev);
}

TEST(Flip, SideSwapExchangesMirrorChains) {
  const auto w = fixture::random_window(4.0, 200.0, 14);
  const auto ms = signals::apply_montage(w, signals::MontageSpec::double_banana());
  auto swapped = ms;
  swap_sides(swapped);
  for (std::size_t p = 0; p < signals::kPairsPerChain; ++p) {
    EXPECT_TRUE(std::ranges::equal(swapped.differential(0, p), ms.differential(3, p)));
    EXPECT_TRUE(std::ranges::equal(swapped.differential(3, p), ms.differential(0, p)));
    EXPECT_TRUE(std::ranges::equal(swapped.differential(1, p), ms.differential(2, p)));
    EXPECT_TRUE(std::ranges::equal(swapped.differential(2, p), ms.differential(1, p)));
  }
  swap_sides(swapped);
  EXPECT_EQ(swapped, ms);
}

TEST(Flip, SideSwapEqualsMontageOfMirroredScalp) {
  auto w = fixture::random_window(4.0, 200.0, 15);
  auto mirrored = w;
  for (auto& name : mirrored.electrodes) name = signals::mirror_electrode(name);
  const auto m = signals::MontageSpec::double_banana();
  auto swapped = signals::apply_montage(w, m);
  swap_sides(swapped);
  EXPECT_EQ(swapped.signals, signals::apply_montage(mirrored, m).signals);
}

TEST(Flip, BernoulliRate) {
  Rng rng(16);
  int hits = 0;
  constexpr int n = 20000;
  for (int i = 0; i < n; ++i) hits += bernoulli(rng, 0.5);
  EXPECT_NEAR(hits / double(n), 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Streams, DeterministicAndDistinct) {
  auto a = stream_for(1, 2, 3, 4), b = stream_for(1, 2, 3, 4), c = stream_for(1, 2, 3, 5);
  const auto x = a(), y = b(), z = c();
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  AugmentConfig cfg;
  cfg.xy_mask_prob = 1.0;
  auto r1 = stream_for(7, 1, 0, 0), r2 = stream_for(7, 1, 0, 0);
  EXPECT_EQ(draw_xy_masks(40, 625, cfg, r1), draw_xy_masks(40, 625, cfg, r2));
}

TEST(Disabled, EveryStepIsANoOp) {
  const auto cfg = AugmentConfig::disabled();
  EXPECT_NO_THROW(cfg.validate());
  Rng rng(17);
  const auto img = ramp(40, 100);
  EXPECT_EQ(xy_mask(img, cfg, rng), img);
  EXPECT_EQ(flip_time(img, rng, cfg.flip_time_prob), img);
  const auto w = fixture::random_window(60.0, 200.0, 18);
  EXPECT_EQ(shift_window(w, 50.0, rng, cfg.window_shift_max_s), signals::crop_center(w, 50.0));
  const auto ms = signals::apply_montage(w, signals::MontageSpec::double_banana());
  EXPECT_EQ(flip_brain_side(ms, rng, cfg.flip_side_prob), ms);
}
