#include "hbac/train.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace hbac;
using namespace hbac::train;

namespace {

TrainData make_data(std::size_t patients, std::size_t rows, std::uint64_t seed, bool wave, bool spec,
                    double label_noise = 0.0) {
  dataset::SynthSpec s;
  s.n_patients = patients;
  s.rows_per_patient = rows;
  s.seed = seed;
  s.label_noise = label_noise;
  const auto synth = dataset::synth_dataset(s);
  TrainData d;
  d.records = synth.records;
  const auto montage = signals::MontageSpec::double_banana();
  for (const auto& w : synth.windows) {
    const auto ms = signals::apply_montage(signals::condition_window(w, {}), montage);
    d.examples.push_back(extract_features(ms, d.features, wave, spec));
  }
  return d;
}

const TrainData& shared_mlp_data() {
  static const TrainData d = make_data(10, 2, 3, true, true);
  return d;
}

nn::ModelSpec small_mlp(const TrainData& d) {
  nn::ModelSpec s;
  s.topology = nn::Topology::mlp;
  s.mlp_hidden = {32, 16};
  s.seed = 4;
  return shape_model(s, d);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.stage1_epochs = 2;
  c.stage2_epochs = 3;
  c.lr0 = 1e-3;
  return c;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST(CosineLr, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 1e-3, 1e-5), 1e-5);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, 1e-15);
  for (std::size_t t = 0; t <= 37; ++t) {
    const double want = 2e-6 + (1.2e-3 - 2e-6) * 0.5 * (1 + std::cos(std::numbers::pi * t / 37.0));
    ASSERT_NEAR(cosine_lr(t, 37, 1.2e-3, 2e-6), want, 1e-15);
    if (t > 0) {
      ASSERT_LE(cosine_lr(t, 37, 1.2e-3, 2e-6), cosine_lr(t - 1, 37, 1.2e-3, 2e-6));
    }
  }
  EXPECT_THROW(cosine_lr(101, 100, 1e-3), std::invalid_argument);
  EXPECT_THROW(cosine_lr(0, 0, 1e-3), std::invalid_argument);
}

TEST(Adam, TwoHandComputedSteps) {
  std::vector<float> p = {1.0f, -2.0f};
  AdamMoments st;
  const double lr = 0.1;
  const std::vector<float> g1 = {0.5f, -4.0f};
  adam_step(p, g1, st, lr);
  // First bias-corrected step moves each weight by lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - lr * 0.5 / (0.5 + 1e-8), 1e-6);
  EXPECT_NEAR(p[1], -2.0 + lr * 4.0 / (4.0 + 1e-8), 1e-6);
  const std::vector<float> g2 = {1.0f, 1.0f};
  const float p0 = p[0];
  adam_step(p, g2, st, lr);
  const double m = 0.9 * 0.05 + 0.1 * 1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], p0 - lr * mhat / (std::sqrt(vhat) + 1e-8), 1e-6);
  EXPECT_EQ(st.t, 2u);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  std::vector<float> p = {1, 2, 3};
  const auto before = p;
  AdamMoments st;
  const std::vector<float> g = {0.1f, NAN, 0.2f};
  try {
    adam_step(p, g, st, 0.1, {}, "head.weight");
    FAIL() << "expected an exception";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 0u);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
  nn::Parameter<float> a{"a", nn::Tensor<float>({2}), nn::Tensor<float>({2}, std::vector<float>{3, 0})};
  nn::Parameter<float> b{"b", nn::Tensor<float>({1}), nn::Tensor<float>({1}, std::vector<float>{4})};
  std::vector<nn::Parameter<float>*> ps = {&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 5.0);
  EXPECT_EQ(a.grad[0], 3.0f);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6f, 1e-6);
  EXPECT_NEAR(b.grad[0], 0.8f, 1e-6);
}

TEST(TrainConfig, StrictJsonRoundTrip) {
  auto c = quick_config();
  c.seed = 99;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json({{"learning_rate", 0.1}}), std::invalid_argument);
  EXPECT_THROW(TrainConfig::from_json({{"adam", {{"beta3", 0.1}}}}), std::invalid_argument);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", 0}}), std::invalid_argument);
  EXPECT_THROW(strategy_from_string("three-stage"), std::invalid_argument);
  EXPECT_EQ(strategy_from_string("two-stage"), Strategy::two_stage);
}

TEST(Features, WaveformMaterializationMatchesPooledCrop) {
  const auto w = fixture::random_window(60.0, 200.0, 5);
  const auto ms = signals::apply_montage(w, signals::MontageSpec::double_banana());
  FeatureConfig fc;
  const auto ex = extract_features(ms, fc, true, false);
  EXPECT_EQ(ex.quantum, 80u);
  EXPECT_EQ(ex.max_shift, 12u);
  EXPECT_TRUE(ex.spec[0].empty());
  for (long shift : {0L, 5L, -12L, 12L}) {
    const auto m = materialize(ex, fc, shift);
    ASSERT_EQ(m.waveform.size(), 16u * 2000u);
    const auto start = static_cast<std::size_t>(1000 + 80 * shift);
    for (std::size_t r = 0; r < 16; r += 5)
      for (std::size_t t = 0; t < 2000; t += 37) {
        double s = 0;
        for (std::size_t i = 0; i < 5; ++i) s += ms.signals(r, start + 5 * t + i);
        ASSERT_NEAR(m.waveform[r * 2000 + t], 0.01 * s / 5, 1e-5) << shift;
      }
  }
  EXPECT_THROW(materialize(ex, fc, 13), std::invalid_argument);
}

TEST(Features, SpectrogramMaterializationMatchesDirectPipeline) {
  const auto w = fixture::random_window(60.0, 200.0, 6);
  const auto ms = signals::apply_montage(w, signals::MontageSpec::double_banana());
  FeatureConfig fc;
  fc.cwt.n_scales = 12;
  const auto ex = extract_features(ms, fc, false, true);
  const auto m = materialize(ex, fc, 2);
  const std::size_t bins = 10000 / 16 / 25;
  ASSERT_EQ(m.spec.size(), 4u * 12u * bins);
  const auto bank = cwt::scales_for_band(fc.cwt.f_min, fc.cwt.f_max, 12, 200.0);
  const std::size_t start = 1000 + 2 * 80;
  for (std::size_t c = 0; c < 4; ++c) {
    std::array<std::span<const float>, 4> diffs;
    for (std::size_t p = 0; p < 4; ++p) diffs[p] = ms.differential(c, p);
    const auto full = cwt::chain_spectrogram(diffs, bank).power;
    MatrixF crop(12, 10000);
    for (std::size_t r = 0; r < 12; ++r)
      std::copy_n(full.row(r).begin() + static_cast<std::ptrdiff_t>(start), 10000, crop.row(r).begin());
    const auto want = cwt::normalize_log(cwt::downsample_time(cwt::downsample_time(crop, 16), 25));
    for (std::size_t i = 0; i < want.size(); ++i)
      ASSERT_NEAR(m.spec[c * want.size() + i], want.values()[i], 1e-4) << "chain " << c << " cell " << i;
  }
}

TEST(Features, ReverseAndSwapAreConsistent) {
  const auto w = fixture::random_window(60.0, 200.0, 7);
  const auto ms = signals::apply_montage(w, signals::MontageSpec::double_banana());
  FeatureConfig fc;
  fc.cwt.n_scales = 8;
  const auto ex = extract_features(ms, fc, true, true);
  const auto base = materialize(ex, fc);
  const auto rev = materialize(ex, fc, 0, true);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t t = 0; t < 2000; ++t) ASSERT_EQ(rev.waveform[r * 2000 + t], base.waveform[r * 2000 + 1999 - t]);
  const std::size_t bins = 25, plane = 8 * bins;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t s = 0; s < 8; ++s)
      for (std::size_t b = 0; b < bins; ++b)
        ASSERT_EQ(rev.spec[c * plane + s * bins + b], base.spec[c * plane + s * bins + bins - 1 - b]);
  const auto sw = materialize(ex, fc, 0, false, true);
  for (std::size_t c = 0; c < 4; ++c) {
    const std::size_t m = 3 - c;
    ASSERT_TRUE(std::equal(sw.spec.begin() + c * plane, sw.spec.begin() + (c + 1) * plane,
                           base.spec.begin() + m * plane));
    ASSERT_TRUE(std::equal(sw.waveform.begin() + c * 4 * 2000, sw.waveform.begin() + (c + 1) * 4 * 2000,
                           base.waveform.begin() + m * 4 * 2000));
  }
}

TEST(Features, ShortContextLimitsTheShiftMargin) {
  const auto w = fixture::random_window(50.0, 200.0, 8);
  const auto ms = signals::apply_montage(w, signals::MontageSpec::double_banana());
  const auto ex = extract_features(ms, {}, true, false);
  EXPECT_EQ(ex.max_shift, 0u);
  const auto short_w = fixture::random_window(40.0, 200.0, 8);
  EXPECT_THROW(extract_features(signals::apply_montage(short_w, signals::MontageSpec::double_banana()), {}, true,
                                false),
               std::invalid_argument);
}

TEST(Training, StageOneUsesOnlyHighVoteRecords) {
  const auto& d = shared_mlp_data();
  nn::ModelGraph<float> model(small_mlp(d));
  TrainHistory h;
  const auto idx = all_indices(d.records.size());
  train_stage(model, d, idx, {}, 1, 1, quick_config(), h);
  std::size_t high = 0;
  for (const auto& r : d.records) high += r.total_votes() >= 10;
  ASSERT_EQ(h.epochs.size(), 1u);
  EXPECT_EQ(h.epochs[0].n_train, high);
  EXPECT_EQ(h.steps.size(), (high + 7) / 8);
  EXPECT_DOUBLE_EQ(h.steps.front().lr, quick_config().lr0);
}

TEST(Training, MlpFitsTrainingRowsOnSharedSpectralProfile) {
  // Log spectrograms share a strong 1/f profile across rows; hidden units
  // must survive the first optimizer steps.
  const auto& d = shared_mlp_data();
  auto spec = small_mlp(d);
  spec.mlp_hidden = {16};
  nn::ModelGraph<float> model(spec);
  auto cfg = quick_config();
  cfg.augment = augment::AugmentConfig::disabled();
  cfg.batch_size = 16;
  TrainHistory h;
  const auto idx = all_indices(d.records.size());
  train_stage(model, d, idx, {}, 2, 30, cfg, h);
  const auto pred = predict(model, d, idx);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& p = pred[i].p;
    hits += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) ==
            d.records[i].consensus_class();
  }
  EXPECT_GE(hits, idx.size() * 9 / 10) << hits << "/" << idx.size();
}

TEST(Training, LossDecreasesWithoutAugmentation) {
  const auto& d = shared_mlp_data();
  nn::ModelGraph<float> model(small_mlp(d));
  auto cfg = quick_config();
  cfg.augment = augment::AugmentConfig::disabled();
  cfg.lr0 = 3e-3;
  TrainHistory h;
  const auto idx = all_indices(d.records.size());
  train_stage(model, d, idx, idx, 2, 20, cfg, h);
  EXPECT_LT(h.epochs.back().train_loss, 0.5 * h.epochs.front().train_loss);
  EXPECT_LT(h.epochs.back().val_kl, h.epochs.front().val_kl);
  EXPECT_DOUBLE_EQ(h.steps.back().lr, 0.0);
}

TEST(Training, FoldRunIsBitwiseDeterministic) {
  const auto& d = shared_mlp_data();
  const auto plan = dataset::group_kfold(d.records, 5, 1);
  const auto cfg = quick_config();
  const auto a = run_fold(small_mlp(d), d, plan, 2, Strategy::two_stage, cfg);
  const auto b = run_fold(small_mlp(d), d, plan, 2, Strategy::two_stage, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.final_model.blob, b.final_model.blob);
  ASSERT_TRUE(a.stage1.has_value());
  EXPECT_EQ(a.history.epochs.size(), 5u);
  EXPECT_EQ(a.val_indices, plan.validation_indices(2));
  for (const auto& p : a.predictions) EXPECT_TRUE(p.valid(1e-9));
}

TEST(Training, SingleStageRunsCombinedEpochsAtStageTwo) {
  const auto& d = shared_mlp_data();
  const auto plan = dataset::group_kfold(d.records, 5, 1);
  const auto r = run_fold(small_mlp(d), d, plan, 0, Strategy::single_stage, quick_config());
  EXPECT_FALSE(r.stage1.has_value());
  ASSERT_EQ(r.history.epochs.size(), 5u);
  for (const auto& e : r.history.epochs) EXPECT_EQ(e.stage, 2);
}

TEST(Training, DifferentFoldsGetDifferentSeeds) {
  EXPECT_NE(fold_seed(0, 0), fold_seed(0, 1));
  EXPECT_EQ(fold_seed(7, 3), fold_seed(7, 3));
  EXPECT_NE(fold_seed(7, 3), fold_seed(8, 3));
}

TEST(Training, NonFiniteInputRaisesDivergence) {
  auto d = shared_mlp_data();
  for (auto& ex : d.examples) std::fill(ex.spec[0].values().begin(), ex.spec[0].values().end(), NAN);
  nn::ModelGraph<float> model(small_mlp(d));
  TrainHistory h;
  const auto idx = all_indices(d.records.size());
  EXPECT_THROW(train_stage(model, d, idx, {}, 2, 1, quick_config(), h), TrainingDiverged);
}

TEST(Training, EmptySplitThrows) {
  const auto& d = shared_mlp_data();
  nn::ModelGraph<float> model(small_mlp(d));
  TrainHistory h;
  std::vector<std::size_t> low;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    if (d.records[i].total_votes() < 10) low.push_back(i);
  EXPECT_THROW(train_stage(model, d, low, {}, 1, 1, quick_config(), h), std::runtime_error);
}

TEST(History, CsvColumns) {
  TrainHistory h;
  h.epochs.push_back({1, 0, 1.5, 0.75, 10});
  h.steps.push_back({1, 0, 0.001});
  EXPECT_EQ(h.epochs_csv(), "stage,epoch,train_loss,val_kl,n_train\n1,0,1.5,0.75,10\n");
  EXPECT_EQ(h.steps_csv(3), "fold,stage,step,lr\n3,1,0,0.001\n");
}
