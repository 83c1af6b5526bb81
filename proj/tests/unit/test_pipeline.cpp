#include "hbac/io.hpp"
#include "hbac/pipeline.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace hbac;
using namespace hbac::pipeline;
using nlohmann::json;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

PipelineConfig synth_config(const fixture::TempDir& dir, std::size_t patients = 6, std::size_t rows = 2) {
  dataset::SynthSpec s;
  s.n_patients = patients;
  s.rows_per_patient = rows;
  write_synth(s, dir / "data");
  json j = {{"seed", 3},
            {"k", 3},
            {"paths", {{"eeg_dir", "data/eeg"}, {"manifest", "data/manifest.csv"}, {"cache_dir", "cache"}}},
            {"model", {{"topology", "mlp"}, {"mlp_hidden", {8}}}},
            {"train", {{"stage1_epochs", 1}, {"stage2_epochs", 1}, {"batch_size", 8}}}};
  return PipelineConfig::from_json(j, dir.path());
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value.c_str(), 1);
  }
  ~ScopedEnv() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST(Config, UnknownKeysAreRejectedWithTheirName) {
  EXPECT_TRUE(contains(error_of([] { PipelineConfig::from_json({{"sed", 1}}); }), "sed"));
  EXPECT_TRUE(contains(error_of([] { PipelineConfig::from_json({{"paths", {{"cache", "x"}}}}); }), "cache"));
  EXPECT_TRUE(contains(error_of([] { PipelineConfig::from_json({{"train", {{"epochs", 3}}}}); }), "epochs"));
  EXPECT_THROW(PipelineConfig::from_json({{"features", {{"cwt", json::object()}}}}), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_json({{"model", {{"seed", 1}}}}), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_json({{"k", 1}}), std::invalid_argument);
}

TEST(Config, SeedAndCwtFanOut) {
  const auto c = PipelineConfig::from_json({{"seed", 42}, {"cwt", {{"scales", 20}}}});
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.train.augment.rng_seed, 42u);
  EXPECT_EQ(c.features.cwt.n_scales, 20u);
  const auto back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, RelativePathsResolveAgainstTheConfigFile) {
  fixture::TempDir dir("cfg");
  std::filesystem::create_directories(dir / "sub");
  io::write_atomic(dir / "sub" / "run.json", json{{"paths", {{"eeg_dir", "eeg"}, {"manifest", "/abs/m.csv"}}}}.dump());
  const auto c = PipelineConfig::load(dir / "sub" / "run.json");
  EXPECT_EQ(c.paths.eeg_dir, dir / "sub" / "eeg");
  EXPECT_EQ(c.paths.manifest, std::filesystem::path("/abs/m.csv"));
  io::write_atomic(dir / "bad.json", "{\"seed\": 1, \"bogus\": 2}");
  EXPECT_TRUE(contains(error_of([&] { PipelineConfig::load(dir / "bad.json"); }), "bad.json"));
  io::write_atomic(dir / "broken.json", "{");
  EXPECT_TRUE(contains(error_of([&] { PipelineConfig::load(dir / "broken.json"); }), "broken.json"));
}

TEST(Config, EnvironmentOverridesCacheDir) {
  const auto c = PipelineConfig::from_json({{"paths", {{"cache_dir", "/tmp/a"}}}});
  {
    ScopedEnv env(kCacheEnv, "/tmp/override");
    EXPECT_EQ(c.cache_dir(), std::filesystem::path("/tmp/override"));
  }
  ::unsetenv(kCacheEnv);
  EXPECT_EQ(c.cache_dir(), std::filesystem::path("/tmp/a"));
}

TEST(Preprocess, IdempotentAndSelectiveOnChange) {
  fixture::TempDir dir("pre");
  const auto cfg = synth_config(dir, 3, 2);
  auto first = preprocess(cfg);
  EXPECT_EQ(first.written, 6u);
  const auto montage_file = cfg.cache_dir() / "montage" / "100000.f32";
  const auto before = io::read_text(montage_file);
  auto second = preprocess(cfg);
  EXPECT_EQ(second.written, 0u);
  EXPECT_EQ(second.skipped, 6u);
  EXPECT_EQ(io::read_text(montage_file), before);
  auto w = signals::load_eeg_window(cfg.paths.eeg_dir / "100003.f32");
  w.samples(0, 0) += 1.0f;
  signals::save_eeg_window(w, cfg.paths.eeg_dir / "100003");
  auto third = preprocess(cfg);
  EXPECT_EQ(third.written, 1u);
  EXPECT_EQ(third.skipped, 5u);
  auto changed = cfg;
  changed.conditioning.high_hz = 25.0;
  EXPECT_EQ(preprocess(changed).written, 6u);
}

TEST(Preprocess, EnvironmentCacheDirIsUsed) {
  fixture::TempDir dir("envcache");
  const auto cfg = synth_config(dir, 3, 1);
  ScopedEnv env(kCacheEnv, (dir / "elsewhere").string());
  preprocess(cfg);
  EXPECT_TRUE(std::filesystem::exists(dir / "elsewhere" / "montage" / "100000.f32"));
  EXPECT_FALSE(std::filesystem::exists(dir / "cache"));
}

TEST(Preprocess, CorruptFileIsNamed) {
  fixture::TempDir dir("corrupt");
  const auto cfg = synth_config(dir, 3, 1);
  const auto bad = cfg.paths.eeg_dir / "100001.f32";
  std::filesystem::resize_file(bad, 1001);
  EXPECT_TRUE(contains(error_of([&] { preprocess(cfg); }), "100001"));
}

TEST(Preprocess, ShortWindowIsRejected) {
  fixture::TempDir dir("short");
  auto cfg = synth_config(dir, 3, 1);
  auto w = fixture::random_window(20.0, 200.0, 1);
  w.eeg_id = "short";
  signals::save_eeg_window(w, cfg.paths.eeg_dir / "short");
  const auto msg = error_of([&] { preprocess(cfg); });
  EXPECT_TRUE(contains(msg, "short")) << msg;
  EXPECT_TRUE(contains(msg, "span")) << msg;
}

TEST(Spectrogram, CacheWritesOneSetPerRecord) {
  fixture::TempDir dir("spec");
  auto cfg = synth_config(dir, 3, 1);
  cfg.cwt.n_scales = 10;
  EXPECT_THROW(spectrogram_cache(cfg), std::runtime_error);
  preprocess(cfg);
  const auto st = spectrogram_cache(cfg);
  EXPECT_EQ(st.written, 3u);
  const auto s = cwt::load_spectrogram_set(cfg.cache_dir() / "spec_hr" / "100000");
  EXPECT_EQ(s.n_scales(), 10u);
  EXPECT_EQ(s.n_timebins(), 625u);
  EXPECT_EQ(spectrogram_cache(cfg).skipped, 3u);
}

TEST(Spectrogram, LowResolutionNeedsTenMinutes) {
  fixture::TempDir dir("lr");
  const auto cfg = synth_config(dir, 3, 1);
  const auto msg = error_of([&] {
    spectrogram_files({cfg.paths.eeg_dir / "100000.f32"}, dir / "out", cwt::Resolution::spec_lr, cfg);
  });
  EXPECT_TRUE(contains(msg, "100000")) << msg;
  EXPECT_TRUE(contains(msg, "600 s")) << msg;
}

TEST(Split, WritesAGroupedPlan) {
  fixture::TempDir dir("split");
  const auto cfg = synth_config(dir, 6, 2);
  const auto plan = split(cfg.paths.manifest, 3, 5, dir / "folds.json");
  const auto j = json::parse(io::read_text(dir / "folds.json"));
  EXPECT_EQ(j.at("k"), 3);
  EXPECT_EQ(j.at("patients").size(), 6u);
  EXPECT_EQ(plan.assignment.size(), 12u);
}

TEST(Train, MissingFoldsAndMissingCacheAreActionable) {
  fixture::TempDir dir("trainerr");
  const auto cfg = synth_config(dir, 6, 1);
  const auto no_cache = error_of([&] { load_training_data(cfg, nn::Topology::mlp); });
  EXPECT_TRUE(contains(no_cache, "hbac preprocess")) << no_cache;
  preprocess(cfg);
  const auto no_folds = error_of([&] {
    train_run(cfg, nn::Topology::mlp, train::Strategy::two_stage, dir / "nope.json", dir / "run");
  });
  EXPECT_TRUE(contains(no_folds, "nope.json")) << no_folds;
  EXPECT_TRUE(contains(no_folds, "hbac split")) << no_folds;
  const auto no_run = error_of([&] { evaluate_run(dir / "run"); });
  EXPECT_TRUE(contains(no_run, "hbac train")) << no_run;
}

TEST(Train, EndToEndRunProducesReport) {
  fixture::TempDir dir("e2e");
  const auto cfg = synth_config(dir, 6, 2);
  preprocess(cfg);
  split(cfg.paths.manifest, 3, cfg.seed, dir / "folds.json");
  const auto folds = train_run(cfg, nn::Topology::mlp, train::Strategy::two_stage, dir / "folds.json", dir / "run");
  EXPECT_EQ(folds.size(), 3u);
  for (const char* f : {"config.json", "folds.json", "history.csv", "lr.csv", "predictions.csv",
                        "checkpoints/fold0_stage1.json", "checkpoints/fold2_final.bin"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  const auto report = evaluate_run(dir / "run");
  EXPECT_EQ(report.fold_kl.size(), 3u);
  EXPECT_EQ(report.n_rows, 12u);
  const auto text = io::read_text(dir / "run" / "report.json");
  EXPECT_EQ(report_run(dir / "run"), report);
  EXPECT_EQ(io::read_text(dir / "run" / "report.json"), text);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "loss_curves.svg"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "lr_curve.svg"));
  EXPECT_TRUE(std::filesystem::exists(cfg.cache_dir() / "features"));
}
