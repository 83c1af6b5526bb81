#include "hbac/pipeline.hpp"

#include "hbac/io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

namespace hbac::pipeline {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

fs::path with_ext(const fs::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

json conditioning_json(const signals::ConditioningParams& c) {
  return json{{"clip_uv", c.clip_uv}, {"low_hz", c.low_hz}, {"high_hz", c.high_hz}, {"order", c.order}};
}

// Sidecar field recorded by every cached artifact.
std::string recorded_hash(const fs::path& sidecar) {
  if (!fs::exists(sidecar)) return {};
  try {
    return json::parse(io::read_text(sidecar)).value("source_hash", std::string{});
  } catch (const json::exception&) {
    return {};
  }
}

std::string file_hash(const fs::path& eeg) {
  std::string material = io::sha256_hex(io::read_bytes(eeg));
  if (signals::detect_format(eeg) == signals::EegFormat::raw_f32) {
    auto sidecar = eeg;
    sidecar.replace_extension(".json");
    material += io::sha256_hex(io::read_bytes(sidecar));
  }
  return material;
}

std::vector<std::string> differential_names(const signals::MontageSpec& m) {
  std::vector<std::string> names;
  for (const auto& c : m.chains)
    for (const auto& p : c.pairs) names.push_back(p.anode + "-" + p.cathode);
  return names;
}

void save_montage(const signals::MontageSignals& ms, const std::vector<std::string>& names, const fs::path& stem,
                  const std::string& hash) {
  json side{{"rate_hz", ms.rate_hz},   {"electrodes", names},   {"eeg_id", ms.eeg_id},
            {"t0_s", 0.0},             {"n_samples", ms.n_samples()}, {"source_hash", hash}};
  io::write_atomic(with_ext(stem, ".f32"), io::encode_f32_le(ms.signals.values()));
  io::write_atomic(with_ext(stem, ".json"), side.dump(2) + "\n");
}

signals::MontageSignals load_montage(const fs::path& stem) {
  try {
    const auto side = json::parse(io::read_text(with_ext(stem, ".json")));
    auto w = signals::read_eeg_raw(io::read_bytes(with_ext(stem, ".f32")), side);
    if (w.n_channels() != signals::kNumDifferentials)
      throw std::runtime_error("expected 16 differentials, found " + std::to_string(w.n_channels()));
    signals::MontageSignals ms;
    ms.signals = std::move(w.samples);
    ms.rate_hz = w.rate_hz;
    ms.eeg_id = w.eeg_id;
    return ms;
  } catch (const std::exception& e) {
    throw std::runtime_error(stem.string() + ": " + e.what());
  }
}

void save_example(const train::Example& ex, const fs::path& stem, const std::string& key) {
  std::vector<float> flat(ex.waveform.values().begin(), ex.waveform.values().end());
  for (const auto& s : ex.spec) flat.insert(flat.end(), s.values().begin(), s.values().end());
  json side{{"source_hash", key},
            {"rate_hz", ex.rate_hz},
            {"span_samples", ex.span_samples},
            {"quantum", ex.quantum},
            {"max_shift", ex.max_shift},
            {"wave", {ex.waveform.rows(), ex.waveform.cols()}},
            {"spec", {ex.spec[0].rows(), ex.spec[0].cols()}}};
  io::write_atomic(with_ext(stem, ".f32"), io::encode_f32_le(flat));
  io::write_atomic(with_ext(stem, ".json"), side.dump(2) + "\n");
}

train::Example load_example(const fs::path& stem) {
  const auto side = json::parse(io::read_text(with_ext(stem, ".json")));
  const auto flat = io::decode_f32_le(io::read_bytes(with_ext(stem, ".f32")));
  train::Example ex;
  ex.rate_hz = side.at("rate_hz").get<double>();
  ex.span_samples = side.at("span_samples").get<std::size_t>();
  ex.quantum = side.at("quantum").get<std::size_t>();
  ex.max_shift = side.at("max_shift").get<std::size_t>();
  const auto wave = side.at("wave").get<std::array<std::size_t, 2>>();
  const auto spec = side.at("spec").get<std::array<std::size_t, 2>>();
  const std::size_t wn = wave[0] * wave[1], sn = spec[0] * spec[1];
  if (flat.size() != wn + signals::kNumChains * sn)
    throw std::runtime_error(with_ext(stem, ".f32").string() + ": payload size does not match sidecar");
  auto it = flat.begin();
  if (wn) ex.waveform = MatrixF(wave[0], wave[1], std::vector<float>(it, it + static_cast<std::ptrdiff_t>(wn)));
  it += static_cast<std::ptrdiff_t>(wn);
  for (auto& s : ex.spec) {
    if (sn) s = MatrixF(spec[0], spec[1], std::vector<float>(it, it + static_cast<std::ptrdiff_t>(sn)));
    it += static_cast<std::ptrdiff_t>(sn);
  }
  return ex;
}

}  // namespace

// ---- config ----

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"seed", "paths", "montage", "conditioning", "cwt", "features", "model", "train", "k"}, "config");
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.k = j.value("k", c.k);
  if (c.k < 2) throw std::invalid_argument("config: k must be >= 2");
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown(p, {"eeg_dir", "manifest", "cache_dir", "folds"}, "config.paths");
    if (p.contains("eeg_dir")) c.paths.eeg_dir = p.at("eeg_dir").get<std::string>();
    if (p.contains("manifest")) c.paths.manifest = p.at("manifest").get<std::string>();
    if (p.contains("cache_dir")) c.paths.cache_dir = p.at("cache_dir").get<std::string>();
    if (p.contains("folds")) c.paths.folds = p.at("folds").get<std::string>();
  }
  c.paths.eeg_dir = resolve(c.paths.eeg_dir, base_dir);
  c.paths.manifest = resolve(c.paths.manifest, base_dir);
  c.paths.cache_dir = resolve(c.paths.cache_dir, base_dir);
  c.paths.folds = resolve(c.paths.folds, base_dir);
  if (j.contains("montage")) c.montage = signals::MontageSpec::from_json(j.at("montage"));
  if (j.contains("conditioning")) {
    const auto& k = j.at("conditioning");
    reject_unknown(k, {"clip_uv", "low_hz", "high_hz", "order"}, "config.conditioning");
    c.conditioning.clip_uv = k.value("clip_uv", c.conditioning.clip_uv);
    c.conditioning.low_hz = k.value("low_hz", c.conditioning.low_hz);
    c.conditioning.high_hz = k.value("high_hz", c.conditioning.high_hz);
    c.conditioning.order = k.value("order", c.conditioning.order);
    if (!(c.conditioning.clip_uv > 0.0f)) throw std::invalid_argument("config.conditioning: clip_uv must be positive");
  }
  if (j.contains("cwt")) c.cwt = cwt::SpectrogramParams::from_json(j.at("cwt"));
  if (j.contains("features")) {
    if (j.at("features").contains("cwt"))
      throw std::invalid_argument("config.features: set cwt parameters in the top-level 'cwt' block");
    c.features = train::FeatureConfig::from_json(j.at("features"));
  }
  c.features.cwt = c.cwt;
  if (j.contains("model")) {
    if (j.at("model").contains("seed")) throw std::invalid_argument("config.model: use the top-level 'seed'");
    c.model = nn::ModelSpec::from_json(j.at("model"));
  }
  if (j.contains("train")) {
    if (j.at("train").contains("seed")) throw std::invalid_argument("config.train: use the top-level 'seed'");
    c.train = train::TrainConfig::from_json(j.at("train"));
  }
  c.train.seed = c.seed;
  c.train.augment.rng_seed = c.seed;
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

json PipelineConfig::to_json() const {
  json model_json = model.to_json();
  model_json.erase("seed");
  json train_json = train.to_json();
  train_json.erase("seed");
  json features_json = features.to_json();
  features_json.erase("cwt");
  return json{{"seed", seed},
              {"k", k},
              {"paths",
               {{"eeg_dir", paths.eeg_dir.string()},
                {"manifest", paths.manifest.string()},
                {"cache_dir", paths.cache_dir.string()},
                {"folds", paths.folds.string()}}},
              {"montage", montage.to_json()},
              {"conditioning", conditioning_json(conditioning)},
              {"cwt", cwt.to_json()},
              {"features", features_json},
              {"model", model_json},
              {"train", train_json}};
}

fs::path PipelineConfig::cache_dir() const {
  if (const char* env = std::getenv(kCacheEnv); env && *env) return fs::path(env);
  return paths.cache_dir;
}

// ---- synth ----

StageStats write_synth(const dataset::SynthSpec& spec, const fs::path& out_dir) {
  const auto data = dataset::synth_dataset(spec);
  StageStats st;
  for (const auto& w : data.windows) {
    signals::save_eeg_window(w, out_dir / "eeg" / w.eeg_id);
    ++st.written;
  }
  io::write_atomic(out_dir / "manifest.csv", dataset::format_manifest(data.records));
  json meta{{"seed", spec.seed},
            {"n_patients", spec.n_patients},
            {"rows_per_patient", spec.rows_per_patient},
            {"classes", spec.classes},
            {"noise_level", spec.noise_level},
            {"label_noise", spec.label_noise},
            {"high_vote_fraction", spec.high_vote_fraction},
            {"context_s", spec.context_s},
            {"rate_hz", spec.rate_hz},
            {"true_class", data.true_class}};
  io::write_atomic(out_dir / "synth.json", meta.dump(2) + "\n");
  return st;
}

std::vector<fs::path> list_eeg_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("EEG directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext == ".f32" || ext == ".csv") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- preprocess ----

StageStats preprocess(const PipelineConfig& cfg) {
  const fs::path cache = cfg.cache_dir();
  const auto names = differential_names(cfg.montage);
  const std::string params = json{{"conditioning", conditioning_json(cfg.conditioning)},
                                  {"montage", cfg.montage.to_json()},
                                  {"hr_span_s", cfg.cwt.hr_span_s}}
                                 .dump();
  StageStats st;
  for (const auto& file : list_eeg_files(cfg.paths.eeg_dir)) {
    const std::string id = file.stem().string();
    std::string hash;
    try {
      hash = io::sha256_hex(file_hash(file) + params);
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ": " + e.what());
    }
    const fs::path mstem = cache / "montage" / id, hstem = cache / "eeg_hr" / id;
    if (recorded_hash(with_ext(mstem, ".json")) == hash && fs::exists(with_ext(mstem, ".f32")) &&
        recorded_hash(with_ext(hstem, ".json")) == hash && fs::exists(with_ext(hstem, ".f32"))) {
      ++st.skipped;
      continue;
    }
    const auto w = signals::load_eeg_window(file);
    signals::MontageSignals ms;
    try {
      ms = signals::apply_montage(signals::condition_window(w, cfg.conditioning), cfg.montage);
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ": " + e.what());
    }
    ms.eeg_id = id;
    if (ms.duration_s() + 1e-9 < cfg.cwt.hr_span_s)
      throw std::runtime_error(file.string() + ": window of " + std::to_string(ms.duration_s()) +
                               " s is shorter than the " + std::to_string(cfg.cwt.hr_span_s) + " s span");
    save_montage(ms, names, mstem, hash);
    save_montage(signals::crop_center(ms, cfg.cwt.hr_span_s), names, hstem, hash);
    ++st.written;
  }
  return st;
}

StageStats spectrogram_cache(const PipelineConfig& cfg) {
  const fs::path cache = cfg.cache_dir();
  const fs::path mdir = cache / "montage";
  if (!fs::is_directory(mdir))
    throw std::runtime_error("no montage cache at " + mdir.string() + " (run `hbac preprocess` first)");
  std::vector<fs::path> stems;
  for (const auto& e : fs::directory_iterator(mdir))
    if (e.path().extension() == ".json") stems.push_back(mdir / e.path().stem());
  std::sort(stems.begin(), stems.end());
  StageStats st;
  for (const auto& stem : stems) {
    const std::string id = stem.filename().string();
    const std::string hash = io::sha256_hex(recorded_hash(with_ext(stem, ".json")) + cfg.cwt.to_json().dump());
    const fs::path out = cache / "spec_hr" / id;
    if (recorded_hash(with_ext(out, ".json")) == hash && fs::exists(with_ext(out, ".f32"))) {
      ++st.skipped;
      continue;
    }
    const auto ms = signals::crop_center(load_montage(stem), cfg.cwt.hr_span_s);
    const auto set = cwt::build_spec_hr(ms, cfg.cwt);
    cwt::save_spectrogram_set(set, out, json{{"eeg_id", id}, {"source_hash", hash}, {"params", cfg.cwt.to_json()}});
    ++st.written;
  }
  return st;
}

StageStats spectrogram_files(const std::vector<fs::path>& inputs, const fs::path& out_dir, cwt::Resolution res,
                             const PipelineConfig& cfg, bool png) {
  const bool hr = res == cwt::Resolution::spec_hr;
  const double span = hr ? cfg.cwt.hr_span_s : cfg.cwt.lr_span_s;
  const std::string params = json{{"conditioning", conditioning_json(cfg.conditioning)},
                                  {"montage", cfg.montage.to_json()},
                                  {"cwt", cfg.cwt.to_json()},
                                  {"mode", hr ? "hr" : "lr"},
                                  {"png", png}}
                                 .dump();
  StageStats st;
  for (const auto& file : inputs) {
    const std::string id = file.stem().string();
    const fs::path stem = out_dir / id;
    const std::string hash = io::sha256_hex(file_hash(file) + params);
    if (recorded_hash(with_ext(stem, ".json")) == hash && fs::exists(with_ext(stem, ".f32"))) {
      ++st.skipped;
      continue;
    }
    const auto w = signals::load_eeg_window(file);
    try {
      if (w.duration_s() + 1e-9 < span)
        throw std::invalid_argument(std::string("--mode ") + (hr ? "hr" : "lr") + " requires a " +
                                    io::format_double(span) + " s window, got " + io::format_double(w.duration_s()) +
                                    " s");
      auto ms = signals::apply_montage(signals::condition_window(w, cfg.conditioning), cfg.montage);
      ms = signals::crop_center(ms, span);
      ms.eeg_id = id;
      const auto set = hr ? cwt::build_spec_hr(ms, cfg.cwt) : cwt::build_spec_lr(ms, cfg.cwt);
      cwt::save_spectrogram_set(set, stem, json{{"eeg_id", id}, {"source_hash", hash}, {"params", cfg.cwt.to_json()}});
      if (png)
        for (const auto& c : set.chains) cwt::write_png(c.power, out_dir / (id + "_" + c.chain_id + ".png"));
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ": " + e.what());
    }
    ++st.written;
  }
  return st;
}

// ---- split ----

dataset::FoldPlan split(const fs::path& manifest, std::size_t k, std::uint64_t seed, const fs::path& out) {
  const auto m = dataset::parse_manifest(manifest);
  for (const auto& r : m.rejected)
    std::clog << manifest.string() << ":" << r.line << ": skipped row: " << r.reason << "\n";
  auto plan = dataset::group_kfold(m.records, k, seed);
  io::write_atomic(out, plan.to_json().dump(2) + "\n");
  return plan;
}

// ---- training ----

train::TrainData load_training_data(const PipelineConfig& cfg, nn::Topology topology) {
  const auto manifest = dataset::parse_manifest(cfg.paths.manifest);
  for (const auto& r : manifest.rejected)
    std::clog << cfg.paths.manifest.string() << ":" << r.line << ": skipped row: " << r.reason << "\n";
  if (manifest.records.empty()) throw std::runtime_error(cfg.paths.manifest.string() + ": no usable rows");
  const bool need_wave = topology != nn::Topology::mlp;
  const bool need_spec = topology != nn::Topology::eegnet;
  const fs::path cache = cfg.cache_dir();
  const std::string params =
      json{{"features", cfg.features.to_json()}, {"waveform", need_wave}, {"spectrogram", need_spec}}.dump();
  const fs::path fdir = cache / "features" / io::sha256_hex(params).substr(0, 16);

  train::TrainData data;
  data.records = manifest.records;
  data.features = cfg.features;
  for (const auto& rec : data.records) {
    const fs::path mstem = cache / "montage" / rec.eeg_id;
    if (!fs::exists(with_ext(mstem, ".json")))
      throw std::runtime_error("no preprocessed montage for eeg_id " + rec.eeg_id + " at " + mstem.string() +
                               " (run `hbac preprocess` first)");
    const std::string key = io::sha256_hex(recorded_hash(with_ext(mstem, ".json")) + params);
    const fs::path fstem = fdir / rec.eeg_id;
    if (recorded_hash(with_ext(fstem, ".json")) == key && fs::exists(with_ext(fstem, ".f32"))) {
      data.examples.push_back(load_example(fstem));
      continue;
    }
    auto ex = train::extract_features(load_montage(mstem), cfg.features, need_wave, need_spec);
    save_example(ex, fstem, key);
    data.examples.push_back(std::move(ex));
  }
  return data;
}

std::vector<train::FoldResult> train_run(const PipelineConfig& cfg, nn::Topology topology, train::Strategy strategy,
                                         const fs::path& folds_path, const fs::path& out_dir) {
  if (!fs::exists(folds_path))
    throw std::runtime_error("folds file not found: " + folds_path.string() + " (create it with `hbac split`)");
  const auto data = load_training_data(cfg, topology);
  json folds_json;
  try {
    folds_json = json::parse(io::read_text(folds_path));
  } catch (const json::exception& e) {
    throw std::runtime_error(folds_path.string() + ": " + e.what());
  }
  dataset::FoldPlan plan;
  try {
    plan = dataset::FoldPlan::from_json(folds_json, data.records);
  } catch (const std::exception& e) {
    throw std::runtime_error(folds_path.string() + ": " + e.what());
  }
  nn::ModelSpec spec = cfg.model;
  spec.topology = topology;
  spec = train::shape_model(spec, data);
  spec.validate();

  auto results = train::run_cross_validation(spec, data, plan, strategy, cfg.train);

  fs::create_directories(out_dir / "checkpoints");
  json model_json = spec.to_json();
  model_json.erase("seed");
  const json resolved{{"config", cfg.to_json()},
                      {"model", model_json},
                      {"topology", std::string(nn::to_string(topology))},
                      {"strategy", std::string(train::to_string(strategy))},
                      {"seed", cfg.seed},
                      {"k", plan.k},
                      {"n_records", data.records.size()},
                      {"manifest_sha256", io::sha256_hex(io::read_bytes(cfg.paths.manifest))}};
  io::write_atomic(out_dir / "config.json", resolved.dump(2) + "\n");
  io::write_atomic(out_dir / "folds.json", plan.to_json().dump(2) + "\n");

  std::string history = "fold,stage,epoch,train_loss,val_kl,n_train\n";
  std::string lr = "fold,stage,step,lr\n";
  std::vector<eval::FoldPredictions> preds;
  for (const auto& r : results) {
    const auto h = r.history.epochs_csv(r.fold);
    history += h.substr(h.find('\n') + 1);
    const auto l = r.history.steps_csv(r.fold);
    lr += l.substr(l.find('\n') + 1);
    eval::FoldPredictions fp;
    fp.fold = r.fold;
    for (auto i : r.val_indices) {
      fp.eeg_ids.push_back(data.records[i].eeg_id);
      fp.targets.push_back(dataset::vote_distribution(data.records[i]));
    }
    fp.predictions = r.predictions;
    preds.push_back(std::move(fp));
    const std::string base = "fold" + std::to_string(r.fold);
    if (r.stage1) nn::write_checkpoint(*r.stage1, out_dir / "checkpoints" / (base + "_stage1"));
    nn::write_checkpoint(r.final_model, out_dir / "checkpoints" / (base + "_final"));
  }
  io::write_atomic(out_dir / "history.csv", history);
  io::write_atomic(out_dir / "lr.csv", lr);
  io::write_atomic(out_dir / "predictions.csv", eval::predictions_csv(preds));
  return results;
}

namespace {

eval::EvalReport build_report(const fs::path& run_dir) {
  const fs::path cfg_path = run_dir / "config.json", pred_path = run_dir / "predictions.csv";
  for (const auto& p : {cfg_path, pred_path})
    if (!fs::exists(p)) throw std::runtime_error("missing " + p.string() + " (run `hbac train` first)");
  const auto cfg = json::parse(io::read_text(cfg_path));
  const auto folds = eval::parse_predictions_csv(io::read_text(pred_path));
  const json meta{{"topology", cfg.at("topology")},   {"strategy", cfg.at("strategy")},
                  {"seed", cfg.at("seed")},           {"k", cfg.at("k")},
                  {"n_records", cfg.at("n_records")}, {"manifest_sha256", cfg.at("manifest_sha256")}};
  return eval::cross_validate(folds, cfg.at("k").get<std::size_t>(), meta);
}

void emit(const eval::EvalReport& report, const fs::path& run_dir) {
  std::vector<eval::HistoryRow> history;
  std::vector<eval::LrRow> lr;
  if (fs::exists(run_dir / "history.csv")) history = eval::parse_history_csv(io::read_text(run_dir / "history.csv"));
  if (fs::exists(run_dir / "lr.csv")) lr = eval::parse_lr_csv(io::read_text(run_dir / "lr.csv"));
  eval::emit_report(report, run_dir, history, lr);
}

}  // namespace

eval::EvalReport evaluate_run(const fs::path& run_dir) {
  auto report = build_report(run_dir);
  emit(report, run_dir);
  return report;
}

eval::EvalReport report_run(const fs::path& run_dir) {
  auto report = build_report(run_dir);
  const fs::path existing = run_dir / "report.json";
  if (fs::exists(existing)) {
    const auto previous = eval::EvalReport::from_json(json::parse(io::read_text(existing)));
    if (previous.fold_kl.size() != report.fold_kl.size() || std::abs(previous.mean_kl - report.mean_kl) > 1e-12)
      std::clog << existing.string() << ": differs from the scores recomputed from predictions.csv; rewriting\n";
  }
  emit(report, run_dir);
  return report;
}

}  // namespace hbac::pipeline
