#include "hbac/nn/gradcheck.hpp"
#include "hbac/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace hbac;

namespace {

struct Shared {
  std::string config;

  pipeline::PipelineConfig load() const {
    if (config.empty()) return {};
    return pipeline::PipelineConfig::load(config);
  }
};

void add_config(CLI::App* cmd, Shared& shared) {
  cmd->add_option("--config", shared.config, "pipeline configuration (JSON)")->check(CLI::ExistingFile);
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void print_stats(const char* stage, const pipeline::StageStats& st) {
  std::cout << stage << ": " << st.written << " written, " << st.skipped << " up to date\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmful brain activity classification pipeline"};
  app.require_subcommand(1);
  Shared shared;
  std::function<void()> action;
  std::string command;

  // synth
  dataset::SynthSpec synth;
  std::string synth_out;
  auto* cmd_synth = app.add_subcommand("synth", "write a synthetic labelled EEG corpus");
  add_config(cmd_synth, shared);
  cmd_synth->add_option("--patients", synth.n_patients, "number of patients")->capture_default_str();
  cmd_synth->add_option("--rows", synth.rows_per_patient, "records per patient")->capture_default_str();
  cmd_synth->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  cmd_synth->add_option("--noise", synth.noise_level, "background amplitude")->capture_default_str();
  cmd_synth->add_option("--label-noise", synth.label_noise, "P(low-vote row has a wrong majority)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd_synth->add_option("--high-vote-fraction", synth.high_vote_fraction, "P(row has 10-20 votes)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd_synth->add_option("--context", synth.context_s, "window length in seconds")->capture_default_str();
  cmd_synth->add_option("--out", synth_out, "output directory")->required();
  cmd_synth->callback([&] {
    action = [&] {
      auto st = pipeline::write_synth(synth, synth_out);
      std::cout << "synth: " << st.written << " windows written to " << synth_out << "\n";
    };
  });

  // preprocess
  auto* cmd_pre = app.add_subcommand("preprocess", "clip, filter and montage every EEG window into the cache");
  add_config(cmd_pre, shared);
  cmd_pre->callback([&] { action = [&] { print_stats("preprocess", pipeline::preprocess(shared.load())); }; });

  // spectrogram
  std::string spec_in, spec_out, spec_mode = "hr";
  std::optional<std::size_t> spec_scales, spec_stride;
  std::optional<double> spec_fmin, spec_fmax;
  bool spec_png = false;
  auto* cmd_spec = app.add_subcommand("spectrogram", "Morlet CWT spectrograms (cache, file or directory)");
  add_config(cmd_spec, shared);
  cmd_spec->add_option("--in", spec_in, "EEG file or directory; omit to fill the Spec-HR cache");
  cmd_spec->add_option("--out", spec_out, "output directory (required with --in)");
  cmd_spec->add_option("--mode", spec_mode, "hr (50 s) or lr (600 s)")
      ->check(CLI::IsMember({"hr", "lr"}))
      ->capture_default_str();
  cmd_spec->add_option("--scales", spec_scales, "number of wavelet scales");
  cmd_spec->add_option("--fmin", spec_fmin, "lowest center frequency (Hz)");
  cmd_spec->add_option("--fmax", spec_fmax, "highest center frequency (Hz)");
  cmd_spec->add_option("--stride", spec_stride, "time pooling stride (samples)");
  cmd_spec->add_flag("--png", spec_png, "also write one grayscale PNG per chain");
  cmd_spec->callback([&] {
    action = [&] {
      auto cfg = shared.load();
      const bool hr = spec_mode == "hr";
      if (spec_scales) cfg.cwt.n_scales = *spec_scales;
      if (spec_fmin) cfg.cwt.f_min = *spec_fmin;
      if (spec_fmax) cfg.cwt.f_max = *spec_fmax;
      if (spec_stride) (hr ? cfg.cwt.hr_stride : cfg.cwt.lr_stride) = *spec_stride;
      cfg.cwt = cwt::SpectrogramParams::from_json(cfg.cwt.to_json());
      if (spec_in.empty()) {
        if (!hr) throw std::invalid_argument("--mode lr needs --in (the cache holds 50 s windows)");
        print_stats("spectrogram", pipeline::spectrogram_cache(cfg));
        return;
      }
      if (spec_out.empty()) throw std::invalid_argument("--out is required with --in");
      std::vector<fs::path> inputs;
      if (fs::is_directory(spec_in))
        inputs = pipeline::list_eeg_files(spec_in);
      else if (fs::exists(spec_in))
        inputs.push_back(spec_in);
      else
        throw std::runtime_error("input not found: " + spec_in);
      const auto res = hr ? cwt::Resolution::spec_hr : cwt::Resolution::spec_lr;
      print_stats("spectrogram", pipeline::spectrogram_files(inputs, spec_out, res, cfg, spec_png));
    };
  });

  // split
  std::string split_manifest, split_out;
  std::optional<std::size_t> split_k;
  std::optional<std::uint64_t> split_seed;
  auto* cmd_split = app.add_subcommand("split", "patient-grouped K-fold assignment");
  add_config(cmd_split, shared);
  cmd_split->add_option("--manifest", split_manifest, "label manifest CSV");
  cmd_split->add_option("--k", split_k, "number of folds")->check(CLI::Range(2, 1000));
  cmd_split->add_option("--seed", split_seed, "shuffle seed");
  cmd_split->add_option("--out", split_out, "folds JSON");
  cmd_split->callback([&] {
    action = [&] {
      const auto cfg = shared.load();
      const fs::path manifest = split_manifest.empty() ? cfg.paths.manifest : fs::path(split_manifest);
      const fs::path out = split_out.empty() ? cfg.paths.folds : fs::path(split_out);
      const auto plan = pipeline::split(manifest, split_k.value_or(cfg.k), split_seed.value_or(cfg.seed), out);
      std::cout << "split: " << plan.patient_fold.size() << " patients, fold sizes";
      for (auto n : plan.fold_sizes()) std::cout << " " << n;
      std::cout << " -> " << out.string() << "\n";
    };
  });

  // train
  std::string train_model = "eegnet", train_strategy = "two-stage", train_folds, train_out;
  auto* cmd_train = app.add_subcommand("train", "cross-validated training");
  add_config(cmd_train, shared);
  cmd_train->add_option("--model", train_model, "mlp, eegnet or multimodal")
      ->check(CLI::IsMember({"mlp", "eegnet", "multimodal"}))
      ->capture_default_str();
  cmd_train->add_option("--strategy", train_strategy, "two-stage or single-stage")
      ->check(CLI::IsMember({"two-stage", "single-stage"}))
      ->capture_default_str();
  cmd_train->add_option("--folds", train_folds, "folds JSON from `hbac split`");
  cmd_train->add_option("--out", train_out, "run directory")->required();
  cmd_train->callback([&] {
    action = [&] {
      const auto cfg = shared.load();
      const fs::path folds = train_folds.empty() ? cfg.paths.folds : fs::path(train_folds);
      const auto results = pipeline::train_run(cfg, nn::topology_from_string(train_model),
                                               train::strategy_from_string(train_strategy), folds, train_out);
      for (const auto& r : results) std::cout << "fold " << r.fold << ": val KL " << r.kl << "\n";
      std::cout << "train: run written to " << train_out << "\n";
    };
  });

  // evaluate / report
  std::string run_dir;
  auto* cmd_eval = app.add_subcommand("evaluate", "score a training run and write report.json");
  add_config(cmd_eval, shared);
  cmd_eval->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  cmd_eval->callback([&] {
    action = [&] {
      const auto r = pipeline::evaluate_run(run_dir);
      for (std::size_t f = 0; f < r.fold_kl.size(); ++f) std::cout << "fold " << f << ": KL " << r.fold_kl[f] << "\n";
      std::cout << "mean KL " << r.mean_kl << " (std " << r.std_kl << ")\n";
    };
  });
  auto* cmd_report = app.add_subcommand("report", "regenerate report files and plots for a run");
  add_config(cmd_report, shared);
  cmd_report->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  cmd_report->callback([&] {
    action = [&] {
      const auto r = pipeline::report_run(run_dir);
      std::cout << "report: mean KL " << r.mean_kl << " written to " << run_dir << "\n";
    };
  });

  // gradcheck
  std::string gc_case = "all";
  nn::GradCheckOptions gc_opts;
  auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference gradient verification in 64-bit mode");
  add_config(cmd_gc, shared);
  cmd_gc->add_option("--case", gc_case, "layer kind, mlp, eegnet, multimodal or all")->capture_default_str();
  gc_opts.eps = nn::kSuiteEps;
  cmd_gc->add_option("--eps", gc_opts.eps, "central difference step")->capture_default_str();
  cmd_gc->add_option("--seed", gc_opts.seed, "sampling seed")->capture_default_str();
  int gc_status = 0;
  cmd_gc->callback([&] {
    action = [&] {
      for (const auto& c : nn::run_grad_check_suite(gc_case, gc_opts)) {
        std::printf("%-18s max_rel_error %.3e  tol %.0e  %s  (%zu checked, worst %s)\n", c.name.c_str(),
                    c.result.max_rel_error, c.tolerance, c.passed() ? "ok" : "FAIL", c.result.checked,
                    c.result.worst.c_str());
        if (!c.passed()) gc_status = 1;
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto* sub : app.get_subcommands()) command = sub->get_name();
  try {
    action();
  } catch (const std::exception& e) {
    std::cout.flush();
    std::cerr << "hbac " << command << ": error: " << one_line(e.what()) << "\n";
    return 1;
  }
  if (gc_status) std::cerr << "hbac gradcheck: error: gradient check exceeded tolerance\n";
  return gc_status;
}
