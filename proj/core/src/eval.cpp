#include "hbac/eval.hpp"

#include "hbac/io.hpp"
#include "hbac/nn/loss.hpp"
#include "hbac/plot.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hbac::eval {

using nlohmann::json;

double mean_kl(std::span<const ClassDistribution> preds, std::span<const ClassDistribution> targets) {
  if (preds.size() != targets.size())
    throw std::invalid_argument("mean_kl: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  if (preds.empty()) throw std::invalid_argument("mean_kl: no rows");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += nn::kl_divergence(targets[i], preds[i]);
  return s / static_cast<double>(preds.size());
}

ConfusionMatrix confusion_matrix(std::span<const ClassDistribution> preds,
                                 std::span<const ClassDistribution> targets) {
  if (preds.size() != targets.size())
    throw std::invalid_argument("confusion_matrix: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < preds.size(); ++i) ++m[targets[i].argmax()][preds[i].argmax()];
  return m;
}

json EvalReport::to_json() const {
  json names = json::array();
  for (auto n : kClassNames) names.push_back(std::string(n));
  return json{{"schema", schema},
              {"aggregation", aggregation},
              {"fold_kl", fold_kl},
              {"mean_kl", mean_kl},
              {"std_kl", std_kl},
              {"classes", names},
              {"confusion", confusion},
              {"class_counts", class_counts},
              {"n_rows", n_rows},
              {"metadata", metadata}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.schema = j.at("schema").get<std::string>();
  if (r.schema != "eval/1") throw std::invalid_argument("report: unsupported schema '" + r.schema + "'");
  r.aggregation = j.at("aggregation").get<std::string>();
  r.fold_kl = j.at("fold_kl").get<std::vector<double>>();
  r.mean_kl = j.at("mean_kl").get<double>();
  r.std_kl = j.at("std_kl").get<double>();
  r.confusion = j.at("confusion").get<ConfusionMatrix>();
  r.class_counts = j.at("class_counts").get<std::array<std::size_t, kNumClasses>>();
  r.n_rows = j.at("n_rows").get<std::size_t>();
  r.metadata = j.value("metadata", json::object());
  return r;
}

EvalReport cross_validate(std::span<const FoldPredictions> folds, std::size_t k, const json& metadata) {
  if (k == 0) throw std::invalid_argument("cross_validate: k must be >= 1");
  std::vector<const FoldPredictions*> by_fold(k, nullptr);
  for (const auto& f : folds) {
    if (f.fold >= k) throw std::invalid_argument("cross_validate: fold " + std::to_string(f.fold) + " out of range");
    if (by_fold[f.fold]) throw std::invalid_argument("cross_validate: fold " + std::to_string(f.fold) + " repeated");
    by_fold[f.fold] = &f;
  }
  EvalReport r;
  r.metadata = metadata.is_null() ? json::object() : metadata;
  for (std::size_t f = 0; f < k; ++f) {
    if (!by_fold[f]) throw std::invalid_argument("cross_validate: missing fold " + std::to_string(f));
    const auto& fp = *by_fold[f];
    r.fold_kl.push_back(mean_kl(fp.predictions, fp.targets));
    const auto m = confusion_matrix(fp.predictions, fp.targets);
    for (std::size_t i = 0; i < kNumClasses; ++i)
      for (std::size_t j = 0; j < kNumClasses; ++j) r.confusion[i][j] += m[i][j];
    r.n_rows += fp.predictions.size();
  }
  double s = 0.0;
  for (double v : r.fold_kl) s += v;
  r.mean_kl = s / static_cast<double>(k);
  double ss = 0.0;
  for (double v : r.fold_kl) ss += (v - r.mean_kl) * (v - r.mean_kl);
  r.std_kl = std::sqrt(ss / static_cast<double>(k));
  for (std::size_t i = 0; i < kNumClasses; ++i)
    for (std::size_t j = 0; j < kNumClasses; ++j) r.class_counts[i] += r.confusion[i][j];
  return r;
}

std::string predictions_csv(std::span<const FoldPredictions> folds) {
  std::ostringstream os;
  os << "fold,eeg_id";
  for (auto n : kClassNames) os << ",target_" << n;
  for (auto n : kClassNames) os << ",pred_" << n;
  os << '\n';
  for (const auto& f : folds) {
    if (f.eeg_ids.size() != f.predictions.size() || f.targets.size() != f.predictions.size())
      throw std::invalid_argument("predictions_csv: ragged fold " + std::to_string(f.fold));
    for (std::size_t i = 0; i < f.predictions.size(); ++i) {
      os << f.fold << ',' << f.eeg_ids[i];
      for (double v : f.targets[i].p) os << ',' << io::format_double(v);
      for (double v : f.predictions[i].p) os << ',' << io::format_double(v);
      os << '\n';
    }
  }
  return os.str();
}

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text, std::size_t columns, const char* what) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 || line.empty()) continue;
    auto cells = io::split_csv_line(line);
    if (cells.size() != columns)
      throw std::invalid_argument(std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(columns) + " columns, got " + std::to_string(cells.size()));
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

}  // namespace

std::vector<FoldPredictions> parse_predictions_csv(const std::string& text) {
  std::map<std::size_t, FoldPredictions> folds;
  for (const auto& c : csv_rows(text, 2 + 2 * kNumClasses, "predictions.csv")) {
    const auto fold = std::stoul(c[0]);
    auto& fp = folds[fold];
    fp.fold = fold;
    fp.eeg_ids.push_back(c[1]);
    ClassDistribution t, p;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      t.p[i] = to_double(c[2 + i]);
      p.p[i] = to_double(c[2 + kNumClasses + i]);
    }
    fp.targets.push_back(t);
    fp.predictions.push_back(p);
  }
  std::vector<FoldPredictions> out;
  for (auto& [f, fp] : folds) out.push_back(std::move(fp));
  return out;
}

std::vector<HistoryRow> parse_history_csv(const std::string& text) {
  std::vector<HistoryRow> out;
  for (const auto& c : csv_rows(text, 6, "history.csv")) {
    HistoryRow r;
    r.fold = std::stoul(c[0]);
    r.epoch.stage = std::stoi(c[1]);
    r.epoch.epoch = std::stoi(c[2]);
    r.epoch.train_loss = to_double(c[3]);
    r.epoch.val_kl = to_double(c[4]);
    r.epoch.n_train = std::stoul(c[5]);
    out.push_back(r);
  }
  return out;
}

std::vector<LrRow> parse_lr_csv(const std::string& text) {
  std::vector<LrRow> out;
  for (const auto& c : csv_rows(text, 4, "lr.csv")) {
    LrRow r;
    r.fold = std::stoul(c[0]);
    r.step.stage = std::stoi(c[1]);
    r.step.step = std::stoul(c[2]);
    r.step.lr = to_double(c[3]);
    out.push_back(r);
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  os << "true\\pred";
  for (auto n : kClassNames) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    os << kClassNames[i];
    for (std::size_t j = 0; j < kNumClasses; ++j) os << ',' << m[i][j];
    os << '\n';
  }
  return os.str();
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir, std::span<const HistoryRow> history,
                 std::span<const LrRow> lr) {
  std::filesystem::create_directories(out_dir);
  io::write_atomic(out_dir / "report.json", report.to_json().dump(2) + "\n");
  io::write_atomic(out_dir / "confusion_matrix.csv", confusion_csv(report.confusion));

  std::vector<std::vector<double>> cells(kNumClasses, std::vector<double>(kNumClasses));
  for (std::size_t i = 0; i < kNumClasses; ++i)
    for (std::size_t j = 0; j < kNumClasses; ++j) cells[i][j] = static_cast<double>(report.confusion[i][j]);
  std::vector<std::string> labels(kClassNames.begin(), kClassNames.end());
  io::write_atomic(out_dir / "confusion_heatmap.svg", plot::heatmap_svg(cells, labels, "Confusion matrix"));

  if (!history.empty()) {
    std::map<std::size_t, std::pair<plot::Series, plot::Series>> per_fold;
    for (const auto& h : history) {
      auto& [tr, va] = per_fold[h.fold];
      if (tr.label.empty()) {
        tr.label = "fold " + std::to_string(h.fold) + " train";
        va.label = "fold " + std::to_string(h.fold) + " val KL";
      }
      const double x = static_cast<double>(tr.x.size());
      tr.x.push_back(x);
      tr.y.push_back(h.epoch.train_loss);
      va.x.push_back(x);
      va.y.push_back(h.epoch.val_kl);
    }
    std::vector<plot::Series> series;
    for (auto& [f, s] : per_fold) {
      series.push_back(s.first);
      series.push_back(s.second);
    }
    io::write_atomic(out_dir / "loss_curves.svg", plot::line_chart_svg(series, "Loss curves", "epoch", "KL"));
  }
  if (!lr.empty()) {
    std::map<std::size_t, plot::Series> per_fold;
    for (const auto& r : lr) {
      auto& s = per_fold[r.fold];
      if (s.label.empty()) s.label = "fold " + std::to_string(r.fold);
      s.x.push_back(static_cast<double>(s.x.size()));
      s.y.push_back(r.step.lr);
    }
    std::vector<plot::Series> series;
    for (auto& [f, s] : per_fold) series.push_back(std::move(s));
    io::write_atomic(out_dir / "lr_curve.svg", plot::line_chart_svg(series, "Learning rate", "step", "lr"));
  }
}

}  // namespace hbac::eval
