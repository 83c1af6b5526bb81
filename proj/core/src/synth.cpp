#include "hbac/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace hbac::dataset {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEventSpanS = 10.0;
constexpr double kTaperS = 0.5;
constexpr double kBackgroundUv = 20.0;

struct Position {
  double x;  // negative = left
  double y;  // positive = anterior
};

// Approximate 10-20 scalp coordinates; EKG has no scalp position.
const std::vector<std::pair<std::string, Position>>& electrode_layout() {
  static const std::vector<std::pair<std::string, Position>> layout = {
      {"Fp1", {-0.30, 0.95}}, {"F3", {-0.40, 0.50}}, {"C3", {-0.50, 0.00}}, {"P3", {-0.40, -0.50}},
      {"F7", {-0.80, 0.60}},  {"T3", {-1.00, 0.00}}, {"T5", {-0.80, -0.60}}, {"O1", {-0.30, -0.95}},
      {"Fz", {0.00, 0.50}},   {"Cz", {0.00, 0.00}},  {"Pz", {0.00, -0.50}}, {"Fp2", {0.30, 0.95}},
      {"F4", {0.40, 0.50}},   {"C4", {0.50, 0.00}},  {"P4", {0.40, -0.50}}, {"F8", {0.80, 0.60}},
      {"T4", {1.00, 0.00}},   {"T6", {0.80, -0.60}}, {"O2", {0.30, -0.95}}};
  return layout;
}

constexpr std::array<std::size_t, kNumClasses> kNeighbor = {1, 2, 1, 4, 3, 3};

struct EventParams {
  double amplitude_uv = 0;
  double rate_hz = 0;  // oscillation or discharge repetition rate
  double phase = 0;
  double side = -1;    // -1 left, +1 right
  double focus_y = 0.1;
};

EventParams nominal_params(std::size_t cls) {
  switch (static_cast<EventClass>(cls)) {
    case EventClass::seizure: return {120.0, 3.0};
    case EventClass::lpd: return {150.0, 1.0};
    case EventClass::gpd: return {150.0, 1.6};
    case EventClass::lrda: return {100.0, 1.5};
    case EventClass::grda: return {100.0, 2.2};
    case EventClass::other: return {0.0, 0.0};
  }
  return {};
}

double spatial_gain(std::size_t cls, Position pos, const EventParams& ev) {
  const auto lateral = [&](double sigma) {
    const double dx = pos.x - ev.side * 0.75;
    const double dy = pos.y - ev.focus_y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  };
  switch (static_cast<EventClass>(cls)) {
    case EventClass::seizure: return lateral(0.8);
    case EventClass::lpd:
    case EventClass::lrda: return lateral(0.5);
    case EventClass::gpd:
    case EventClass::grda: return std::exp(1.2 * (pos.y - 1.0));  // frontal predominance
    case EventClass::other: return 0.0;
  }
  return 0.0;
}

// Biphasic sharp transient, peak magnitude 1.
double discharge(double tau) {
  constexpr double w = 0.04;
  return -(tau / w) * std::exp(0.5 - tau * tau / (2.0 * w * w));
}

double waveform(std::size_t cls, double t, const EventParams& ev) {
  const double phi = kTwoPi * ev.rate_hz * t + ev.phase;
  switch (static_cast<EventClass>(cls)) {
    case EventClass::seizure: return std::sin(phi) + 0.6 * std::sin(2.0 * phi) + 0.3 * std::sin(3.0 * phi);
    case EventClass::lpd:
    case EventClass::gpd: {
      const double period = 1.0 / ev.rate_hz;
      const double offset = ev.phase / kTwoPi * period;
      const double tau = std::remainder(t - offset, period);
      return discharge(tau);
    }
    case EventClass::lrda:
    case EventClass::grda: return std::sin(phi);
    case EventClass::other: return 0.0;
  }
  return 0.0;
}

// Tukey envelope over the central event span.
double envelope(double t_from_center) {
  const double half = kEventSpanS / 2.0;
  const double a = std::abs(t_from_center);
  if (a >= half) return 0.0;
  if (a <= half - kTaperS) return 1.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (a - (half - kTaperS)) / kTaperS));
}

void add_event(signals::EegWindow& w, std::size_t cls, const EventParams& ev) {
  if (static_cast<EventClass>(cls) == EventClass::other) return;
  const auto& layout = electrode_layout();
  const double center = w.duration_s() / 2.0;
  std::vector<double> shape(w.n_samples());
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const double t = static_cast<double>(i) / w.rate_hz - center;
    const double env = envelope(t);
    shape[i] = env == 0.0 ? 0.0 : env * waveform(cls, t, ev);
  }
  for (const auto& [name, pos] : layout) {
    const auto ch = w.channel_index(name);
    const double g = ev.amplitude_uv * spatial_gain(cls, pos, ev);
    auto row = w.samples.row(*ch);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += static_cast<float>(g * shape[i]);
  }
}

// Kellet's economy pink filter on white Gaussian noise, rescaled to unit std.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = white(rng);
    b0 = 0.99886 * b0 + x * 0.0555179;
    b1 = 0.99332 * b1 + x * 0.0750759;
    b2 = 0.96900 * b2 + x * 0.1538520;
    b3 = 0.86650 * b3 + x * 0.3104856;
    b4 = 0.55000 * b4 + x * 0.5329522;
    b5 = -0.7616 * b5 - x * 0.0168980;
    out[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + x * 0.5362;
    b6 = x * 0.115926;
  }
  double mean = 0, ss = 0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(n);
  for (double v : out) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  for (double& v : out) v = (v - mean) / (sd > 0 ? sd : 1.0);
  return out;
}

signals::EegWindow blank_window(double context_s, double rate_hz) {
  signals::EegWindow w;
  w.rate_hz = rate_hz;
  w.electrodes = synth_electrodes();
  const auto n = static_cast<std::size_t>(std::llround(context_s * rate_hz));
  w.samples = MatrixF(w.electrodes.size(), n);
  return w;
}

VoteCounts draw_votes(std::size_t true_cls, bool high, bool corrupt, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> total_dist = high ? std::uniform_int_distribution<int>(10, 20)
                                                       : std::uniform_int_distribution<int>(1, 7);
  const int total = total_dist(rng);
  const double agree = std::uniform_real_distribution<double>(0.6, 1.0)(rng);
  const int majority = std::min(total, static_cast<int>(std::ceil(agree * total)));
  std::size_t majority_cls = true_cls;
  if (corrupt) {
    std::uniform_int_distribution<std::size_t> other(0, kNumClasses - 2);
    majority_cls = other(rng);
    if (majority_cls >= true_cls) ++majority_cls;
  }
  VoteCounts v{};
  v[majority_cls] += majority;
  v[kNeighbor[true_cls]] += total - majority;
  return v;
}

}  // namespace

const std::vector<std::string>& synth_electrodes() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, pos] : electrode_layout()) n.push_back(name);
    n.emplace_back("EKG");
    return n;
  }();
  return names;
}

signals::EegWindow render_archetype(std::size_t cls, double context_s, double rate_hz, bool left_side) {
  if (cls >= kNumClasses) throw std::invalid_argument("render_archetype: class out of range");
  auto w = blank_window(context_s, rate_hz);
  auto ev = nominal_params(cls);
  ev.side = left_side ? -1.0 : 1.0;
  add_event(w, cls, ev);
  w.eeg_id = "archetype_" + std::string(class_name(cls));
  return w;
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  if (spec.classes.size() < 2) throw std::invalid_argument("synth: at least 2 classes required");
  for (auto c : spec.classes)
    if (c >= kNumClasses) throw std::invalid_argument("synth: class index out of range");
  if (spec.n_patients == 0 || spec.rows_per_patient == 0) throw std::invalid_argument("synth: empty dataset");
  if (spec.context_s < kEventSpanS) throw std::invalid_argument("synth: context shorter than the event span");

  SynthDataset out;
  const std::size_t n_rows = spec.n_patients * spec.rows_per_patient;
  out.windows.reserve(n_rows);
  out.records.reserve(n_rows);
  out.true_class.reserve(n_rows);

  for (std::size_t p = 0; p < spec.n_patients; ++p) {
    std::seed_seq patient_seq{spec.seed, static_cast<std::uint64_t>(p), std::uint64_t{0x9a7e}};
    std::mt19937_64 prng(patient_seq);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double amp_scale = 0.75 + 0.5 * u01(prng);
    const double freq_scale = 0.92 + 0.16 * u01(prng);
    const double noise_scale = 0.8 + 0.4 * u01(prng);
    const std::string patient_id = std::to_string(10000 + p);

    for (std::size_t r = 0; r < spec.rows_per_patient; ++r) {
      const std::size_t row = p * spec.rows_per_patient + r;
      std::seed_seq row_seq{spec.seed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(r)};
      std::mt19937_64 rng(row_seq);
      const std::size_t cls =
          spec.classes[std::uniform_int_distribution<std::size_t>(0, spec.classes.size() - 1)(rng)];

      auto w = blank_window(spec.context_s, spec.rate_hz);
      w.eeg_id = std::to_string(100000 + row);
      EventParams ev = nominal_params(cls);
      ev.amplitude_uv *= amp_scale;
      ev.rate_hz *= freq_scale;
      ev.phase = kTwoPi * u01(rng);
      ev.side = u01(rng) < 0.5 ? -1.0 : 1.0;
      ev.focus_y = -0.2 + 0.6 * u01(rng);
      add_event(w, cls, ev);

      if (spec.noise_level > 0) {
        const double sd = spec.noise_level * kBackgroundUv * noise_scale;
        for (std::size_t ch = 0; ch < w.n_channels(); ++ch) {
          auto noise = pink_noise(w.n_samples(), rng);
          auto dst = w.samples.row(ch);
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(sd * noise[i]);
        }
      }

      const bool high = u01(rng) < spec.high_vote_fraction;
      const bool corrupt = !high && u01(rng) < spec.label_noise;
      LabelRecord rec;
      rec.eeg_id = w.eeg_id;
      rec.spectrogram_id = w.eeg_id;
      rec.patient_id = patient_id;
      rec.votes = draw_votes(cls, high, corrupt, rng);

      out.windows.push_back(std::move(w));
      out.records.push_back(std::move(rec));
      out.true_class.push_back(cls);
    }
  }
  return out;
}

}  // namespace hbac::dataset
