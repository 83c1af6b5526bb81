#include "hbac/signals.hpp"

#include "hbac/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace hbac::signals {

using nlohmann::json;

std::optional<std::size_t> EegWindow::channel_index(std::string_view name) const {
  for (std::size_t i = 0; i < electrodes.size(); ++i)
    if (electrodes[i] == name) return i;
  return std::nullopt;
}

void EegWindow::validate() const {
  if (!(rate_hz > 0) || !std::isfinite(rate_hz)) throw std::invalid_argument("eeg window: rate_hz must be positive");
  if (electrodes.size() != samples.rows())
    throw std::invalid_argument("eeg window: " + std::to_string(electrodes.size()) + " electrode names for " +
                                std::to_string(samples.rows()) + " channels");
  std::set<std::string> seen;
  for (const auto& e : electrodes)
    if (!seen.insert(e).second) throw std::invalid_argument("eeg window: duplicate electrode '" + e + "'");
  if (n_samples() == 0) throw std::invalid_argument("eeg window: zero samples");
  for (std::size_t c = 0; c < samples.rows(); ++c) {
    auto row = samples.row(c);
    for (std::size_t t = 0; t < row.size(); ++t)
      if (!std::isfinite(row[t]))
        throw std::invalid_argument("eeg window: non-finite value at channel " + std::to_string(c) + " (" +
                                    electrodes[c] + "), sample " + std::to_string(t));
  }
}

EegFormat detect_format(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".csv" ? EegFormat::csv : EegFormat::raw_f32;
}

EegWindow read_eeg_csv(std::istream& in, const CsvOptions& opts) {
  std::string line;
  if (!std::getline(in, line) || io::trim(line).empty()) throw std::invalid_argument("eeg csv: missing header row");
  EegWindow w;
  w.electrodes = io::split_csv_line(line);
  w.rate_hz = opts.rate_hz;
  w.eeg_id = opts.eeg_id;
  w.t0_s = opts.t0_s;
  const std::size_t n_ch = w.electrodes.size();
  for (const auto& e : w.electrodes)
    if (e.empty()) throw std::invalid_argument("eeg csv: empty electrode name in header");

  std::vector<std::vector<float>> columns(n_ch);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (io::trim(line).empty()) continue;
    auto fields = io::split_csv_line(line);
    if (fields.size() != n_ch)
      throw std::invalid_argument("eeg csv: sample row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " + std::to_string(n_ch));
    for (std::size_t c = 0; c < n_ch; ++c) {
      const auto& f = fields[c];
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size()) {
        // from_chars rejects "nan"/"inf" spellings on some inputs; fall back.
        try {
          std::size_t used = 0;
          v = std::stof(f, &used);
          if (used != f.size()) throw std::invalid_argument(f);
        } catch (const std::exception&) {
          throw std::invalid_argument("eeg csv: unparsable value '" + f + "' at channel " + std::to_string(c) +
                                      ", sample " + std::to_string(row));
        }
      }
      columns[c].push_back(v);
    }
    ++row;
  }
  if (row == 0) throw std::invalid_argument("eeg csv: zero samples");
  std::vector<float> data;
  data.reserve(n_ch * row);
  for (auto& col : columns) data.insert(data.end(), col.begin(), col.end());
  w.samples = MatrixF(n_ch, row, std::move(data));
  w.validate();
  return w;
}

EegWindow read_eeg_raw(std::span<const std::uint8_t> payload, const json& sidecar) {
  EegWindow w;
  try {
    w.rate_hz = sidecar.at("rate_hz").get<double>();
    w.electrodes = sidecar.at("electrodes").get<std::vector<std::string>>();
    w.eeg_id = sidecar.value("eeg_id", std::string{});
    w.t0_s = sidecar.value("t0_s", 0.0);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("eeg sidecar: malformed header: ") + e.what());
  }
  const std::size_t n_ch = w.electrodes.size();
  if (n_ch == 0) throw std::invalid_argument("eeg sidecar: no electrodes declared");
  if (payload.empty()) throw std::invalid_argument("eeg raw: zero samples");
  if (payload.size() % (4 * n_ch) != 0)
    throw std::invalid_argument("eeg raw: payload of " + std::to_string(payload.size()) + " bytes does not hold " +
                                std::to_string(n_ch) + " float32 channels");
  const std::size_t n = payload.size() / (4 * n_ch);
  if (sidecar.contains("n_samples") && sidecar.at("n_samples").get<std::size_t>() != n)
    throw std::invalid_argument("eeg raw: sidecar declares " + std::to_string(sidecar.at("n_samples").get<std::size_t>()) +
                                " samples, payload holds " + std::to_string(n));
  w.samples = MatrixF(n_ch, n, io::decode_f32_le(payload));
  w.validate();
  return w;
}

EegWindow load_eeg_window(const std::filesystem::path& path) { return load_eeg_window(path, detect_format(path)); }

EegWindow load_eeg_window(const std::filesystem::path& path, EegFormat format) {
  try {
    if (format == EegFormat::csv) {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open");
      CsvOptions opts;
      opts.eeg_id = path.stem().string();
      return read_eeg_csv(in, opts);
    }
    auto sidecar_path = path;
    sidecar_path.replace_extension(".json");
    const auto sidecar = json::parse(io::read_text(sidecar_path));
    const auto bytes = io::read_bytes(path);
    auto w = read_eeg_raw(bytes, sidecar);
    if (w.eeg_id.empty()) w.eeg_id = path.stem().string();
    return w;
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

json eeg_sidecar(const EegWindow& w) {
  return json{{"rate_hz", w.rate_hz},
              {"electrodes", w.electrodes},
              {"eeg_id", w.eeg_id},
              {"t0_s", w.t0_s},
              {"n_samples", w.n_samples()}};
}

void save_eeg_window(const EegWindow& w, const std::filesystem::path& stem) {
  auto payload = stem;
  payload += ".f32";
  auto sidecar = stem;
  sidecar += ".json";
  io::write_atomic(payload, io::encode_f32_le(w.samples.values()));
  io::write_atomic(sidecar, eeg_sidecar(w).dump(2) + "\n");
}

// --- montage ---------------------------------------------------------------

MontageSpec MontageSpec::double_banana() {
  MontageSpec m;
  m.chains[0] = {"LL", {{{"Fp1", "F7"}, {"F7", "T3"}, {"T3", "T5"}, {"T5", "O1"}}}};
  m.chains[1] = {"LP", {{{"Fp1", "F3"}, {"F3", "C3"}, {"C3", "P3"}, {"P3", "O1"}}}};
  m.chains[2] = {"RP", {{{"Fp2", "F4"}, {"F4", "C4"}, {"C4", "P4"}, {"P4", "O2"}}}};
  m.chains[3] = {"RL", {{{"Fp2", "F8"}, {"F8", "T4"}, {"T4", "T6"}, {"T6", "O2"}}}};
  return m;
}

MontageSpec MontageSpec::from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "double-banana") return double_banana();
    throw std::invalid_argument("montage: unknown preset '" + j.get<std::string>() + "'");
  }
  MontageSpec m;
  const auto& chains = j.at("chains");
  if (!chains.is_array() || chains.size() != kNumChains)
    throw std::invalid_argument("montage: expected exactly 4 chains");
  for (std::size_t c = 0; c < kNumChains; ++c) {
    m.chains[c].name = chains[c].at("name").get<std::string>();
    const auto& pairs = chains[c].at("pairs");
    if (!pairs.is_array() || pairs.size() != kPairsPerChain)
      throw std::invalid_argument("montage: chain " + m.chains[c].name + " must have 4 pairs");
    for (std::size_t p = 0; p < kPairsPerChain; ++p) {
      const auto& pr = pairs[p];
      if (!pr.is_array() || pr.size() != 2)
        throw std::invalid_argument("montage: pair entries must be [anode, cathode]");
      m.chains[c].pairs[p] = {pr[0].get<std::string>(), pr[1].get<std::string>()};
    }
  }
  m.validate();
  return m;
}

json MontageSpec::to_json() const {
  json chains = json::array();
  for (const auto& c : this->chains) {
    json pairs = json::array();
    for (const auto& p : c.pairs) pairs.push_back({p.anode, p.cathode});
    chains.push_back({{"name", c.name}, {"pairs", pairs}});
  }
  return json{{"chains", chains}};
}

std::string mirror_electrode(std::string_view name) {
  static const std::unordered_map<std::string, std::string> kPairs = [] {
    std::unordered_map<std::string, std::string> m;
    const std::pair<const char*, const char*> lr[] = {{"Fp1", "Fp2"}, {"F7", "F8"}, {"T3", "T4"}, {"T5", "T6"},
                                                      {"O1", "O2"},   {"F3", "F4"}, {"C3", "C4"}, {"P3", "P4"},
                                                      {"A1", "A2"},   {"T7", "T8"}, {"P7", "P8"}};
    for (auto [l, r] : lr) {
      m.emplace(l, r);
      m.emplace(r, l);
    }
    return m;
  }();
  auto it = kPairs.find(std::string(name));
  return it == kPairs.end() ? std::string(name) : it->second;
}

void MontageSpec::validate() const {
  for (std::size_t c = 0; c < kNumChains; ++c) {
    const auto& chain = chains[c];
    if (chain.name != kChainNames[c])
      throw std::invalid_argument("montage: chain " + std::to_string(c) + " must be named " +
                                  std::string(kChainNames[c]) + ", got '" + chain.name + "'");
    for (std::size_t p = 0; p + 1 < kPairsPerChain; ++p)
      if (chain.pairs[p].cathode != chain.pairs[p + 1].anode)
        throw std::invalid_argument("montage: chain " + chain.name + " breaks at pair " + std::to_string(p + 1) +
                                    " (" + chain.pairs[p].cathode + " vs " + chain.pairs[p + 1].anode + ")");
  }
  // LL <-> RL and LP <-> RP under the left/right homologue map.
  for (auto [l, r] : {std::pair<std::size_t, std::size_t>{0, 3}, {1, 2}})
    for (std::size_t p = 0; p < kPairsPerChain; ++p) {
      const auto& a = chains[l].pairs[p];
      const auto& b = chains[r].pairs[p];
      if (mirror_electrode(a.anode) != b.anode || mirror_electrode(a.cathode) != b.cathode)
        throw std::invalid_argument("montage: chains " + chains[l].name + " and " + chains[r].name +
                                    " are not mirror images at pair " + std::to_string(p));
    }
}

MontageSignals apply_montage(const EegWindow& w, const MontageSpec& m) {
  MontageSignals out;
  out.rate_hz = w.rate_hz;
  out.eeg_id = w.eeg_id;
  out.signals = MatrixF(kNumDifferentials, w.n_samples());
  for (std::size_t c = 0; c < kNumChains; ++c)
    for (std::size_t p = 0; p < kPairsPerChain; ++p) {
      const auto& pair = m.chains[c].pairs[p];
      auto ia = w.channel_index(pair.anode);
      if (!ia) throw std::invalid_argument("montage: electrode '" + pair.anode + "' missing from window " + w.eeg_id);
      auto ic = w.channel_index(pair.cathode);
      if (!ic) throw std::invalid_argument("montage: electrode '" + pair.cathode + "' missing from window " + w.eeg_id);
      auto a = w.samples.row(*ia);
      auto k = w.samples.row(*ic);
      auto dst = out.differential(c, p);
      for (std::size_t t = 0; t < dst.size(); ++t) dst[t] = a[t] - k[t];
    }
  return out;
}

std::vector<float> clip_signal(std::span<const float> x, float bound) {
  if (!(bound > 0)) throw std::invalid_argument("clip_signal: bound must be positive");
  std::vector<float> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [bound](float v) { return std::clamp(v, -bound, bound); });
  return out;
}

SampleRange center_range(std::size_t n_samples, double rate_hz, double span_s, double shift_s) {
  const double duration = static_cast<double>(n_samples) / rate_hz;
  if (std::abs(shift_s) > 5.0 + 1e-9) throw std::invalid_argument("crop_center: |shift| must be <= 5 s");
  if (!(span_s > 0)) throw std::invalid_argument("crop_center: span must be positive");
  const auto length = static_cast<std::size_t>(std::llround(span_s * rate_hz));
  const double start_s = duration / 2.0 + shift_s - span_s / 2.0;
  const auto start = std::llround(start_s * rate_hz);
  if (start < 0 || static_cast<std::size_t>(start) + length > n_samples)
    throw std::invalid_argument("crop_center: span " + std::to_string(span_s) + " s shifted by " +
                                std::to_string(shift_s) + " s exceeds the " + std::to_string(duration) + " s window");
  return {static_cast<std::size_t>(start), length};
}

namespace {
MatrixF slice_cols(const MatrixF& m, SampleRange r) {
  MatrixF out(m.rows(), r.length);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i).subspan(r.start, r.length);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}
}  // namespace

EegWindow crop_center(const EegWindow& w, double span_s, double shift_s) {
  const auto r = center_range(w.n_samples(), w.rate_hz, span_s, shift_s);
  EegWindow out = w;
  out.samples = slice_cols(w.samples, r);
  out.t0_s = w.t0_s + static_cast<double>(r.start) / w.rate_hz;
  return out;
}

MontageSignals crop_center(const MontageSignals& m, double span_s, double shift_s) {
  const auto r = center_range(m.n_samples(), m.rate_hz, span_s, shift_s);
  MontageSignals out = m;
  out.signals = slice_cols(m.signals, r);
  return out;
}

EegWindow condition_window(const EegWindow& w, const ConditioningParams& params) {
  EegWindow out = w;
  for (std::size_t c = 0; c < w.n_channels(); ++c) {
    auto clipped = clip_signal(w.samples.row(c), params.clip_uv);
    auto filtered = bandpass_filter(std::span<const float>(clipped), w.rate_hz, params.low_hz, params.high_hz,
                                    params.order);
    std::copy(filtered.begin(), filtered.end(), out.samples.row(c).begin());
  }
  return out;
}

}  // namespace hbac::signals
