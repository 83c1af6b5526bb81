#include "hbac/cwt.hpp"

#include "hbac/io.hpp"

#include <fftw3.h>
#include <nlohmann/json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace hbac::cwt {

using nlohmann::json;
using cd = std::complex<double>;

namespace {

// FFTW planning is not thread-safe; execution with new-array functions is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_smooth(std::size_t n) {
  for (std::size_t p : {2u, 3u, 5u, 7u})
    while (n % p == 0) n /= p;
  return n == 1;
}

std::size_t next_smooth(std::size_t n) {
  while (!is_smooth(n)) ++n;
  return n;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  cd* data() { return reinterpret_cast<cd*>(ptr); }
  fftw_complex* ptr;
};

}  // namespace

std::size_t ScaleBank::half_support(std::size_t k) const {
  return static_cast<std::size_t>(std::ceil(kSupportHalfWidth * scales.at(k)));
}

std::size_t ScaleBank::max_support() const {
  std::size_t best = 0;
  for (std::size_t k = 0; k < scales.size(); ++k) best = std::max(best, 2 * half_support(k) + 1);
  return best;
}

ScaleBank scales_for_band(double f_min, double f_max, std::size_t n_scales, double rate_hz, double omega0) {
  if (!(f_min > 0 && f_min < f_max && f_max < rate_hz / 2))
    throw std::invalid_argument("scales_for_band: band [" + std::to_string(f_min) + ", " + std::to_string(f_max) +
                                "] Hz must lie strictly inside (0, " + std::to_string(rate_hz / 2) + ") Hz");
  if (n_scales < 2) throw std::invalid_argument("scales_for_band: need at least 2 scales");
  ScaleBank bank;
  bank.rate_hz = rate_hz;
  bank.omega0 = omega0;
  const double ratio = f_max / f_min;
  for (std::size_t k = 0; k < n_scales; ++k) {
    double f = (k + 1 == n_scales) ? f_max
                                   : f_min * std::pow(ratio, static_cast<double>(k) / static_cast<double>(n_scales - 1));
    bank.center_freqs_hz.push_back(f);
    bank.scales.push_back(omega0 * rate_hz / (2.0 * std::numbers::pi * f));
  }
  return bank;
}

std::vector<cd> morlet_kernel(double scale, double omega0, std::size_t half) {
  const double norm = std::pow(std::numbers::pi, -0.25) / std::sqrt(scale);
  std::vector<cd> g(2 * half + 1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = (static_cast<double>(i) - static_cast<double>(half)) / scale;
    g[i] = norm * std::exp(-0.5 * u * u) * std::polar(1.0, omega0 * u);
  }
  return g;
}

struct CwtEngine::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  ~Plans() {
    std::lock_guard lock(fftw_planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

CwtEngine::CwtEngine(ScaleBank bank, std::size_t n_samples) : bank_(std::move(bank)), n_(n_samples) {
  if (bank_.size() == 0) throw std::invalid_argument("cwt: empty scale bank");
  const std::size_t support = bank_.max_support();
  if (n_ < support)
    throw std::invalid_argument("cwt: signal of " + std::to_string(n_) +
                                " samples is shorter than the coarsest wavelet support (" + std::to_string(support) +
                                " samples)");
  std::size_t half_max = 0;
  for (std::size_t k = 0; k < bank_.size(); ++k) half_max = std::max(half_max, bank_.half_support(k));
  m_ = next_smooth(n_ + half_max);

  plans_ = std::make_unique<Plans>();
  {
    FftwBuffer a(m_), b(m_);
    std::lock_guard lock(fftw_planner_mutex());
    // ESTIMATE keeps the chosen algorithm, and hence the bits, reproducible.
    plans_->forward = fftw_plan_dft_1d(static_cast<int>(m_), a.ptr, b.ptr, FFTW_FORWARD, FFTW_ESTIMATE);
    plans_->backward = fftw_plan_dft_1d(static_cast<int>(m_), a.ptr, b.ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  if (!plans_->forward || !plans_->backward) throw std::runtime_error("cwt: FFTW planning failed");

  FftwBuffer in(m_), out(m_);
  kernel_spectra_.reserve(bank_.size());
  for (std::size_t k = 0; k < bank_.size(); ++k) {
    const std::size_t half = bank_.half_support(k);
    const auto g = morlet_kernel(bank_.scales[k], bank_.omega0, half);
    std::fill(in.data(), in.data() + m_, cd{});
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto lag = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
      in.data()[lag >= 0 ? lag : static_cast<std::ptrdiff_t>(m_) + lag] = g[i];
    }
    fftw_execute_dft(plans_->forward, in.ptr, out.ptr);
    kernel_spectra_.emplace_back(out.data(), out.data() + m_);
  }
}

CwtEngine::~CwtEngine() = default;

MatrixF CwtEngine::power(std::span<const float> x) const {
  if (x.size() != n_)
    throw std::invalid_argument("cwt: engine built for " + std::to_string(n_) + " samples, got " +
                                std::to_string(x.size()));
  FftwBuffer buf(m_), spectrum(m_), out(m_);
  std::fill(buf.data(), buf.data() + m_, cd{});
  for (std::size_t i = 0; i < n_; ++i) buf.data()[i] = x[i];
  fftw_execute_dft(plans_->forward, buf.ptr, spectrum.ptr);

  MatrixF p(bank_.size(), n_);
  const double inv = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < bank_.size(); ++k) {
    const auto& g = kernel_spectra_[k];
    for (std::size_t i = 0; i < m_; ++i) buf.data()[i] = spectrum.data()[i] * g[i];
    fftw_execute_dft(plans_->backward, buf.ptr, out.ptr);
    auto row = p.row(k);
    for (std::size_t t = 0; t < n_; ++t) row[t] = static_cast<float>(std::norm(out.data()[t] * inv));
  }
  return p;
}

MatrixF cwt_power(std::span<const float> x, const ScaleBank& bank) {
  CwtEngine engine(bank, x.size());
  return engine.power(x);
}

std::vector<float> SpectrogramSet::flatten() const {
  std::vector<float> out;
  out.reserve(chains.size() * chains[0].power.size());
  for (const auto& c : chains) out.insert(out.end(), c.power.values().begin(), c.power.values().end());
  return out;
}

MatrixF chain_power(std::span<const std::span<const float>> diffs, const CwtEngine& engine) {
  if (diffs.size() != signals::kPairsPerChain)
    throw std::invalid_argument("chain_spectrogram: expected 4 differentials, got " + std::to_string(diffs.size()));
  for (const auto& d : diffs)
    if (d.size() != diffs[0].size())
      throw std::invalid_argument("chain_spectrogram: differential lengths differ (" + std::to_string(d.size()) +
                                  " vs " + std::to_string(diffs[0].size()) + ")");
  std::array<MatrixF, 4> parts;
  for (std::size_t i = 0; i < 4; ++i) parts[i] = engine.power(diffs[i]);
  MatrixF out(parts[0].rows(), parts[0].cols());
  auto dst = out.values();
  for (std::size_t j = 0; j < dst.size(); ++j) {
    std::array<float, 4> v = {parts[0].values()[j], parts[1].values()[j], parts[2].values()[j], parts[3].values()[j]};
    std::sort(v.begin(), v.end());
    const double s = (static_cast<double>(v[0]) + v[1]) + (static_cast<double>(v[2]) + v[3]);
    dst[j] = static_cast<float>(0.25 * s);
  }
  return out;
}

Spectrogram chain_spectrogram(std::span<const std::span<const float>> diffs, const ScaleBank& bank) {
  if (diffs.empty()) throw std::invalid_argument("chain_spectrogram: no differentials");
  CwtEngine engine(bank, diffs[0].size());
  Spectrogram s;
  s.power = chain_power(diffs, engine);
  s.freq_axis_hz = bank.center_freqs_hz;
  for (std::size_t t = 0; t < s.power.cols(); ++t) s.time_axis_s.push_back(static_cast<double>(t) / bank.rate_hz);
  return s;
}

MatrixF downsample_time(const MatrixF& m, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("downsample_time: stride must be >= 1");
  const std::size_t bins = m.cols() / stride;
  MatrixF out(m.rows(), bins);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < bins; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < stride; ++i) s += src[j * stride + i];
      dst[j] = static_cast<float>(s / static_cast<double>(stride));
    }
  }
  return out;
}

MatrixF normalize_log(const MatrixF& m, double eps) {
  std::vector<double> logs(m.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    logs[i] = std::log(static_cast<double>(m.values()[i]) + eps);
    sum += logs[i];
  }
  MatrixF out(m.rows(), m.cols());
  if (std::adjacent_find(logs.begin(), logs.end(), std::not_equal_to<>()) == logs.end()) return out;
  const double n = static_cast<double>(std::max<std::size_t>(m.size(), 1));
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : logs) ss += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(ss / n), 1e-8);
  for (std::size_t i = 0; i < m.size(); ++i) out.values()[i] = static_cast<float>((logs[i] - mean) / sd);
  return out;
}

json SpectrogramParams::to_json() const {
  return json{{"fmin", f_min},         {"fmax", f_max},           {"scales", n_scales},
              {"omega0", omega0},      {"stride", hr_stride},     {"lr_stride", lr_stride},
              {"hr_span_s", hr_span_s}, {"lr_span_s", lr_span_s}, {"log_eps", log_eps}};
}

SpectrogramParams SpectrogramParams::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("cwt: config must be an object");
  SpectrogramParams p;
  for (const auto& [k, v] : j.items()) {
    if (k == "fmin") p.f_min = v.get<double>();
    else if (k == "fmax") p.f_max = v.get<double>();
    else if (k == "scales") p.n_scales = v.get<std::size_t>();
    else if (k == "omega0") p.omega0 = v.get<double>();
    else if (k == "stride") p.hr_stride = v.get<std::size_t>();
    else if (k == "lr_stride") p.lr_stride = v.get<std::size_t>();
    else if (k == "hr_span_s") p.hr_span_s = v.get<double>();
    else if (k == "lr_span_s") p.lr_span_s = v.get<double>();
    else if (k == "log_eps") p.log_eps = v.get<double>();
    else throw std::invalid_argument("cwt: unknown key '" + k + "'");
  }
  if (!(p.f_min > 0.0 && p.f_min < p.f_max)) throw std::invalid_argument("cwt: need 0 < fmin < fmax");
  if (p.n_scales < 2) throw std::invalid_argument("cwt: need at least 2 scales");
  if (p.hr_stride == 0 || p.lr_stride == 0) throw std::invalid_argument("cwt: strides must be >= 1");
  if (!(p.log_eps > 0.0)) throw std::invalid_argument("cwt: log_eps must be positive");
  return p;
}

SpectrogramSet build_spectrogram_set(const signals::MontageSignals& ms, const SpectrogramParams& params,
                                     std::size_t stride, Normalization norm, Resolution res) {
  const auto bank = scales_for_band(params.f_min, params.f_max, params.n_scales, ms.rate_hz, params.omega0);
  CwtEngine engine(bank, ms.n_samples());
  SpectrogramSet set;
  set.resolution = res;
  for (std::size_t c = 0; c < signals::kNumChains; ++c) {
    std::array<std::span<const float>, 4> diffs;
    for (std::size_t p = 0; p < 4; ++p) diffs[p] = ms.differential(c, p);
    auto pooled = downsample_time(chain_power(diffs, engine), stride);
    auto& s = set.chains[c];
    s.power = norm == Normalization::log_standardized ? normalize_log(pooled, params.log_eps) : std::move(pooled);
    s.normalization = norm;
    s.chain_id = std::string(signals::kChainNames[c]);
    s.freq_axis_hz = bank.center_freqs_hz;
    for (std::size_t j = 0; j < s.power.cols(); ++j)
      s.time_axis_s.push_back((static_cast<double>(j * stride) + stride / 2.0) / ms.rate_hz);
  }
  return set;
}

namespace {
void require_span(const signals::MontageSignals& ms, double span_s, const char* what) {
  const auto expected = static_cast<std::size_t>(std::llround(span_s * ms.rate_hz));
  if (ms.n_samples() != expected)
    throw std::invalid_argument(std::string(what) + " requires a " + std::to_string(span_s) + " s window (" +
                                std::to_string(expected) + " samples), got " + std::to_string(ms.n_samples()) +
                                " samples");
}
}  // namespace

SpectrogramSet build_spec_hr(const signals::MontageSignals& ms, const SpectrogramParams& params, Normalization norm) {
  require_span(ms, params.hr_span_s, "Spec-HR");
  return build_spectrogram_set(ms, params, params.hr_stride, norm, Resolution::spec_hr);
}

SpectrogramSet build_spec_lr(const signals::MontageSignals& ms, const SpectrogramParams& params, Normalization norm) {
  require_span(ms, params.lr_span_s, "Spec-LR");
  return build_spectrogram_set(ms, params, params.lr_stride, norm, Resolution::spec_lr);
}

SpectrogramSet build_spec_lr(const signals::EegWindow& w, const signals::MontageSpec& montage,
                             const SpectrogramParams& params, Normalization norm) {
  return build_spec_lr(signals::apply_montage(w, montage), params, norm);
}

void save_spectrogram_set(const SpectrogramSet& s, const std::filesystem::path& stem, const json& extra) {
  json meta = extra.is_object() ? extra : json::object();
  meta["resolution"] = s.resolution == Resolution::spec_hr ? "spec_hr" : "spec_lr";
  meta["normalization"] = s.chains[0].normalization == Normalization::raw_power ? "raw_power" : "log_standardized";
  meta["n_chains"] = s.chains.size();
  meta["n_scales"] = s.n_scales();
  meta["n_timebins"] = s.n_timebins();
  meta["freq_axis_hz"] = s.chains[0].freq_axis_hz;
  meta["time_axis_s"] = s.chains[0].time_axis_s;
  meta["chains"] = json::array();
  for (const auto& c : s.chains) meta["chains"].push_back(c.chain_id);
  auto payload = stem;
  payload += ".f32";
  auto sidecar = stem;
  sidecar += ".json";
  io::write_atomic(payload, io::encode_f32_le(s.flatten()));
  io::write_atomic(sidecar, meta.dump(2) + "\n");
}

SpectrogramSet load_spectrogram_set(const std::filesystem::path& stem) {
  auto payload = stem;
  payload += ".f32";
  auto sidecar = stem;
  sidecar += ".json";
  const auto meta = json::parse(io::read_text(sidecar));
  const auto values = io::decode_f32_le(io::read_bytes(payload));
  const auto rows = meta.at("n_scales").get<std::size_t>();
  const auto cols = meta.at("n_timebins").get<std::size_t>();
  if (values.size() != signals::kNumChains * rows * cols)
    throw std::runtime_error(payload.string() + ": payload size does not match " + sidecar.string());
  SpectrogramSet s;
  s.resolution = meta.at("resolution") == "spec_hr" ? Resolution::spec_hr : Resolution::spec_lr;
  const auto norm =
      meta.at("normalization") == "raw_power" ? Normalization::raw_power : Normalization::log_standardized;
  for (std::size_t c = 0; c < signals::kNumChains; ++c) {
    auto& ch = s.chains[c];
    auto first = values.begin() + static_cast<std::ptrdiff_t>(c * rows * cols);
    ch.power = MatrixF(rows, cols, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(rows * cols)));
    ch.freq_axis_hz = meta.at("freq_axis_hz").get<std::vector<double>>();
    ch.time_axis_s = meta.at("time_axis_s").get<std::vector<double>>();
    ch.chain_id = meta.at("chains").at(c).get<std::string>();
    ch.normalization = norm;
  }
  return s;
}

void write_png(const MatrixF& image, const std::filesystem::path& path) {
  if (image.empty()) throw std::invalid_argument("write_png: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(image.values().begin(), image.values().end());
  const double lo = *lo_it;
  const double span = std::max(static_cast<double>(*hi_it) - lo, 1e-12);
  const auto width = static_cast<png_uint_32>(image.cols());
  const auto height = static_cast<png_uint_32>(image.rows());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + tmp.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(width);
  for (png_uint_32 y = 0; y < height; ++y) {
    auto src = image.row(height - 1 - y);
    for (png_uint_32 x = 0; x < width; ++x)
      row[x] = static_cast<png_byte>(std::lround(255.0 * (src[x] - lo) / span));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  std::filesystem::rename(tmp, path);
}

}  // namespace hbac::cwt
