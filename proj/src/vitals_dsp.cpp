#include "biomusic/vitals_dsp.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "biomusic/errors.h"

namespace biomusic {

namespace {

constexpr double kPi = std::numbers::pi;

// Heart candidates weaker than this fraction of the strongest peak are ignored
// before harmonic rejection (sidelobes, noise maxima).
constexpr double kCandidateRelativePower = 0.5;
constexpr std::size_t kHeartCandidates = 5;

// Pseudo-spectrum scan resolution.
constexpr double kSubspaceGridHz = 0.0005;
constexpr std::size_t kMaxCorrelationSize = 100;

struct Biquad {
  double b0, b1, b2, a1, a2;  // normalised by a0

  void run(std::vector<double>& x) const {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = b0 * in + z1;
      z1 = b1 * in - a1 * out + z2;
      z2 = b2 * in - a2 * out;
      v = out;
    }
  }
};

enum class Pass { kLow, kHigh };

// 4th-order Butterworth as two RBJ biquads.
std::array<Biquad, 2> butterworth4(Pass pass, double cutoff_hz, double fs) {
  constexpr std::array<double, 2> kQ = {0.54119610014619698, 1.3065629648763766};
  const double w0 = 2.0 * kPi * cutoff_hz / fs;
  const double c = std::cos(w0);
  const double s = std::sin(w0);
  std::array<Biquad, 2> out{};
  for (std::size_t i = 0; i < 2; ++i) {
    const double alpha = s / (2.0 * kQ[i]);
    const double a0 = 1.0 + alpha;
    double b0, b1;
    if (pass == Pass::kLow) {
      b0 = (1.0 - c) / 2.0;
      b1 = 1.0 - c;
    } else {
      b0 = (1.0 + c) / 2.0;
      b1 = -(1.0 + c);
    }
    out[i] = Biquad{b0 / a0, b1 / a0, b0 / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
  }
  return out;
}

// Forward-backward filtering with odd reflection padding at both ends.
std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x,
                             std::size_t padlen) {
  const std::size_t n = x.size();
  padlen = std::min(padlen, n > 0 ? n - 1 : 0);
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  for (const auto& s : sections) s.run(ext);
  std::reverse(ext.begin(), ext.end());
  for (const auto& s : sections) s.run(ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

std::vector<double> demeaned(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  for (double& v : out) v -= mean;
  return out;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double hann(std::size_t i, std::size_t n) {
  if (n < 2) return 1.0;
  return 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
}

// Vertex offset of a parabola through three samples, in (-0.5, 0.5).
double parabolic_offset(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

void check_band(double low_hz, double high_hz, double fs) {
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
    throw std::invalid_argument("band must satisfy 0 < low < high < fs/2");
  }
}

struct Peak {
  double freq_hz;
  double power;
};

}  // namespace

RateEstimate RateEstimate::from_frequency(double freq_hz, double confidence) {
  RateEstimate r;
  r.peak_freq_hz = freq_hz;
  r.rate_per_min = 60.0 * freq_hz;
  r.confidence = std::clamp(confidence, 0.0, 1.0);
  return r;
}

PhaseSignal bandpass(const PhaseSignal& signal, double low_hz, double high_hz) {
  const double fs = signal.sample_rate_hz;
  check_band(low_hz, high_hz, fs);
  std::vector<Biquad> sections;
  for (const auto& b : butterworth4(Pass::kHigh, low_hz, fs)) sections.push_back(b);
  for (const auto& b : butterworth4(Pass::kLow, high_hz, fs)) sections.push_back(b);
  const auto padlen = static_cast<std::size_t>(std::ceil(3.0 * fs / low_hz));

  PhaseSignal out = signal;
  out.samples = filtfilt(sections, signal.samples, padlen);
  return out;
}

std::vector<RateEstimate> periodogram_candidates(const PhaseSignal& signal, double search_low_hz,
                                                 double search_high_hz,
                                                 std::size_t max_candidates) {
  const double fs = signal.sample_rate_hz;
  if (signal.duration_s() + 1e-9 < kMinWindowS) {
    throw std::invalid_argument("periodogram needs at least 10 s of signal");
  }
  if (!(search_low_hz >= 0.0 && search_low_hz < search_high_hz && search_high_hz <= fs / 2.0)) {
    throw NoPeakError("empty search band");
  }

  const std::size_t n = signal.samples.size();
  const auto x = demeaned(signal.samples);
  const std::size_t nfft = next_pow2(std::max<std::size_t>(8 * n, 4096));
  std::vector<double> buf(nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i] * hann(i, n);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  const std::size_t half = nfft / 2;
  std::vector<double> power(half + 1);
  for (std::size_t k = 0; k <= half; ++k) power[k] = std::norm(spec[k]);

  const double bin_hz = fs / static_cast<double>(nfft);
  const auto k_lo = static_cast<std::size_t>(std::ceil(search_low_hz / bin_hz));
  const auto k_hi = std::min(half, static_cast<std::size_t>(std::floor(search_high_hz / bin_hz)));
  if (k_lo > k_hi) throw NoPeakError("search band contains no frequency bins");

  double band_power = 0.0;
  for (std::size_t k = k_lo; k <= k_hi; ++k) band_power += power[k];
  if (!(band_power > 0.0)) throw NoPeakError("no spectral energy in search band");

  // Hann main-lobe half width is two bins of the unpadded transform.
  const auto lobe = static_cast<std::size_t>(std::ceil(2.0 * static_cast<double>(nfft) /
                                                       static_cast<double>(n)));
  std::vector<std::pair<std::size_t, double>> maxima;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const double left = k > 0 ? power[k - 1] : -1.0;
    const double right = k < half ? power[k + 1] : -1.0;
    if (power[k] > 0.0 && power[k] >= left && power[k] > right) maxima.emplace_back(k, power[k]);
  }
  if (maxima.empty()) throw NoPeakError("no local maximum in search band");
  std::stable_sort(maxima.begin(), maxima.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (maxima.size() > max_candidates) maxima.resize(max_candidates);

  std::vector<RateEstimate> out;
  for (const auto& [k, p] : maxima) {
    double offset = 0.0;
    if (k > 0 && k < half) {
      offset = parabolic_offset(safe_log(power[k - 1]), safe_log(p), safe_log(power[k + 1]));
    }
    const double freq = (static_cast<double>(k) + offset) * bin_hz;
    double lobe_power = 0.0;
    const std::size_t lo = k > k_lo + lobe ? k - lobe : k_lo;
    const std::size_t hi = std::min(k_hi, k + lobe);
    for (std::size_t j = lo; j <= hi; ++j) lobe_power += power[j];
    out.push_back(RateEstimate::from_frequency(freq, lobe_power / band_power));
  }
  return out;
}

RateEstimate estimate_rate_periodogram(const PhaseSignal& signal, double search_low_hz,
                                       double search_high_hz) {
  return periodogram_candidates(signal, search_low_hz, search_high_hz, 1).front();
}

std::vector<RateEstimate> subspace_candidates(const PhaseSignal& signal, std::size_t model_order,
                                              double search_low_hz, double search_high_hz,
                                              std::size_t max_candidates) {
  if (model_order < 2) throw std::invalid_argument("model_order must be at least 2");
  const double fs = signal.sample_rate_hz;
  if (!(search_low_hz >= 0.0 && search_low_hz < search_high_hz && search_high_hz < fs / 2.0)) {
    throw NoPeakError("empty search band");
  }

  // Band-limit and decimate so the search band spans a useful part of the
  // normalised frequency axis.
  auto x = demeaned(signal.samples);
  const auto decim = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fs / (4.0 * search_high_hz))));
  double rate = fs;
  if (decim > 1) {
    const auto lp = butterworth4(Pass::kLow, 1.25 * search_high_hz, fs);
    x = filtfilt(lp, x, static_cast<std::size_t>(std::ceil(3.0 * fs / search_high_hz)));
    std::vector<double> d;
    d.reserve(x.size() / decim + 1);
    for (std::size_t i = 0; i < x.size(); i += decim) d.push_back(x[i]);
    x = std::move(d);
    rate = fs / static_cast<double>(decim);
  }

  const std::size_t n = x.size();
  if (n < 4 * model_order) {
    throw InsufficientDataError("subspace estimator needs at least 4x model_order samples");
  }
  const std::size_t m = std::clamp<std::size_t>(n / 3, model_order + 2, kMaxCorrelationSize);
  if (m <= model_order || n < m + 1) {
    throw InsufficientDataError("window too short for the correlation matrix");
  }

  // Forward-backward averaged sample correlation matrix.
  const std::size_t snapshots = n - m + 1;
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t s = 0; s < snapshots; ++s) {
    const auto v = xv.segment(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(m));
    r.noalias() += v * v.transpose();
  }
  r /= static_cast<double>(snapshots);
  const Eigen::MatrixXd flipped = r.reverse();
  r = 0.5 * (r + flipped);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const double total = evals.sum();
  if (!(evals.maxCoeff() > 1e-18) || !(total > 0.0)) {
    throw DegenerateSignalError("correlation matrix has no signal energy");
  }
  const auto noise_dim = static_cast<Eigen::Index>(m - model_order);
  const Eigen::MatrixXd en = eig.eigenvectors().leftCols(noise_dim);
  const Eigen::MatrixXd proj = en * en.transpose();

  // a(w)^H P a(w) = sum_d s_d cos(w d), with s_d the summed d-th diagonal.
  std::vector<double> diag_sum(m, 0.0);
  for (std::size_t d = 0; d < m; ++d) {
    double acc = 0.0;
    for (std::size_t i = 0; i + d < m; ++i) {
      acc += proj(static_cast<Eigen::Index>(i + d), static_cast<Eigen::Index>(i));
    }
    diag_sum[d] = d == 0 ? acc : 2.0 * acc;
  }
  auto pseudo = [&](double f) {
    const double w = 2.0 * kPi * f / rate;
    double denom = 0.0;
    for (std::size_t d = 0; d < m; ++d) denom += diag_sum[d] * std::cos(w * static_cast<double>(d));
    return 1.0 / std::max(denom, 1e-300);
  };

  const auto steps = static_cast<std::size_t>(std::floor((search_high_hz - search_low_hz) / kSubspaceGridHz));
  if (steps < 2) throw NoPeakError("search band too narrow");
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    grid[i] = pseudo(search_low_hz + kSubspaceGridHz * static_cast<double>(i));
  }

  std::vector<Peak> peaks;
  for (std::size_t i = 1; i < steps; ++i) {
    if (grid[i] >= grid[i - 1] && grid[i] > grid[i + 1]) {
      const double off = parabolic_offset(safe_log(grid[i - 1]), safe_log(grid[i]), safe_log(grid[i + 1]));
      peaks.push_back({search_low_hz + kSubspaceGridHz * (static_cast<double>(i) + off), 0.0});
    }
  }
  if (peaks.empty()) throw NoPeakError("no pseudo-spectrum peak in search band");

  // Rank peaks by the Hann-windowed DTFT power of the data at each frequency;
  // pseudo-spectrum heights say nothing about component strength.
  double signal_energy = 0.0;
  for (Eigen::Index i = static_cast<Eigen::Index>(m) - 1;
       i >= static_cast<Eigen::Index>(m) - static_cast<Eigen::Index>(model_order); --i) {
    signal_energy += evals(i);
  }
  const double signal_fraction = std::clamp(signal_energy / total, 0.0, 1.0);
  double power_sum = 0.0;
  for (auto& p : peaks) {
    std::complex<double> acc{};
    const double w = 2.0 * kPi * p.freq_hz / rate;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * hann(i, n) * std::polar(1.0, -w * static_cast<double>(i));
    }
    p.power = std::norm(acc);
    power_sum += p.power;
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.power > b.power; });
  if (peaks.size() > max_candidates) peaks.resize(max_candidates);

  std::vector<RateEstimate> out;
  for (const auto& p : peaks) {
    const double share = power_sum > 0.0 ? p.power / power_sum : 0.0;
    out.push_back(RateEstimate::from_frequency(p.freq_hz, share * signal_fraction));
  }
  return out;
}

RateEstimate estimate_rate_subspace(const PhaseSignal& signal, std::size_t model_order,
                                    double search_low_hz, double search_high_hz) {
  return subspace_candidates(signal, model_order, search_low_hz, search_high_hz, 1).front();
}

RateEstimate disambiguate_heart(std::span<const RateEstimate> candidates,
                                const RateEstimate& resp, double tolerance_hz) {
  if (candidates.empty()) throw NoPeakError("no heart-rate candidates");
  auto is_harmonic = [&](const RateEstimate& c) {
    for (int h = 2; h <= kMaxRespHarmonic; ++h) {
      if (std::abs(c.peak_freq_hz - h * resp.peak_freq_hz) <= tolerance_hz) return true;
    }
    return false;
  };
  for (const auto& c : candidates) {
    if (!is_harmonic(c)) return c;
  }
  RateEstimate flagged = candidates.front();
  flagged.confidence *= 0.5;
  flagged.harmonic_suspect = true;
  return flagged;
}

namespace {

std::size_t median3_index(std::span<const double> v, std::size_t i) {
  const std::size_t n = v.size();
  if (n < 3) return i;
  const std::size_t centre = std::clamp<std::size_t>(i, 1, n - 2);
  std::array<std::size_t, 3> idx = {centre - 1, centre, centre + 1};
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  // Keep the sample's own value when it is itself the median.
  if (v[i] == v[idx[1]]) return i;
  return idx[1];
}

}  // namespace

std::vector<double> median3(std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[median3_index(values, i)];
  return out;
}

VitalsEstimate estimate_window(const PhaseSignal& window, const TrackOptions& options) {
  const auto resp_sig = bandpass(window, kRespBandLowHz, kRespBandHighHz);
  const auto heart_sig = bandpass(window, kHeartBandLowHz, kHeartBandHighHz);

  RateEstimate resp;
  std::vector<RateEstimate> heart;
  if (options.estimator == Estimator::kSubspace) {
    resp = estimate_rate_subspace(resp_sig, options.model_order, kRespBandLowHz, kRespBandHighHz);
    heart = subspace_candidates(heart_sig, options.model_order, kHeartBandLowHz, kHeartBandHighHz,
                                kHeartCandidates);
  } else {
    resp = estimate_rate_periodogram(resp_sig, kRespBandLowHz, kRespBandHighHz);
    heart = periodogram_candidates(heart_sig, kHeartBandLowHz, kHeartBandHighHz, kHeartCandidates);
  }
  const double strongest = heart.front().confidence;
  std::erase_if(heart, [&](const RateEstimate& c) {
    return c.confidence < kCandidateRelativePower * strongest;
  });

  VitalsEstimate est;
  est.resp = resp;
  est.heart = disambiguate_heart(heart, resp, options.harmonic_tolerance_hz);
  est.resp.out_of_band = est.resp.rate_per_min < 6.0 || est.resp.rate_per_min > 30.0;
  est.heart.out_of_band = est.heart.rate_per_min < 48.0 || est.heart.rate_per_min > 120.0;
  return est;
}

std::vector<VitalsEstimate> track_vitals(const PhaseSignal& signal, double window_s, double hop_s,
                                         const TrackOptions& options) {
  if (!(window_s >= kMinWindowS)) throw std::invalid_argument("window_s must be at least 10 s");
  if (!(hop_s > 0.0 && hop_s <= window_s)) throw std::invalid_argument("hop_s must be in (0, window_s]");
  const double duration = signal.duration_s();
  if (duration + 1e-9 < window_s) throw InsufficientDataError("signal shorter than one window");

  const double fs = signal.sample_rate_hz;
  const auto win_n = static_cast<std::size_t>(std::llround(window_s * fs));
  const auto count = static_cast<std::size_t>(std::floor((duration - window_s) / hop_s + 1e-9)) + 1;

  std::vector<VitalsEstimate> raw;
  raw.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const auto start = static_cast<std::size_t>(std::llround(static_cast<double>(w) * hop_s * fs));
    const std::size_t stop = std::min(signal.samples.size(), start + win_n);
    PhaseSignal win;
    win.sample_rate_hz = fs;
    win.wavelength_mm = signal.wavelength_mm;
    win.samples.assign(signal.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       signal.samples.begin() + static_cast<std::ptrdiff_t>(stop));
    auto est = estimate_window(win, options);
    est.window_start_s = static_cast<double>(start) / fs;
    est.window_end_s = static_cast<double>(stop) / fs;
    raw.push_back(est);
  }

  std::vector<double> hr(count), rr(count);
  for (std::size_t i = 0; i < count; ++i) {
    hr[i] = raw[i].heart.peak_freq_hz;
    rr[i] = raw[i].resp.peak_freq_hz;
  }
  std::vector<VitalsEstimate> out = raw;
  for (std::size_t i = 0; i < count; ++i) {
    out[i].heart = raw[median3_index(hr, i)].heart;
    out[i].resp = raw[median3_index(rr, i)].resp;
  }
  return out;
}

}  // namespace biomusic
