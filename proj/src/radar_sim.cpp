#include "biomusic/radar_sim.h"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "biomusic/errors.h"

namespace biomusic {

namespace {

constexpr double kMinSampleRateHz = 20.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_timebase(double duration_s, double sample_rate_hz) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be positive");
  if (!(sample_rate_hz >= kMinSampleRateHz)) {
    throw std::invalid_argument("sample_rate_hz must be at least 20 Hz");
  }
}

}  // namespace

bool VitalsGroundTruth::physiological() const noexcept {
  return resp_freq_hz >= 0.1 && resp_freq_hz <= 0.5 && heart_freq_hz >= 0.8 &&
         heart_freq_hz <= 2.0 && resp_amp_mm > 0.0 && heart_amp_mm > 0.0 &&
         heart_amp_mm < resp_amp_mm;
}

DisplacementTrace synth_displacement(const VitalsGroundTruth& truth, double duration_s,
                                     double sample_rate_hz) {
  const VitalsSegment seg{truth, duration_s};
  return synth_displacement(std::span<const VitalsSegment>(&seg, 1), sample_rate_hz);
}

DisplacementTrace synth_displacement(std::span<const VitalsSegment> segments,
                                     double sample_rate_hz) {
  if (segments.empty()) throw std::invalid_argument("no segments to synthesize");
  DisplacementTrace out;
  out.sample_rate_hz = sample_rate_hz;

  // Oscillator phases carried across segment boundaries.
  double resp_phase = segments.front().truth.resp_phase_rad;
  double heart_phase = segments.front().truth.heart_phase_rad;
  const double dt = 1.0 / sample_rate_hz;

  for (const auto& seg : segments) {
    check_timebase(seg.duration_s, sample_rate_hz);
    const auto n = static_cast<std::size_t>(std::llround(seg.duration_s * sample_rate_hz));
    const auto& g = seg.truth;
    const double resp_step = kTwoPi * g.resp_freq_hz * dt;
    const double heart_step = kTwoPi * g.heart_freq_hz * dt;
    const double harmonic_amp = g.resp_harmonic ? kRespHarmonicRatio * g.resp_amp_mm : 0.0;
    const std::size_t base = out.samples.size();
    out.samples.reserve(base + n);
    for (std::size_t i = 0; i < n; ++i) {
      // Phase from the segment origin keeps rounding error from accumulating.
      const double rp = resp_phase + resp_step * static_cast<double>(i);
      const double hp = heart_phase + heart_step * static_cast<double>(i);
      double x = g.resp_amp_mm * std::sin(rp) + g.heart_amp_mm * std::sin(hp);
      if (harmonic_amp != 0.0) x += harmonic_amp * std::sin(2.0 * rp);
      out.samples.push_back(x);
    }
    resp_phase = std::fmod(resp_phase + resp_step * static_cast<double>(n), kTwoPi);
    heart_phase = std::fmod(heart_phase + heart_step * static_cast<double>(n), kTwoPi);
  }
  return out;
}

PhaseSignal displacement_to_phase(const DisplacementTrace& trace, double wavelength_mm) {
  if (!(wavelength_mm > 0.0)) throw std::invalid_argument("wavelength_mm must be positive");
  PhaseSignal out;
  out.sample_rate_hz = trace.sample_rate_hz;
  out.wavelength_mm = wavelength_mm;
  out.samples.resize(trace.samples.size());
  const double k = 4.0 * std::numbers::pi / wavelength_mm;
  for (std::size_t i = 0; i < trace.samples.size(); ++i) out.samples[i] = k * trace.samples[i];
  return out;
}

PhaseSignal corrupt(const PhaseSignal& signal, double snr_db, double drift_rad_per_s,
                    std::uint64_t seed) {
  if (signal.samples.empty()) throw std::invalid_argument("cannot corrupt an empty signal");
  PhaseSignal out = signal;

  if (std::isfinite(snr_db)) {
    double power = 0.0;
    for (double v : signal.samples) power += v * v;
    power /= static_cast<double>(signal.samples.size());
    const double noise_sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    if (noise_sigma > 0.0) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> gauss(0.0, noise_sigma);
      for (double& v : out.samples) v += gauss(rng);
    }
  }
  if (drift_rad_per_s != 0.0) {
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      out.samples[i] += drift_rad_per_s * static_cast<double>(i) / signal.sample_rate_hz;
    }
  }
  return out;
}

void write_trace_csv(std::ostream& out, std::span<const double> samples, double sample_rate_hz) {
  out << "t_s,value\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << static_cast<double>(i) / sample_rate_hz << ',' << samples[i] << '\n';
  }
}

CsvTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trace CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_s,value") throw IoError("trace CSV header must be 't_s,value'");

  CsvTrace trace;
  std::vector<double> times;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError("trace CSV row " + std::to_string(row) + " has no comma");
    }
    try {
      times.push_back(std::stod(line.substr(0, comma)));
      trace.values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IoError("trace CSV row " + std::to_string(row) + " is not numeric");
    }
  }
  if (times.size() < 2) throw IoError("trace CSV needs at least two samples");
  const double span = times.back() - times.front();
  if (!(span > 0.0)) throw IoError("trace CSV time column must increase");
  trace.sample_rate_hz = static_cast<double>(times.size() - 1) / span;
  return trace;
}

}  // namespace biomusic
