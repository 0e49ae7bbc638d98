#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace biomusic {

/// Radar wavelength at 60 GHz, in millimetres (c / f).
inline constexpr double kWavelength60GHzMm = 299792458.0 / 60e9 * 1e3;

inline constexpr double kDefaultSampleRateHz = 100.0;
inline constexpr double kDefaultWindowS = 30.0;

/// Amplitude ratio of the optional respiration 2nd-harmonic term.
inline constexpr double kRespHarmonicRatio = 0.3;

/// True chest-motion parameters the vitals pipeline has to recover.
struct VitalsGroundTruth {
  double resp_freq_hz = 0.25;
  double heart_freq_hz = 1.2;
  double resp_amp_mm = 4.0;
  double heart_amp_mm = 0.2;
  double resp_phase_rad = 0.0;
  double heart_phase_rad = 0.0;
  // Adds kRespHarmonicRatio * A_r * sin(2 * (2 pi f_r t + phi_r)).
  bool resp_harmonic = false;

  /// Physiological invariants: 0.1-0.5 Hz breathing, 0.8-2 Hz heart,
  /// heart amplitude below respiration amplitude, both positive.
  bool physiological() const noexcept;
};

struct DisplacementTrace {
  std::vector<double> samples;  // mm
  double sample_rate_hz = kDefaultSampleRateHz;

  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct PhaseSignal {
  std::vector<double> samples;  // rad
  double sample_rate_hz = kDefaultSampleRateHz;
  double wavelength_mm = kWavelength60GHzMm;

  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// One stretch of constant vitals inside a scripted recording.
struct VitalsSegment {
  VitalsGroundTruth truth;
  double duration_s = 0.0;
};

DisplacementTrace synth_displacement(const VitalsGroundTruth& truth, double duration_s,
                                     double sample_rate_hz = kDefaultSampleRateHz);

/// Concatenates segments with phase-continuous oscillators, so a rate change
/// shows up as a frequency step without a displacement jump.
DisplacementTrace synth_displacement(std::span<const VitalsSegment> segments,
                                     double sample_rate_hz = kDefaultSampleRateHz);

/// phi(t) = 4 pi x(t) / lambda.
PhaseSignal displacement_to_phase(const DisplacementTrace& trace,
                                  double wavelength_mm = kWavelength60GHzMm);

/// Pass as snr_db to skip noise injection.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Adds white Gaussian noise at the requested SNR (relative to the mean power of
/// the input) plus a linear phase drift. Bit-reproducible for a given seed.
PhaseSignal corrupt(const PhaseSignal& signal, double snr_db, double drift_rad_per_s,
                    std::uint64_t seed);

// CSV with a `t_s,value` header, one row per sample.
void write_trace_csv(std::ostream& out, std::span<const double> samples, double sample_rate_hz);

struct CsvTrace {
  std::vector<double> values;
  double sample_rate_hz = 0.0;
};

/// Sample rate is inferred from the time column.
CsvTrace read_trace_csv(std::istream& in);

}  // namespace biomusic
