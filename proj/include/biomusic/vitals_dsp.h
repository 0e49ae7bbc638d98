#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "biomusic/radar_sim.h"

namespace biomusic {

inline constexpr double kRespBandLowHz = 0.1;
inline constexpr double kRespBandHighHz = 0.5;
inline constexpr double kHeartBandLowHz = 0.8;
inline constexpr double kHeartBandHighHz = 2.0;

inline constexpr double kHarmonicToleranceHz = 0.02;
inline constexpr int kMaxRespHarmonic = 8;
inline constexpr std::size_t kDefaultModelOrder = 6;

/// Shortest window the periodogram estimator accepts.
inline constexpr double kMinWindowS = 10.0;

struct RateEstimate {
  double rate_per_min = 0.0;
  double peak_freq_hz = 0.0;
  double confidence = 0.0;  // [0, 1]
  bool harmonic_suspect = false;
  bool out_of_band = false;

  static RateEstimate from_frequency(double freq_hz, double confidence);
};

struct VitalsEstimate {
  RateEstimate heart;  // bpm
  RateEstimate resp;   // rpm
  double window_start_s = 0.0;
  double window_end_s = 0.0;
};

enum class Estimator { kPeriodogram, kSubspace };

/// Zero-phase Butterworth band-pass (4th-order high-pass and low-pass sections,
/// run forward and backward). Requires 0 < low < high < fs / 2.
PhaseSignal bandpass(const PhaseSignal& signal, double low_hz, double high_hz);

/// Local maxima of the Hann-windowed, zero-padded periodogram inside the band,
/// strongest first. Confidence is the peak-lobe power over the total band power.
std::vector<RateEstimate> periodogram_candidates(const PhaseSignal& signal, double search_low_hz,
                                                 double search_high_hz,
                                                 std::size_t max_candidates);

RateEstimate estimate_rate_periodogram(const PhaseSignal& signal, double search_low_hz,
                                       double search_high_hz);

/// MUSIC pseudo-spectrum peaks inside the band, strongest first.
std::vector<RateEstimate> subspace_candidates(const PhaseSignal& signal, std::size_t model_order,
                                              double search_low_hz, double search_high_hz,
                                              std::size_t max_candidates);

RateEstimate estimate_rate_subspace(const PhaseSignal& signal, std::size_t model_order,
                                    double search_low_hz, double search_high_hz);

/// Picks the strongest candidate that is not within `tolerance_hz` of the 2nd
/// to 8th harmonic of the respiration peak. When every candidate is a harmonic,
/// the strongest one comes back with halved confidence and `harmonic_suspect`.
RateEstimate disambiguate_heart(std::span<const RateEstimate> candidates,
                                const RateEstimate& resp,
                                double tolerance_hz = kHarmonicToleranceHz);

/// Centred 3-tap median; the taps are clamped inside the sequence at the ends.
std::vector<double> median3(std::span<const double> values);

struct TrackOptions {
  Estimator estimator = Estimator::kPeriodogram;
  std::size_t model_order = kDefaultModelOrder;
  double harmonic_tolerance_hz = kHarmonicToleranceHz;
};

/// One estimate per window; output length floor((duration - window) / hop) + 1.
VitalsEstimate estimate_window(const PhaseSignal& window, const TrackOptions& options = {});

std::vector<VitalsEstimate> track_vitals(const PhaseSignal& signal, double window_s, double hop_s,
                                         const TrackOptions& options = {});

}  // namespace biomusic
