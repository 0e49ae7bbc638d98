#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "biomusic/pentatonic.h"
#include "biomusic/vitals_dsp.h"

namespace biomusic {

enum class Condition { kEmbedded, kSoftLabel, kUnconditioned };
std::string_view to_string(Condition c);

struct EvalReport {
  Condition condition = Condition::kEmbedded;
  std::size_t n = 0;
  std::size_t correct = 0;        // predicted mode == target mode
  std::size_t exact = 0;          // mode and tonic both correct
  std::array<std::array<std::size_t, 5>, 5> confusion{};  // [target][predicted]

  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
};

struct TonalEvalOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 7;
  int bars = 4;
  int tempo_bpm = 90;
  double intensity = 0.5;
  double soft_bias = 0.5;
};

/// Rows in fixed order: embedded, soft_label, unconditioned. Every condition
/// sees the same uniformly drawn (mode, tonic) targets and generator seeds.
std::vector<EvalReport> eval_tonal(const TonalEvalOptions& options);

nlohmann::json encode(const EvalReport& r);
std::string format_table(const std::vector<EvalReport>& rows);

struct VitalsEvalOptions {
  std::vector<double> resp_hz{0.15, 0.25, 0.4};
  std::vector<double> heart_hz{0.9, 1.2, 1.8};
  /// kNoNoise means clean. Noisy runs include the respiration 2nd harmonic.
  std::vector<double> snr_db{std::numeric_limits<double>::infinity(), 0.0};
  double duration_s = 60.0;
  double window_s = 30.0;
  double hop_s = 5.0;
  double resp_amp_mm = 2.0;
  double heart_amp_mm = 0.5;
  Estimator estimator = Estimator::kPeriodogram;
  std::uint64_t seed = 7;
};

struct VitalsCell {
  double resp_hz = 0.0;
  double heart_hz = 0.0;
  double snr_db = 0.0;
  double max_resp_err_rpm = 0.0;  // over all windows
  double max_heart_err_bpm = 0.0;
};

struct VitalsSummary {
  double snr_db = 0.0;
  double max_resp_err_rpm = 0.0;
  double mean_resp_err_rpm = 0.0;
  double max_heart_err_bpm = 0.0;
  double mean_heart_err_bpm = 0.0;
};

struct VitalsEvalResult {
  std::vector<VitalsCell> cells;
  std::vector<VitalsSummary> summary;  // one per SNR, in input order
};

VitalsEvalResult eval_vitals(const VitalsEvalOptions& options);
nlohmann::json encode(const VitalsEvalResult& r);
std::string format_table(const VitalsEvalResult& r);

}  // namespace biomusic
