#include "biomusic/state_tracker.h"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace biomusic {

namespace {

// Band index from a reading against ascending thresholds. `upper_inclusive`
// marks thresholds where a reading equal to the threshold stays below it.
template <std::size_t N>
int band_index(double value, const std::array<double, N>& thresholds,
               const std::array<bool, N>& upper_inclusive, double shift) {
  int band = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double t = thresholds[i] + shift;
    if (upper_inclusive[i] ? value > t : value >= t) band = static_cast<int>(i) + 1;
  }
  return band;
}

template <std::size_t N>
int band_with_hysteresis(double value, int prev, const std::array<double, N>& thresholds,
                         const std::array<bool, N>& upper_inclusive, double margin) {
  const int raw = band_index(value, thresholds, upper_inclusive, 0.0);
  if (raw > prev) {
    // Moving up: every boundary above prev is raised by the margin.
    return std::max(prev, band_index(value, thresholds, upper_inclusive, margin));
  }
  if (raw < prev) {
    return std::min(prev, band_index(value, thresholds, upper_inclusive, -margin));
  }
  return raw;
}

constexpr std::array<double, 3> kHeartThresholds = {kHeartLowBelow, kHeartElevatedFrom,
                                                    kHeartHighAbove};
constexpr std::array<bool, 3> kHeartInclusive = {false, false, true};
constexpr std::array<double, 2> kRespThresholds = {kRespSlowBelow, kRespFastAbove};
constexpr std::array<bool, 2> kRespInclusive = {false, true};

}  // namespace

HeartBand heart_band(double bpm) {
  return static_cast<HeartBand>(band_index(bpm, kHeartThresholds, kHeartInclusive, 0.0));
}

RespBand resp_band(double rpm) {
  return static_cast<RespBand>(band_index(rpm, kRespThresholds, kRespInclusive, 0.0));
}

HeartBand heart_band(double bpm, HeartBand prev) {
  return static_cast<HeartBand>(band_with_hysteresis(bpm, static_cast<int>(prev), kHeartThresholds,
                                                     kHeartInclusive, kHeartHysteresisBpm));
}

RespBand resp_band(double rpm, RespBand prev) {
  return static_cast<RespBand>(band_with_hysteresis(rpm, static_cast<int>(prev), kRespThresholds,
                                                    kRespInclusive, kRespHysteresisRpm));
}

VitalTokens discretize(double hr_bpm, double rr_rpm, std::optional<VitalTokens> prev) {
  if (prev) return {heart_band(hr_bpm, prev->hr_band), resp_band(rr_rpm, prev->rr_band)};
  return {heart_band(hr_bpm), resp_band(rr_rpm)};
}

VitalTokens discretize(const VitalsEstimate& vitals, std::optional<VitalTokens> prev) {
  return discretize(vitals.heart.rate_per_min, vitals.resp.rate_per_min, prev);
}

ClockTime ClockTime::parse(std::string_view text) {
  auto fail = [&] { return std::invalid_argument("malformed clock time '" + std::string(text) + "'"); };
  if (text.size() != 5 || text[2] != ':') throw fail();
  int h = 0, m = 0;
  const auto rh = std::from_chars(text.data(), text.data() + 2, h);
  const auto rm = std::from_chars(text.data() + 3, text.data() + 5, m);
  if (rh.ec != std::errc{} || rh.ptr != text.data() + 2) throw fail();
  if (rm.ec != std::errc{} || rm.ptr != text.data() + 5) throw fail();
  if (h < 0 || h > 23 || m < 0 || m > 59) throw fail();
  return {h, m};
}

std::string ClockTime::str() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", hour, minute);
  return buf;
}

TimeBucket time_bucket(ClockTime t) {
  const int m = t.minutes_since_midnight();
  if (m >= 5 * 60 && m < 11 * 60) return TimeBucket::kMorning;
  if (m >= 11 * 60 && m < 18 * 60) return TimeBucket::kDay;
  if (m >= 18 * 60 && m < 22 * 60 + 30) return TimeBucket::kEvening;
  return TimeBucket::kLateNight;
}

UserState build_user_state(const VitalTokens& tokens, ClockTime clock_time, double temperature_c,
                           std::string user_status, std::vector<std::string> prev_instrumentation) {
  if (clock_time.hour < 0 || clock_time.hour > 23 || clock_time.minute < 0 || clock_time.minute > 59) {
    throw std::invalid_argument("clock time out of range");
  }
  if (!std::isfinite(temperature_c)) throw std::invalid_argument("temperature must be finite");
  UserState s;
  s.tokens = tokens;
  s.clock_time = clock_time;
  s.time_bucket = time_bucket(clock_time);
  s.temperature_c = temperature_c;
  s.user_status = std::move(user_status);
  s.prev_instrumentation = std::move(prev_instrumentation);
  return s;
}

UserState build_user_state(const VitalTokens& tokens, std::string_view clock_text,
                           double temperature_c, std::string user_status,
                           std::vector<std::string> prev_instrumentation) {
  return build_user_state(tokens, ClockTime::parse(clock_text), temperature_c,
                          std::move(user_status), std::move(prev_instrumentation));
}

std::string_view to_string(HeartBand b) {
  switch (b) {
    case HeartBand::kLow: return "low";
    case HeartBand::kNormal: return "normal";
    case HeartBand::kElevated: return "elevated";
    case HeartBand::kHigh: return "high";
  }
  return "normal";
}

std::string_view to_string(RespBand b) {
  switch (b) {
    case RespBand::kSlow: return "slow";
    case RespBand::kNormal: return "normal";
    case RespBand::kFast: return "fast";
  }
  return "normal";
}

std::string_view to_string(TimeBucket b) {
  switch (b) {
    case TimeBucket::kMorning: return "morning";
    case TimeBucket::kDay: return "day";
    case TimeBucket::kEvening: return "evening";
    case TimeBucket::kLateNight: return "late_night";
  }
  return "day";
}

HeartBand parse_heart_band(std::string_view s) {
  for (auto b : {HeartBand::kLow, HeartBand::kNormal, HeartBand::kElevated, HeartBand::kHigh}) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown heart band '" + std::string(s) + "'");
}

RespBand parse_resp_band(std::string_view s) {
  for (auto b : {RespBand::kSlow, RespBand::kNormal, RespBand::kFast}) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown respiration band '" + std::string(s) + "'");
}

TimeBucket parse_time_bucket(std::string_view s) {
  for (auto b : {TimeBucket::kMorning, TimeBucket::kDay, TimeBucket::kEvening, TimeBucket::kLateNight}) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown time bucket '" + std::string(s) + "'");
}

}  // namespace biomusic
