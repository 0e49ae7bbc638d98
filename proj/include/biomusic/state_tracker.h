#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "biomusic/vitals_dsp.h"

namespace biomusic {

// Band enums are ordered: comparisons follow physiological order.
enum class HeartBand { kLow, kNormal, kElevated, kHigh };
enum class RespBand { kSlow, kNormal, kFast };
enum class TimeBucket { kMorning, kDay, kEvening, kLateNight };

struct VitalTokens {
  HeartBand hr_band = HeartBand::kNormal;
  RespBand rr_band = RespBand::kNormal;

  bool operator==(const VitalTokens&) const = default;
};

// Thresholds (bpm / rpm). A value on a boundary belongs to the upper band,
// except the top heart boundary where exactly 100 bpm is still elevated.
inline constexpr double kHeartLowBelow = 55.0;
inline constexpr double kHeartElevatedFrom = 80.0;
inline constexpr double kHeartHighAbove = 100.0;
inline constexpr double kRespSlowBelow = 10.0;
inline constexpr double kRespFastAbove = 18.0;
inline constexpr double kHeartHysteresisBpm = 3.0;
inline constexpr double kRespHysteresisRpm = 1.0;

HeartBand heart_band(double bpm);
RespBand resp_band(double rpm);

/// Band membership with hysteresis: leaving `prev` needs the reading to clear
/// the boundary by the margin.
HeartBand heart_band(double bpm, HeartBand prev);
RespBand resp_band(double rpm, RespBand prev);

VitalTokens discretize(const VitalsEstimate& vitals, std::optional<VitalTokens> prev = std::nullopt);
VitalTokens discretize(double hr_bpm, double rr_rpm, std::optional<VitalTokens> prev = std::nullopt);

struct ClockTime {
  int hour = 0;
  int minute = 0;

  int minutes_since_midnight() const noexcept { return hour * 60 + minute; }
  bool operator==(const ClockTime&) const = default;

  /// Strict "HH:MM", 00:00-23:59.
  static ClockTime parse(std::string_view text);
  std::string str() const;
};

/// [05:00,11:00) morning, [11:00,18:00) day, [18:00,22:30) evening, else late night.
TimeBucket time_bucket(ClockTime t);

struct UserState {
  VitalTokens tokens;
  ClockTime clock_time;
  TimeBucket time_bucket = TimeBucket::kDay;
  double temperature_c = 22.0;
  std::string user_status = "resting";
  std::vector<std::string> prev_instrumentation;

  bool operator==(const UserState&) const = default;
};

UserState build_user_state(const VitalTokens& tokens, ClockTime clock_time, double temperature_c,
                           std::string user_status,
                           std::vector<std::string> prev_instrumentation = {});

/// Convenience overload that parses the clock text.
UserState build_user_state(const VitalTokens& tokens, std::string_view clock_text,
                           double temperature_c, std::string user_status,
                           std::vector<std::string> prev_instrumentation = {});

std::string_view to_string(HeartBand b);
std::string_view to_string(RespBand b);
std::string_view to_string(TimeBucket b);
HeartBand parse_heart_band(std::string_view s);
RespBand parse_resp_band(std::string_view s);
TimeBucket parse_time_bucket(std::string_view s);

}  // namespace biomusic
