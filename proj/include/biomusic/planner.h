#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "biomusic/pentatonic.h"
#include "biomusic/state_tracker.h"

namespace biomusic {

enum class Genre { kAmbient, kClassical, kFolk, kPercussive, kEnergizing, kLullaby };
enum class Instrument { kErhu, kGuzheng, kDizi, kPad, kStrings, kPercussion };
enum class Intent { kSleepTransition, kRelaxation, kNeutral, kStimulation };

inline constexpr int kMinTempoBpm = 40;
inline constexpr int kMaxTempoBpm = 180;

struct MusicPlan {
  int tempo_bpm = 90;
  Genre genre_mood = Genre::kAmbient;
  std::vector<Instrument> instrumentation{Instrument::kPad};  // lead first, 1-3 entries
  PentatonicMode mode = PentatonicMode::kGong;
  int tonic_pc = 0;
  double intensity = 0.5;

  bool operator==(const MusicPlan&) const = default;

  /// Tempo in range, 1-3 distinct instruments, tonic 0-11, intensity in [0,1].
  bool valid() const;
  Instrument lead() const { return instrumentation.front(); }
};

struct Observation {
  std::string signal;
  std::string reading;
  std::string interpretation;

  bool operator==(const Observation&) const = default;
};

enum class PlanOrigin { kRules, kExternal, kRulesFallback };

/// Observe -> intent -> parameters, in that order.
struct ReasoningTrace {
  std::vector<Observation> observations;
  Intent intent = Intent::kNeutral;
  std::vector<std::pair<std::string, std::string>> parameter_rationale;
  PlanOrigin origin = PlanOrigin::kRules;
  std::vector<std::string> notes;

  bool operator==(const ReasoningTrace&) const = default;

  static constexpr std::size_t kStages = 3;
  bool complete() const { return !observations.empty() && !parameter_rationale.empty(); }
};

struct PlanResult {
  MusicPlan plan;
  ReasoningTrace trace;
};

std::string_view to_string(Genre g);
std::string_view to_string(Instrument i);
std::string_view to_string(Intent i);
std::string_view to_string(PlanOrigin o);
bool try_parse_genre(std::string_view s, Genre& out);
bool try_parse_instrument(std::string_view s, Instrument& out);
bool try_parse_intent(std::string_view s, Intent& out);

enum class TemperatureBucket { kCold, kComfortable, kHot };
/// cold < 16 C, comfortable 16-26 C, hot > 26 C.
TemperatureBucket temperature_bucket(double celsius);

/// Stage 1 + 2 of the rule planner, exposed for inspection.
std::vector<Observation> observe(const UserState& state);
Intent decide_intent(const UserState& state);

/// Deterministic rule planner; total over every token/time combination.
/// The tonic comes from the seed unless a previous plan is given, in which
/// case it is held for continuity.
PlanResult plan(const UserState& state, const std::optional<MusicPlan>& prev, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prompt text
// ---------------------------------------------------------------------------

/// <70 slow, 70-110 moderate, >110 fast.
std::string_view tempo_word(int tempo_bpm);
std::string_view use_case(Genre g);

/// "<tempo-word> <lead> melody[ with <a>[ and <b>]] (style: <genre>) at <bpm> BPM
///  for <use-case>, <mode> mode"
std::string render_prompt(const MusicPlan& plan);

struct PromptFields {
  int tempo_bpm = 0;
  std::vector<Instrument> instrumentation;
  Genre genre_mood = Genre::kAmbient;
  PentatonicMode mode = PentatonicMode::kGong;

  bool operator==(const PromptFields&) const = default;
};

/// Inverse of render_prompt on its visible fields. Throws std::invalid_argument.
PromptFields parse_prompt(std::string_view prompt);

// ---------------------------------------------------------------------------
// Validation of plans from an external backend
// ---------------------------------------------------------------------------

struct ValidatedPlan {
  MusicPlan plan;
  bool tempo_clamped = false;
  std::vector<std::string> warnings;
  std::vector<std::string> trace;  // backend-supplied reasoning lines, if any
  std::optional<Intent> intent;
};

/// Accepts a raw JSON plan iff every field is present, in vocabulary and in
/// range; tempo outside [40,180] is clamped with a warning instead of rejected.
/// Throws ValidationError listing all offending fields.
ValidatedPlan validate_plan(const nlohmann::json& candidate);

}  // namespace biomusic
