#include "biomusic/planner.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>
#include <stdexcept>

#include "biomusic/errors.h"

namespace biomusic {

namespace {

constexpr std::array<std::string_view, 6> kGenreNames = {"ambient",    "classical", "folk",
                                                         "percussive", "energizing", "lullaby"};
constexpr std::array<std::string_view, 6> kInstrumentNames = {"erhu", "guzheng", "dizi",
                                                              "pad",  "strings", "percussion"};
constexpr std::array<std::string_view, 4> kIntentNames = {"sleep_transition", "relaxation",
                                                          "neutral", "stimulation"};

template <typename Enum, std::size_t N>
bool parse_enum(std::string_view s, const std::array<std::string_view, N>& names, Enum& out) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) {
      out = static_cast<Enum>(i);
      return true;
    }
  }
  return false;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool aroused(HeartBand b) { return b == HeartBand::kElevated || b == HeartBand::kHigh; }

bool active_status(std::string_view status) {
  static const std::set<std::string_view> kActive = {"active", "exercising", "workout", "walking"};
  return kActive.contains(status);
}

// One row of the intent -> parameter table, before rr/temperature offsets.
struct Row {
  PentatonicMode mode;
  Genre genre;
  int base_tempo;
  std::vector<Instrument> instruments;
  double intensity;
  const char* mode_reason;
  const char* genre_reason;
};

Row table_row(Intent intent, const UserState& s) {
  using enum Instrument;
  const bool calm = !aroused(s.tokens.hr_band);
  switch (intent) {
    case Intent::kStimulation:
      if (s.tokens.rr_band == RespBand::kFast) {
        return {PentatonicMode::kZhi, Genre::kPercussive, 120, {kPercussion, kDizi}, 0.8,
                "Zhi: bright, driving colour to match stimulation",
                "percussive: rapid breathing calls for an intense rhythmic style"};
      }
      return {PentatonicMode::kZhi, Genre::kEnergizing, 120, {kDizi, kPercussion, kStrings}, 0.75,
              "Zhi: bright, driving colour to match stimulation",
              "energizing: supports the reported activity"};
    case Intent::kSleepTransition:
      if (calm) {
        return {PentatonicMode::kGong, Genre::kAmbient, 60, {kGuzheng, kPad}, 0.15,
                "Gong: stable, grounded mode for a settled body",
                "ambient: unobtrusive texture for drifting off"};
      }
      return {PentatonicMode::kYu, Genre::kLullaby, 76, {kGuzheng, kStrings}, 0.25,
              "Yu: soft, introspective mode to ease residual arousal",
              "lullaby: calming genre for the pre-sleep period"};
    case Intent::kRelaxation:
      if (calm) {
        return {PentatonicMode::kGong, Genre::kAmbient, 64, {kErhu, kPad}, 0.25,
                "Gong: stable, grounded mode for a low-arousal state",
                "ambient: calm style matching slow physiology"};
      }
      return {PentatonicMode::kYu, Genre::kClassical, 72, {kErhu, kStrings}, 0.35,
              "Yu: soft, introspective mode to bring arousal down",
              "classical: calming genre at a measured pace"};
    case Intent::kNeutral:
      if (s.time_bucket == TimeBucket::kEvening) {
        return {PentatonicMode::kJue, Genre::kClassical, 84, {kErhu, kGuzheng}, 0.45,
                "Jue: gentle colour for winding down",
                "classical: relaxed evening listening"};
      }
      return {PentatonicMode::kShang, Genre::kFolk, 92, {kDizi, kGuzheng}, 0.5,
              "Shang: open, balanced colour for a steady state",
              "folk: light daytime accompaniment"};
  }
  return {PentatonicMode::kShang, Genre::kFolk, 92, {kDizi, kGuzheng}, 0.5, "", ""};
}

int rr_tempo_offset(RespBand b) {
  switch (b) {
    case RespBand::kSlow: return -4;
    case RespBand::kNormal: return 0;
    case RespBand::kFast: return 8;
  }
  return 0;
}

std::string format_temp(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f C", c);
  return buf;
}

std::string_view heart_meaning(HeartBand b) {
  switch (b) {
    case HeartBand::kLow: return "deeply rested";
    case HeartBand::kNormal: return "calm baseline";
    case HeartBand::kElevated: return "mild arousal";
    case HeartBand::kHigh: return "strong arousal";
  }
  return "";
}

std::string_view resp_meaning(RespBand b) {
  switch (b) {
    case RespBand::kSlow: return "slow, deep breathing";
    case RespBand::kNormal: return "normal breathing";
    case RespBand::kFast: return "rapid breathing";
  }
  return "";
}

std::string_view time_meaning(TimeBucket b) {
  switch (b) {
    case TimeBucket::kMorning: return "start of the day";
    case TimeBucket::kDay: return "daytime activity";
    case TimeBucket::kEvening: return "winding down";
    case TimeBucket::kLateNight: return "pre-sleep period";
  }
  return "";
}

}  // namespace

bool MusicPlan::valid() const {
  if (tempo_bpm < kMinTempoBpm || tempo_bpm > kMaxTempoBpm) return false;
  if (instrumentation.empty() || instrumentation.size() > 3) return false;
  std::set<Instrument> seen(instrumentation.begin(), instrumentation.end());
  if (seen.size() != instrumentation.size()) return false;
  if (tonic_pc < 0 || tonic_pc > 11) return false;
  return intensity >= 0.0 && intensity <= 1.0;
}

std::string_view to_string(Genre g) { return kGenreNames[static_cast<std::size_t>(g)]; }
std::string_view to_string(Instrument i) { return kInstrumentNames[static_cast<std::size_t>(i)]; }
std::string_view to_string(Intent i) { return kIntentNames[static_cast<std::size_t>(i)]; }

std::string_view to_string(PlanOrigin o) {
  switch (o) {
    case PlanOrigin::kRules: return "rules";
    case PlanOrigin::kExternal: return "external";
    case PlanOrigin::kRulesFallback: return "rules_fallback";
  }
  return "rules";
}

bool try_parse_genre(std::string_view s, Genre& out) { return parse_enum(s, kGenreNames, out); }
bool try_parse_instrument(std::string_view s, Instrument& out) {
  return parse_enum(s, kInstrumentNames, out);
}
bool try_parse_intent(std::string_view s, Intent& out) { return parse_enum(s, kIntentNames, out); }

TemperatureBucket temperature_bucket(double celsius) {
  if (celsius < 16.0) return TemperatureBucket::kCold;
  if (celsius > 26.0) return TemperatureBucket::kHot;
  return TemperatureBucket::kComfortable;
}

std::vector<Observation> observe(const UserState& s) {
  std::vector<Observation> obs;
  obs.push_back({"heart_rate", std::string(to_string(s.tokens.hr_band)),
                 std::string(heart_meaning(s.tokens.hr_band))});
  obs.push_back({"respiration", std::string(to_string(s.tokens.rr_band)),
                 std::string(resp_meaning(s.tokens.rr_band))});
  obs.push_back({"time", s.clock_time.str() + " (" + std::string(to_string(s.time_bucket)) + ")",
                 std::string(time_meaning(s.time_bucket))});
  std::string temp_note;
  switch (temperature_bucket(s.temperature_c)) {
    case TemperatureBucket::kCold: temp_note = "cool room"; break;
    case TemperatureBucket::kComfortable: temp_note = "comfortable room"; break;
    case TemperatureBucket::kHot: temp_note = "warm room, favour lighter textures"; break;
  }
  obs.push_back({"temperature", format_temp(s.temperature_c), temp_note});
  obs.push_back({"status", s.user_status,
                 active_status(s.user_status) ? "physically active" : "user is " + s.user_status});
  if (!s.prev_instrumentation.empty()) {
    std::string joined;
    for (const auto& i : s.prev_instrumentation) joined += (joined.empty() ? "" : ",") + i;
    obs.push_back({"previous_instruments", joined, "keep timbral continuity where possible"});
  }
  return obs;
}

Intent decide_intent(const UserState& s) {
  const auto hr = s.tokens.hr_band;
  const auto rr = s.tokens.rr_band;
  if (rr == RespBand::kFast) return Intent::kStimulation;
  if (active_status(s.user_status)) return Intent::kStimulation;
  if (s.time_bucket == TimeBucket::kLateNight) return Intent::kSleepTransition;
  if (rr == RespBand::kSlow) return Intent::kRelaxation;
  if (hr == HeartBand::kHigh) return Intent::kRelaxation;
  if (s.time_bucket == TimeBucket::kEvening && hr == HeartBand::kElevated) return Intent::kRelaxation;
  return Intent::kNeutral;
}

PlanResult plan(const UserState& state, const std::optional<MusicPlan>& prev, std::uint64_t seed) {
  PlanResult out;
  out.trace.observations = observe(state);
  const Intent intent = decide_intent(state);
  out.trace.intent = intent;
  out.trace.origin = PlanOrigin::kRules;

  const Row row = table_row(intent, state);
  const auto temp = temperature_bucket(state.temperature_c);
  int tempo = row.base_tempo + rr_tempo_offset(state.tokens.rr_band);
  double intensity = row.intensity;
  if (temp == TemperatureBucket::kHot) {
    tempo -= 4;
    intensity -= 0.05;
  } else if (temp == TemperatureBucket::kCold) {
    intensity += 0.05;
  }

  MusicPlan& p = out.plan;
  p.tempo_bpm = std::clamp(tempo, kMinTempoBpm, kMaxTempoBpm);
  p.genre_mood = row.genre;
  p.instrumentation = row.instruments;
  p.mode = row.mode;
  p.intensity = std::clamp(std::round(intensity * 100.0) / 100.0, 0.0, 1.0);
  p.tonic_pc = prev ? prev->tonic_pc : static_cast<int>(splitmix64(seed) % 12);

  // Timbral continuity: keep the previous lead if this row allows it.
  if (!state.prev_instrumentation.empty()) {
    Instrument prev_lead{};
    if (try_parse_instrument(state.prev_instrumentation.front(), prev_lead)) {
      auto it = std::find(p.instrumentation.begin(), p.instrumentation.end(), prev_lead);
      if (it != p.instrumentation.end()) std::rotate(p.instrumentation.begin(), it, it + 1);
    }
  }

  auto& why = out.trace.parameter_rationale;
  why.emplace_back("tempo", std::to_string(p.tempo_bpm) + " BPM (" + std::string(tempo_word(p.tempo_bpm)) +
                                "): " + std::string(to_string(intent)) + " with " +
                                std::string(resp_meaning(state.tokens.rr_band)));
  why.emplace_back("genre", row.genre_reason);
  std::string inst;
  for (auto i : p.instrumentation) inst += (inst.empty() ? "" : ", ") + std::string(to_string(i));
  why.emplace_back("instrumentation", inst + " led by " + std::string(to_string(p.lead())));
  why.emplace_back("mode", row.mode_reason);
  why.emplace_back("tonic", prev ? "held from the previous plan for continuity" : "drawn from the session seed");
  return out;
}

std::string_view tempo_word(int tempo_bpm) {
  if (tempo_bpm < 70) return "slow";
  if (tempo_bpm <= 110) return "moderate";
  return "fast";
}

std::string_view use_case(Genre g) {
  switch (g) {
    case Genre::kAmbient: return "relaxation";
    case Genre::kClassical: return "meditation";
    case Genre::kFolk: return "focus";
    case Genre::kPercussive: return "exercise";
    case Genre::kEnergizing: return "workout";
    case Genre::kLullaby: return "sleep";
  }
  return "relaxation";
}

std::string render_prompt(const MusicPlan& plan) {
  if (plan.instrumentation.empty()) throw std::invalid_argument("plan has no instrumentation");
  std::string s;
  s += tempo_word(plan.tempo_bpm);
  s += ' ';
  s += to_string(plan.lead());
  s += " melody";
  for (std::size_t i = 1; i < plan.instrumentation.size(); ++i) {
    s += i == 1 ? " with " : " and ";
    s += to_string(plan.instrumentation[i]);
  }
  s += " (style: ";
  s += to_string(plan.genre_mood);
  s += ") at " + std::to_string(plan.tempo_bpm) + " BPM for ";
  s += use_case(plan.genre_mood);
  s += ", ";
  s += to_string(plan.mode);
  s += " mode";
  return s;
}

PromptFields parse_prompt(std::string_view prompt) {
  static const std::regex kPattern(
      R"(^(slow|moderate|fast) ([a-z]+) melody(?: with ([a-z]+)(?: and ([a-z]+))?)? \(style: ([a-z]+)\) at ([0-9]+) BPM for ([a-z ]+), ([A-Za-z]+) mode$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(prompt.begin(), prompt.end(), m, kPattern)) {
    throw std::invalid_argument("prompt does not follow the structured format");
  }
  PromptFields f;
  f.tempo_bpm = std::stoi(m[6].str());
  if (tempo_word(f.tempo_bpm) != m[1].str()) throw std::invalid_argument("tempo word disagrees with BPM");
  for (int g : {2, 3, 4}) {
    if (!m[g].matched) continue;
    Instrument inst{};
    if (!try_parse_instrument(m[g].str(), inst)) throw std::invalid_argument("unknown instrument in prompt");
    f.instrumentation.push_back(inst);
  }
  if (!try_parse_genre(m[5].str(), f.genre_mood)) throw std::invalid_argument("unknown genre in prompt");
  if (use_case(f.genre_mood) != m[7].str()) throw std::invalid_argument("use-case disagrees with genre");
  f.mode = parse_mode(m[8].str());
  return f;
}

ValidatedPlan validate_plan(const nlohmann::json& c) {
  ValidatedPlan out;
  std::vector<std::string> bad;
  std::string detail;
  auto reject = [&](const std::string& field, const std::string& why) {
    bad.push_back(field);
    detail += (detail.empty() ? "" : "; ") + field + ": " + why;
  };
  if (!c.is_object()) throw ValidationError({"<root>"}, "plan must be a JSON object");

  MusicPlan& p = out.plan;
  if (!c.contains("tempo_bpm")) {
    reject("tempo_bpm", "missing");
  } else if (!c["tempo_bpm"].is_number()) {
    reject("tempo_bpm", "not a number");
  } else {
    const double t = c["tempo_bpm"].get<double>();
    if (!std::isfinite(t)) {
      reject("tempo_bpm", "not finite");
    } else {
      double rounded = std::round(t);
      if (rounded != t) out.warnings.push_back("tempo_bpm rounded to an integer");
      if (rounded < kMinTempoBpm || rounded > kMaxTempoBpm) {
        rounded = std::clamp(rounded, double{kMinTempoBpm}, double{kMaxTempoBpm});
        out.tempo_clamped = true;
        out.warnings.push_back("tempo_bpm clamped to " + std::to_string(static_cast<int>(rounded)));
      }
      p.tempo_bpm = static_cast<int>(rounded);
    }
  }

  if (!c.contains("genre_mood")) {
    reject("genre_mood", "missing");
  } else if (!c["genre_mood"].is_string() || !try_parse_genre(c["genre_mood"].get<std::string>(), p.genre_mood)) {
    reject("genre_mood", "not in vocabulary");
  }

  if (!c.contains("instrumentation")) {
    reject("instrumentation", "missing");
  } else if (!c["instrumentation"].is_array() || c["instrumentation"].empty() ||
             c["instrumentation"].size() > 3) {
    reject("instrumentation", "must list 1-3 instruments");
  } else {
    p.instrumentation.clear();
    bool ok = true;
    for (const auto& v : c["instrumentation"]) {
      Instrument inst{};
      if (!v.is_string() || !try_parse_instrument(v.get<std::string>(), inst) ||
          std::find(p.instrumentation.begin(), p.instrumentation.end(), inst) != p.instrumentation.end()) {
        ok = false;
        break;
      }
      p.instrumentation.push_back(inst);
    }
    if (!ok) reject("instrumentation", "unknown or repeated instrument");
  }

  if (!c.contains("mode")) {
    reject("mode", "missing");
  } else if (!c["mode"].is_string() || !try_parse_mode(c["mode"].get<std::string>(), p.mode)) {
    reject("mode", "not one of Gong, Shang, Jue, Zhi, Yu");
  }

  if (!c.contains("tonic_pc")) {
    reject("tonic_pc", "missing");
  } else if (!c["tonic_pc"].is_number_integer() || c["tonic_pc"].get<long long>() < 0 ||
             c["tonic_pc"].get<long long>() > 11) {
    reject("tonic_pc", "must be an integer 0-11");
  } else {
    p.tonic_pc = c["tonic_pc"].get<int>();
  }

  if (!c.contains("intensity")) {
    reject("intensity", "missing");
  } else if (!c["intensity"].is_number() || !(c["intensity"].get<double>() >= 0.0) ||
             !(c["intensity"].get<double>() <= 1.0)) {
    reject("intensity", "must be a number in [0, 1]");
  } else {
    p.intensity = c["intensity"].get<double>();
  }

  if (c.contains("trace")) {
    if (!c["trace"].is_array()) {
      reject("trace", "must be an array");
    } else {
      for (const auto& line : c["trace"]) out.trace.push_back(line.is_string() ? line.get<std::string>() : line.dump());
    }
  }
  if (c.contains("intent") && c["intent"].is_string()) {
    Intent i{};
    if (try_parse_intent(c["intent"].get<std::string>(), i)) out.intent = i;
  }

  if (!bad.empty()) throw ValidationError(std::move(bad), "invalid plan: " + detail);
  return out;
}

}  // namespace biomusic
