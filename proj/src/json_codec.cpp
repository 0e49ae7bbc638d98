#include "biomusic/json_codec.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace biomusic::codec {

namespace {

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
  const auto it = j.find(name);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + name + "'");
  return *it;
}

std::string str_field(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

double num_field(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number()) throw std::invalid_argument(std::string("field '") + name + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw std::invalid_argument(std::string("field '") + name + "' must be finite");
  return d;
}

int int_field(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number_integer()) throw std::invalid_argument(std::string("field '") + name + "' must be an integer");
  return v.get<int>();
}

Instrument parse_instrument(const std::string& s) {
  Instrument i{};
  if (!try_parse_instrument(s, i)) throw std::invalid_argument("unknown instrument '" + s + "'");
  return i;
}

}  // namespace

json encode(const UserState& s) {
  return {{"hr_band", to_string(s.tokens.hr_band)},
          {"rr_band", to_string(s.tokens.rr_band)},
          {"time", s.clock_time.str()},
          {"time_bucket", to_string(s.time_bucket)},
          {"temp_c", s.temperature_c},
          {"status", s.user_status},
          {"prev_instruments", s.prev_instrumentation}};
}

UserState decode_user_state(const json& j) {
  VitalTokens tokens{parse_heart_band(str_field(j, "hr_band")), parse_resp_band(str_field(j, "rr_band"))};
  std::vector<std::string> prev;
  if (j.contains("prev_instruments")) {
    const auto& p = j["prev_instruments"];
    if (!p.is_array()) throw std::invalid_argument("field 'prev_instruments' must be an array");
    for (const auto& v : p) {
      if (!v.is_string()) throw std::invalid_argument("prev_instruments entries must be strings");
      prev.push_back(v.get<std::string>());
    }
  }
  const std::string status = j.contains("status") ? str_field(j, "status") : std::string("resting");
  auto state = build_user_state(tokens, str_field(j, "time"), num_field(j, "temp_c"), status, std::move(prev));
  if (j.contains("time_bucket") && parse_time_bucket(str_field(j, "time_bucket")) != state.time_bucket) {
    throw std::invalid_argument("field 'time_bucket' disagrees with 'time'");
  }
  return state;
}

json encode(const MusicPlan& p) {
  json inst = json::array();
  for (auto i : p.instrumentation) inst.push_back(to_string(i));
  return {{"tempo_bpm", p.tempo_bpm},
          {"genre_mood", to_string(p.genre_mood)},
          {"instrumentation", inst},
          {"mode", to_string(p.mode)},
          {"tonic_pc", p.tonic_pc},
          {"intensity", p.intensity}};
}

MusicPlan decode_plan(const json& j) {
  MusicPlan p;
  p.tempo_bpm = int_field(j, "tempo_bpm");
  if (!try_parse_genre(str_field(j, "genre_mood"), p.genre_mood)) {
    throw std::invalid_argument("unknown genre_mood");
  }
  const auto& inst = field(j, "instrumentation");
  if (!inst.is_array()) throw std::invalid_argument("field 'instrumentation' must be an array");
  p.instrumentation.clear();
  for (const auto& v : inst) {
    if (!v.is_string()) throw std::invalid_argument("instrumentation entries must be strings");
    p.instrumentation.push_back(parse_instrument(v.get<std::string>()));
  }
  if (!try_parse_mode(str_field(j, "mode"), p.mode)) throw std::invalid_argument("unknown mode");
  p.tonic_pc = int_field(j, "tonic_pc");
  p.intensity = num_field(j, "intensity");
  if (!p.valid()) throw std::invalid_argument("plan fields out of range");
  return p;
}

json encode(const ReasoningTrace& t) {
  json obs = json::array();
  for (const auto& o : t.observations) {
    obs.push_back({{"signal", o.signal}, {"reading", o.reading}, {"interpretation", o.interpretation}});
  }
  json params = json::array();
  for (const auto& [name, why] : t.parameter_rationale) params.push_back({{"parameter", name}, {"rationale", why}});
  return {{"observations", obs},
          {"intent", to_string(t.intent)},
          {"parameters", params},
          {"origin", to_string(t.origin)},
          {"notes", t.notes}};
}

ReasoningTrace decode_trace(const json& j) {
  ReasoningTrace t;
  for (const auto& o : field(j, "observations")) {
    t.observations.push_back({str_field(o, "signal"), str_field(o, "reading"), str_field(o, "interpretation")});
  }
  if (!try_parse_intent(str_field(j, "intent"), t.intent)) throw std::invalid_argument("unknown intent");
  for (const auto& p : field(j, "parameters")) {
    t.parameter_rationale.emplace_back(str_field(p, "parameter"), str_field(p, "rationale"));
  }
  const auto origin = str_field(j, "origin");
  if (origin == to_string(PlanOrigin::kRules)) {
    t.origin = PlanOrigin::kRules;
  } else if (origin == to_string(PlanOrigin::kExternal)) {
    t.origin = PlanOrigin::kExternal;
  } else if (origin == to_string(PlanOrigin::kRulesFallback)) {
    t.origin = PlanOrigin::kRulesFallback;
  } else {
    throw std::invalid_argument("unknown origin '" + origin + "'");
  }
  if (j.contains("notes")) t.notes = j["notes"].get<std::vector<std::string>>();
  return t;
}

std::vector<std::string> trace_lines(const ReasoningTrace& t) {
  std::vector<std::string> lines;
  for (const auto& o : t.observations) {
    lines.push_back("observe: " + o.signal + " = " + o.reading + " -> " + o.interpretation);
  }
  lines.push_back("intent: " + std::string(to_string(t.intent)));
  for (const auto& [name, why] : t.parameter_rationale) lines.push_back("parameter: " + name + " <- " + why);
  return lines;
}

json encode(const PlanResult& r) {
  json j = encode(r.plan);
  j["trace"] = trace_lines(r.trace);
  j["reasoning"] = encode(r.trace);
  return j;
}

PlanResult decode_plan_result(const json& j) {
  return {decode_plan(j), decode_trace(field(j, "reasoning"))};
}

json encode(const MelodyScore& s) {
  json notes = json::array();
  for (const auto& n : s.notes) {
    notes.push_back({{"onset", n.onset_beats}, {"dur", n.duration_beats}, {"pitch", n.pitch}, {"vel", n.velocity}});
  }
  json j = {{"bpm", s.bpm}, {"notes", notes}, {"beats_total", s.beats_total}};
  j["mode"] = s.mode ? json(*s.mode) : json(nullptr);
  j["tonic_pc"] = s.tonic_pc ? json(*s.tonic_pc) : json(nullptr);
  return j;
}

MelodyScore decode_melody(const json& j) {
  MelodyScore s;
  s.bpm = int_field(j, "bpm");
  const auto& notes = field(j, "notes");
  if (!notes.is_array()) throw std::invalid_argument("field 'notes' must be an array");
  double end = 0.0;
  for (const auto& n : notes) {
    NoteEvent e{num_field(n, "onset"), num_field(n, "dur"), int_field(n, "pitch"),
                n.contains("vel") ? num_field(n, "vel") : 0.8};
    end = std::max(end, e.onset_beats + e.duration_beats);
    s.notes.push_back(e);
  }
  s.beats_total = j.contains("beats_total") ? num_field(j, "beats_total") : end;
  if (j.contains("mode") && !j["mode"].is_null()) {
    PentatonicMode m{};
    const auto name = str_field(j, "mode");
    if (!try_parse_mode(name, m)) throw std::invalid_argument("unknown mode '" + name + "'");
    s.mode = name;
  }
  if (j.contains("tonic_pc") && !j["tonic_pc"].is_null()) s.tonic_pc = int_field(j, "tonic_pc");
  if (!s.well_formed()) throw std::invalid_argument("melody is not well formed");
  return s;
}

json encode(const VitalsEstimate& v) {
  return {{"t0", v.window_start_s},         {"t1", v.window_end_s},
          {"hr_bpm", v.heart.rate_per_min}, {"rr_rpm", v.resp.rate_per_min},
          {"hr_conf", v.heart.confidence},  {"rr_conf", v.resp.confidence}};
}

VitalsEstimate decode_vitals(const json& j) {
  VitalsEstimate v;
  v.window_start_s = j.contains("t0") ? num_field(j, "t0") : 0.0;
  v.window_end_s = j.contains("t1") ? num_field(j, "t1") : 0.0;
  v.heart = RateEstimate::from_frequency(num_field(j, "hr_bpm") / 60.0, j.contains("hr_conf") ? num_field(j, "hr_conf") : 1.0);
  v.resp = RateEstimate::from_frequency(num_field(j, "rr_rpm") / 60.0, j.contains("rr_conf") ? num_field(j, "rr_conf") : 1.0);
  v.heart.rate_per_min = num_field(j, "hr_bpm");
  v.resp.rate_per_min = num_field(j, "rr_rpm");
  return v;
}

json encode(const ModeClassification& c) {
  return {{"mode", to_string(c.mode)},
          {"tonic_pc", c.tonic_pc},
          {"confidence", c.confidence},
          {"low_confidence", c.low_confidence}};
}

}  // namespace biomusic::codec
