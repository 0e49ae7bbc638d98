#include "biomusic/session.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#include "biomusic/errors.h"
#include "biomusic/external_planner.h"
#include "biomusic/json_codec.h"
#include "biomusic/melody.h"

namespace biomusic {

using nlohmann::json;

namespace {

constexpr double kTimeEps = 1e-9;

std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::kScript: return "script";
    case SourceKind::kCsv: return "csv";
    case SourceKind::kLive: return "live";
  }
  return "script";
}

std::string_view to_string(Estimator e) { return e == Estimator::kSubspace ? "music" : "fft"; }

std::uint64_t segment_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Index of the median element of up to three values (the later one on ties).
std::size_t median_index(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx[(idx.size() - 1) / 2];
}

std::vector<std::string> instrument_names(const MusicPlan& p) {
  std::vector<std::string> names;
  for (auto i : p.instrumentation) names.emplace_back(to_string(i));
  return names;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void SessionConfig::validate() const {
  if (!(hop_s > 0.0)) throw std::invalid_argument("hop_s must be positive");
  if (!(window_s >= kMinWindowS)) throw std::invalid_argument("window_s below the analysis minimum");
  if (!(replan_interval_s >= hop_s)) throw std::invalid_argument("replan_interval_s must be >= hop_s");
  if (!(crossfade_s >= 0.0)) throw std::invalid_argument("crossfade_s must be non-negative");
  // Shortest possible segment: 4 bars at the fastest tempo.
  const double shortest = kSegmentBars * kBeatsPerBar * 60.0 / kMaxTempoBpm;
  if (!(crossfade_s < shortest)) throw std::invalid_argument("crossfade_s must be shorter than a segment");
  if (source.kind == SourceKind::kScript) {
    if (source.script.empty()) throw std::invalid_argument("script source needs at least one step");
    for (const auto& s : source.script) {
      if (!(s.duration_s > 0.0) || !(s.hr_bpm > 0.0) || !(s.rr_rpm > 0.0)) {
        throw std::invalid_argument("script steps need positive rates and durations");
      }
    }
  }
  if (source.kind == SourceKind::kCsv && source.csv_path.empty()) {
    throw std::invalid_argument("csv source needs a path");
  }
  if (planner_timeout_ms <= 0) throw std::invalid_argument("planner_timeout_ms must be positive");
}

json encode_config(const SessionConfig& c) {
  json src = {{"kind", to_string(c.source.kind)}};
  switch (c.source.kind) {
    case SourceKind::kScript: {
      json steps = json::array();
      for (const auto& s : c.source.script) {
        steps.push_back({{"hr_bpm", s.hr_bpm},
                         {"rr_rpm", s.rr_rpm},
                         {"duration_s", s.duration_s},
                         {"resp_amp_mm", s.resp_amp_mm},
                         {"heart_amp_mm", s.heart_amp_mm}});
      }
      src["steps"] = steps;
      src["snr_db"] = std::isfinite(c.source.snr_db) ? json(c.source.snr_db) : json(nullptr);
      break;
    }
    case SourceKind::kCsv: src["path"] = c.source.csv_path.string(); break;
    case SourceKind::kLive:
      src["hr_bpm"] = c.source.live_hr_bpm;
      src["rr_rpm"] = c.source.live_rr_rpm;
      break;
  }
  json j = {{"replan_interval_s", c.replan_interval_s},
            {"window_s", c.window_s},
            {"hop_s", c.hop_s},
            {"crossfade_s", c.crossfade_s},
            {"seed", c.seed},
            {"estimator", to_string(c.estimator)},
            {"source", src},
            {"context",
             {{"time", c.context.start_clock.str()}, {"temp_c", c.context.temperature_c}, {"status", c.context.status}}},
            {"session_id", c.session_id},
            {"planner_timeout_ms", c.planner_timeout_ms},
            {"inline_audio", c.inline_audio}};
  j["planner_endpoint"] = c.planner_endpoint ? json(*c.planner_endpoint) : json(nullptr);
  return j;
}

SessionConfig decode_config(const json& j) {
  SessionConfig c;
  auto num = [&](const json& o, const char* k, double dflt) { return o.contains(k) ? o.at(k).get<double>() : dflt; };
  try {
    c.replan_interval_s = num(j, "replan_interval_s", c.replan_interval_s);
    c.window_s = num(j, "window_s", c.window_s);
    c.hop_s = num(j, "hop_s", c.hop_s);
    c.crossfade_s = num(j, "crossfade_s", c.crossfade_s);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("estimator")) {
      const auto e = j.at("estimator").get<std::string>();
      if (e == "fft") {
        c.estimator = Estimator::kPeriodogram;
      } else if (e == "music") {
        c.estimator = Estimator::kSubspace;
      } else {
        throw std::invalid_argument("estimator must be fft or music");
      }
    }
    if (j.contains("source")) {
      const auto& s = j.at("source");
      const auto kind = s.at("kind").get<std::string>();
      if (kind == "script") {
        c.source.kind = SourceKind::kScript;
        for (const auto& st : s.at("steps")) {
          ScriptStep step;
          step.hr_bpm = st.at("hr_bpm").get<double>();
          step.rr_rpm = st.at("rr_rpm").get<double>();
          step.duration_s = st.at("duration_s").get<double>();
          step.resp_amp_mm = num(st, "resp_amp_mm", step.resp_amp_mm);
          step.heart_amp_mm = num(st, "heart_amp_mm", step.heart_amp_mm);
          c.source.script.push_back(step);
        }
        if (s.contains("snr_db")) c.source.snr_db = s.at("snr_db").is_null() ? kNoNoise : s.at("snr_db").get<double>();
      } else if (kind == "csv") {
        c.source.kind = SourceKind::kCsv;
        c.source.csv_path = s.at("path").get<std::string>();
      } else if (kind == "live") {
        c.source.kind = SourceKind::kLive;
        c.source.live_hr_bpm = num(s, "hr_bpm", c.source.live_hr_bpm);
        c.source.live_rr_rpm = num(s, "rr_rpm", c.source.live_rr_rpm);
      } else {
        throw std::invalid_argument("unknown source kind '" + kind + "'");
      }
    }
    if (j.contains("context")) {
      const auto& ctx = j.at("context");
      if (ctx.contains("time")) c.context.start_clock = ClockTime::parse(ctx.at("time").get<std::string>());
      c.context.temperature_c = num(ctx, "temp_c", c.context.temperature_c);
      if (ctx.contains("status")) c.context.status = ctx.at("status").get<std::string>();
    }
    if (j.contains("session_id")) c.session_id = j.at("session_id").get<std::string>();
    if (j.contains("planner_endpoint") && !j.at("planner_endpoint").is_null()) {
      c.planner_endpoint = j.at("planner_endpoint").get<std::string>();
    }
    if (j.contains("planner_timeout_ms")) c.planner_timeout_ms = j.at("planner_timeout_ms").get<int>();
    if (j.contains("inline_audio")) c.inline_audio = j.at("inline_audio").get<bool>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad session config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

json to_frame(const SessionEvent& e) {
  json frame = {{"v", kLogSchemaVersion}, {"t", e.t_s}, {"type", e.type}};
  for (const auto& [k, v] : e.body.items()) frame[k] = v;
  return frame;
}

SessionEvent from_frame(const json& frame) {
  if (!frame.is_object()) throw std::invalid_argument("event must be a JSON object");
  if (!frame.contains("v") || frame.at("v") != kLogSchemaVersion) {
    throw std::invalid_argument("unsupported or missing schema version");
  }
  if (!frame.contains("t") || !frame.at("t").is_number()) throw std::invalid_argument("event needs numeric 't'");
  if (!frame.contains("type") || !frame.at("type").is_string()) throw std::invalid_argument("event needs 'type'");
  SessionEvent e;
  e.t_s = frame.at("t").get<double>();
  e.type = frame.at("type").get<std::string>();
  for (const auto& [k, v] : frame.items()) {
    if (k != "v" && k != "t" && k != "type") e.body[k] = v;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Segments
// ---------------------------------------------------------------------------

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw std::invalid_argument("invalid base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

RenderedSegment render_segment(const std::string& id, const MusicPlan& plan, std::uint64_t seed) {
  RenderedSegment seg;
  seg.id = id;
  seg.plan = plan;
  const auto steps = static_cast<std::size_t>(kSegmentBars * kBeatsPerBar * 2);
  seg.melody = generate(plan, tonal_embedding(plan.mode, steps), kSegmentBars, seed);
  const auto clip = render(seg.melody, plan);
  seg.wav = encode_wav(clip);
  seg.sha256 = sha256_hex(seg.wav);
  seg.duration_s = clip.duration_s();
  return seg;
}

json segment_body(const SegmentJob& job, const RenderedSegment& seg, bool inline_audio) {
  json body = {{"id", job.id},
               {"url", "/segments/" + job.id + ".wav"},
               {"bpm", job.plan.tempo_bpm},
               {"mode", to_string(job.plan.mode)},
               {"tonic_pc", job.plan.tonic_pc},
               {"lead", to_string(job.plan.lead())},
               {"bars", kSegmentBars},
               {"start_s", job.start_s},
               {"overlap_s", job.overlap_s},
               {"duration_s", seg.duration_s},
               {"sha256", seg.sha256}};
  if (inline_audio) body["wav_b64"] = base64_encode(seg.wav);
  return body;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session::Session(SessionConfig config, bool render_inline)
    : config_(std::move(config)), render_inline_(render_inline) {
  config_.validate();
  const auto& src = config_.source;
  switch (src.kind) {
    case SourceKind::kScript: {
      std::vector<VitalsSegment> segs;
      for (const auto& s : src.script) {
        VitalsGroundTruth truth;
        truth.resp_freq_hz = s.rr_rpm / 60.0;
        truth.heart_freq_hz = s.hr_bpm / 60.0;
        truth.resp_amp_mm = s.resp_amp_mm;
        truth.heart_amp_mm = s.heart_amp_mm;
        segs.push_back({truth, s.duration_s});
      }
      phase_ = displacement_to_phase(synth_displacement(segs));
      if (std::isfinite(src.snr_db)) phase_ = corrupt(phase_, src.snr_db, 0.0, config_.seed);
      break;
    }
    case SourceKind::kCsv: {
      std::ifstream in(src.csv_path);
      if (!in) throw IoError("cannot open '" + src.csv_path.string() + "'");
      auto trace = read_trace_csv(in);
      phase_.samples = std::move(trace.values);
      phase_.sample_rate_hz = trace.sample_rate_hz;
      break;
    }
    case SourceKind::kLive:
      live_hr_ = src.live_hr_bpm;
      live_rr_ = src.live_rr_rpm;
      break;
  }
  if (src.kind != SourceKind::kLive) {
    const double duration = phase_.duration_s();
    if (duration + kTimeEps < config_.window_s) throw InsufficientDataError("source shorter than one window");
    max_ticks_ = static_cast<std::size_t>(std::floor((duration - config_.window_s) / config_.hop_s + kTimeEps)) + 1;
  }
}

double Session::now_s() const {
  // Tick k closes the window ending at window + k * hop.
  if (config_.source.kind == SourceKind::kLive) return static_cast<double>(tick_) * config_.hop_s;
  return config_.window_s + static_cast<double>(tick_) * config_.hop_s;
}

bool Session::exhausted() const {
  return config_.source.kind != SourceKind::kLive && tick_ >= max_ticks_;
}

ClockTime Session::clock_at(double t) const {
  const int start = config_.context.start_clock.minutes_since_midnight() + clock_offset_min_;
  const int m = ((start + static_cast<int>(std::floor(t / 60.0))) % 1440 + 1440) % 1440;
  return {m / 60, m % 60};
}

SessionEvent Session::start() {
  if (started_) throw std::logic_error("session already started");
  started_ = true;
  return {0.0, "session_start", {{"session_id", config_.session_id}, {"config", encode_config(config_)}}};
}

void Session::override_vitals(double hr_bpm, double rr_rpm) {
  if (!(hr_bpm > 0.0 && hr_bpm < 300.0) || !(rr_rpm > 0.0 && rr_rpm < 120.0)) {
    throw std::invalid_argument("override vitals out of range");
  }
  live_hr_ = hr_bpm;
  live_rr_ = rr_rpm;
  live_override_ = true;
}

void Session::set_context(std::optional<ClockTime> clock, std::optional<double> temperature_c,
                          std::optional<std::string> status) {
  if (clock) {
    const int elapsed = static_cast<int>(std::floor(now_s() / 60.0));
    clock_offset_min_ = clock->minutes_since_midnight() - config_.context.start_clock.minutes_since_midnight() - elapsed;
  }
  if (temperature_c) {
    if (!std::isfinite(*temperature_c)) throw std::invalid_argument("temperature must be finite");
    config_.context.temperature_c = *temperature_c;
  }
  if (status) config_.context.status = *status;
}

std::optional<VitalsEstimate> Session::measure(double t_end) {
  VitalsEstimate raw;
  if (config_.source.kind == SourceKind::kLive || live_override_) {
    raw.heart = RateEstimate::from_frequency(live_hr_ / 60.0, 1.0);
    raw.resp = RateEstimate::from_frequency(live_rr_ / 60.0, 1.0);
    raw.window_start_s = std::max(0.0, t_end - config_.hop_s);
    raw.window_end_s = t_end;
    raw_.clear();  // readings are exact; no smoothing
    return raw;
  }
  const double fs = phase_.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(config_.window_s * fs));
  const auto end = static_cast<std::size_t>(std::llround(t_end * fs));
  if (end > phase_.samples.size() || end < n) return std::nullopt;
  PhaseSignal window{{phase_.samples.begin() + static_cast<std::ptrdiff_t>(end - n),
                      phase_.samples.begin() + static_cast<std::ptrdiff_t>(end)},
                     fs, phase_.wavelength_mm};
  TrackOptions opts;
  opts.estimator = config_.estimator;
  raw = estimate_window(window, opts);
  raw.window_start_s = t_end - config_.window_s;
  raw.window_end_s = t_end;
  raw_.push_back(raw);
  if (raw_.size() > 3) raw_.erase(raw_.begin());

  // Causal 3-tap median over the most recent windows.
  std::vector<double> hr, rr;
  for (const auto& r : raw_) {
    hr.push_back(r.heart.rate_per_min);
    rr.push_back(r.resp.rate_per_min);
  }
  VitalsEstimate smooth = raw;
  smooth.heart = raw_[median_index(hr)].heart;
  smooth.resp = raw_[median_index(rr)].resp;
  return smooth;
}

void Session::emit_segment(double t, std::vector<SessionEvent>& out) {
  SegmentJob job;
  job.id = config_.session_id + "-" + std::to_string(segment_count_);
  job.plan = *plan_;
  job.seed = segment_seed(config_.seed, segment_count_);
  job.start_s = t;
  job.overlap_s = segment_count_ == 0 ? 0.0 : config_.crossfade_s;
  ++segment_count_;
  if (!render_inline_) {
    jobs_.push_back(std::move(job));
    return;
  }
  auto seg = render_segment(job.id, job.plan, job.seed);
  out.push_back({t, "segment", segment_body(job, seg, config_.inline_audio)});
  segments_.emplace(job.id, std::move(seg));
}

std::vector<SegmentJob> Session::take_jobs() { return std::exchange(jobs_, {}); }

std::vector<SessionEvent> Session::step() {
  if (!started_) throw std::logic_error("call start() before step()");
  std::vector<SessionEvent> out;
  if (finished_ || paused_ || exhausted()) return out;

  const double t = now_s();
  const auto vitals = measure(t);
  ++tick_;
  if (!vitals) return out;
  out.push_back({t, "vitals", codec::encode(*vitals)});

  const auto prev_tokens = tokens_;
  tokens_ = discretize(*vitals, tokens_);
  const bool token_change = !prev_tokens || *prev_tokens != *tokens_;
  const bool replan_due =
      !last_plan_eval_s_ || t - *last_plan_eval_s_ >= config_.replan_interval_s - kTimeEps;
  if (!token_change && !replan_due) return out;

  const auto state = build_user_state(*tokens_, clock_at(t), config_.context.temperature_c, config_.context.status,
                                      plan_ ? instrument_names(*plan_) : std::vector<std::string>{});
  json state_body = codec::encode(state);
  state_body["trigger"] = token_change ? "token_change" : "replan_interval";
  out.push_back({t, "state", state_body});
  last_plan_eval_s_ = t;

  const auto result = config_.planner_endpoint
                           ? external_plan(state, *config_.planner_endpoint, config_.planner_timeout_ms, plan_,
                                           config_.seed)
                           : plan(state, plan_, config_.seed);
  if (plan_ && result.plan == *plan_) return out;

  const bool initial = !plan_;
  if (!initial) ++plan_changes_;
  plan_ = result.plan;
  json body = codec::encode(result);
  body["initial"] = initial;
  body["prompt"] = render_prompt(result.plan);
  out.push_back({t, "plan", body});
  emit_segment(t, out);
  return out;
}

SessionEvent Session::finish(const std::string& reason) {
  finished_ = true;
  const double t = tick_ == 0 ? 0.0 : now_s() - config_.hop_s;
  return {t,
          "end",
          {{"reason", reason},
           {"plan_changes", plan_changes_},
           {"segments", segment_count_}}};
}

SessionRun run_session(const SessionConfig& config, double duration_s) {
  if (config.source.kind == SourceKind::kLive && !(duration_s > 0.0)) {
    throw std::invalid_argument("a live source needs a positive duration");
  }
  Session session(config);
  SessionRun run;
  run.events.push_back(session.start());
  std::string reason = "source_exhausted";
  while (!session.exhausted()) {
    if (duration_s > 0.0 && session.now_s() > duration_s + kTimeEps) {
      reason = "duration_reached";
      break;
    }
    auto evs = session.step();
    run.events.insert(run.events.end(), evs.begin(), evs.end());
  }
  run.events.push_back(session.finish(reason));
  run.segments = session.segments();
  return run;
}

SessionRun rerun_from_log(const std::vector<SessionEvent>& events, double duration_s) {
  const auto it = std::find_if(events.begin(), events.end(), [](const SessionEvent& e) { return e.type == "session_start"; });
  if (it == events.end()) throw std::invalid_argument("log has no session_start event");
  if (!(duration_s > 0.0) && !events.empty() && events.back().type == "end" &&
      events.back().body.value("reason", "") == "duration_reached") {
    duration_s = events.back().t_s;  // the last completed step
  }
  return run_session(decode_config(it->body.at("config")), duration_s);
}

AudioClip mixdown(const SessionRun& run) {
  struct Piece {
    const RenderedSegment* seg;
    double start;
  };
  std::vector<Piece> pieces;
  double end_s = 0.0;
  double fade_s = 0.0;
  for (const auto& e : run.events) {
    if (e.type == "segment") {
      const auto id = e.body.at("id").get<std::string>();
      const auto found = run.segments.find(id);
      if (found == run.segments.end()) throw std::invalid_argument("segment '" + id + "' was not rendered");
      pieces.push_back({&found->second, e.body.at("start_s").get<double>()});
      if (pieces.size() > 1) fade_s = e.body.at("overlap_s").get<double>();
    }
    end_s = std::max(end_s, e.t_s);
  }
  AudioClip out;
  if (pieces.empty()) return out;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const bool last = k + 1 == pieces.size();
    const double until = last ? std::max(end_s, pieces[k].start + pieces[k].seg->duration_s)
                              : pieces[k + 1].start + fade_s;
    const auto clip = decode_wav(pieces[k].seg->wav);
    const auto frames = static_cast<std::size_t>(std::llround((until - pieces[k].start) * clip.sample_rate_hz));
    AudioClip looped;
    looped.sample_rate_hz = clip.sample_rate_hz;
    looped.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) looped.samples[i] = clip.samples[i % clip.samples.size()];
    out = k == 0 ? looped : crossfade(out, looped, fade_s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log
// ---------------------------------------------------------------------------

void log_append(std::ostream& out, const SessionEvent& event) {
  out << to_frame(event).dump() << '\n';
  if (!out) throw IoError("failed to append to session log");
}

void write_log(const std::filesystem::path& path, const std::vector<SessionEvent>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& e : events) log_append(out, e);
}

std::string serialize_events(const std::vector<SessionEvent>& events) {
  std::ostringstream out;
  for (const auto& e : events) log_append(out, e);
  return out.str();
}

LogReadResult read_log(std::istream& in) {
  LogReadResult result;
  std::string line;
  std::size_t number = 0;
  double last_t = -std::numeric_limits<double>::infinity();
  while (true) {
    if (!std::getline(in, line)) break;
    ++number;
    const bool terminated = !in.eof();
    if (line.empty() && !terminated) break;
    try {
      if (!terminated) throw std::invalid_argument("truncated line (no newline)");
      auto e = from_frame(nlohmann::json::parse(line));
      if (e.t_s < last_t) throw std::invalid_argument("timestamp goes backwards");
      last_t = e.t_s;
      result.events.push_back(std::move(e));
    } catch (const std::exception& ex) {
      result.error.emplace(number, ex.what());
      break;
    }
  }
  return result;
}

std::vector<SessionEvent> replay(std::istream& in) {
  auto r = read_log(in);
  if (r.error) throw *r.error;
  return std::move(r.events);
}

std::vector<SessionEvent> replay(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return replay(in);
}

}  // namespace biomusic
