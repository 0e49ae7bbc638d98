#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "biomusic/audio.h"
#include "biomusic/errors.h"
#include "biomusic/planner.h"
#include "biomusic/radar_sim.h"
#include "biomusic/score.h"
#include "biomusic/state_tracker.h"
#include "biomusic/vitals_dsp.h"

namespace biomusic {

inline constexpr int kLogSchemaVersion = 1;
inline constexpr int kSegmentBars = 4;

/// One stretch of constant vitals in a scripted source.
struct ScriptStep {
  double hr_bpm = 60.0;
  double rr_rpm = 15.0;
  double duration_s = 60.0;
  double resp_amp_mm = 4.0;
  double heart_amp_mm = 0.5;

  bool operator==(const ScriptStep&) const = default;
};

enum class SourceKind { kScript, kCsv, kLive };

struct SourceConfig {
  SourceKind kind = SourceKind::kScript;
  std::vector<ScriptStep> script;  // kScript
  double snr_db = 20.0;            // kScript; kNoNoise disables corruption
  std::filesystem::path csv_path;  // kCsv: phase trace with a t_s,value header
  double live_hr_bpm = 70.0;       // kLive: vitals until the first override
  double live_rr_rpm = 14.0;

  bool operator==(const SourceConfig&) const = default;
};

struct SessionContext {
  ClockTime start_clock{15, 0};  // advances with simulated time
  double temperature_c = 22.0;
  std::string status = "resting";

  bool operator==(const SessionContext&) const = default;
};

struct SessionConfig {
  double replan_interval_s = 10.0;
  double window_s = 30.0;
  double hop_s = 5.0;
  double crossfade_s = 2.0;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::kPeriodogram;
  SourceConfig source;
  SessionContext context;
  std::string session_id = "session";
  std::optional<std::string> planner_endpoint;  // external backend; rules when empty
  int planner_timeout_ms = 500;
  bool inline_audio = false;  // base64 WAV inside segment events

  bool operator==(const SessionConfig&) const = default;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

nlohmann::json encode_config(const SessionConfig& config);
SessionConfig decode_config(const nlohmann::json& j);

/// One log line: {"v":1,"t":<s>,"type":<type>, ...body}.
struct SessionEvent {
  double t_s = 0.0;
  std::string type;  // session_start | vitals | state | plan | segment | end
  nlohmann::json body = nlohmann::json::object();

  bool operator==(const SessionEvent&) const = default;
};

nlohmann::json to_frame(const SessionEvent& event);
SessionEvent from_frame(const nlohmann::json& frame);

/// A rendered 4-bar segment.
struct RenderedSegment {
  std::string id;
  MusicPlan plan;
  MelodyScore melody;
  std::vector<std::uint8_t> wav;
  std::string sha256;
  double duration_s = 0.0;
};

/// Deterministic in (plan, seed).
RenderedSegment render_segment(const std::string& id, const MusicPlan& plan, std::uint64_t seed);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Render request handed to a worker when segments are not rendered inline.
struct SegmentJob {
  std::string id;
  MusicPlan plan;
  std::uint64_t seed = 0;
  double start_s = 0.0;
  double overlap_s = 0.0;
};

/// Builds the segment event body for a finished render.
nlohmann::json segment_body(const SegmentJob& job, const RenderedSegment& seg, bool inline_audio);

/// Stepwise closed loop: vitals -> tokens -> plan -> segment. Time is simulated
/// and advances one hop per step().
class Session {
 public:
  /// With render_inline false, step() leaves segment rendering to the caller
  /// via take_jobs().
  explicit Session(SessionConfig config, bool render_inline = true);

  /// The session_start event. Must be called once before step().
  SessionEvent start();
  /// Advances one hop. Returns no events while paused.
  std::vector<SessionEvent> step();
  /// Emits the end event; further steps return nothing.
  SessionEvent finish(const std::string& reason);

  bool exhausted() const;
  bool finished() const { return finished_; }
  double now_s() const;

  /// Live vitals: from the next step these readings replace the source.
  void override_vitals(double hr_bpm, double rr_rpm);
  void set_context(std::optional<ClockTime> clock, std::optional<double> temperature_c,
                   std::optional<std::string> status);
  void pause() { paused_ = true; }
  void resume() { paused_ = false; }
  bool paused() const { return paused_; }

  const SessionConfig& config() const { return config_; }
  const std::optional<MusicPlan>& current_plan() const { return plan_; }
  /// Segments rendered inline, by id.
  const std::map<std::string, RenderedSegment>& segments() const { return segments_; }
  std::vector<SegmentJob> take_jobs();

 private:
  std::optional<VitalsEstimate> measure(double t_end);
  ClockTime clock_at(double t) const;
  void emit_segment(double t, std::vector<SessionEvent>& out);

  SessionConfig config_;
  bool render_inline_;
  PhaseSignal phase_;  // script / csv sources
  std::size_t tick_ = 0;
  std::size_t max_ticks_ = 0;
  bool started_ = false;
  bool finished_ = false;
  bool paused_ = false;
  bool live_override_ = false;
  double live_hr_ = 0.0;
  double live_rr_ = 0.0;
  int clock_offset_min_ = 0;  // shifts the clock after a context override
  std::vector<VitalsEstimate> raw_;
  std::optional<VitalTokens> tokens_;
  std::optional<MusicPlan> plan_;
  std::optional<double> last_plan_eval_s_;
  std::size_t plan_changes_ = 0;
  std::size_t segment_count_ = 0;
  std::map<std::string, RenderedSegment> segments_;
  std::vector<SegmentJob> jobs_;
};

struct SessionRun {
  std::vector<SessionEvent> events;
  std::map<std::string, RenderedSegment> segments;
};

/// Runs to source exhaustion or duration_s (if positive), whichever comes first.
SessionRun run_session(const SessionConfig& config, double duration_s = 0.0);

/// Re-runs a logged session from its session_start config. A log that ended
/// on a duration limit is re-run to the same point unless duration_s is given.
SessionRun rerun_from_log(const std::vector<SessionEvent>& events, double duration_s = 0.0);

/// Continuous audio of a run: each segment loops until the next one takes
/// over, joined by equal-power crossfades of crossfade_s.
AudioClip mixdown(const SessionRun& run);

// JSONL log ------------------------------------------------------------------

void log_append(std::ostream& out, const SessionEvent& event);
void write_log(const std::filesystem::path& path, const std::vector<SessionEvent>& events);

struct LogReadResult {
  std::vector<SessionEvent> events;  // everything before the first bad line
  std::optional<LogFormatError> error;
};
LogReadResult read_log(std::istream& in);

/// Throws LogFormatError naming the first corrupt line.
std::vector<SessionEvent> replay(std::istream& in);
std::vector<SessionEvent> replay(const std::filesystem::path& path);

std::string serialize_events(const std::vector<SessionEvent>& events);

}  // namespace biomusic
