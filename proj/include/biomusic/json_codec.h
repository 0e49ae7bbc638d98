#pragma once

#include "json.hpp"

#include "biomusic/pentatonic.h"
#include "biomusic/planner.h"
#include "biomusic/score.h"
#include "biomusic/state_tracker.h"
#include "biomusic/vitals_dsp.h"

// JSON wire formats. Decoders throw std::invalid_argument naming the field.
namespace biomusic::codec {

using nlohmann::json;

/// {"hr_band","rr_band","time","time_bucket","temp_c","status","prev_instruments"}
json encode(const UserState& state);
/// time_bucket is recomputed from "time"; a disagreeing bucket is rejected.
UserState decode_user_state(const json& j);

/// The external-backend plan schema without the trace.
json encode(const MusicPlan& plan);
/// Strict decode of an encoded plan (no clamping; use validate_plan for
/// untrusted input).
MusicPlan decode_plan(const json& j);

json encode(const ReasoningTrace& trace);
ReasoningTrace decode_trace(const json& j);

/// Plan fields plus "trace" (flat text lines) and "reasoning" (structured).
json encode(const PlanResult& result);
PlanResult decode_plan_result(const json& j);

/// {"bpm","notes":[{"onset","dur","pitch","vel"}],"mode","tonic_pc","beats_total"}
json encode(const MelodyScore& score);
MelodyScore decode_melody(const json& j);

/// {"t0","t1","hr_bpm","rr_rpm","hr_conf","rr_conf"}
json encode(const VitalsEstimate& v);
VitalsEstimate decode_vitals(const json& j);

/// {"mode","tonic_pc","confidence","low_confidence"}
json encode(const ModeClassification& c);

/// Flat human-readable lines of a trace: observe, intent, then parameters.
std::vector<std::string> trace_lines(const ReasoningTrace& trace);

}  // namespace biomusic::codec
