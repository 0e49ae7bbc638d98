#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "biomusic/planner.h"

namespace biomusic {

inline constexpr int kDefaultExternalTimeoutMs = 500;

/// POSTs the UserState JSON to `endpoint` (http://host[:port]/path) and
/// validates the returned plan. Any network failure, timeout, non-2xx status
/// or invalid plan falls back to the rule planner; the trace then has origin
/// rules_fallback and a note with the reason. Never throws for backend faults;
/// a malformed endpoint URL is std::invalid_argument.
PlanResult external_plan(const UserState& state, const std::string& endpoint, int timeout_ms,
                         const std::optional<MusicPlan>& prev = std::nullopt, std::uint64_t seed = 0);

}  // namespace biomusic
