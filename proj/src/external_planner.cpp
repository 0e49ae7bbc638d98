#include "biomusic/external_planner.h"

#include <regex>
#include <stdexcept>

#include "httplib.h"

#include "biomusic/errors.h"
#include "biomusic/json_codec.h"

namespace biomusic {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string path;
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(http://[^/\s]+)(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw std::invalid_argument("endpoint must look like http://host[:port]/path");
  return {m[1].str(), m[2].matched ? m[2].str() : "/plan"};
}

PlanResult fallback(const UserState& state, const std::optional<MusicPlan>& prev, std::uint64_t seed,
                    const std::string& reason) {
  auto result = plan(state, prev, seed);
  result.trace.origin = PlanOrigin::kRulesFallback;
  result.trace.notes.push_back("external planner unavailable: " + reason);
  return result;
}

}  // namespace

PlanResult external_plan(const UserState& state, const std::string& endpoint, int timeout_ms,
                         const std::optional<MusicPlan>& prev, std::uint64_t seed) {
  if (timeout_ms <= 0) throw std::invalid_argument("timeout_ms must be positive");
  const auto ep = split_url(endpoint);

  httplib::Client client(ep.origin);
  const auto sec = timeout_ms / 1000;
  const auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  client.set_keep_alive(false);

  const auto body = codec::encode(state).dump();
  const auto res = client.Post(ep.path, body, "application/json");
  if (!res) return fallback(state, prev, seed, "request failed (" + httplib::to_string(res.error()) + ")");
  if (res->status < 200 || res->status >= 300) {
    return fallback(state, prev, seed, "HTTP status " + std::to_string(res->status));
  }

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    return fallback(state, prev, seed, std::string("malformed JSON: ") + e.what());
  }

  ValidatedPlan v;
  try {
    v = validate_plan(parsed);
  } catch (const ValidationError& e) {
    return fallback(state, prev, seed, e.what());
  }

  PlanResult out;
  out.plan = std::move(v.plan);
  out.trace.origin = PlanOrigin::kExternal;
  out.trace.observations = observe(state);
  out.trace.intent = v.intent.value_or(decide_intent(state));
  for (const auto& line : v.trace) out.trace.parameter_rationale.emplace_back("backend", line);
  if (out.trace.parameter_rationale.empty()) {
    out.trace.parameter_rationale.emplace_back("backend", "plan supplied without rationale");
  }
  out.trace.notes = std::move(v.warnings);
  out.trace.notes.insert(out.trace.notes.begin(), "plan from external backend " + endpoint);
  return out;
}

}  // namespace biomusic
