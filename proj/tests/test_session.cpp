#include <chrono>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"

#include "biomusic/errors.h"
#include "biomusic/external_planner.h"
#include "biomusic/json_codec.h"
#include "biomusic/session.h"

using namespace biomusic;
using nlohmann::json;

namespace {

SessionConfig scenario_config() {
  SessionConfig c;
  c.seed = 1;
  c.source.script = {{60, 15, 60}, {95, 22, 60, 6.0, 0.6}, {60, 15, 60}};
  return c;
}

std::vector<SessionEvent> of_type(const std::vector<SessionEvent>& ev, const std::string& type) {
  std::vector<SessionEvent> out;
  for (const auto& e : ev) {
    if (e.type == type) out.push_back(e);
  }
  return out;
}

// Serves a fixed response on a background thread.
class MockBackend {
 public:
  explicit MockBackend(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/plan", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockBackend() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/plan"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

UserState sample_state() { return build_user_state(discretize(72, 14), "14:00", 22.0, "resting"); }

}  // namespace

TEST_SUITE("json_codec") {
  TEST_CASE("round trips") {
    const auto s = build_user_state(discretize(87, 20), "23:10", 24.5, "resting", {"erhu", "pad"});
    CHECK(codec::decode_user_state(codec::encode(s)) == s);

    const auto r = plan(s, std::nullopt, 4);
    const auto back = codec::decode_plan_result(codec::encode(r));
    CHECK(back.plan == r.plan);
    CHECK(back.trace == r.trace);
    CHECK(codec::encode(r)["trace"].size() == codec::trace_lines(r.trace).size());

    MelodyScore m;
    m.notes = {{0, 1, 60, 0.8}, {1, 0.5, 62, 0.0}, {1.5, 2.5, 67, 0.6}};
    m.beats_total = 4;
    m.bpm = 100;
    m.mode = "Gong";
    m.tonic_pc = 0;
    CHECK(codec::decode_melody(codec::encode(m)) == m);
  }

  TEST_CASE("decoders name the offending field") {
    auto j = codec::encode(sample_state());
    j["time_bucket"] = "morning";
    CHECK_THROWS_WITH_AS(codec::decode_user_state(j), doctest::Contains("time_bucket"), std::invalid_argument);
    json p = codec::encode(MusicPlan{});
    p.erase("tonic_pc");
    CHECK_THROWS_WITH_AS(codec::decode_plan(p), doctest::Contains("tonic_pc"), std::invalid_argument);
  }
}

TEST_SUITE("external_planner") {
  TEST_CASE("valid backend plan is used verbatim") {
    const json reply = {{"tempo_bpm", 100}, {"genre_mood", "folk"}, {"instrumentation", {"dizi"}},
                        {"mode", "Jue"}, {"tonic_pc", 4}, {"intensity", 0.6}};
    json received;
    MockBackend backend([&](const httplib::Request& req, httplib::Response& res) {
      received = json::parse(req.body);
      res.set_content(reply.dump(), "application/json");
    });
    const auto r = external_plan(sample_state(), backend.url(), 500);
    CHECK(r.plan == codec::decode_plan(reply));
    CHECK(r.trace.origin == PlanOrigin::kExternal);
    CHECK(received["hr_band"] == "normal");
  }

  TEST_CASE("malformed reply falls back to the rules") {
    MockBackend backend([](const httplib::Request&, httplib::Response& res) { res.set_content("{not json", "application/json"); });
    const auto r = external_plan(sample_state(), backend.url(), 500, std::nullopt, 3);
    CHECK(r.trace.origin == PlanOrigin::kRulesFallback);
    CHECK_FALSE(r.trace.notes.empty());
    CHECK(r.plan == plan(sample_state(), std::nullopt, 3).plan);
  }

  TEST_CASE("invalid plan and HTTP errors fall back") {
    MockBackend bad_plan([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"tempo_bpm":90,"genre_mood":"folk","instrumentation":["dizi"],"mode":"Dorian","tonic_pc":0,"intensity":0.5})",
                      "application/json");
    });
    CHECK(external_plan(sample_state(), bad_plan.url(), 500).trace.origin == PlanOrigin::kRulesFallback);
    MockBackend error([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    CHECK(external_plan(sample_state(), error.url(), 500).trace.origin == PlanOrigin::kRulesFallback);
  }

  TEST_CASE("stalling backend falls back within 600 ms") {
    MockBackend backend([](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1500));
      res.set_content("{}", "application/json");
    });
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = external_plan(sample_state(), backend.url(), 500);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.trace.origin == PlanOrigin::kRulesFallback);
    CHECK(ms < 600);
  }

  TEST_CASE("unreachable backend falls back, malformed URL is rejected") {
    CHECK(external_plan(sample_state(), "http://127.0.0.1:1/plan", 200).trace.origin == PlanOrigin::kRulesFallback);
    CHECK_THROWS_AS(external_plan(sample_state(), "not a url", 200), std::invalid_argument);
  }
}

TEST_SUITE("session_service") {
  TEST_CASE("rest, active, rest gives two plan changes with tempo up then down") {
    const auto run = run_session(scenario_config());
    const auto plans = of_type(run.events, "plan");
    REQUIRE(plans.size() == 3);
    CHECK(plans[0].body["initial"] == true);
    CHECK(plans[1].body["initial"] == false);
    CHECK(plans[1].body["tempo_bpm"].get<int>() > plans[0].body["tempo_bpm"].get<int>());
    CHECK(plans[2].body["tempo_bpm"].get<int>() < plans[1].body["tempo_bpm"].get<int>());
    CHECK(plans[1].body["mode"] == "Zhi");
    CHECK(plans[1].t_s > 60.0);
    CHECK(plans[2].t_s > 120.0);
    const auto end = run.events.back();
    CHECK(end.type == "end");
    CHECK(end.body["plan_changes"] == 2);
    CHECK(end.body["reason"] == "source_exhausted");
    CHECK(of_type(run.events, "segment").size() == 3);
    CHECK(run.segments.size() == 3);
    CHECK(run.events.front().type == "session_start");
  }

  TEST_CASE("constant vitals keep the initial plan") {
    SessionConfig c;
    c.source.script = {{70, 14, 120}};
    const auto run = run_session(c);
    CHECK(of_type(run.events, "plan").size() == 1);
    CHECK(run.events.back().body["plan_changes"] == 0);
  }

  TEST_CASE("duration limit ends the session early") {
    const auto run = run_session(scenario_config(), 50.0);
    CHECK(run.events.back().type == "end");
    CHECK(run.events.back().t_s <= 50.0);
  }

  TEST_CASE("replay regenerates byte-identical events and audio") {
    const auto first = run_session(scenario_config());
    std::stringstream log;
    for (const auto& e : first.events) log_append(log, e);
    const auto logged = replay(log);
    CHECK(logged == first.events);
    const auto again = rerun_from_log(logged);
    CHECK(serialize_events(again.events) == serialize_events(first.events));
    REQUIRE(again.segments.size() == first.segments.size());
    for (const auto& [id, seg] : first.segments) {
      CHECK(again.segments.at(id).wav == seg.wav);
      CHECK(sha256_hex(again.segments.at(id).wav) == seg.sha256);
    }
  }

  TEST_CASE("truncated final line is reported, earlier events survive") {
    const auto run = run_session(scenario_config(), 40.0);
    auto text = serialize_events(run.events);
    text.resize(text.size() - 10);
    std::istringstream in(text);
    const auto r = read_log(in);
    REQUIRE(r.error.has_value());
    CHECK(r.error->line() == run.events.size());
    CHECK(r.events.size() == run.events.size() - 1);
    std::istringstream again(text);
    CHECK_THROWS_AS(replay(again), LogFormatError);
  }

  TEST_CASE("frames carry the schema version") {
    const SessionEvent e{1.5, "vitals", {{"hr_bpm", 70}}};
    const auto f = to_frame(e);
    CHECK(f["v"] == 1);
    CHECK(from_frame(f) == e);
    CHECK_THROWS_AS(from_frame(json{{"t", 1}, {"type", "x"}}), std::invalid_argument);
  }

  TEST_CASE("live override drives the next plan") {
    SessionConfig c;
    c.source.kind = SourceKind::kLive;
    c.replan_interval_s = 10;
    Session s(c);
    s.start();
    std::optional<int> first_tempo;
    for (int i = 0; i < 3; ++i) {
      for (const auto& e : s.step()) {
        if (e.type == "plan" && !first_tempo) first_tempo = e.body["tempo_bpm"].get<int>();
      }
    }
    REQUIRE(first_tempo.has_value());
    s.override_vitals(95, 22);
    std::optional<SessionEvent> next;
    const double t_override = s.now_s();
    while (!next && s.now_s() <= t_override + c.replan_interval_s) {
      for (const auto& e : s.step()) {
        if (e.type == "plan") next = e;
      }
    }
    REQUIRE(next.has_value());
    CHECK(next->body["tempo_bpm"].get<int>() > *first_tempo);
    CHECK(next->body["reasoning"]["observations"][0]["reading"] == "elevated");
  }

  TEST_CASE("base64 and hashing helpers") {
    const std::vector<std::uint8_t> bytes = {'a', 'b', 'c'};
    CHECK(sha256_hex(bytes) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(base64_encode(bytes) == "YWJj");
    CHECK(base64_decode("YWJj") == bytes);
  }

  TEST_CASE("config round trip and validation") {
    auto c = scenario_config();
    c.planner_endpoint = "http://127.0.0.1:9/plan";
    CHECK(decode_config(encode_config(c)) == c);
    c.hop_s = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}
