#include <set>

#include "doctest.h"

#include "biomusic/errors.h"
#include "biomusic/planner.h"
#include "biomusic/state_tracker.h"

using namespace biomusic;
using nlohmann::json;

namespace {

UserState state(HeartBand hr, RespBand rr, const char* clock = "14:00", double temp = 22.0,
                const char* status = "resting") {
  return build_user_state({hr, rr}, clock, temp, status);
}

const std::vector<HeartBand> kHeart = {HeartBand::kLow, HeartBand::kNormal, HeartBand::kElevated, HeartBand::kHigh};
const std::vector<RespBand> kResp = {RespBand::kSlow, RespBand::kNormal, RespBand::kFast};
const std::vector<const char*> kClocks = {"07:00", "13:00", "19:30", "23:10"};
const std::vector<double> kTemps = {10.0, 22.0, 32.0};
const std::vector<const char*> kStatuses = {"resting", "working", "exercising"};

}  // namespace

TEST_SUITE("state_tracker") {
  TEST_CASE("heart and respiration bands") {
    CHECK(discretize(87, 14).hr_band == HeartBand::kElevated);
    CHECK(heart_band(79, HeartBand::kElevated) == HeartBand::kElevated);
    CHECK(heart_band(76, HeartBand::kElevated) == HeartBand::kNormal);
    CHECK(heart_band(40) == HeartBand::kLow);
    CHECK(resp_band(8) == RespBand::kSlow);
    CHECK(resp_band(14) == RespBand::kNormal);
    CHECK(resp_band(22) == RespBand::kFast);
    CHECK(heart_band(105) == HeartBand::kHigh);
  }

  TEST_CASE("hysteresis needs the margin to switch back") {
    VitalsEstimate v;
    v.heart.rate_per_min = 79;
    v.resp.rate_per_min = 17.5;
    const auto t = discretize(v, VitalTokens{HeartBand::kElevated, RespBand::kFast});
    CHECK(t.hr_band == HeartBand::kElevated);
    CHECK(t.rr_band == RespBand::kFast);
    CHECK(discretize(v).rr_band == RespBand::kNormal);
  }

  TEST_CASE("time buckets are half-open") {
    CHECK(time_bucket(ClockTime::parse("23:10")) == TimeBucket::kLateNight);
    CHECK(time_bucket(ClockTime::parse("05:00")) == TimeBucket::kMorning);
    CHECK(time_bucket(ClockTime::parse("04:59")) == TimeBucket::kLateNight);
    CHECK(time_bucket(ClockTime::parse("18:00")) == TimeBucket::kEvening);
    CHECK(time_bucket(ClockTime::parse("17:59")) == TimeBucket::kDay);
  }

  TEST_CASE("malformed clock text is rejected") {
    for (const char* bad : {"24:00", "7:30", "12:60", "ab:cd", ""}) {
      CHECK_THROWS_AS(build_user_state({}, bad, 22.0, "resting"), std::invalid_argument);
    }
  }
}

TEST_SUITE("planner_agent") {
  TEST_CASE("paper anchor: low arousal gives Gong, slow, ambient") {
    const auto r = plan(state(HeartBand::kLow, RespBand::kSlow), std::nullopt, 1);
    CHECK(r.plan.mode == PentatonicMode::kGong);
    CHECK(r.plan.tempo_bpm <= 70);
    CHECK(r.plan.genre_mood == Genre::kAmbient);
    CHECK((r.plan.lead() == Instrument::kErhu || r.plan.lead() == Instrument::kPad || r.plan.lead() == Instrument::kGuzheng));
  }

  TEST_CASE("paper anchor: fast breathing gives Zhi, percussive, faster") {
    const auto fast = plan(state(HeartBand::kNormal, RespBand::kFast), std::nullopt, 1);
    const auto normal = plan(state(HeartBand::kNormal, RespBand::kNormal), std::nullopt, 1);
    CHECK(fast.plan.mode == PentatonicMode::kZhi);
    CHECK(fast.plan.genre_mood == Genre::kPercussive);
    CHECK(fast.plan.tempo_bpm > normal.plan.tempo_bpm);
    const auto& inst = fast.plan.instrumentation;
    CHECK(std::find(inst.begin(), inst.end(), Instrument::kPercussion) != inst.end());
  }

  TEST_CASE("paper anchor: late night with elevated heart rate calms at a moderate tempo") {
    const auto s = build_user_state(discretize(87, 14), "23:10", 22.0, "resting");
    const auto r = plan(s, std::nullopt, 1);
    CHECK(r.trace.intent == Intent::kSleepTransition);
    CHECK((r.plan.genre_mood == Genre::kLullaby || r.plan.genre_mood == Genre::kClassical ||
           r.plan.genre_mood == Genre::kAmbient));
    CHECK(tempo_word(r.plan.tempo_bpm) == "moderate");
  }

  TEST_CASE("deterministic, complete trace, tempo monotone in respiration, every mode reachable") {
    std::set<PentatonicMode> modes;
    for (auto hr : kHeart) {
      for (const char* clock : kClocks) {
        for (double temp : kTemps) {
          for (const char* status : kStatuses) {
            int last = 0;
            for (auto rr : kResp) {
              const auto s = state(hr, rr, clock, temp, status);
              const auto a = plan(s, std::nullopt, 9);
              const auto b = plan(s, std::nullopt, 9);
              CHECK(a.plan == b.plan);
              CHECK(a.trace == b.trace);
              CHECK(a.plan.valid());
              CHECK(a.trace.complete());
              CHECK(a.plan.tempo_bpm >= last);
              last = a.plan.tempo_bpm;
              modes.insert(a.plan.mode);
            }
          }
        }
      }
    }
    CHECK(modes.size() == 5);
  }

  TEST_CASE("tonic follows the previous plan and the seed otherwise") {
    const auto s = state(HeartBand::kNormal, RespBand::kNormal);
    MusicPlan prev;
    prev.tonic_pc = 5;
    CHECK(plan(s, prev, 123).plan.tonic_pc == 5);
    std::set<int> tonics;
    for (std::uint64_t seed = 0; seed < 64; ++seed) tonics.insert(plan(s, std::nullopt, seed).plan.tonic_pc);
    CHECK(tonics.size() > 6);
  }

  TEST_CASE("previous lead instrument is kept when the row allows it") {
    auto s = state(HeartBand::kNormal, RespBand::kNormal);
    s.prev_instrumentation = {"guzheng"};
    CHECK(plan(s, std::nullopt, 0).plan.lead() == Instrument::kGuzheng);
  }

  TEST_CASE("prompt rendering") {
    MusicPlan p;
    p.tempo_bpm = 60;
    p.genre_mood = Genre::kClassical;
    p.instrumentation = {Instrument::kErhu};
    p.mode = PentatonicMode::kGong;
    CHECK(render_prompt(p) == "slow erhu melody (style: classical) at 60 BPM for meditation, Gong mode");
    CHECK(tempo_word(150) == "fast");
    CHECK(tempo_word(69) == "slow");
    CHECK(tempo_word(70) == "moderate");
    CHECK(tempo_word(110) == "moderate");
    CHECK(tempo_word(111) == "fast");
    p.tempo_bpm = 150;
    p.genre_mood = Genre::kPercussive;
    p.instrumentation = {Instrument::kPercussion, Instrument::kDizi};
    p.mode = PentatonicMode::kZhi;
    CHECK(render_prompt(p).rfind("fast ", 0) == 0);
  }

  TEST_CASE("prompt render and parse round trip over the vocabulary") {
    const std::vector<Genre> genres = {Genre::kAmbient, Genre::kClassical, Genre::kFolk,
                                       Genre::kPercussive, Genre::kEnergizing, Genre::kLullaby};
    const std::vector<Instrument> insts = {Instrument::kErhu, Instrument::kGuzheng, Instrument::kDizi,
                                           Instrument::kPad, Instrument::kStrings, Instrument::kPercussion};
    for (auto g : genres) {
      for (auto m : kAllModes) {
        for (auto lead : insts) {
          for (int tempo : {40, 69, 70, 110, 111, 180}) {
            for (std::size_t extra = 0; extra < 3; ++extra) {
              MusicPlan p;
              p.tempo_bpm = tempo;
              p.genre_mood = g;
              p.mode = m;
              p.instrumentation = {lead};
              for (std::size_t k = 1; k <= extra; ++k) p.instrumentation.push_back(insts[(static_cast<std::size_t>(lead) + k) % insts.size()]);
              const auto f = parse_prompt(render_prompt(p));
              CHECK(f == PromptFields{tempo, p.instrumentation, g, m});
            }
          }
        }
      }
    }
  }

  TEST_CASE("plan validation") {
    const json good = {{"tempo_bpm", 92}, {"genre_mood", "folk"}, {"instrumentation", {"dizi", "guzheng"}},
                       {"mode", "Shang"}, {"tonic_pc", 2}, {"intensity", 0.5}};
    const auto v = validate_plan(good);
    CHECK(v.plan.tempo_bpm == 92);
    CHECK(v.plan.mode == PentatonicMode::kShang);
    CHECK(v.warnings.empty());
    CHECK_FALSE(v.tempo_clamped);

    auto dorian = good;
    dorian["mode"] = "Dorian";
    try {
      validate_plan(dorian);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::find(e.fields().begin(), e.fields().end(), "mode") != e.fields().end());
    }

    auto fast = good;
    fast["tempo_bpm"] = 300;
    const auto c = validate_plan(fast);
    CHECK(c.plan.tempo_bpm == 180);
    CHECK(c.tempo_clamped);
    CHECK_FALSE(c.warnings.empty());

    auto missing = good;
    missing.erase("genre_mood");
    CHECK_THROWS_AS(validate_plan(missing), ValidationError);
  }
}
