// Acceptance run: one PASS/FAIL line per headline criterion, with the measured
// numbers. Exit status is non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.h"

#include "biomusic/audio.h"
#include "biomusic/eval.h"
#include "biomusic/melody.h"
#include "biomusic/pentatonic.h"
#include "biomusic/planner.h"
#include "biomusic/session.h"
#include "biomusic/state_tracker.h"

using namespace biomusic;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  %-30s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), s);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome tonal_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  TonalEvalOptions o;
  o.n = 1000;
  o.seed = 7;
  const auto rows = eval_tonal(o);
  const double secs = elapsed_since(t0);
  const double emb = rows[0].accuracy(), soft = rows[1].accuracy(), none = rows[2].accuracy();
  const bool ok = emb >= 0.95 && none >= 0.12 && none <= 0.28 && soft - none >= 0.15 && emb - soft >= 0.15 &&
                  secs < 60.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "embedded=%.3f soft=%.3f unconditioned=%.3f", emb, soft, none);
  return {ok, buf};
}

Outcome vitals_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = eval_vitals(VitalsEvalOptions{});
  const double secs = elapsed_since(t0);
  const auto& clean = r.summary.at(0);
  const auto& noisy = r.summary.at(1);
  const bool ok = clean.max_resp_err_rpm <= 0.5 && clean.max_heart_err_bpm <= 1.0 && noisy.max_resp_err_rpm < 3.0 &&
                  noisy.max_heart_err_bpm < 5.0 && secs < 30.0;
  char buf[200];
  std::snprintf(buf, sizeof buf, "clean max %.3f rpm / %.3f bpm; 0 dB max %.3f rpm / %.3f bpm", clean.max_resp_err_rpm,
                clean.max_heart_err_bpm, noisy.max_resp_err_rpm, noisy.max_heart_err_bpm);
  return {ok, buf};
}

Outcome classifier_equivalence() {
  std::mt19937_64 rng(2024);
  std::size_t agree = 0, total = 0, covariant = 0, cov_total = 0;
  for (int i = 0; i < 10000; ++i) {
    MusicPlan p;
    p.mode = kAllModes[rng() % 5];
    p.tonic_pc = static_cast<int>(rng() % 12);
    p.intensity = static_cast<double>(rng() % 101) / 100.0;
    const auto s = generate(p, tonal_embedding(p.mode, 32), 4, rng());
    const auto fast = classify_mode(s);
    const auto slow = oracle::classify(s);
    ++total;
    if (mode_index(fast.mode) == slow.mode && fast.tonic_pc == slow.tonic) ++agree;
    if (i % 10 == 0) {
      for (int k = 0; k < 12; ++k) {
        auto t = s;
        for (auto& n : t.notes) n.pitch += k;
        const auto c = classify_mode(t);
        ++cov_total;
        if (c.mode == fast.mode && c.tonic_pc == (fast.tonic_pc + k) % 12) ++covariant;
      }
    }
  }
  std::ostringstream d;
  d << "oracle agreement " << agree << "/" << total << ", transposition " << covariant << "/" << cov_total;
  return {agree == total && covariant == cov_total, d.str()};
}

Outcome planner_suite() {
  const std::vector<HeartBand> hrs = {HeartBand::kLow, HeartBand::kNormal, HeartBand::kElevated, HeartBand::kHigh};
  const std::vector<RespBand> rrs = {RespBand::kSlow, RespBand::kNormal, RespBand::kFast};
  std::set<PentatonicMode> modes;
  bool deterministic = true, monotone = true;
  std::size_t states = 0;
  for (auto hr : hrs) {
    for (const char* clock : {"06:00", "12:00", "15:30", "19:00", "21:30", "23:10", "02:00"}) {
      for (double temp : {5.0, 15.0, 22.0, 28.0, 35.0}) {
        for (const char* status : {"resting", "working", "exercising", "walking"}) {
          int last = 0;
          for (auto rr : rrs) {
            const auto st = build_user_state({hr, rr}, clock, temp, status);
            for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
              const auto a = plan(st, std::nullopt, seed);
              const auto b = plan(st, std::nullopt, seed);
              deterministic &= a.plan == b.plan && a.trace == b.trace;
            }
            const auto r = plan(st, std::nullopt, 0);
            monotone &= r.plan.tempo_bpm >= last;
            last = r.plan.tempo_bpm;
            modes.insert(r.plan.mode);
            ++states;
          }
        }
      }
    }
  }
  const auto low = plan(build_user_state({HeartBand::kLow, RespBand::kSlow}, "14:00", 22.0, "resting"), std::nullopt, 0);
  const bool anchor_low = low.plan.mode == PentatonicMode::kGong && low.plan.genre_mood == Genre::kAmbient &&
                          low.plan.tempo_bpm <= 70;
  const auto fast = plan(build_user_state({HeartBand::kNormal, RespBand::kFast}, "14:00", 22.0, "resting"), std::nullopt, 0);
  const auto normal = plan(build_user_state({HeartBand::kNormal, RespBand::kNormal}, "14:00", 22.0, "resting"), std::nullopt, 0);
  const bool anchor_fast = fast.plan.mode == PentatonicMode::kZhi && fast.plan.genre_mood == Genre::kPercussive &&
                           fast.plan.tempo_bpm > normal.plan.tempo_bpm;
  const auto night = plan(build_user_state(discretize(87, 14), "23:10", 22.0, "resting"), std::nullopt, 0);
  const bool anchor_night = night.trace.intent == Intent::kSleepTransition && tempo_word(night.plan.tempo_bpm) == "moderate" &&
                            (night.plan.genre_mood == Genre::kLullaby || night.plan.genre_mood == Genre::kAmbient ||
                             night.plan.genre_mood == Genre::kClassical);
  std::ostringstream d;
  d << states << " states; deterministic=" << deterministic << " monotone=" << monotone << " modes=" << modes.size()
    << " anchors=" << anchor_low << anchor_fast << anchor_night;
  return {deterministic && monotone && modes.size() == 5 && anchor_low && anchor_fast && anchor_night, d.str()};
}

Outcome audio_contract() {
  bool wav_ok = true;
  double worst_pitch = 0.0, worst_tempo = 0.0;
  // A4 on every melodic timbre.
  for (auto t : {Timbre::kPluck, Timbre::kBowed, Timbre::kPad, Timbre::kFlute}) {
    MelodyScore s;
    s.notes.push_back({0.0, 2.0, 69, 0.8});
    s.beats_total = 2.0;
    const auto clip = render(s, 60, t);
    const std::vector<double> x(clip.samples.begin(), clip.samples.begin() + kAudioSampleRate);
    worst_pitch = std::max(worst_pitch, std::abs(oracle::dft_peak(x, kAudioSampleRate, 400.0, 480.0, 0.05) - 440.0));
  }
  // 8-bar renders across leads and tempi.
  std::mt19937_64 rng(8);
  for (auto lead : {Instrument::kErhu, Instrument::kGuzheng, Instrument::kDizi, Instrument::kPad, Instrument::kStrings,
                    Instrument::kPercussion}) {
    for (int tempo : {44, 60, 76, 92, 120, 128, 160, 180}) {
      MusicPlan p;
      p.tempo_bpm = tempo;
      p.instrumentation = {lead};
      p.mode = kAllModes[rng() % 5];
      p.tonic_pc = static_cast<int>(rng() % 12);
      p.intensity = 0.5;
      const auto clip = render(generate(p, tonal_embedding(p.mode, 64), 8, rng()), p);
      const auto bytes = encode_wav(clip);
      const auto back = decode_wav(bytes);
      wav_ok &= back.sample_rate_hz == 44100 && back.channels == 1 && back.samples.size() == clip.samples.size() &&
                bytes.size() == 44 + 2 * clip.samples.size();
      const auto peak = beat_period_peak(clip, tempo);
      worst_tempo = std::max(worst_tempo, peak ? std::abs(peak->bpm - tempo) : 1e9);
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "wav=%s A4 error %.3f Hz, beat-period error max %.2f BPM", wav_ok ? "ok" : "bad",
                worst_pitch, worst_tempo);
  return {wav_ok && worst_pitch <= 1.0 && worst_tempo <= 2.0, buf};
}

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  SessionConfig c;
  c.seed = 1;
  c.source.script = {{60, 15, 60}, {95, 22, 60, 6.0, 0.6}, {60, 15, 60}};
  const auto run = run_session(c);
  std::vector<SessionEvent> plans;
  for (const auto& e : run.events) {
    if (e.type == "plan") plans.push_back(e);
  }
  const std::size_t changes = plans.empty() ? 0 : plans.size() - 1;
  bool shape = changes == 2;
  if (shape) {
    const int t0b = plans[0].body["tempo_bpm"], t1b = plans[1].body["tempo_bpm"], t2b = plans[2].body["tempo_bpm"];
    shape = t1b > t0b && t2b < t1b && plans[1].body["mode"] == "Zhi";
  }
  std::stringstream log;
  for (const auto& e : run.events) log_append(log, e);
  const auto rerun = rerun_from_log(replay(log));
  bool identical = serialize_events(rerun.events) == serialize_events(run.events) &&
                   rerun.segments.size() == run.segments.size();
  for (const auto& [id, seg] : run.segments) {
    identical &= rerun.segments.count(id) && sha256_hex(rerun.segments.at(id).wav) == seg.sha256;
  }
  const double secs = elapsed_since(t0);
  std::ostringstream d;
  d << "plan changes=" << changes;
  for (const auto& p : plans) d << " [" << p.body["mode"].get<std::string>() << " " << p.body["tempo_bpm"] << "]";
  d << " replay=" << (identical ? "identical" : "differs");
  return {shape && identical && secs < 20.0, d.str()};
}

}  // namespace

int main() {
  run("tonal-ablation-ordering", tonal_ordering);
  run("vitals-accuracy", vitals_accuracy);
  run("classifier-oracle-equivalence", classifier_equivalence);
  run("planner-suite", planner_suite);
  run("audio-contract", audio_contract);
  run("end-to-end-scenario", end_to_end);
  std::printf("%s: %d failing\n", failures ? "FAILED" : "ALL PASS", failures);
  return failures ? 1 : 0;
}
