// biomusic: command-line entry point for every pipeline stage and the
// evaluation experiments. Exit codes: 0 ok, 1 operation error, 2 usage error.

#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "biomusic/audio.h"
#include "biomusic/errors.h"
#include "biomusic/eval.h"
#include "biomusic/external_planner.h"
#include "biomusic/json_codec.h"
#include "biomusic/melody.h"
#include "biomusic/pentatonic.h"
#include "biomusic/planner.h"
#include "biomusic/radar_sim.h"
#include "biomusic/service.h"
#include "biomusic/session.h"
#include "biomusic/state_tracker.h"
#include "biomusic/vitals_dsp.h"

using namespace biomusic;
using nlohmann::json;

namespace {

std::string read_all(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

// Last non-empty line: lets a stage consume a JSON-lines stream.
json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
  }
  if (last.empty()) throw std::invalid_argument("no JSON input");
  return json::parse(last);
}

Estimator parse_estimator(const std::string& s) { return s == "music" ? Estimator::kSubspace : Estimator::kPeriodogram; }

// "hr:rr:duration[,hr:rr:duration...]"
std::vector<ScriptStep> parse_script(const std::string& text) {
  std::vector<ScriptStep> steps;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    ScriptStep s;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> s.hr_bpm >> c1 >> s.rr_rpm >> c2 >> s.duration_s) || c1 != ':' || c2 != ':') {
      throw std::invalid_argument("script steps look like hr:rr:seconds, got '" + item + "'");
    }
    steps.push_back(s);
  }
  if (steps.empty()) throw std::invalid_argument("empty script");
  return steps;
}

struct Options {
  std::uint64_t seed = 0;
  std::string out = "-";
  std::string in = "-";
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bio-adaptive pentatonic music pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  Options o;
  auto common = [&](CLI::App* sub, bool has_in) {
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", o.out, "Output path, '-' for stdout")->capture_default_str();
    if (has_in) sub->add_option("--in", o.in, "Input path, '-' for stdin")->capture_default_str();
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "Synthesize a radar phase trace (CSV t_s,value)");
  double sim_hr = 72, sim_rr = 15, sim_duration = 60, sim_fs = kDefaultSampleRateHz, sim_snr = kNoNoise,
         sim_drift = 0, sim_resp_amp = 4.0, sim_heart_amp = 0.5;
  bool sim_harmonic = false;
  std::string sim_script;
  sim->add_option("--hr", sim_hr, "Heart rate, bpm")->capture_default_str();
  sim->add_option("--rr", sim_rr, "Respiration rate, rpm")->capture_default_str();
  sim->add_option("--duration", sim_duration, "Seconds")->capture_default_str();
  sim->add_option("--fs", sim_fs, "Sample rate, Hz")->capture_default_str();
  sim->add_option("--snr", sim_snr, "SNR in dB (omit for a clean trace)");
  sim->add_option("--drift", sim_drift, "Phase drift, rad/s")->capture_default_str();
  sim->add_option("--resp-amp", sim_resp_amp, "Chest displacement from breathing, mm")->capture_default_str();
  sim->add_option("--heart-amp", sim_heart_amp, "Chest displacement from heartbeat, mm")->capture_default_str();
  sim->add_flag("--harmonic", sim_harmonic, "Add the respiration second harmonic");
  sim->add_option("--script", sim_script, "Piecewise vitals hr:rr:seconds[,...]; overrides --hr/--rr/--duration");
  common(sim, false);

  // vitals
  auto* vit = app.add_subcommand("vitals", "Estimate heart and respiration rate per window (JSON lines)");
  double vit_window = kDefaultWindowS, vit_hop = 5.0;
  std::string vit_est = "fft";
  vit->add_option("--window", vit_window, "Window, s")->capture_default_str();
  vit->add_option("--hop", vit_hop, "Hop, s")->capture_default_str();
  vit->add_option("--estimator", vit_est, "fft or music")->check(CLI::IsMember({"fft", "music"}))->capture_default_str();
  common(vit, true);

  // plan
  auto* pl = app.add_subcommand("plan", "Plan music parameters from vitals and context");
  std::optional<double> pl_hr, pl_rr;
  std::string pl_time = "12:00", pl_status = "resting", pl_endpoint;
  double pl_temp = 22.0;
  int pl_timeout = kDefaultExternalTimeoutMs;
  std::vector<std::string> pl_prev;
  pl->add_option("--hr", pl_hr, "Heart rate, bpm (otherwise read from --in vitals JSON lines)");
  pl->add_option("--rr", pl_rr, "Respiration rate, rpm");
  pl->add_option("--time", pl_time, "Clock time HH:MM")->capture_default_str();
  pl->add_option("--temp", pl_temp, "Temperature, C")->capture_default_str();
  pl->add_option("--status", pl_status, "User status tag")->capture_default_str();
  pl->add_option("--prev-instruments", pl_prev, "Previous instrumentation, lead first");
  pl->add_option("--endpoint", pl_endpoint, "External planner URL (POST); rules when omitted");
  pl->add_option("--timeout-ms", pl_timeout, "External planner timeout")->capture_default_str();
  common(pl, true);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a melody from a plan (melody JSON)");
  int gen_bars = kDefaultBars;
  std::string gen_cond = "embedded";
  double gen_bias = kDefaultSoftBias;
  gen->add_option("--bars", gen_bars, "Bars")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--condition", gen_cond, "embedded, soft or none")
      ->check(CLI::IsMember({"embedded", "soft", "none"}))
      ->capture_default_str();
  gen->add_option("--bias", gen_bias, "Soft-label bias weight")->capture_default_str();
  common(gen, true);

  // render
  auto* ren = app.add_subcommand("render", "Render melody JSON to a 44.1 kHz PCM16 WAV");
  std::string ren_inst = "guzheng";
  std::optional<int> ren_tempo;
  ren->add_option("--instrument", ren_inst, "Lead instrument timbre")->capture_default_str();
  ren->add_option("--tempo", ren_tempo, "Override the melody's BPM");
  common(ren, true);

  // classify
  auto* cls = app.add_subcommand("classify", "Classify the pentatonic mode and tonic of a melody");
  common(cls, true);

  // session
  auto* ses = app.add_subcommand("session", "Run a closed-loop session offline (JSONL event log)");
  std::string ses_script = "60:15:60,95:22:60,60:15:60", ses_csv, ses_config, ses_segments, ses_mix, ses_verify,
              ses_time = "15:00", ses_status = "resting", ses_est = "fft", ses_endpoint;
  double ses_duration = 0, ses_replan = 10, ses_window = 30, ses_hop = 5, ses_fade = 2, ses_temp = 22, ses_snr = 20;
  bool ses_inline = false;
  ses->add_option("--script", ses_script, "Scripted vitals hr:rr:seconds[,...]")->capture_default_str();
  ses->add_option("--csv", ses_csv, "Phase trace CSV instead of a script");
  ses->add_option("--config", ses_config, "Session config JSON (overrides the other session flags)");
  ses->add_option("--duration", ses_duration, "Stop after this many simulated seconds (0 = source length)");
  ses->add_option("--replan", ses_replan, "Replan interval, s")->capture_default_str();
  ses->add_option("--window", ses_window, "Vitals window, s")->capture_default_str();
  ses->add_option("--hop", ses_hop, "Vitals hop, s")->capture_default_str();
  ses->add_option("--crossfade", ses_fade, "Segment crossfade, s")->capture_default_str();
  ses->add_option("--snr", ses_snr, "Scripted source SNR, dB")->capture_default_str();
  ses->add_option("--time", ses_time, "Clock time at session start")->capture_default_str();
  ses->add_option("--temp", ses_temp, "Temperature, C")->capture_default_str();
  ses->add_option("--status", ses_status, "User status tag")->capture_default_str();
  ses->add_option("--estimator", ses_est, "fft or music")->check(CLI::IsMember({"fft", "music"}))->capture_default_str();
  ses->add_option("--endpoint", ses_endpoint, "External planner URL");
  ses->add_flag("--inline-audio", ses_inline, "Embed base64 WAV in segment events");
  ses->add_option("--segments-dir", ses_segments, "Write segment WAVs here");
  ses->add_option("--mixdown", ses_mix, "Write the crossfaded session audio here");
  ses->add_option("--verify", ses_verify, "Re-run a logged session and compare byte for byte");
  common(ses, false);

  // serve
  auto* srv = app.add_subcommand("serve", "Serve /health, /segments/<id>.wav and WebSocket /session");
  std::string srv_addr = "127.0.0.1", srv_log;
  unsigned short srv_port = 8080;
  double srv_speed = 1.0;
  srv->add_option("--address", srv_addr, "Bind address")->capture_default_str();
  srv->add_option("--port", srv_port, "Port (0 = any free port)")->capture_default_str();
  srv->add_option("--speed", srv_speed, "Simulated seconds per wall second")->capture_default_str();
  srv->add_option("--log-dir", srv_log, "Write one JSONL log per session here");
  common(srv, false);

  // eval-tonal
  auto* et = app.add_subcommand("eval-tonal", "Tonal-conditioning ablation: embedded vs soft label vs none");
  TonalEvalOptions et_opts;
  et->add_option("--n", et_opts.n, "Melodies per condition")->check(CLI::Range(100, 1000000))->capture_default_str();
  et->add_option("--bars", et_opts.bars, "Bars per melody")->capture_default_str();
  et->add_option("--bias", et_opts.soft_bias, "Soft-label bias weight")->capture_default_str();
  common(et, false);
  o.seed = 7;

  // eval-vitals
  auto* ev = app.add_subcommand("eval-vitals", "Vitals error over the rate grid, clean and at 0 dB");
  std::string ev_est = "fft";
  ev->add_option("--estimator", ev_est, "fft or music")->check(CLI::IsMember({"fft", "music"}))->capture_default_str();
  common(ev, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sim) {
      PhaseSignal phase;
      if (!sim_script.empty()) {
        std::vector<VitalsSegment> segs;
        for (const auto& s : parse_script(sim_script)) {
          VitalsGroundTruth t;
          t.heart_freq_hz = s.hr_bpm / 60.0;
          t.resp_freq_hz = s.rr_rpm / 60.0;
          t.resp_amp_mm = sim_resp_amp;
          t.heart_amp_mm = sim_heart_amp;
          t.resp_harmonic = sim_harmonic;
          segs.push_back({t, s.duration_s});
        }
        phase = displacement_to_phase(synth_displacement(segs, sim_fs));
      } else {
        VitalsGroundTruth t;
        t.heart_freq_hz = sim_hr / 60.0;
        t.resp_freq_hz = sim_rr / 60.0;
        t.resp_amp_mm = sim_resp_amp;
        t.heart_amp_mm = sim_heart_amp;
        t.resp_harmonic = sim_harmonic;
        phase = displacement_to_phase(synth_displacement(t, sim_duration, sim_fs));
      }
      if (std::isfinite(sim_snr) || sim_drift != 0.0) phase = corrupt(phase, sim_snr, sim_drift, o.seed);
      std::ostringstream out;
      write_trace_csv(out, phase.samples, phase.sample_rate_hz);
      write_all(o.out, out.str());
    } else if (*vit) {
      std::istringstream in(read_all(o.in));
      const auto trace = read_trace_csv(in);
      PhaseSignal phase{trace.values, trace.sample_rate_hz};
      TrackOptions opts;
      opts.estimator = parse_estimator(vit_est);
      std::string out;
      for (const auto& v : track_vitals(phase, vit_window, vit_hop, opts)) out += codec::encode(v).dump() + "\n";
      write_all(o.out, out);
    } else if (*pl) {
      double hr = 0, rr = 0;
      if (pl_hr && pl_rr) {
        hr = *pl_hr;
        rr = *pl_rr;
      } else {
        const auto v = codec::decode_vitals(last_json_line(read_all(o.in)));
        hr = pl_hr.value_or(v.heart.rate_per_min);
        rr = pl_rr.value_or(v.resp.rate_per_min);
      }
      const auto state = build_user_state(discretize(hr, rr), pl_time, pl_temp, pl_status, pl_prev);
      const auto result = pl_endpoint.empty() ? plan(state, std::nullopt, o.seed)
                                              : external_plan(state, pl_endpoint, pl_timeout, std::nullopt, o.seed);
      auto j = codec::encode(result);
      j["prompt"] = render_prompt(result.plan);
      j["state"] = codec::encode(state);
      write_all(o.out, j.dump() + "\n");
    } else if (*gen) {
      const auto plan_json = last_json_line(read_all(o.in));
      const auto p = validate_plan(plan_json).plan;
      MelodyScore score;
      if (gen_cond == "embedded") {
        score = generate(p, tonal_embedding(p.mode, static_cast<std::size_t>(gen_bars * kBeatsPerBar * 2)), gen_bars, o.seed);
      } else if (gen_cond == "soft") {
        score = generate_soft(p, gen_bias, gen_bars, o.seed);
      } else {
        score = generate_unconditioned(p, gen_bars, o.seed);
      }
      write_all(o.out, codec::encode(score).dump() + "\n");
    } else if (*ren) {
      const auto score = codec::decode_melody(last_json_line(read_all(o.in)));
      Instrument inst{};
      if (!try_parse_instrument(ren_inst, inst)) throw std::invalid_argument("unknown instrument '" + ren_inst + "'");
      const auto clip = render(score, ren_tempo.value_or(score.bpm), timbre_for(inst));
      const auto wav = encode_wav(clip);
      write_all(o.out, std::string(wav.begin(), wav.end()));
    } else if (*cls) {
      const auto score = codec::decode_melody(last_json_line(read_all(o.in)));
      write_all(o.out, codec::encode(classify_mode(score)).dump() + "\n");
    } else if (*ses) {
      SessionConfig cfg;
      if (!ses_config.empty()) {
        cfg = decode_config(json::parse(read_all(ses_config)));
      } else {
        if (!ses_csv.empty()) {
          cfg.source.kind = SourceKind::kCsv;
          cfg.source.csv_path = ses_csv;
        } else {
          cfg.source.script = parse_script(ses_script);
          cfg.source.snr_db = ses_snr;
        }
        cfg.replan_interval_s = ses_replan;
        cfg.window_s = ses_window;
        cfg.hop_s = ses_hop;
        cfg.crossfade_s = ses_fade;
        cfg.seed = o.seed;
        cfg.estimator = parse_estimator(ses_est);
        cfg.context = {ClockTime::parse(ses_time), ses_temp, ses_status};
        cfg.inline_audio = ses_inline;
        if (!ses_endpoint.empty()) cfg.planner_endpoint = ses_endpoint;
      }
      if (!ses_verify.empty()) {
        const auto logged = replay(std::filesystem::path(ses_verify));
        const auto rerun = rerun_from_log(logged, ses_duration);
        const bool same = serialize_events(rerun.events) == serialize_events(logged);
        std::cout << (same ? "identical" : "DIFFERENT") << " (" << logged.size() << " events)\n";
        return same ? 0 : 1;
      }
      const auto run = run_session(cfg, ses_duration);
      write_all(o.out, serialize_events(run.events));
      if (!ses_segments.empty()) {
        std::filesystem::create_directories(ses_segments);
        for (const auto& [id, seg] : run.segments) {
          write_all((std::filesystem::path(ses_segments) / (id + ".wav")).string(), std::string(seg.wav.begin(), seg.wav.end()));
        }
      }
      if (!ses_mix.empty()) write_wav(mixdown(run), ses_mix);
    } else if (*srv) {
      ServiceOptions opts;
      opts.address = srv_addr;
      opts.port = srv_port;
      opts.speed = srv_speed;
      opts.base.source.kind = SourceKind::kLive;
      opts.base.seed = o.seed;
      if (!srv_log.empty()) opts.log_dir = srv_log;
      Service service(opts);
      const auto port = service.start();
      std::cerr << "serving on http://" << srv_addr << ":" << port << " (ws /session)\n";
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      int sig = 0;
      sigwait(&set, &sig);
      service.stop();
    } else if (*et) {
      et_opts.seed = o.seed;
      const auto rows = eval_tonal(et_opts);
      std::cout << format_table(rows);
      json j = json::array();
      for (const auto& r : rows) j.push_back(encode(r));
      if (o.out != "-") write_all(o.out, j.dump(2) + "\n");
    } else if (*ev) {
      VitalsEvalOptions opts;
      opts.seed = o.seed;
      opts.estimator = parse_estimator(ev_est);
      const auto r = eval_vitals(opts);
      std::cout << format_table(r);
      if (o.out != "-") write_all(o.out, encode(r).dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
