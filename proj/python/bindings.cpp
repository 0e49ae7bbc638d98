// Python bindings. Structured values cross the boundary as JSON text; the
// biomusic package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <span>
#include <sstream>

#include "biomusic/audio.h"
#include "biomusic/errors.h"
#include "biomusic/eval.h"
#include "biomusic/json_codec.h"
#include "biomusic/melody.h"
#include "biomusic/pentatonic.h"
#include "biomusic/planner.h"
#include "biomusic/radar_sim.h"
#include "biomusic/session.h"
#include "biomusic/state_tracker.h"
#include "biomusic/vitals_dsp.h"

namespace py = pybind11;
using namespace biomusic;
using nlohmann::json;

namespace {

Estimator estimator_of(const std::string& name) {
  if (name == "fft") return Estimator::kPeriodogram;
  if (name == "music") return Estimator::kSubspace;
  throw std::invalid_argument("estimator must be 'fft' or 'music'");
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<double> simulate(double hr_bpm, double rr_rpm, double duration_s, double sample_rate_hz,
                             std::optional<double> snr_db, bool harmonic, double resp_amp_mm, double heart_amp_mm,
                             std::uint64_t seed) {
  VitalsGroundTruth t;
  t.heart_freq_hz = hr_bpm / 60.0;
  t.resp_freq_hz = rr_rpm / 60.0;
  t.resp_amp_mm = resp_amp_mm;
  t.heart_amp_mm = heart_amp_mm;
  t.resp_harmonic = harmonic;
  auto phase = displacement_to_phase(synth_displacement(t, duration_s, sample_rate_hz));
  if (snr_db) phase = corrupt(phase, *snr_db, 0.0, seed);
  return phase.samples;
}

std::string track(const std::vector<double>& samples, double sample_rate_hz, double window_s, double hop_s,
                  const std::string& estimator) {
  TrackOptions o;
  o.estimator = estimator_of(estimator);
  json out = json::array();
  for (const auto& v : track_vitals(PhaseSignal{samples, sample_rate_hz}, window_s, hop_s, o)) out.push_back(codec::encode(v));
  return out.dump();
}

std::string user_state(double hr_bpm, double rr_rpm, const std::string& time, double temp_c, const std::string& status,
                       const std::vector<std::string>& prev) {
  return codec::encode(build_user_state(discretize(hr_bpm, rr_rpm), std::string_view(time), temp_c, status, prev)).dump();
}

std::string plan_json(const std::string& state_json, std::uint64_t seed, std::optional<std::string> prev_plan_json) {
  const auto state = codec::decode_user_state(json::parse(state_json));
  std::optional<MusicPlan> prev;
  if (prev_plan_json) prev = codec::decode_plan(json::parse(*prev_plan_json));
  const auto r = plan(state, prev, seed);
  auto j = codec::encode(r);
  j["prompt"] = render_prompt(r.plan);
  return j.dump();
}

std::string validate(const std::string& candidate_json) {
  const auto v = validate_plan(json::parse(candidate_json));
  auto j = codec::encode(v.plan);
  j["tempo_clamped"] = v.tempo_clamped;
  j["warnings"] = v.warnings;
  return j.dump();
}

std::string generate_json(const std::string& plan_text, int bars, std::uint64_t seed, const std::string& condition,
                          double bias) {
  const auto p = validate_plan(json::parse(plan_text)).plan;
  MelodyScore s;
  if (condition == "embedded") {
    s = generate(p, tonal_embedding(p.mode, static_cast<std::size_t>(bars * kBeatsPerBar * 2)), bars, seed);
  } else if (condition == "soft") {
    s = generate_soft(p, bias, bars, seed);
  } else if (condition == "none") {
    s = generate_unconditioned(p, bars, seed);
  } else {
    throw std::invalid_argument("condition must be 'embedded', 'soft' or 'none'");
  }
  return codec::encode(s).dump();
}

std::string classify(const std::string& melody_json) {
  return codec::encode(classify_mode(codec::decode_melody(json::parse(melody_json)))).dump();
}

py::bytes render_wav(const std::string& melody_json, const std::string& instrument, std::optional<int> tempo_bpm) {
  const auto s = codec::decode_melody(json::parse(melody_json));
  Instrument inst{};
  if (!try_parse_instrument(instrument, inst)) throw std::invalid_argument("unknown instrument '" + instrument + "'");
  std::vector<std::uint8_t> wav;
  {
    py::gil_scoped_release release;
    wav = encode_wav(render(s, tempo_bpm.value_or(s.bpm), timbre_for(inst)));
  }
  return to_bytes(wav);
}

py::dict decode_wav_py(const py::bytes& data) {
  const std::string raw = data;
  const auto clip = decode_wav(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  py::dict d;
  d["sample_rate_hz"] = clip.sample_rate_hz;
  d["channels"] = clip.channels;
  d["samples"] = std::vector<float>(clip.samples.begin(), clip.samples.end());
  return d;
}

std::optional<double> beat_period(const py::bytes& data, double expected_bpm) {
  const std::string raw = data;
  const auto clip = decode_wav(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  const auto peak = beat_period_peak(clip, expected_bpm);
  if (!peak) return std::nullopt;
  return peak->bpm;
}

py::tuple session(const std::string& config_json, double duration_s) {
  SessionRun run;
  {
    py::gil_scoped_release release;
    run = run_session(decode_config(json::parse(config_json)), duration_s);
  }
  py::dict segs;
  for (const auto& [id, seg] : run.segments) segs[py::str(id)] = to_bytes(seg.wav);
  return py::make_tuple(serialize_events(run.events), segs);
}

std::string replay_log(const std::string& text) {
  std::istringstream in(text);
  return serialize_events(replay(in));
}

std::string eval_tonal_json(std::size_t n, std::uint64_t seed) {
  TonalEvalOptions o;
  o.n = n;
  o.seed = seed;
  std::vector<EvalReport> rows;
  {
    py::gil_scoped_release release;
    rows = eval_tonal(o);
  }
  json j = json::array();
  for (const auto& r : rows) j.push_back(encode(r));
  return j.dump();
}

std::string eval_vitals_json(const std::string& estimator, std::uint64_t seed) {
  VitalsEvalOptions o;
  o.estimator = estimator_of(estimator);
  o.seed = seed;
  VitalsEvalResult r;
  {
    py::gil_scoped_release release;
    r = eval_vitals(o);
  }
  return encode(r).dump();
}

}  // namespace

PYBIND11_MODULE(_biomusic, m) {
  m.doc() = "Bio-adaptive pentatonic music pipeline (native core)";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_ValueError);
  py::register_exception<NoPeakError>(m, "NoPeakError", PyExc_ValueError);
  py::register_exception<DegenerateSignalError>(m, "DegenerateSignalError", PyExc_ValueError);
  py::register_exception<LogFormatError>(m, "LogFormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("simulate", &simulate, py::arg("hr_bpm"), py::arg("rr_rpm"), py::arg("duration_s"),
        py::arg("sample_rate_hz") = kDefaultSampleRateHz, py::arg("snr_db") = py::none(), py::arg("harmonic") = false,
        py::arg("resp_amp_mm") = 4.0, py::arg("heart_amp_mm") = 0.5, py::arg("seed") = 0);
  m.def("track_vitals", &track, py::arg("samples"), py::arg("sample_rate_hz"), py::arg("window_s") = 30.0,
        py::arg("hop_s") = 5.0, py::arg("estimator") = "fft");
  m.def("user_state", &user_state, py::arg("hr_bpm"), py::arg("rr_rpm"), py::arg("time"), py::arg("temp_c") = 22.0,
        py::arg("status") = "resting", py::arg("prev_instruments") = std::vector<std::string>{});
  m.def("plan", &plan_json, py::arg("state"), py::arg("seed") = 0, py::arg("prev_plan") = py::none());
  m.def("validate_plan", &validate, py::arg("candidate"));
  m.def("generate", &generate_json, py::arg("plan"), py::arg("bars") = 4, py::arg("seed") = 0,
        py::arg("condition") = "embedded", py::arg("bias") = 0.5);
  m.def("classify", &classify, py::arg("melody"));
  m.def("render_wav", &render_wav, py::arg("melody"), py::arg("instrument") = "guzheng",
        py::arg("tempo_bpm") = py::none());
  m.def("decode_wav", &decode_wav_py, py::arg("data"));
  m.def("beat_period_bpm", &beat_period, py::arg("wav"), py::arg("expected_bpm"));
  m.def("run_session", &session, py::arg("config"), py::arg("duration_s") = 0.0);
  m.def("replay", &replay_log, py::arg("log_text"));
  m.def("eval_tonal", &eval_tonal_json, py::arg("n") = 1000, py::arg("seed") = 7);
  m.def("eval_vitals", &eval_vitals_json, py::arg("estimator") = "fft", py::arg("seed") = 7);
  m.def("default_session_config", [] { return encode_config(SessionConfig{}).dump(); });
}
