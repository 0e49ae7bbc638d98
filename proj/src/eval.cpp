#include "biomusic/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "biomusic/melody.h"
#include "biomusic/radar_sim.h"

namespace biomusic {

namespace {

std::uint64_t sample_seed(std::uint64_t seed, std::size_t i) {
  std::uint64_t x = seed ^ (0xA5A5A5A5ULL + 0x9e3779b97f4a7c15ULL * (i + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::kEmbedded: return "embedded";
    case Condition::kSoftLabel: return "soft_label";
    case Condition::kUnconditioned: return "unconditioned";
  }
  return "embedded";
}

std::vector<EvalReport> eval_tonal(const TonalEvalOptions& o) {
  if (o.n < 1) throw std::invalid_argument("n must be positive");
  std::vector<EvalReport> rows = {{Condition::kEmbedded}, {Condition::kSoftLabel}, {Condition::kUnconditioned}};
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<int> mode_dist(0, 4);
  std::uniform_int_distribution<int> tonic_dist(0, 11);
  const auto steps = static_cast<std::size_t>(o.bars * kBeatsPerBar * 2);

  for (std::size_t i = 0; i < o.n; ++i) {
    MusicPlan plan;
    plan.mode = kAllModes[static_cast<std::size_t>(mode_dist(rng))];
    plan.tonic_pc = tonic_dist(rng);
    plan.tempo_bpm = o.tempo_bpm;
    plan.intensity = o.intensity;
    const auto seed = sample_seed(o.seed, i);

    const MelodyScore scores[3] = {
        generate(plan, tonal_embedding(plan.mode, steps), o.bars, seed),
        generate_soft(plan, o.soft_bias, o.bars, seed),
        generate_unconditioned(plan, o.bars, seed),
    };
    for (std::size_t c = 0; c < 3; ++c) {
      const auto got = classify_mode(scores[c]);
      auto& r = rows[c];
      ++r.n;
      r.confusion[mode_index(plan.mode)][mode_index(got.mode)]++;
      if (got.mode == plan.mode) {
        ++r.correct;
        if (got.tonic_pc == plan.tonic_pc) ++r.exact;
      }
    }
  }
  return rows;
}

nlohmann::json encode(const EvalReport& r) {
  nlohmann::json confusion = nlohmann::json::object();
  for (std::size_t t = 0; t < 5; ++t) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t p = 0; p < 5; ++p) row[std::string(to_string(kAllModes[p]))] = r.confusion[t][p];
    confusion[std::string(to_string(kAllModes[t]))] = row;
  }
  return {{"condition", to_string(r.condition)},
          {"n", r.n},
          {"correct", r.correct},
          {"accuracy", r.accuracy()},
          {"mode_and_tonic_correct", r.exact},
          {"confusion", confusion}};
}

std::string format_table(const std::vector<EvalReport>& rows) {
  std::string out = "condition        n      accuracy  mode+tonic\n";
  for (const auto& r : rows) {
    std::string name(to_string(r.condition));
    name.resize(16, ' ');
    std::string n = std::to_string(r.n);
    n.resize(7, ' ');
    out += name + n + fmt("%-10.3f", r.accuracy()) +
           fmt("%.3f", r.n ? static_cast<double>(r.exact) / static_cast<double>(r.n) : 0.0) + "\n";
  }
  return out;
}

VitalsEvalResult eval_vitals(const VitalsEvalOptions& o) {
  for (double f : o.resp_hz) {
    if (f < kRespBandLowHz || f > kRespBandHighHz) throw std::invalid_argument("respiration rate outside band");
  }
  for (double f : o.heart_hz) {
    if (f < kHeartBandLowHz || f > kHeartBandHighHz) throw std::invalid_argument("heart rate outside band");
  }
  VitalsEvalResult result;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
  TrackOptions track;
  track.estimator = o.estimator;

  for (double snr : o.snr_db) {
    VitalsSummary sum;
    sum.snr_db = snr;
    std::size_t count = 0;
    for (double fr : o.resp_hz) {
      for (double fh : o.heart_hz) {
        VitalsGroundTruth truth;
        truth.resp_freq_hz = fr;
        truth.heart_freq_hz = fh;
        truth.resp_amp_mm = o.resp_amp_mm;
        truth.heart_amp_mm = o.heart_amp_mm;
        truth.resp_phase_rad = phase(rng);
        truth.heart_phase_rad = phase(rng);
        const bool noisy = std::isfinite(snr);
        truth.resp_harmonic = noisy;
        auto signal = displacement_to_phase(synth_displacement(truth, o.duration_s));
        if (noisy) signal = corrupt(signal, snr, 0.0, rng());

        VitalsCell cell{fr, fh, snr, 0.0, 0.0};
        for (const auto& est : track_vitals(signal, o.window_s, o.hop_s, track)) {
          cell.max_resp_err_rpm = std::max(cell.max_resp_err_rpm, std::abs(est.resp.rate_per_min - 60.0 * fr));
          cell.max_heart_err_bpm = std::max(cell.max_heart_err_bpm, std::abs(est.heart.rate_per_min - 60.0 * fh));
        }
        sum.max_resp_err_rpm = std::max(sum.max_resp_err_rpm, cell.max_resp_err_rpm);
        sum.max_heart_err_bpm = std::max(sum.max_heart_err_bpm, cell.max_heart_err_bpm);
        sum.mean_resp_err_rpm += cell.max_resp_err_rpm;
        sum.mean_heart_err_bpm += cell.max_heart_err_bpm;
        ++count;
        result.cells.push_back(cell);
      }
    }
    if (count) {
      sum.mean_resp_err_rpm /= static_cast<double>(count);
      sum.mean_heart_err_bpm /= static_cast<double>(count);
    }
    result.summary.push_back(sum);
  }
  return result;
}

nlohmann::json encode(const VitalsEvalResult& r) {
  auto snr_json = [](double snr) { return std::isfinite(snr) ? nlohmann::json(snr) : nlohmann::json("clean"); };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"resp_hz", c.resp_hz},
                     {"heart_hz", c.heart_hz},
                     {"snr_db", snr_json(c.snr_db)},
                     {"max_resp_err_rpm", c.max_resp_err_rpm},
                     {"max_heart_err_bpm", c.max_heart_err_bpm}});
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : r.summary) {
    summary.push_back({{"snr_db", snr_json(s.snr_db)},
                       {"max_resp_err_rpm", s.max_resp_err_rpm},
                       {"mean_resp_err_rpm", s.mean_resp_err_rpm},
                       {"max_heart_err_bpm", s.max_heart_err_bpm},
                       {"mean_heart_err_bpm", s.mean_heart_err_bpm}});
  }
  return {{"cells", cells}, {"summary", summary}};
}

std::string format_table(const VitalsEvalResult& r) {
  std::string out = "snr      max_rr_err  mean_rr_err  max_hr_err  mean_hr_err\n";
  for (const auto& s : r.summary) {
    std::string snr = std::isfinite(s.snr_db) ? fmt("%.1f dB", s.snr_db) : "clean";
    snr.resize(9, ' ');
    out += snr + fmt("%-12.3f", s.max_resp_err_rpm) + fmt("%-13.3f", s.mean_resp_err_rpm) +
           fmt("%-12.3f", s.max_heart_err_bpm) + fmt("%.3f", s.mean_heart_err_bpm) + "\n";
  }
  return out;
}

}  // namespace biomusic
