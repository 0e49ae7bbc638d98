#include "biomusic/melody.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace biomusic {

namespace {

constexpr int kScaleSteps = 11;    // 5 degrees x 2 octaves + the top tonic
constexpr int kChromaticSpan = 25; // two octaves, inclusive
constexpr int kChromaticBase = 60;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::generate_canonical<double, 53>(engine_); }

  template <typename Weights>
  std::size_t pick(const Weights& w) {
    double total = 0.0;
    for (double v : w) total += v;
    double u = uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (u < w[i]) return i;
      u -= w[i];
    }
    // Rounding fell off the end: last non-zero weight.
    for (std::size_t i = w.size(); i-- > 0;) {
      if (w[i] > 0.0) return i;
    }
    return 0;
  }

 private:
  std::mt19937_64 engine_;
};

struct Slot {
  double onset;
  double duration;
  bool phrase_end;  // one-beat note closing a 4-beat group
  bool cadence;     // phrase end that must land on the tonic
  bool final;
};

// Rhythm shared by all generators: each bar has three beats of quarters or
// eighth pairs and closes on a one-beat note; the final bar closes on a
// two-beat note instead.
std::vector<Slot> rhythm(int bars, double intensity, Rng& rng, bool cadences) {
  const double p_split = std::clamp(0.2 + 0.6 * intensity, 0.0, 1.0);
  std::vector<Slot> slots;
  for (int bar = 0; bar < bars; ++bar) {
    const double origin = bar * kBeatsPerBar;
    const bool last_bar = bar == bars - 1;
    const int free_beats = last_bar ? 2 : 3;
    for (int beat = 0; beat < free_beats; ++beat) {
      // A single bar needs enough notes for the classifier to work with.
      const bool split = bars == 1 || rng.uniform() < p_split;
      if (split) {
        slots.push_back({origin + beat, 0.5, false, false, false});
        slots.push_back({origin + beat + 0.5, 0.5, false, false, false});
      } else {
        slots.push_back({origin + beat, 1.0, false, false, false});
      }
    }
    if (last_bar) {
      slots.push_back({origin + 2.0, 2.0, true, cadences, true});
    } else {
      slots.push_back({origin + 3.0, 1.0, true, cadences && bar % 2 == 1, false});
    }
  }
  return slots;
}

double velocity_for(const Slot& s, double intensity) {
  double v = 0.55 + 0.3 * intensity;
  if (s.phrase_end) v += 0.1;
  return std::clamp(v, 0.05, 1.0);
}

// Step-size spread grows with intensity.
double leap_scale(double intensity, double base, double gain) {
  return base + gain * std::clamp(intensity, 0.0, 1.0);
}

void check_common(int bars, int tempo_bpm) {
  if (bars < 1) throw std::invalid_argument("bars must be at least 1");
  if (tempo_bpm < kMinTempoBpm || tempo_bpm > kMaxTempoBpm) {
    throw std::invalid_argument("tempo_bpm outside 40-180");
  }
}

MelodyScore chromatic_walk(int tempo_bpm, double intensity, int bars, std::uint64_t seed,
                           const std::array<double, 12>& pc_weight) {
  check_common(bars, tempo_bpm);
  Rng rng(mix_seed(seed, 0xC0FFEE));
  const auto slots = rhythm(bars, intensity, rng, false);
  const double lambda = leap_scale(intensity, 1.0, 4.0);

  auto pc_of = [](int idx) { return (kChromaticBase + idx) % 12; };

  std::array<double, kChromaticSpan> start{};
  for (int j = 0; j < kChromaticSpan; ++j) start[static_cast<std::size_t>(j)] = pc_weight[static_cast<std::size_t>(pc_of(j))];
  int idx = static_cast<int>(rng.pick(start));

  MelodyScore score;
  score.bpm = tempo_bpm;
  score.beats_total = bars * kBeatsPerBar;
  for (std::size_t n = 0; n < slots.size(); ++n) {
    if (n > 0) {
      std::array<double, kChromaticSpan> w{};
      for (int j = 0; j < kChromaticSpan; ++j) {
        const int step = std::abs(j - idx);
        if (step > 7) continue;
        const double shape = step == 0 ? 0.3 : std::exp(-static_cast<double>(step) / lambda);
        w[static_cast<std::size_t>(j)] = shape * pc_weight[static_cast<std::size_t>(pc_of(j))];
      }
      idx = static_cast<int>(rng.pick(w));
    }
    const auto& s = slots[n];
    score.notes.push_back({s.onset, s.duration, kChromaticBase + idx, velocity_for(s, intensity)});
  }
  return score;
}

}  // namespace

MelodyScore generate(const MusicPlan& plan, const TonalConditioning& cond, int bars,
                     std::uint64_t seed) {
  if (cond.mode() != plan.mode) {
    throw std::invalid_argument("conditioning mode does not match the plan's mode");
  }
  if (plan.tonic_pc < 0 || plan.tonic_pc > 11) throw std::invalid_argument("tonic_pc must be in 0..11");
  check_common(bars, plan.tempo_bpm);

  Rng rng(mix_seed(seed, 0x5CA1E));
  const auto slots = rhythm(bars, plan.intensity, rng, true);
  const auto intervals = mode_intervals(plan.mode);
  const int base = 60 + plan.tonic_pc - (plan.tonic_pc > 6 ? 12 : 0);
  auto pitch_of = [&](int i) { return base + 12 * (i / 5) + intervals[static_cast<std::size_t>(i % 5)]; };
  auto nearest_tonic = [](int i) {
    const std::array<int, 3> tonics = {0, 5, 10};
    return *std::min_element(tonics.begin(), tonics.end(),
                             [&](int a, int b) { return std::abs(a - i) < std::abs(b - i); });
  };
  const double lambda = leap_scale(plan.intensity, 0.5, 2.5);

  std::vector<int> degree(slots.size());
  int idx = 5;
  for (std::size_t n = 0; n < slots.size(); ++n) {
    if (slots[n].cadence) {
      idx = nearest_tonic(idx);
    } else if (n > 0) {
      std::array<double, kScaleSteps> w{};
      for (int j = 0; j < kScaleSteps; ++j) {
        const int step = std::abs(j - idx);
        if (step > 4) continue;
        w[static_cast<std::size_t>(j)] = step == 0 ? 0.3 : std::exp(-static_cast<double>(step) / lambda);
      }
      idx = static_cast<int>(rng.pick(w));
    }
    degree[n] = idx;
  }

  // Every scale degree must sound at least once, otherwise the collection is
  // ambiguous. Missing degrees replace the closest free (non-cadential) note.
  for (int d = 0; d < 5; ++d) {
    const bool present = std::any_of(degree.begin(), degree.end(), [&](int i) { return i % 5 == d; });
    if (present) continue;
    std::size_t best = slots.size();
    int best_target = 0, best_dist = 1 << 20;
    for (std::size_t n = 0; n < slots.size(); ++n) {
      if (slots[n].cadence) continue;
      // Only take notes whose own degree occurs elsewhere too.
      const int own = degree[n] % 5;
      const auto count = std::count_if(degree.begin(), degree.end(), [&](int i) { return i % 5 == own; });
      if (count < 2) continue;
      for (int target = d; target < kScaleSteps; target += 5) {
        const int dist = std::abs(target - degree[n]);
        if (dist < best_dist) {
          best_dist = dist;
          best = n;
          best_target = target;
        }
      }
    }
    if (best < slots.size()) degree[best] = best_target;
  }

  MelodyScore score;
  score.bpm = plan.tempo_bpm;
  score.beats_total = bars * kBeatsPerBar;
  score.mode = std::string(to_string(plan.mode));
  score.tonic_pc = plan.tonic_pc;
  for (std::size_t n = 0; n < slots.size(); ++n) {
    const auto& s = slots[n];
    score.notes.push_back({s.onset, s.duration, pitch_of(degree[n]), velocity_for(s, plan.intensity)});
  }
  return score;
}

MelodyScore generate_unconditioned(int tempo_bpm, double intensity, int bars, std::uint64_t seed) {
  std::array<double, 12> flat;
  flat.fill(1.0);
  return chromatic_walk(tempo_bpm, intensity, bars, seed, flat);
}

MelodyScore generate_unconditioned(const MusicPlan& plan, int bars, std::uint64_t seed) {
  return generate_unconditioned(plan.tempo_bpm, plan.intensity, bars, seed);
}

MelodyScore generate_soft(const MusicPlan& plan, double bias_weight, int bars, std::uint64_t seed,
                          const SoftBiasGains& gains) {
  if (!(bias_weight >= 0.0 && bias_weight <= 1.0)) {
    throw std::invalid_argument("bias_weight must lie in [0, 1]");
  }
  std::array<double, 12> w;
  w.fill(1.0);
  for (int pc : scale_pitch_classes(plan.mode, plan.tonic_pc)) {
    w[static_cast<std::size_t>(pc)] *= 1.0 + bias_weight * gains.in_scale_gain;
  }
  w[static_cast<std::size_t>(plan.tonic_pc)] *= 1.0 + bias_weight * gains.tonic_gain;
  auto score = chromatic_walk(plan.tempo_bpm, plan.intensity, bars, seed, w);
  score.mode = std::string(to_string(plan.mode));
  score.tonic_pc = plan.tonic_pc;
  return score;
}

double mean_abs_interval(const MelodyScore& score) {
  double sum = 0.0;
  int count = 0;
  const NoteEvent* prev = nullptr;
  for (const auto& n : score.notes) {
    if (n.velocity <= 0.0) continue;
    if (prev) {
      sum += std::abs(n.pitch - prev->pitch);
      ++count;
    }
    prev = &n;
  }
  return count ? sum / count : 0.0;
}

}  // namespace biomusic
