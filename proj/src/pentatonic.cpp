#include "biomusic/pentatonic.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "biomusic/errors.h"

namespace biomusic {

namespace {

constexpr std::array<std::string_view, 5> kModeNames = {"Gong", "Shang", "Jue", "Zhi", "Yu"};

int wrap_pc(int pc) { return ((pc % 12) + 12) % 12; }

}  // namespace

bool MelodyScore::well_formed() const {
  double cursor = 0.0;
  for (const auto& n : notes) {
    if (n.onset_beats < 0.0 || !(n.duration_beats > 0.0)) return false;
    if (n.pitch < kMinPitch || n.pitch > kMaxPitch) return false;
    if (n.onset_beats + 1e-9 < cursor) return false;
    cursor = n.onset_beats + n.duration_beats;
  }
  return beats_total + 1e-9 >= cursor;
}

std::string_view to_string(PentatonicMode m) { return kModeNames[mode_index(m)]; }

bool try_parse_mode(std::string_view name, PentatonicMode& out) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == name) {
      out = kAllModes[i];
      return true;
    }
  }
  return false;
}

PentatonicMode parse_mode(std::string_view name) {
  PentatonicMode m{};
  if (!try_parse_mode(name, m)) {
    throw std::invalid_argument("unknown pentatonic mode '" + std::string(name) + "'");
  }
  return m;
}

IntervalSet mode_intervals(PentatonicMode mode) {
  const std::size_t start = mode_index(mode);
  IntervalSet out{};
  for (std::size_t i = 0; i < 5; ++i) {
    out[i] = wrap_pc(kGongIntervals[(start + i) % 5] - kGongIntervals[start]);
  }
  return out;
}

ModeSpec mode_spec(PentatonicMode mode, int tonic_pc) {
  if (tonic_pc < 0 || tonic_pc > 11) throw std::invalid_argument("tonic_pc must be in 0..11");
  return {mode, tonic_pc, mode_intervals(mode)};
}

PitchClassSet scale_pitch_classes(PentatonicMode mode, int tonic_pc) {
  if (tonic_pc < 0 || tonic_pc > 11) throw std::invalid_argument("tonic_pc must be in 0..11");
  PitchClassSet out{};
  const auto iv = mode_intervals(mode);
  for (std::size_t i = 0; i < 5; ++i) out[i] = (tonic_pc + iv[i]) % 12;
  return out;
}

bool in_scale(int pitch, PentatonicMode mode, int tonic_pc) {
  const auto pcs = scale_pitch_classes(mode, tonic_pc);
  return std::find(pcs.begin(), pcs.end(), wrap_pc(pitch)) != pcs.end();
}

int collection_root(PentatonicMode mode, int tonic_pc) {
  return wrap_pc(tonic_pc - kGongIntervals[mode_index(mode)]);
}

bool anhemitonic(const IntervalSet& intervals) {
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const int next = i + 1 < intervals.size() ? intervals[i + 1] : intervals[0] + 12;
    if (next - intervals[i] == 1) return false;
  }
  return true;
}

PitchClassProfile pitch_class_profile(const MelodyScore& score) {
  PitchClassProfile p;
  std::size_t sounding = 0;
  for (const auto& n : score.notes) {
    if (n.velocity <= 0.0) continue;
    ++sounding;
    const auto w = static_cast<long long>(std::llround(n.duration_beats * kTicksPerBeat));
    const int pc = wrap_pc(n.pitch);
    p.weight[static_cast<std::size_t>(pc)] += w;
    p.total += w;
    p.final_pc = pc;
    p.final_weight = w;
    if (w >= p.longest_weight) {  // ties resolve to the later note
      p.longest_weight = w;
      p.longest_pc = pc;
    }
  }
  if (sounding < 4) throw InsufficientDataError("mode classification needs at least 4 sounding notes");
  if (p.total <= 0) throw InsufficientDataError("score has no sounding duration");
  return p;
}

long long hypothesis_score(const PitchClassProfile& profile, PentatonicMode mode, int tonic_pc) {
  const int root = collection_root(mode, tonic_pc);
  long long in_collection = 0;
  for (int iv : kGongIntervals) in_collection += profile.weight[static_cast<std::size_t>((root + iv) % 12)];
  long long tonic = profile.weight[static_cast<std::size_t>(tonic_pc)];
  if (profile.final_pc == tonic_pc) tonic += 2 * profile.final_weight;
  if (profile.longest_pc == tonic_pc) tonic += profile.longest_weight;
  return in_collection + tonic;
}

ModeClassification classify_mode(const MelodyScore& score) {
  const auto p = pitch_class_profile(score);

  // Per-pitch-class tonic evidence and per-root collection weight, computed
  // once and combined per hypothesis.
  std::array<long long, 12> tonic_evidence = p.weight;
  tonic_evidence[static_cast<std::size_t>(p.final_pc)] += 2 * p.final_weight;
  tonic_evidence[static_cast<std::size_t>(p.longest_pc)] += p.longest_weight;
  std::array<long long, 12> collection{};
  for (int root = 0; root < 12; ++root) {
    for (int iv : kGongIntervals) collection[static_cast<std::size_t>(root)] += p.weight[static_cast<std::size_t>((root + iv) % 12)];
  }

  long long best = -1;
  int best_tonic = 0;
  std::size_t best_mode = 0;
  int best_root = 0;
  // Tonic-major scan order gives the documented tie-break for free: strictly
  // greater scores replace, so the lowest tonic and earliest mode win ties.
  for (int tonic = 0; tonic < 12; ++tonic) {
    for (std::size_t m = 0; m < 5; ++m) {
      const int root = wrap_pc(tonic - kGongIntervals[m]);
      const long long s = collection[static_cast<std::size_t>(root)] + tonic_evidence[static_cast<std::size_t>(tonic)];
      if (s > best) {
        best = s;
        best_tonic = tonic;
        best_mode = m;
        best_root = root;
      }
    }
  }

  ModeClassification out;
  out.mode = kAllModes[best_mode];
  out.tonic_pc = best_tonic;
  out.confidence = static_cast<double>(collection[static_cast<std::size_t>(best_root)]) /
                   static_cast<double>(p.total);
  out.low_confidence = out.confidence < kLowConfidenceBelow;
  return out;
}

const ModeEmbedding& TonalConditioning::at(std::size_t step) const {
  if (step >= steps) throw std::out_of_range("conditioning step out of range");
  return embedding;
}

std::vector<ModeEmbedding> TonalConditioning::materialize() const {
  return std::vector<ModeEmbedding>(steps, embedding);
}

PentatonicMode TonalConditioning::mode() const {
  const auto it = std::max_element(embedding.begin(), embedding.end());
  return kAllModes[static_cast<std::size_t>(it - embedding.begin())];
}

TonalConditioning tonal_embedding(PentatonicMode mode, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("steps must be at least 1");
  TonalConditioning c;
  c.embedding[mode_index(mode)] = 1.0;
  c.steps = steps;
  c.tiled = true;
  return c;
}

}  // namespace biomusic
