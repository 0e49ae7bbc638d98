#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "biomusic/score.h"

namespace biomusic {

/// The five Chinese pentatonic modes, in scale-degree order of the Gong
/// collection (degrees 1, 2, 3, 5, 6).
enum class PentatonicMode { kGong, kShang, kJue, kZhi, kYu };

inline constexpr std::array<PentatonicMode, 5> kAllModes = {
    PentatonicMode::kGong, PentatonicMode::kShang, PentatonicMode::kJue, PentatonicMode::kZhi,
    PentatonicMode::kYu};

/// Semitone offsets of the Gong collection from its tonic.
inline constexpr std::array<int, 5> kGongIntervals = {0, 2, 4, 7, 9};

using IntervalSet = std::array<int, 5>;
using PitchClassSet = std::array<int, 5>;

std::string_view to_string(PentatonicMode m);
/// Case-sensitive ("Gong", ..., "Yu"); throws std::invalid_argument otherwise.
PentatonicMode parse_mode(std::string_view name);
bool try_parse_mode(std::string_view name, PentatonicMode& out);

constexpr std::size_t mode_index(PentatonicMode m) { return static_cast<std::size_t>(m); }

struct ModeSpec {
  PentatonicMode mode = PentatonicMode::kGong;
  int tonic_pc = 0;
  IntervalSet intervals{};
};

/// Gong collection rotated to start on the mode's degree, re-rooted at 0.
IntervalSet mode_intervals(PentatonicMode mode);
ModeSpec mode_spec(PentatonicMode mode, int tonic_pc);

/// Pitch classes of the mode on the given tonic, in scale order.
PitchClassSet scale_pitch_classes(PentatonicMode mode, int tonic_pc);
bool in_scale(int pitch, PentatonicMode mode, int tonic_pc);

/// Tonic of the Gong collection that contains `mode` rooted on `tonic_pc`.
int collection_root(PentatonicMode mode, int tonic_pc);

/// No adjacent pitch classes one semitone apart, wrap-around included.
bool anhemitonic(const IntervalSet& intervals);

// ---------------------------------------------------------------------------
// Mode classification
// ---------------------------------------------------------------------------

inline constexpr double kLowConfidenceBelow = 0.6;

struct ModeClassification {
  PentatonicMode mode = PentatonicMode::kGong;
  int tonic_pc = 0;
  double confidence = 0.0;  // in-collection duration fraction
  bool low_confidence = false;
};

/// Duration-weighted pitch-class evidence used by the classifier. Weights are
/// integer ticks so hypothesis scores compare exactly.
struct PitchClassProfile {
  std::array<long long, 12> weight{};
  long long total = 0;
  int final_pc = 0;
  long long final_weight = 0;
  int longest_pc = 0;
  long long longest_weight = 0;
};

inline constexpr long long kTicksPerBeat = 960;

/// Ignores rests (velocity 0). Throws InsufficientDataError below four notes.
PitchClassProfile pitch_class_profile(const MelodyScore& score);

/// Hypothesis score: in-collection weight + tonic evidence, where tonic
/// evidence = histogram weight of the tonic + 2 x final-note weight (if the
/// final note is the tonic) + longest-note weight (if the longest note is the
/// tonic).
long long hypothesis_score(const PitchClassProfile& profile, PentatonicMode mode, int tonic_pc);

/// Best (mode, tonic) over all 60 hypotheses. Ties go to the lower tonic pitch
/// class, then to the earlier mode.
ModeClassification classify_mode(const MelodyScore& score);

// ---------------------------------------------------------------------------
// Tonal conditioning
// ---------------------------------------------------------------------------

using ModeEmbedding = std::array<double, 5>;

/// One-hot mode vector, conceptually tiled across every generation step.
struct TonalConditioning {
  ModeEmbedding embedding{};
  std::size_t steps = 1;
  bool tiled = true;

  /// Identical at every step.
  const ModeEmbedding& at(std::size_t step) const;
  std::vector<ModeEmbedding> materialize() const;
  PentatonicMode mode() const;
};

TonalConditioning tonal_embedding(PentatonicMode mode, std::size_t steps);

}  // namespace biomusic
