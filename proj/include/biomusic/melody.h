#pragma once

#include <cstdint>

#include "biomusic/pentatonic.h"
#include "biomusic/planner.h"
#include "biomusic/score.h"

namespace biomusic {

inline constexpr int kBeatsPerBar = 4;
inline constexpr int kDefaultBars = 4;

/// Gains of the soft (label-in-prompt) preference. In-scale pitches are
/// weighted by (1 + bias * in_scale_gain), tonic pitches additionally by
/// (1 + bias * tonic_gain).
struct SoftBiasGains {
  double in_scale_gain = 8.0;
  double tonic_gain = 10.0;
};

inline constexpr double kDefaultSoftBias = 0.5;

/// Hard-conditioned generation: a first-order random walk over the five scale
/// degrees across two octaves. Every bar is a 4-beat group closing on a
/// one-beat note; every second group closes on the tonic and the melody ends
/// on a two-beat tonic. Throws std::invalid_argument when the conditioning
/// mode differs from the plan's mode or bars < 1.
MelodyScore generate(const MusicPlan& plan, const TonalConditioning& cond, int bars,
                     std::uint64_t seed);

/// Chromatic walk with the same rhythm model and no tonal information.
MelodyScore generate_unconditioned(int tempo_bpm, double intensity, int bars, std::uint64_t seed);

/// Uses only the plan's tempo and intensity; mode and tonic are dropped.
MelodyScore generate_unconditioned(const MusicPlan& plan, int bars, std::uint64_t seed);

/// Chromatic walk with a multiplicative preference for the plan's scale.
/// bias_weight must lie in [0, 1); zero reproduces generate_unconditioned.
MelodyScore generate_soft(const MusicPlan& plan, double bias_weight, int bars, std::uint64_t seed,
                          const SoftBiasGains& gains = {});

/// Mean absolute interval between consecutive sounding notes, in semitones.
double mean_abs_interval(const MelodyScore& score);

}  // namespace biomusic
