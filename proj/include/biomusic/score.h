#pragma once

#include <optional>
#include <string>
#include <vector>

namespace biomusic {

inline constexpr int kMinPitch = 36;
inline constexpr int kMaxPitch = 96;

/// One monophonic note. Pitch is a note number with middle C = 60.
struct NoteEvent {
  double onset_beats = 0.0;
  double duration_beats = 1.0;
  int pitch = 60;
  double velocity = 0.8;  // [0, 1]; zero marks a rest

  bool operator==(const NoteEvent&) const = default;
};

struct MelodyScore {
  std::vector<NoteEvent> notes;  // ordered by onset
  double beats_total = 0.0;
  int bpm = 90;
  // Target labels of the plan the score came from; empty for unconditioned output.
  std::optional<std::string> mode;
  std::optional<int> tonic_pc;

  bool operator==(const MelodyScore&) const = default;

  /// Ordered onsets, positive durations, pitches in range, no overlaps,
  /// and beats_total covering the last note.
  bool well_formed() const;
};

}  // namespace biomusic
