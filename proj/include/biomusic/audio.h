#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biomusic/planner.h"
#include "biomusic/score.h"

namespace biomusic {

inline constexpr int kAudioSampleRate = 44100;
inline constexpr double kNormalizedPeak = 0.9;
/// Tail appended after the last beat so the final note can ring out.
inline constexpr double kReleaseS = 0.5;

/// Interleaved PCM in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = kAudioSampleRate;
  int channels = 1;

  std::size_t frames() const noexcept {
    return channels > 0 ? samples.size() / static_cast<std::size_t>(channels) : 0;
  }
  double duration_s() const noexcept {
    return static_cast<double>(frames()) / static_cast<double>(sample_rate_hz);
  }
};

enum class Timbre { kPluck, kBowed, kPad, kFlute, kPercussion };

/// guzheng: pluck; erhu: bowed; pad, strings: pad; dizi: flute; percussion.
Timbre timbre_for(Instrument lead);

/// 12-TET, A4 = 440 Hz.
double pitch_to_hz(int pitch);

/// Renders the score with the timbre of the plan's lead instrument at the
/// plan's tempo, then peak-normalises to 0.9. Length is
/// beats_total * 60 / tempo + kReleaseS.
AudioClip render(const MelodyScore& score, const MusicPlan& plan);
AudioClip render(const MelodyScore& score, int tempo_bpm, Timbre timbre);

/// PCM16 little-endian RIFF/WAVE image.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

/// Throws IoError if the file cannot be written or read.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);
AudioClip read_wav(const std::filesystem::path& path);

/// Equal-power crossfade. Output length is len(a) + len(b) - overlap.
/// Throws std::invalid_argument on mismatched formats or an overlap longer
/// than either clip.
AudioClip crossfade(const AudioClip& a, const AudioClip& b, double overlap_s);

/// Autocorrelation of a spectral-flux onset envelope, normalised by the
/// envelope length. Lags are in envelope frames.
struct OnsetAutocorrelation {
  std::vector<double> acf;  // index = lag, 0..lag_max+1
  double frame_rate_hz = 0.0;
  std::size_t lag_min = 0;
  std::size_t lag_max = 0;

  double lag_to_bpm(double lag) const;
  /// Parabolic refinement around an integer lag.
  double refine(std::size_t lag) const;
};

OnsetAutocorrelation onset_autocorrelation(const AudioClip& clip, double min_bpm = 40.0,
                                           double max_bpm = 180.0);

struct BeatPeak {
  double bpm = 0.0;
  double strength = 0.0;  // autocorrelation at the peak
  double relative = 0.0;  // strength / zero-lag energy
};

/// Strongest local autocorrelation maximum within expected_bpm * (1 +/- search_fraction),
/// or nullopt when the envelope shows no periodicity there.
std::optional<BeatPeak> beat_period_peak(const AudioClip& clip, double expected_bpm,
                                         double search_fraction = 0.15);

/// Blind estimate: global autocorrelation maximum over the range. Metrical
/// levels (half / double tempo) are not disambiguated.
double estimate_tempo_bpm(const AudioClip& clip, double min_bpm = 40.0, double max_bpm = 180.0);

}  // namespace biomusic
