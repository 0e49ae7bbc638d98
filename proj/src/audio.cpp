#include "biomusic/audio.h"

#include <algorithm>
#include <complex>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "biomusic/errors.h"

namespace biomusic {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kSr = kAudioSampleRate;
constexpr double kLocalMeanS = 0.1;

// Deterministic white noise in [-1, 1).
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : state_(seed * 0x9e3779b97f4a7c15ULL + 1) {}
  double next() {
    state_ ^= state_ << 13;
    state_ ^= state_ >> 7;
    state_ ^= state_ << 17;
    return static_cast<double>(state_ >> 11) * (2.0 / 9007199254740992.0) - 1.0;
  }

 private:
  std::uint64_t state_;
};

// Linear attack, linear decay towards `sustain` over the note, linear release
// from note-off.
double envelope(std::size_t i, std::size_t note_len, double attack_s, double release_s,
                double sustain = 1.0) {
  const double t = static_cast<double>(i) / kSr;
  const double off = static_cast<double>(note_len) / kSr;
  const double attack = std::min(attack_s, 0.4 * off);
  double g = 1.0;
  if (t < attack) {
    g = t / attack;
  } else if (t < off) {
    g = 1.0 - (1.0 - sustain) * (t - attack) / (off - attack);
  } else {
    g = sustain * std::max(0.0, 1.0 - (t - off) / release_s);
  }
  return g;
}

void voice_pluck(std::span<double> out, double freq, std::size_t note_len, std::uint64_t seed) {
  // Karplus-Strong: delay line + two-point average (0.5 sample) + first-order
  // allpass for the fractional remainder of the period.
  const double period = kSr / freq - 0.5;
  auto n = static_cast<std::size_t>(std::floor(period - 0.1));
  n = std::max<std::size_t>(n, 2);
  const double frac = period - static_cast<double>(n);
  const double c = (1.0 - frac) / (1.0 + frac);

  std::vector<double> line(n);
  Noise noise(seed);
  double mean = 0.0;
  for (auto& v : line) {
    v = noise.next();
    mean += v;
  }
  mean /= static_cast<double>(n);
  for (auto& v : line) v -= mean;

  const double decay = 0.998;
  std::size_t pos = 0;
  double prev = 0.0, ap_x1 = 0.0, ap_y1 = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = line[pos];
    const double avg = 0.5 * (x + prev) * decay;
    prev = x;
    const double y = c * avg + ap_x1 - c * ap_y1;
    ap_x1 = avg;
    ap_y1 = y;
    line[pos] = y;
    pos = (pos + 1) % n;
    out[i] += x * envelope(i, note_len, 0.0, kReleaseS * 0.8);
  }
}

void voice_bowed(std::span<double> out, double freq, std::size_t note_len) {
  // PolyBLEP sawtooth through a one-pole low-pass, delayed vibrato.
  const double cutoff = std::min(6.0 * freq, 8000.0);
  const double alpha = 1.0 - std::exp(-kTwoPi * cutoff / kSr);
  double phase = 0.0, lp = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / kSr;
    const double vib_depth = t > 0.15 ? 0.0025 * std::min(1.0, (t - 0.15) / 0.2) : 0.0;
    const double f = freq * (1.0 + vib_depth * std::sin(kTwoPi * 5.5 * t));
    const double dt = f / kSr;
    double saw = 2.0 * phase - 1.0;
    if (phase < dt) {
      const double p = phase / dt;
      saw -= p + p - p * p - 1.0;
    } else if (phase > 1.0 - dt) {
      const double p = (phase - 1.0) / dt;
      saw -= p * p + p + p + 1.0;
    }
    phase += dt;
    if (phase >= 1.0) phase -= 1.0;
    lp += alpha * (saw - lp);
    out[i] += 0.6 * lp * envelope(i, note_len, 0.06, 0.25);
  }
}

void voice_additive(std::span<double> out, double freq, std::size_t note_len,
                    std::span<const double> partials, double attack_s, double release_s,
                    double sustain, double breath, std::uint64_t seed) {
  Noise noise(seed);
  double breath_lp = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / kSr;
    double v = 0.0;
    for (std::size_t h = 0; h < partials.size(); ++h) {
      const double fh = freq * static_cast<double>(h + 1);
      if (fh >= kSr / 2.0) break;
      v += partials[h] * std::sin(kTwoPi * fh * t);
    }
    if (breath > 0.0) {
      breath_lp += 0.05 * (noise.next() - breath_lp);
      v += breath * breath_lp;
    }
    out[i] += 0.5 * v * envelope(i, note_len, attack_s, release_s, sustain);
  }
}

void voice_percussion(std::span<double> out, double freq, std::uint64_t seed) {
  // Short noise burst exciting a two-pole resonator at the note frequency.
  Noise noise(seed);
  const double r = std::exp(-kPi * 12.0 / kSr);
  const double a1 = 2.0 * r * std::cos(kTwoPi * freq / kSr);
  const double a2 = -r * r;
  const auto burst = static_cast<std::size_t>(0.02 * kSr);
  double y1 = 0.0, y2 = 0.0;
  const double gain = (1.0 - r) * 4.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = i < burst ? noise.next() * (1.0 - static_cast<double>(i) / burst) : 0.0;
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    out[i] += y;
  }
}

void write_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void write_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xFF));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

}  // namespace

Timbre timbre_for(Instrument lead) {
  switch (lead) {
    case Instrument::kGuzheng: return Timbre::kPluck;
    case Instrument::kErhu: return Timbre::kBowed;
    case Instrument::kPad:
    case Instrument::kStrings: return Timbre::kPad;
    case Instrument::kDizi: return Timbre::kFlute;
    case Instrument::kPercussion: return Timbre::kPercussion;
  }
  return Timbre::kPad;
}

double pitch_to_hz(int pitch) { return 440.0 * std::pow(2.0, (pitch - 69) / 12.0); }

AudioClip render(const MelodyScore& score, const MusicPlan& plan) {
  if (plan.tempo_bpm < kMinTempoBpm || plan.tempo_bpm > kMaxTempoBpm) {
    throw std::invalid_argument("plan tempo outside 40-180 BPM");
  }
  return render(score, plan.tempo_bpm, timbre_for(plan.lead()));
}

AudioClip render(const MelodyScore& score, int tempo_bpm, Timbre timbre) {
  if (tempo_bpm < kMinTempoBpm || tempo_bpm > kMaxTempoBpm) {
    throw std::invalid_argument("tempo outside 40-180 BPM");
  }
  AudioClip clip;
  if (score.notes.empty()) return clip;

  const double spb = 60.0 / tempo_bpm;
  double beats = score.beats_total;
  for (const auto& n : score.notes) beats = std::max(beats, n.onset_beats + n.duration_beats);
  const auto total = static_cast<std::size_t>(std::llround((beats * spb + kReleaseS) * kSr));
  std::vector<double> mix(total, 0.0);
  const auto release_len = static_cast<std::size_t>(std::llround(kReleaseS * kSr));

  static constexpr double kPadPartials[] = {1.0, 0.25, 0.111, 0.0625, 0.04, 0.028};
  static constexpr double kFlutePartials[] = {1.0, 0.3, 0.1};

  for (std::size_t k = 0; k < score.notes.size(); ++k) {
    const auto& n = score.notes[k];
    if (n.velocity <= 0.0) continue;
    const auto start = static_cast<std::size_t>(std::llround(n.onset_beats * spb * kSr));
    const auto note_len = static_cast<std::size_t>(std::llround(n.duration_beats * spb * kSr));
    if (start >= total) continue;
    const std::size_t len = std::min(note_len + release_len, total - start);
    std::vector<double> voice(len, 0.0);
    const double f = pitch_to_hz(n.pitch);
    const std::uint64_t seed = (static_cast<std::uint64_t>(k) << 8) ^ static_cast<std::uint64_t>(n.pitch);
    switch (timbre) {
      case Timbre::kPluck: voice_pluck(voice, f, note_len, seed); break;
      case Timbre::kBowed: voice_bowed(voice, f, note_len); break;
      case Timbre::kPad: voice_additive(voice, f, note_len, kPadPartials, 0.15, kReleaseS, 0.7, 0.0, seed); break;
      case Timbre::kFlute: voice_additive(voice, f, note_len, kFlutePartials, 0.04, 0.2, 0.9, 0.05, seed); break;
      case Timbre::kPercussion: voice_percussion(voice, f, seed); break;
    }
    for (std::size_t i = 0; i < len; ++i) mix[start + i] += n.velocity * voice[i];
  }

  double peak = 0.0;
  for (double v : mix) {
    if (!std::isfinite(v)) throw std::runtime_error("synthesis produced a non-finite sample");
    peak = std::max(peak, std::abs(v));
  }
  const double scale = peak > 0.0 ? kNormalizedPeak / peak : 0.0;
  clip.samples.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    clip.samples[i] = static_cast<float>(std::clamp(mix[i] * scale, -1.0, 1.0));
  }
  return clip;
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  if (clip.channels < 1 || clip.channels > 2) throw std::invalid_argument("clip must be mono or stereo");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> b;
  b.reserve(44 + data_bytes);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  write_u32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  write_u32(b, 16);
  write_u16(b, 1);  // PCM
  write_u16(b, static_cast<std::uint16_t>(clip.channels));
  write_u32(b, static_cast<std::uint32_t>(clip.sample_rate_hz));
  write_u32(b, static_cast<std::uint32_t>(clip.sample_rate_hz * clip.channels * 2));
  write_u16(b, static_cast<std::uint16_t>(clip.channels * 2));
  write_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  write_u32(b, data_bytes);
  for (float s : clip.samples) {
    const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    write_u16(b, static_cast<std::uint16_t>(q));
  }
  return b;
}

AudioClip decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file");
  }
  AudioClip clip;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + size > b.size()) throw IoError("truncated WAV chunk");
    if (std::memcmp(b.data() + at, "fmt ", 4) == 0) {
      if (size < 16 || read_u16(b, body) != 1 || read_u16(b, body + 14) != 16) {
        throw IoError("only PCM16 WAV is supported");
      }
      clip.channels = read_u16(b, body + 2);
      clip.sample_rate_hz = static_cast<int>(read_u32(b, body + 4));
      have_fmt = true;
    } else if (std::memcmp(b.data() + at, "data", 4) == 0) {
      if (!have_fmt) throw IoError("WAV data chunk precedes fmt chunk");
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto q = static_cast<std::int16_t>(read_u16(b, body + 2 * i));
        clip.samples[i] = static_cast<float>(q / 32767.0);
      }
      return clip;
    }
    at = body + size + (size & 1);
  }
  throw IoError("WAV file has no data chunk");
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

AudioClip crossfade(const AudioClip& a, const AudioClip& b, double overlap_s) {
  if (a.sample_rate_hz != b.sample_rate_hz || a.channels != b.channels) {
    throw std::invalid_argument("crossfade needs clips with the same rate and channel count");
  }
  if (!(overlap_s >= 0.0)) throw std::invalid_argument("overlap must be non-negative");
  const auto ch = static_cast<std::size_t>(a.channels);
  const auto overlap = static_cast<std::size_t>(std::llround(overlap_s * a.sample_rate_hz));
  if (overlap > a.frames() || overlap > b.frames()) {
    throw std::invalid_argument("overlap longer than one of the clips");
  }

  AudioClip out;
  out.sample_rate_hz = a.sample_rate_hz;
  out.channels = a.channels;
  const std::size_t head = a.frames() - overlap;
  out.samples.reserve((a.frames() + b.frames() - overlap) * ch);
  out.samples.insert(out.samples.end(), a.samples.begin(), a.samples.begin() + static_cast<std::ptrdiff_t>(head * ch));
  for (std::size_t i = 0; i < overlap; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(overlap);
    const double ga = std::cos(0.5 * kPi * u);
    const double gb = std::sin(0.5 * kPi * u);
    for (std::size_t c = 0; c < ch; ++c) {
      const double v = ga * a.samples[(head + i) * ch + c] + gb * b.samples[i * ch + c];
      out.samples.push_back(static_cast<float>(std::clamp(v, -1.0, 1.0)));
    }
  }
  out.samples.insert(out.samples.end(), b.samples.begin() + static_cast<std::ptrdiff_t>(overlap * ch), b.samples.end());
  return out;
}

OnsetAutocorrelation onset_autocorrelation(const AudioClip& clip, double min_bpm, double max_bpm) {
  if (!(min_bpm > 0.0 && min_bpm < max_bpm)) throw std::invalid_argument("bad tempo search range");
  constexpr std::size_t kHop = 256;
  constexpr std::size_t kFrame = 1024;
  const auto ch = static_cast<std::size_t>(std::max(1, clip.channels));
  const std::size_t frames = clip.frames();
  if (frames < kFrame * 4) throw InsufficientDataError("clip too short for tempo analysis");

  // Half-wave rectified log-magnitude spectral flux; pitch changes register
  // as onsets even for legato timbres.
  Eigen::FFT<double> fft;
  std::vector<double> window(kFrame), frame(kFrame);
  for (std::size_t i = 0; i < kFrame; ++i) window[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / kFrame);
  std::vector<std::complex<double>> spec;
  std::vector<double> prev_mag(kFrame / 2 + 1, 0.0), mag(kFrame / 2 + 1);
  std::vector<double> onset;
  for (std::size_t start = 0; start + kFrame <= frames; start += kHop) {
    for (std::size_t i = 0; i < kFrame; ++i) {
      double v = 0.0;
      for (std::size_t c = 0; c < ch; ++c) v += clip.samples[(start + i) * ch + c];
      frame[i] = window[i] * v;
    }
    fft.fwd(spec, frame);
    double flux = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
      mag[k] = std::log1p(100.0 * std::abs(spec[k]));
      flux += std::max(0.0, mag[k] - prev_mag[k]);
    }
    onset.push_back(start == 0 ? 0.0 : flux);
    prev_mag.swap(mag);
  }
  OnsetAutocorrelation out;
  out.frame_rate_hz = static_cast<double>(clip.sample_rate_hz) / kHop;

  // Adaptive threshold: keep only what rises above the local mean, so slow
  // loudness and register changes do not masquerade as periodicity.
  const auto half = static_cast<std::size_t>(std::lround(kLocalMeanS * out.frame_rate_hz));
  std::vector<double> prefix(onset.size() + 1, 0.0);
  for (std::size_t i = 0; i < onset.size(); ++i) prefix[i + 1] = prefix[i] + onset[i];
  std::vector<double> peaks(onset.size());
  for (std::size_t i = 0; i < onset.size(); ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(onset.size(), i + half + 1);
    const double local = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    peaks[i] = std::max(0.0, onset[i] - local);
  }
  double mean = 0.0;
  for (double v : peaks) mean += v;
  mean /= static_cast<double>(peaks.size());
  for (std::size_t i = 0; i < onset.size(); ++i) onset[i] = peaks[i] - mean;
  out.lag_min = static_cast<std::size_t>(std::floor(60.0 / max_bpm * out.frame_rate_hz));
  out.lag_max = std::min(onset.size() - 2,
                         static_cast<std::size_t>(std::ceil(60.0 / min_bpm * out.frame_rate_hz)));
  if (out.lag_min < 2 || out.lag_min >= out.lag_max) {
    throw InsufficientDataError("clip too short for the tempo range");
  }
  out.acf.assign(out.lag_max + 2, 0.0);
  for (std::size_t lag = 0; lag <= out.lag_max + 1; ++lag) {
    double s = 0.0;
    for (std::size_t i = lag; i < onset.size(); ++i) s += onset[i] * onset[i - lag];
    out.acf[lag] = s / static_cast<double>(onset.size());
  }
  return out;
}

double OnsetAutocorrelation::lag_to_bpm(double lag) const { return 60.0 * frame_rate_hz / lag; }

double OnsetAutocorrelation::refine(std::size_t lag) const {
  double refined = static_cast<double>(lag);
  if (lag == 0 || lag + 1 >= acf.size()) return refined;
  const double l = acf[lag - 1], c = acf[lag], r = acf[lag + 1];
  const double denom = l - 2.0 * c + r;
  if (denom < 0.0) refined += std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
  return refined;
}

std::optional<BeatPeak> beat_period_peak(const AudioClip& clip, double expected_bpm, double search_fraction) {
  if (!(expected_bpm > 0.0) || !(search_fraction > 0.0 && search_fraction < 1.0)) {
    throw std::invalid_argument("bad expected tempo or search fraction");
  }
  const auto ac = onset_autocorrelation(clip, expected_bpm * (1.0 - search_fraction) * 0.99,
                                        expected_bpm * (1.0 + search_fraction) * 1.01);
  const double centre = 60.0 * ac.frame_rate_hz / expected_bpm;
  const auto lo = static_cast<std::size_t>(std::max(1.0, std::floor(centre / (1.0 + search_fraction))));
  const auto hi = std::min(ac.lag_max, static_cast<std::size_t>(std::ceil(centre / (1.0 - search_fraction))));
  std::optional<BeatPeak> best;
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    const bool local_max = ac.acf[lag] > ac.acf[lag - 1] && ac.acf[lag] >= ac.acf[lag + 1];
    if (!local_max || ac.acf[lag] <= 0.0) continue;
    if (!best || ac.acf[lag] > best->strength) {
      best = BeatPeak{ac.lag_to_bpm(ac.refine(lag)), ac.acf[lag], ac.acf[lag] / ac.acf[0]};
    }
  }
  return best;
}

double estimate_tempo_bpm(const AudioClip& clip, double min_bpm, double max_bpm) {
  const auto ac = onset_autocorrelation(clip, min_bpm, max_bpm);
  std::size_t best = ac.lag_min;
  for (std::size_t l = ac.lag_min; l <= ac.lag_max; ++l) {
    if (ac.acf[l] > ac.acf[best]) best = l;
  }
  return ac.lag_to_bpm(ac.refine(best));
}

}  // namespace biomusic
