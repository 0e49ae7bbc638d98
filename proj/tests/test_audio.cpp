#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "oracles.h"

#include "biomusic/audio.h"
#include "biomusic/errors.h"
#include "biomusic/melody.h"

using namespace biomusic;

namespace {

MelodyScore single_note(int pitch, double beats) {
  MelodyScore s;
  s.notes.push_back({0.0, beats, pitch, 0.8});
  s.beats_total = beats;
  return s;
}

AudioClip sine(double freq, double seconds, double amp = 0.5) {
  AudioClip c;
  const auto n = static_cast<std::size_t>(seconds * kAudioSampleRate);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples.push_back(static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / kAudioSampleRate)));
  }
  return c;
}

std::uint32_t u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

TEST_SUITE("audio_synth") {
  TEST_CASE("clip length follows tempo plus the release tail") {
    const auto q = render(single_note(60, 1.0), 60, Timbre::kPad);
    CHECK(q.duration_s() == doctest::Approx(1.0 + kReleaseS).epsilon(0.01 / 1.5));
    MelodyScore eight;
    for (int i = 0; i < 8; ++i) eight.notes.push_back({double(i), 1.0, 60 + 2 * (i % 3), 0.8});
    eight.beats_total = 8;
    const auto e = render(eight, 120, Timbre::kPluck);
    CHECK(std::abs(e.duration_s() - (4.0 + kReleaseS)) <= 0.01);
    CHECK(render(MelodyScore{}, 90, Timbre::kPad).samples.empty());
    CHECK_THROWS_AS(render(single_note(60, 1), 300, Timbre::kPad), std::invalid_argument);
  }

  TEST_CASE("A4 sounds at 440 Hz for every timbre") {
    for (auto t : {Timbre::kPluck, Timbre::kBowed, Timbre::kPad, Timbre::kFlute}) {
      const auto clip = render(single_note(69, 2.0), 60, t);
      const std::vector<double> x(clip.samples.begin(), clip.samples.begin() + kAudioSampleRate);
      CHECK(std::abs(oracle::dft_peak(x, kAudioSampleRate, 400.0, 480.0, 0.1) - 440.0) <= 1.0);
      // And it is the strongest component in the audible range.
      const double at440 = oracle::dft_magnitude(x, kAudioSampleRate, 440.0);
      for (double f : {220.0, 660.0, 880.0, 1320.0}) CHECK(oracle::dft_magnitude(x, kAudioSampleRate, f) < at440);
    }
  }

  TEST_CASE("WAV layout and round trip") {
    const auto clip = sine(440.0, 1.0);
    const auto bytes = encode_wav(clip);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RIFF");
    CHECK(std::string(bytes.begin() + 8, bytes.begin() + 12) == "WAVE");
    CHECK(u32(bytes, 24) == 44100);           // sample rate
    CHECK((bytes[34] | (bytes[35] << 8)) == 16);  // bits per sample
    CHECK(u32(bytes, 40) == 88200);           // data chunk size
    const auto back = decode_wav(bytes);
    REQUIRE(back.samples.size() == clip.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < clip.samples.size(); ++i) worst = std::max(worst, double(std::abs(back.samples[i] - clip.samples[i])));
    CHECK(worst <= 1.0 / 32768.0);

    const auto empty = encode_wav(AudioClip{});
    CHECK(empty.size() == 44);
    CHECK(decode_wav(empty).samples.empty());

    const auto dir = std::filesystem::temp_directory_path() / "biomusic_audio_test";
    std::filesystem::create_directories(dir);
    write_wav(clip, dir / "a.wav");
    CHECK(read_wav(dir / "a.wav").samples == back.samples);
    CHECK_THROWS_AS(write_wav(clip, dir / "missing" / "x.wav"), IoError);
    std::vector<std::uint8_t> junk(50, 0);
    CHECK_THROWS_AS(decode_wav(junk), IoError);
  }

  TEST_CASE("crossfade contract") {
    const auto a = sine(440.0, 1.0);
    const auto b = sine(660.0, 1.5);
    const auto cat = crossfade(a, b, 0.0);
    CHECK(cat.samples.size() == a.samples.size() + b.samples.size());
    CHECK(cat.samples[a.samples.size()] == b.samples[0]);
    CHECK(crossfade(a, b, 1.0).samples.size() == b.samples.size());
    AudioClip stereo = a;
    stereo.channels = 2;
    CHECK_THROWS_AS(crossfade(a, stereo, 0.1), std::invalid_argument);
  }

  TEST_CASE("equal-power fade keeps a constant level") {
    // Uncorrelated equal-level inputs: short-term RMS stays flat through the fade.
    const auto a = sine(440.0, 3.0);
    const auto b = sine(557.0, 3.0);
    const auto out = crossfade(a, b, 2.0);
    const std::size_t block = 4410;
    const double ref = 0.5 / std::sqrt(2.0);
    double worst = 0.0;
    for (std::size_t s = 0; s + block <= out.samples.size(); s += block) {
      double acc = 0.0;
      for (std::size_t i = s; i < s + block; ++i) acc += double(out.samples[i]) * out.samples[i];
      worst = std::max(worst, std::abs(std::sqrt(acc / block) / ref - 1.0));
    }
    CHECK(worst < 0.01);
  }

  TEST_CASE("beat period peak sits at the plan tempo on 8-bar renders") {
    for (auto lead : {Instrument::kGuzheng, Instrument::kErhu, Instrument::kPad, Instrument::kDizi, Instrument::kPercussion}) {
      for (int tempo : {60, 92, 128}) {
        MusicPlan p;
        p.tempo_bpm = tempo;
        p.instrumentation = {lead};
        p.mode = PentatonicMode::kShang;
        p.tonic_pc = 2;
        const auto clip = render(generate(p, tonal_embedding(p.mode, 64), 8, 11), p);
        const auto peak = beat_period_peak(clip, tempo);
        REQUIRE(peak.has_value());
        CHECK(std::abs(peak->bpm - tempo) <= 2.0);
      }
    }
  }
}
