#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "oracles.h"

#include "biomusic/errors.h"
#include "biomusic/radar_sim.h"
#include "biomusic/vitals_dsp.h"

using namespace biomusic;

namespace {

PhaseSignal tone(double freq_hz, double duration_s, double amp = 1.0, double fs = 100.0) {
  PhaseSignal s;
  s.sample_rate_hz = fs;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  for (std::size_t i = 0; i < n; ++i) {
    s.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / fs));
  }
  return s;
}

PhaseSignal two_tone_phase(double duration_s, double resp_hz = 0.25, double heart_hz = 1.2) {
  VitalsGroundTruth t;
  t.resp_freq_hz = resp_hz;
  t.heart_freq_hz = heart_hz;
  return displacement_to_phase(synth_displacement(t, duration_s));
}

double rms(const std::vector<double>& x, std::size_t skip) {
  double acc = 0.0;
  for (std::size_t i = skip; i + skip < x.size(); ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(x.size() - 2 * skip));
}

}  // namespace

TEST_SUITE("radar_sim") {
  TEST_CASE("default two-tone trace has its spectral peaks at the vital rates") {
    VitalsGroundTruth t;
    t.resp_freq_hz = 0.25;
    t.heart_freq_hz = 1.2;
    t.resp_amp_mm = 4.0;
    t.heart_amp_mm = 0.2;
    const auto trace = synth_displacement(t, 30.0, 100.0);
    CHECK(trace.samples.size() == 3000);
    CHECK(oracle::dft_peak(trace.samples, 100.0, 0.1, 0.5, 0.005) == doctest::Approx(0.25).epsilon(0.0001));
    CHECK(oracle::dft_peak(trace.samples, 100.0, 0.8, 2.0, 0.005) == doctest::Approx(1.2).epsilon(0.0001));
  }

  TEST_CASE("zero amplitudes give a zero trace and zero phase") {
    VitalsGroundTruth t;
    t.resp_amp_mm = 0.0;
    t.heart_amp_mm = 0.0;
    const auto trace = synth_displacement(t, 10.0);
    for (double v : trace.samples) CHECK(v == 0.0);
    for (double v : displacement_to_phase(trace).samples) CHECK(v == 0.0);
  }

  TEST_CASE("phase is 4*pi*x/lambda") {
    DisplacementTrace d;
    d.samples = {0.0, 4.0, -2.0};
    const auto p = displacement_to_phase(d, 5.0);
    CHECK(p.samples[1] == doctest::Approx(4.0 * std::numbers::pi * 4.0 / 5.0));
    CHECK(p.samples[1] == doctest::Approx(10.053).epsilon(0.0001));
    CHECK(p.samples[2] == doctest::Approx(-4.0 * std::numbers::pi * 2.0 / 5.0));
  }

  TEST_CASE("invalid arguments are rejected") {
    VitalsGroundTruth t;
    CHECK_THROWS_AS(synth_displacement(t, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(synth_displacement(t, 10.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(displacement_to_phase(synth_displacement(t, 10.0), 0.0), std::invalid_argument);
  }

  TEST_CASE("corrupt: identity without noise or drift, deterministic with a seed") {
    const auto p = two_tone_phase(30.0);
    CHECK(corrupt(p, kNoNoise, 0.0, 1).samples == p.samples);
    const auto a = corrupt(p, 10.0, 0.0, 42);
    const auto b = corrupt(p, 10.0, 0.0, 42);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != p.samples);
  }

  TEST_CASE("respiration peak survives 0 dB noise") {
    const auto noisy = corrupt(two_tone_phase(30.0), 0.0, 0.0, 3);
    CHECK(std::abs(oracle::dft_peak(noisy.samples, 100.0, 0.1, 0.5, 0.005) - 0.25) <= 0.02);
  }

  TEST_CASE("trace CSV round trip") {
    const auto p = two_tone_phase(12.0);
    std::stringstream io;
    write_trace_csv(io, p.samples, p.sample_rate_hz);
    const auto back = read_trace_csv(io);
    CHECK(back.sample_rate_hz == doctest::Approx(100.0));
    REQUIRE(back.values.size() == p.samples.size());
    for (std::size_t i = 0; i < p.samples.size(); i += 97) CHECK(back.values[i] == doctest::Approx(p.samples[i]));
    std::istringstream bad("time,value\n0,1\n");
    CHECK_THROWS_AS(read_trace_csv(bad), IoError);
  }
}

TEST_SUITE("vitals_dsp") {
  TEST_CASE("bandpass keeps in-band tones and suppresses out-of-band tones") {
    const auto in = tone(0.25, 60.0);
    const auto out = bandpass(in, 0.1, 0.5);
    CHECK(rms(out.samples, 1000) == doctest::Approx(rms(in.samples, 1000)).epsilon(0.1));
    const auto hf = tone(1.2, 60.0);
    const auto hf_out = bandpass(hf, 0.1, 0.5);
    CHECK(20.0 * std::log10(rms(hf_out.samples, 1000) / rms(hf.samples, 1000)) <= -20.0);
    const auto zero = bandpass(tone(0.25, 30.0, 0.0), 0.1, 0.5);
    for (double v : zero.samples) CHECK(v == 0.0);
    CHECK_THROWS_AS(bandpass(in, 0.5, 0.1), std::invalid_argument);
  }

  TEST_CASE("periodogram recovers single tones") {
    CHECK(estimate_rate_periodogram(tone(0.25, 30.0), 0.1, 0.5).rate_per_min == doctest::Approx(15.0).epsilon(0.5 / 15));
    CHECK(estimate_rate_periodogram(tone(1.2, 30.0), 0.8, 2.0).rate_per_min == doctest::Approx(72.0).epsilon(1.0 / 72));
    CHECK_THROWS_AS(estimate_rate_periodogram(tone(1.0, 30.0, 0.0), 0.8, 2.0), NoPeakError);
  }

  TEST_CASE("periodogram agrees with the DFT oracle on the two-tone trace") {
    const auto p = two_tone_phase(30.0);
    const double oracle_r = oracle::dft_peak(bandpass(p, 0.1, 0.5).samples, 100.0, 0.1, 0.5, 0.002);
    const double oracle_h = oracle::dft_peak(bandpass(p, 0.8, 2.0).samples, 100.0, 0.8, 2.0, 0.002);
    CHECK(estimate_rate_periodogram(bandpass(p, 0.1, 0.5), 0.1, 0.5).peak_freq_hz == doctest::Approx(oracle_r).epsilon(0.01));
    CHECK(estimate_rate_periodogram(bandpass(p, 0.8, 2.0), 0.8, 2.0).peak_freq_hz == doctest::Approx(oracle_h).epsilon(0.01));
  }

  TEST_CASE("subspace estimator recovers a tone and rejects silence") {
    CHECK(estimate_rate_subspace(tone(1.2, 30.0), 4, 0.8, 2.0).rate_per_min == doctest::Approx(72.0).epsilon(1.0 / 72));
    CHECK_THROWS_AS(estimate_rate_subspace(tone(1.2, 30.0, 0.0), 4, 0.8, 2.0), DegenerateSignalError);
  }

  TEST_CASE("subspace resolves closely spaced tones the periodogram smears") {
    // 12 s window: the Hann main lobes overlap and the two periodogram peaks
    // land between the true tones.
    auto a = tone(1.15, 12.0);
    const auto b = tone(1.30, 12.0);
    for (std::size_t i = 0; i < a.samples.size(); ++i) a.samples[i] += b.samples[i];
    auto near = [](const std::vector<RateEstimate>& c, double f) {
      return std::any_of(c.begin(), c.end(), [&](const RateEstimate& e) { return std::abs(e.peak_freq_hz - f) <= 0.02; });
    };
    const auto fft = periodogram_candidates(a, 1.0, 1.45, 2);
    CHECK_FALSE((near(fft, 1.15) && near(fft, 1.30)));
    const auto music = subspace_candidates(a, 4, 1.0, 1.45, 5);
    REQUIRE(music.size() >= 2);
    std::vector<double> f = {music[0].peak_freq_hz, music[1].peak_freq_hz};
    std::sort(f.begin(), f.end());
    CHECK(f[0] == doctest::Approx(1.15).epsilon(0.02));
    CHECK(f[1] == doctest::Approx(1.30).epsilon(0.02));
  }

  TEST_CASE("heart candidates on respiration harmonics are rejected") {
    const auto resp = RateEstimate::from_frequency(0.25, 1.0);
    const std::vector<RateEstimate> cands = {RateEstimate::from_frequency(1.25, 0.9), RateEstimate::from_frequency(1.2, 0.7)};
    CHECK(disambiguate_heart(cands, resp, 0.02).peak_freq_hz == doctest::Approx(1.2));

    const std::vector<RateEstimate> single = {RateEstimate::from_frequency(1.2, 0.8)};
    const auto kept = disambiguate_heart(single, resp, 0.02);
    CHECK(kept.peak_freq_hz == doctest::Approx(1.2));
    CHECK(kept.confidence == doctest::Approx(0.8));
    CHECK_FALSE(kept.harmonic_suspect);

    const std::vector<RateEstimate> all = {RateEstimate::from_frequency(1.0, 0.9), RateEstimate::from_frequency(1.5, 0.6)};
    const auto flagged = disambiguate_heart(all, resp, 0.02);
    CHECK(flagged.peak_freq_hz == doctest::Approx(1.0));
    CHECK(flagged.harmonic_suspect);
    CHECK(flagged.confidence == doctest::Approx(0.45));

    CHECK_THROWS_AS(disambiguate_heart(std::vector<RateEstimate>{}, resp, 0.02), NoPeakError);
  }

  TEST_CASE("median3 removes a single outlier") {
    const std::vector<double> v = {72, 72, 150, 72, 72};
    CHECK(median3(v) == std::vector<double>{72, 72, 72, 72, 72});
  }

  TEST_CASE("tracking a clean 60 s trace stays within tolerance") {
    VitalsGroundTruth t;
    t.resp_freq_hz = 0.25;
    t.heart_freq_hz = 1.2;
    t.heart_amp_mm = 0.5;
    const auto p = displacement_to_phase(synth_displacement(t, 60.0));
    for (auto est : {Estimator::kPeriodogram, Estimator::kSubspace}) {
      TrackOptions o;
      o.estimator = est;
      const auto track = track_vitals(p, 30.0, 5.0, o);
      CHECK(track.size() == 7);
      for (const auto& v : track) {
        CHECK(std::abs(v.resp.rate_per_min - 15.0) <= 0.5);
        CHECK(std::abs(v.heart.rate_per_min - 72.0) <= 1.0);
      }
    }
  }

  TEST_CASE("a heart-rate step is tracked within two windows") {
    VitalsGroundTruth a, b;
    a.heart_freq_hz = 1.0;
    b.heart_freq_hz = 1.5;
    a.heart_amp_mm = b.heart_amp_mm = 0.5;
    const std::vector<VitalsSegment> segs = {{a, 30.0}, {b, 60.0}};
    const auto p = displacement_to_phase(synth_displacement(segs));
    const auto track = track_vitals(p, 30.0, 5.0);
    // First window fully past the step ends at t=60; allow two more hops.
    for (const auto& v : track) {
      if (v.window_end_s <= 30.0 + 1e-9) CHECK(std::abs(v.heart.rate_per_min - 60.0) <= 1.0);
      if (v.window_start_s >= 30.0 + 2 * 5.0 - 1e-9) CHECK(std::abs(v.heart.rate_per_min - 90.0) <= 1.0);
    }
  }

  TEST_CASE("0 dB input stays within the cited error bounds") {
    VitalsGroundTruth t;
    t.resp_freq_hz = 0.25;
    t.heart_freq_hz = 1.2;
    t.heart_amp_mm = 0.5;
    t.resp_harmonic = true;
    const auto p = corrupt(displacement_to_phase(synth_displacement(t, 60.0)), 0.0, 0.0, 11);
    for (const auto& v : track_vitals(p, 30.0, 5.0)) {
      CHECK(std::abs(v.resp.rate_per_min - 15.0) < 3.0);
      CHECK(std::abs(v.heart.rate_per_min - 72.0) < 5.0);
    }
  }

  TEST_CASE("short signals are rejected") {
    CHECK_THROWS_AS(track_vitals(two_tone_phase(20.0), 30.0, 5.0), InsufficientDataError);
  }
}
