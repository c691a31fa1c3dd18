#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fraug/augment.hpp"
#include "fraug/dsp.hpp"
#include "fraug/rng.hpp"
#include "oracles.hpp"

using namespace fraug;

namespace {

// A voiced-sounding pulse train: f0 plus a few 1/h harmonics.
dsp::Signal harmonic(double f0, double seconds, int sample_rate = 16000) {
  dsp::Signal s;
  s.sample_rate = sample_rate;
  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = 0.0;
    for (int h = 1; h <= 4; ++h)
      v += std::sin(2.0 * oracle::kPi * f0 * h * t) / h;
    s.samples[i] = 0.25 * v;
  }
  return s;
}

}  // namespace

TEST_CASE("fraug_plan fold arithmetic") {
  const auto plan5 = aug::fraug_plan({64.0, 128.0}, {0.5, 0.25, 0.1}, 64.0, 0.5);
  CHECK(plan5.configs.size() == 6);
  CHECK(plan5.fold_count() == 5);
  CHECK(plan5.configs[0].frame_width_ms == 64.0);
  CHECK(plan5.configs[0].frame_shift_fraction == 0.5);

  const auto plan8 = aug::fraug_plan({32.0, 64.0, 128.0}, {0.5, 0.25, 0.1}, 64.0, 0.5);
  CHECK(plan8.configs.size() == 9);
  CHECK(plan8.fold_count() == 8);

  // Every grid combination appears exactly once.
  for (double w : {32.0, 64.0, 128.0})
    for (double r : {0.5, 0.25, 0.1}) {
      std::size_t hits = 0;
      for (const auto& c : plan8.configs)
        if (c.frame_width_ms == w && c.frame_shift_fraction == r) ++hits;
      CHECK(hits == 1);
    }

  CHECK_THROWS_AS(aug::fraug_plan({64.0}, {0.5}, 128.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(aug::fraug_plan({64.0, 64.0}, {0.5}, 64.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(aug::fraug_plan({}, {0.5}, 64.0, 0.5), std::invalid_argument);
}

TEST_CASE("shift resolution worked example: 40% of 25 ms is 10 ms") {
  CHECK(aug::resolve_shift_ms(25.0, 0.4) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_THROWS_AS(aug::resolve_shift_ms(25.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(aug::resolve_shift_ms(25.0, 1.5), std::invalid_argument);
}

TEST_CASE("plan JSON round trip") {
  const auto plan = aug::fraug_plan({64.0, 128.0}, {0.5, 0.25}, 64.0, 0.5);
  const auto reloaded = aug::plan_from_json(aug::plan_to_json(plan));
  REQUIRE(reloaded.configs.size() == plan.configs.size());
  for (std::size_t i = 0; i < plan.configs.size(); ++i) {
    CHECK(reloaded.configs[i].frame_width_ms == plan.configs[i].frame_width_ms);
    CHECK(reloaded.configs[i].frame_shift_fraction == plan.configs[i].frame_shift_fraction);
  }
  CHECK_THROWS_AS(aug::plan_from_json("[]"), std::invalid_argument);
  CHECK_THROWS_AS(aug::plan_from_json("{\"width_ms\": 64}"), std::invalid_argument);
}

TEST_CASE("mix_noise hits the target SNR exactly") {
  const dsp::Signal sig = harmonic(180.0, 1.0);
  Rng gen(7);
  const dsp::Signal noise = aug::white_noise(sig.samples.size(), 16000, gen);
  for (double snr : {0.0, 5.0, 10.0, 15.0}) {
    const dsp::Signal mixed = aug::mix_noise(sig, noise, snr, Rng(123));
    const double measured = oracle::measured_snr_db(mixed.samples, sig.samples);
    CHECK(measured == doctest::Approx(snr).epsilon(1e-9));
  }
}

TEST_CASE("mix_noise tiles noise shorter than the signal") {
  const dsp::Signal sig = harmonic(150.0, 0.5);  // 8000 samples
  Rng gen(11);
  dsp::Signal noise = aug::white_noise(300, 16000, gen);
  const dsp::Signal mixed = aug::mix_noise(sig, noise, 5.0, Rng(9));
  REQUIRE(mixed.samples.size() == sig.samples.size());
  CHECK(oracle::measured_snr_db(mixed.samples, sig.samples) ==
        doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("mix_noise takes its generator by value") {
  const dsp::Signal sig = harmonic(150.0, 0.25);
  Rng gen(3);
  const dsp::Signal noise = aug::white_noise(sig.samples.size(), 16000, gen);
  Rng rng(55);
  const dsp::Signal a = aug::mix_noise(sig, noise, 10.0, rng);
  const dsp::Signal b = aug::mix_noise(sig, noise, 10.0, rng);  // rng unchanged by first call
  CHECK(a.samples == b.samples);
  // Different seeds draw different offsets (somewhere among a few tries).
  bool any_different = false;
  for (std::uint64_t s = 1; s <= 8 && !any_different; ++s)
    any_different = aug::mix_noise(sig, noise, 10.0, Rng(s)).samples != a.samples;
  CHECK(any_different);
}

TEST_CASE("mix_noise rejects degenerate inputs") {
  const dsp::Signal sig = harmonic(150.0, 0.1);
  dsp::Signal zeros;
  zeros.samples.assign(1000, 0.0);
  CHECK_THROWS_AS(aug::mix_noise(sig, zeros, 5.0, Rng(1)), std::invalid_argument);
  CHECK_THROWS_AS(aug::mix_noise(zeros, sig, 5.0, Rng(1)), std::invalid_argument);
  dsp::Signal empty;
  CHECK_THROWS_AS(aug::mix_noise(sig, empty, 5.0, Rng(1)), std::invalid_argument);
  Rng g(2);
  const dsp::Signal noise = aug::white_noise(1600, 16000, g);
  CHECK_THROWS_AS(
      aug::mix_noise(sig, noise, std::numeric_limits<double>::infinity(), Rng(1)),
      std::invalid_argument);
}

TEST_CASE("noise generators are seeded and level-calibrated") {
  Rng a(42), b(42), c(43);
  const auto w1 = aug::white_noise(8000, 16000, a);
  const auto w2 = aug::white_noise(8000, 16000, b);
  const auto w3 = aug::white_noise(8000, 16000, c);
  CHECK(w1.samples == w2.samples);
  CHECK(w1.samples != w3.samples);
  CHECK(oracle::rms(w1.samples) == doctest::Approx(0.1).epsilon(0.1));

  Rng d(42);
  const auto p1 = aug::pink_noise(8000, 16000, d);
  CHECK(oracle::rms(p1.samples) == doctest::Approx(0.1).epsilon(1e-9));  // normalized
  // Pink noise concentrates energy at low frequencies: compare band power.
  const auto mags = oracle::dft_magnitudes(
      std::vector<double>(p1.samples.begin(), p1.samples.begin() + 2048));
  double low = 0.0, high = 0.0;
  for (std::size_t k = 1; k < 64; ++k) low += mags[k] * mags[k];
  for (std::size_t k = 960; k < 1024; ++k) high += mags[k] * mags[k];
  CHECK(low > high);
}

TEST_CASE("speed_perturb length and identity") {
  const dsp::Signal sig = harmonic(200.0, 1.0);  // 16000 samples
  CHECK(aug::speed_perturb(sig, 1.1).samples.size() == 14545);  // round(16000/1.1)
  CHECK(aug::speed_perturb(sig, 0.5).samples.size() == 32000);
  CHECK(aug::speed_perturb(sig, 2.0).samples.size() == 8000);
  CHECK(aug::speed_perturb(sig, 1.0).samples == sig.samples);  // exact fast path
  CHECK_THROWS_AS(aug::speed_perturb(sig, 0.49), std::invalid_argument);
  CHECK_THROWS_AS(aug::speed_perturb(sig, 2.01), std::invalid_argument);
}

TEST_CASE("speed_perturb scales pitch with the factor") {
  const dsp::Signal sig = harmonic(200.0, 1.5);
  const double base = oracle::estimate_pitch_hz(sig.samples, 16000);
  CHECK(base == doctest::Approx(200.0).epsilon(0.01));
  const auto faster = aug::speed_perturb(sig, 1.25);
  const double shifted = oracle::estimate_pitch_hz(faster.samples, 16000);
  CHECK(shifted / base == doctest::Approx(1.25).epsilon(0.01));
}

TEST_CASE("pitch_perturb keeps duration and shifts pitch") {
  const dsp::Signal sig = harmonic(150.0, 1.5);
  const double base = oracle::estimate_pitch_hz(sig.samples, 16000);

  const auto up2 = aug::pitch_perturb(sig, 2.0);
  REQUIRE(up2.samples.size() == sig.samples.size());  // duration preserved exactly
  const double up2_hz = oracle::estimate_pitch_hz(up2.samples, 16000);
  // 2 semitones = x2^(1/6) = +12.246%.
  CHECK(up2_hz / base == doctest::Approx(std::pow(2.0, 2.0 / 12.0)).epsilon(0.01));

  const auto octave_up = aug::pitch_perturb(sig, 12.0);
  REQUIRE(octave_up.samples.size() == sig.samples.size());
  CHECK(oracle::estimate_pitch_hz(octave_up.samples, 16000) / base ==
        doctest::Approx(2.0).epsilon(0.015));

  const auto down5 = aug::pitch_perturb(sig, -5.0);
  REQUIRE(down5.samples.size() == sig.samples.size());
  CHECK(oracle::estimate_pitch_hz(down5.samples, 16000) / base ==
        doctest::Approx(std::pow(2.0, -5.0 / 12.0)).epsilon(0.01));

  CHECK(aug::pitch_perturb(sig, 0.0).samples == sig.samples);
  CHECK_THROWS_AS(aug::pitch_perturb(sig, 12.5), std::invalid_argument);
  CHECK_THROWS_AS(aug::pitch_perturb(sig, -13.0), std::invalid_argument);
}

TEST_CASE("vtlp_warp conserves spectral mass within 2%") {
  Rng rng(17);
  dsp::Spectrogram spec;
  spec.sample_rate = 16000;
  spec.config.dft_size = 1024;
  spec.magnitudes = Matrix(12, 513);
  for (auto& v : spec.magnitudes.data()) v = rng.uniform(0.0, 2.0);

  for (double alpha : {0.9, 0.95, 1.05, 1.1}) {
    const auto warped = aug::vtlp_warp(spec, {alpha, 4800.0});
    REQUIRE(warped.magnitudes.rows() == spec.magnitudes.rows());
    REQUIRE(warped.magnitudes.cols() == spec.magnitudes.cols());
    for (std::size_t f = 0; f < spec.magnitudes.rows(); ++f) {
      double before = 0.0, after = 0.0;
      for (std::size_t k = 0; k < spec.magnitudes.cols(); ++k) {
        before += spec.magnitudes(f, k);
        after += warped.magnitudes(f, k);
      }
      CHECK(after == doctest::Approx(before).epsilon(0.02));
    }
  }
}

TEST_CASE("vtlp_warp moves a narrow peak by alpha") {
  dsp::Spectrogram spec;
  spec.sample_rate = 16000;
  spec.config.dft_size = 1024;            // bins every 15.625 Hz
  spec.magnitudes = Matrix(1, 513);
  spec.magnitudes(0, 64) = 1.0;           // a lone peak at 1000 Hz

  const auto warped = aug::vtlp_warp(spec, {1.1, 4800.0});
  double mass = 0.0, moment = 0.0;
  for (std::size_t k = 0; k < 513; ++k) {
    mass += warped.magnitudes(0, k);
    moment += warped.magnitudes(0, k) * (15.625 * static_cast<double>(k));
  }
  REQUIRE(mass > 0.5);
  CHECK(moment / mass == doctest::Approx(1100.0).epsilon(0.001));  // within ~1 Hz

  // Identity warp is bitwise identity for a power-of-two DFT.
  const auto same = aug::vtlp_warp(spec, {1.0, 4800.0});
  CHECK(same.magnitudes == spec.magnitudes);
}

TEST_CASE("vtlp_warp keeps Nyquist fixed and validates its parameters") {
  dsp::Spectrogram spec;
  spec.sample_rate = 16000;
  spec.config.dft_size = 1024;
  spec.magnitudes = Matrix(1, 513);
  spec.magnitudes(0, 512) = 3.0;  // all mass at Nyquist
  for (double alpha : {0.9, 1.1}) {
    const auto warped = aug::vtlp_warp(spec, {alpha, 4800.0});
    std::size_t argmax = 0;
    double top = 0.0, total = 0.0;
    for (std::size_t k = 0; k < 513; ++k) {
      total += warped.magnitudes(0, k);
      if (warped.magnitudes(0, k) > top) {
        top = warped.magnitudes(0, k);
        argmax = k;
      }
    }
    CHECK(argmax == 512);               // the endpoint does not move...
    CHECK(top / total > 0.85);          // ...and the peak stays concentrated there
  }

  CHECK_THROWS_AS(aug::vtlp_warp(spec, {0.0, 4800.0}), std::invalid_argument);
  CHECK_THROWS_AS(aug::vtlp_warp(spec, {1.1, 8000.0}), std::invalid_argument);
  CHECK_THROWS_AS(aug::vtlp_warp(spec, {1.8, 4800.0}), std::invalid_argument);  // 8640 > Nyquist
}
