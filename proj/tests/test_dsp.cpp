#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fraug/dsp.hpp"
#include "fraug/rng.hpp"
#include "oracles.hpp"

using namespace fraug;

namespace {

dsp::Signal random_signal(std::size_t n, std::uint64_t seed, int sample_rate = 16000) {
  Rng rng(seed);
  dsp::Signal s;
  s.sample_rate = sample_rate;
  s.samples.resize(n);
  for (auto& v : s.samples) v = rng.uniform(-0.9, 0.9);
  return s;
}

dsp::Signal sine(double hz, double seconds, int sample_rate = 16000, double amp = 0.5) {
  dsp::Signal s;
  s.sample_rate = sample_rate;
  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    s.samples[i] = amp * std::sin(2.0 * oracle::kPi * hz * i / sample_rate);
  return s;
}

}  // namespace

TEST_CASE("frame geometry: width and shift in samples") {
  dsp::FrameConfig cfg;
  cfg.frame_width_ms = 64.0;
  cfg.frame_shift_fraction = 0.5;
  CHECK(dsp::width_in_samples(cfg, 16000) == 1024);
  CHECK(dsp::shift_in_samples(cfg, 16000) == 512);

  // The worked example: 25 ms frames hopped by 40% = 10 ms = 160 samples.
  cfg.frame_width_ms = 25.0;
  cfg.frame_shift_fraction = 0.4;
  CHECK(dsp::width_in_samples(cfg, 16000) == 400);
  CHECK(dsp::shift_in_samples(cfg, 16000) == 160);
}

TEST_CASE("frame_count matches a brute-force slide") {
  Rng rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t width = 1 + rng.index(600);
    const std::size_t shift = 1 + rng.index(400);
    const std::size_t n = rng.index(3000);
    CAPTURE(n);
    CAPTURE(width);
    CAPTURE(shift);
    CHECK(dsp::frame_count(n, width, shift) == oracle::slide_frame_count(n, width, shift));
  }
  CHECK(dsp::frame_count(399, 400, 160) == 0);
  CHECK(dsp::frame_count(400, 400, 160) == 1);
  CHECK_THROWS_AS(dsp::frame_count(100, 0, 10), std::invalid_argument);
  CHECK_THROWS_AS(dsp::frame_count(100, 10, 0), std::invalid_argument);
}

TEST_CASE("dft size resolution and config validation") {
  dsp::FrameConfig cfg;
  cfg.frame_width_ms = 25.0;  // 400 samples
  CHECK(dsp::resolved_dft_size(cfg, 16000) == 512);
  cfg.frame_width_ms = 64.0;  // 1024 samples, already a power of two
  CHECK(dsp::resolved_dft_size(cfg, 16000) == 1024);
  cfg.dft_size = 2048;
  CHECK(dsp::resolved_dft_size(cfg, 16000) == 2048);
  cfg.dft_size = 512;  // smaller than the 1024-sample frame
  CHECK_THROWS_AS(dsp::resolved_dft_size(cfg, 16000), std::invalid_argument);

  dsp::FrameConfig bad;
  bad.frame_shift_fraction = 0.0;
  CHECK_THROWS_AS(dsp::validate_config(bad, 16000), std::invalid_argument);
  bad = dsp::FrameConfig{};
  bad.frame_shift_fraction = 1.5;
  CHECK_THROWS_AS(dsp::validate_config(bad, 16000), std::invalid_argument);
  bad = dsp::FrameConfig{};
  bad.frame_width_ms = 0.0;
  CHECK_THROWS_AS(dsp::validate_config(bad, 16000), std::invalid_argument);
  bad = dsp::FrameConfig{};
  bad.num_cepstra = 41;  // more cepstra than mel filters
  CHECK_THROWS_AS(dsp::validate_config(bad, 16000), std::invalid_argument);
  bad = dsp::FrameConfig{};
  bad.fmin_hz = 5000.0;
  bad.fmax_hz = 4000.0;
  CHECK_THROWS_AS(dsp::validate_config(bad, 16000), std::invalid_argument);
  bad = dsp::FrameConfig{};
  bad.pre_emphasis = 1.0;
  CHECK_THROWS_AS(dsp::validate_config(bad, 16000), std::invalid_argument);
  CHECK_NOTHROW(dsp::validate_config(dsp::FrameConfig{}, 16000));

  // A shift fraction of exactly 1 (no overlap) is legal.
  dsp::FrameConfig gapless;
  gapless.frame_shift_fraction = 1.0;
  CHECK_NOTHROW(dsp::validate_config(gapless, 16000));
}

TEST_CASE("window coefficients") {
  const auto hamming = dsp::window_coefficients(dsp::WindowKind::Hamming, 5);
  REQUIRE(hamming.size() == 5);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(hamming[i] ==
          doctest::Approx(0.54 - 0.46 * std::cos(2.0 * oracle::kPi * i / 4.0)).epsilon(1e-12));
  CHECK(hamming[0] == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(hamming[2] == doctest::Approx(1.0).epsilon(1e-12));

  const auto hann = dsp::window_coefficients(dsp::WindowKind::Hann, 9);
  CHECK(hann.front() == doctest::Approx(0.0));
  CHECK(hann[4] == doctest::Approx(1.0));
  CHECK(hann[1] == doctest::Approx(hann[7]).epsilon(1e-12));  // symmetric

  const auto rect = dsp::window_coefficients(dsp::WindowKind::Rectangular, 4);
  for (double v : rect) CHECK(v == 1.0);
}

TEST_CASE("stft matches a naive direct-summation DFT") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const dsp::Signal sig = random_signal(1000 + 137 * seed, seed);
    dsp::FrameConfig cfg;
    cfg.frame_width_ms = 25.0;  // 400 samples -> 512-point DFT (direct path)
    cfg.frame_shift_fraction = 0.4;
    if (seed == 3) {
      cfg.frame_width_ms = 32.0;  // 512 samples, radix-2 path
      cfg.frame_shift_fraction = 0.5;
    }
    const dsp::Spectrogram spec = dsp::stft(sig, cfg);
    const std::size_t width = dsp::width_in_samples(cfg, sig.sample_rate);
    const std::size_t shift = dsp::shift_in_samples(cfg, sig.sample_rate);
    const std::size_t dft = dsp::resolved_dft_size(cfg, sig.sample_rate);
    REQUIRE(spec.num_frames() == dsp::frame_count(sig.samples.size(), width, shift));
    REQUIRE(spec.num_bins() == dft / 2 + 1);

    for (std::size_t f = 0; f < spec.num_frames(); ++f) {
      std::vector<double> frame(dft, 0.0);
      for (std::size_t i = 0; i < width; ++i)
        frame[i] = sig.samples[f * shift + i] *
                   (0.54 - 0.46 * std::cos(2.0 * oracle::kPi * i / (width - 1.0)));
      const auto naive = oracle::dft_magnitudes(frame);
      double max_diff = 0.0, max_mag = 0.0;
      for (std::size_t k = 0; k < naive.size(); ++k) {
        max_diff = std::max(max_diff, std::abs(spec.magnitudes(f, k) - naive[k]));
        max_mag = std::max(max_mag, naive[k]);
      }
      CHECK(max_diff <= 1e-9 * std::max(max_mag, 1e-12));
    }
  }
}

TEST_CASE("stft of a short signal has zero frames but the right bin count") {
  dsp::FrameConfig cfg;  // 64 ms = 1024 samples
  const dsp::Spectrogram spec = dsp::stft(random_signal(500, 9), cfg);
  CHECK(spec.num_frames() == 0);
  CHECK(spec.num_bins() == 513);
}

TEST_CASE("pre-emphasis filters the whole signal before framing") {
  const dsp::Signal sig = random_signal(4000, 77);
  dsp::FrameConfig plain;
  plain.frame_width_ms = 25.0;
  plain.frame_shift_fraction = 0.4;
  dsp::FrameConfig emph = plain;
  emph.pre_emphasis = 0.97;

  dsp::Signal filtered = sig;
  filtered.samples[0] = sig.samples[0] - 0.97 * sig.samples[0];
  for (std::size_t i = sig.samples.size() - 1; i >= 1; --i)
    filtered.samples[i] = sig.samples[i] - 0.97 * sig.samples[i - 1];

  const dsp::Spectrogram a = dsp::stft(filtered, plain);
  const dsp::Spectrogram b = dsp::stft(sig, emph);
  REQUIRE(a.magnitudes.rows() == b.magnitudes.rows());
  for (std::size_t i = 0; i < a.magnitudes.data().size(); ++i)
    CHECK(a.magnitudes.data()[i] == doctest::Approx(b.magnitudes.data()[i]).epsilon(1e-12));
}

TEST_CASE("Parseval: spectral energy equals N times sample energy") {
  // Rectangular window, frame = DFT size, single frame: the half-spectrum
  // reconstructs the full one as |X0|^2 + |X_{N/2}|^2 + 2 sum(middle).
  dsp::FrameConfig cfg;
  cfg.frame_width_ms = 32.0;  // 512 samples at 16 kHz
  cfg.frame_shift_fraction = 1.0;
  cfg.window = dsp::WindowKind::Rectangular;
  const dsp::Signal sig = random_signal(512, 5);
  const dsp::Spectrogram spec = dsp::stft(sig, cfg);
  REQUIRE(spec.num_frames() == 1);
  double spectral = spec.magnitudes(0, 0) * spec.magnitudes(0, 0) +
                    spec.magnitudes(0, 256) * spec.magnitudes(0, 256);
  for (std::size_t k = 1; k < 256; ++k)
    spectral += 2.0 * spec.magnitudes(0, k) * spec.magnitudes(0, k);
  double sample_energy = 0.0;
  for (double v : sig.samples) sample_energy += v * v;
  CHECK(spectral == doctest::Approx(512.0 * sample_energy).epsilon(1e-6));
}

TEST_CASE("mel scale") {
  CHECK(dsp::hz_to_mel(0.0) == 0.0);
  // 2595 * log10(2); the frozen reference value is 781.172839.
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(781.172839).epsilon(1e-9));
  // 1 + 6300/700 = 10, so the mel value is exactly 2595.
  CHECK(dsp::hz_to_mel(6300.0) == doctest::Approx(2595.0).epsilon(1e-12));
  for (double hz : {10.0, 133.0, 700.0, 3700.0, 7999.0})
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
  CHECK_THROWS_AS(dsp::hz_to_mel(-1.0), std::invalid_argument);
}

TEST_CASE("mel filterbank structure") {
  dsp::FrameConfig cfg;  // 40 filters, 64 ms -> 1024-point DFT
  const Matrix fb = dsp::mel_filterbank(cfg, 16000);
  REQUIRE(fb.rows() == 40);
  REQUIRE(fb.cols() == 513);
  for (std::size_t r = 0; r < fb.rows(); ++r) {
    double peak = 0.0;
    bool has_unit_peak = false;
    for (std::size_t c = 0; c < fb.cols(); ++c) {
      const double v = fb(r, c);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      peak = std::max(peak, v);
      if (v == 1.0) has_unit_peak = true;
    }
    CHECK(peak == 1.0);
    CHECK(has_unit_peak);
  }
  // Filter centers must be strictly increasing in frequency.
  std::size_t prev_center = 0;
  for (std::size_t r = 0; r < fb.rows(); ++r) {
    std::size_t center = 0;
    for (std::size_t c = 0; c < fb.cols(); ++c)
      if (fb(r, c) == 1.0) center = c;
    if (r > 0) CHECK(center >= prev_center);
    prev_center = center;
  }
}

TEST_CASE("dct matrix is orthonormal and matches direct summation") {
  const Matrix d = dsp::dct_matrix(8, 8);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 8; ++k) dot += d(i, k) * d(j, k);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }

  std::vector<double> x{0.3, -1.2, 4.0, 0.0, 2.5, -0.7, 1.1, 0.9};
  const auto ref = oracle::dct2_orthonormal(x, 5);
  const Matrix d5 = dsp::dct_matrix(5, 8);
  for (std::size_t k = 0; k < 5; ++k) {
    double dot = 0.0;
    for (std::size_t i = 0; i < 8; ++i) dot += d5(k, i) * x[i];
    CHECK(dot == doctest::Approx(ref[k]).epsilon(1e-12));
  }
}

TEST_CASE("log-mel doubles the signal, gains log 4") {
  dsp::FrameConfig cfg;
  cfg.frame_width_ms = 32.0;
  cfg.frame_shift_fraction = 0.5;
  dsp::Signal sig = sine(440.0, 0.5);
  const dsp::FeatureMatrix a = dsp::log_mel(sig, cfg);
  for (auto& v : sig.samples) v *= 2.0;
  const dsp::FeatureMatrix b = dsp::log_mel(sig, cfg);
  REQUIRE(a.values.rows() == b.values.rows());
  REQUIRE(a.values.cols() == 40);
  // Power quadruples. The 1e-10 floor shifts a band's difference by about
  // 0.75e-10 / P, so only bands with power well above the floor (P > 1e-3)
  // see the clean log 4.
  const double log4 = std::log(4.0);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < a.values.data().size(); ++i) {
    if (a.values.data()[i] > std::log(1e-3)) {
      CHECK(b.values.data()[i] - a.values.data()[i] == doctest::Approx(log4).epsilon(1e-6));
      ++checked;
    }
  }
  CHECK(checked > 10);  // the tone must actually excite some bands
}

TEST_CASE("mfcc is the DCT of the log-mel rows") {
  dsp::FrameConfig cfg;
  cfg.frame_width_ms = 25.0;
  cfg.frame_shift_fraction = 0.4;
  const dsp::Signal sig = random_signal(3200, 21);
  const dsp::FeatureMatrix lm = dsp::log_mel(sig, cfg);
  const dsp::FeatureMatrix mf = dsp::mfcc(sig, cfg);
  REQUIRE(mf.values.cols() == 30);
  REQUIRE(mf.values.rows() == lm.values.rows());
  for (std::size_t f = 0; f < lm.values.rows(); ++f) {
    std::vector<double> row(lm.values.row(f), lm.values.row(f) + lm.values.cols());
    const auto ref = oracle::dct2_orthonormal(row, 30);
    for (std::size_t k = 0; k < 30; ++k)
      CHECK(mf.values(f, k) == doctest::Approx(ref[k]).epsilon(1e-9));
  }
}

TEST_CASE("extract_features carries kind, config and dimensions") {
  const dsp::Signal sig = random_signal(5000, 3);
  dsp::FrameConfig cfg;
  cfg.frame_width_ms = 25.0;
  cfg.frame_shift_fraction = 0.4;
  const auto lm = dsp::extract_features(sig, cfg, dsp::FeatureKind::LogMel);
  CHECK(lm.kind == dsp::FeatureKind::LogMel);
  CHECK(lm.dims() == 40);
  CHECK(lm.config == cfg);
  CHECK(lm.sample_rate == 16000);
  const auto mf = dsp::extract_features(sig, cfg, dsp::FeatureKind::Mfcc);
  CHECK(mf.kind == dsp::FeatureKind::Mfcc);
  CHECK(mf.dims() == 30);
  CHECK(lm.num_frames() == mf.num_frames());
}

TEST_CASE("feature and window kind names round-trip") {
  CHECK(dsp::feature_kind_from_name("log_mel") == dsp::FeatureKind::LogMel);
  CHECK(dsp::feature_kind_from_name("mfcc") == dsp::FeatureKind::Mfcc);
  CHECK(std::string(dsp::feature_kind_name(dsp::FeatureKind::LogMel)) == "log_mel");
  CHECK_THROWS_AS(dsp::feature_kind_from_name("spectrogram"), std::invalid_argument);
  CHECK(dsp::window_kind_from_name("hamming") == dsp::WindowKind::Hamming);
  CHECK(dsp::window_kind_from_name("hann") == dsp::WindowKind::Hann);
  CHECK(dsp::window_kind_from_name("rectangular") == dsp::WindowKind::Rectangular);
  CHECK_THROWS_AS(dsp::window_kind_from_name("blackman"), std::invalid_argument);
}
