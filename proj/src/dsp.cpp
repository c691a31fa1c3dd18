#include "fraug/dsp.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fraug::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT (forward). n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Direct DFT fallback for sizes that are not powers of two.
void dft_direct(const std::vector<std::complex<double>>& in,
                std::vector<std::complex<double>>& out) {
  const std::size_t n = in.size();
  out.assign(n, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(m) /
                         static_cast<double>(n);
      acc += in[m] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
}

}  // namespace

std::size_t width_in_samples(const FrameConfig& config, int sample_rate) {
  return static_cast<std::size_t>(
      std::llround(config.frame_width_ms * sample_rate / 1000.0));
}

std::size_t shift_in_samples(const FrameConfig& config, int sample_rate) {
  return static_cast<std::size_t>(std::llround(
      config.frame_width_ms * config.frame_shift_fraction * sample_rate / 1000.0));
}

std::size_t resolved_dft_size(const FrameConfig& config, int sample_rate) {
  const std::size_t width = width_in_samples(config, sample_rate);
  if (config.dft_size != 0) {
    if (config.dft_size < width)
      throw std::invalid_argument("dft_size " + std::to_string(config.dft_size) +
                                  " smaller than frame width " + std::to_string(width));
    return config.dft_size;
  }
  std::size_t n = 1;
  while (n < width) n <<= 1;
  return n;
}

double resolved_fmax(const FrameConfig& config, int sample_rate) {
  return config.fmax_hz > 0.0 ? config.fmax_hz : sample_rate / 2.0;
}

void validate_config(const FrameConfig& config, int sample_rate) {
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  if (!(config.frame_width_ms > 0.0))
    throw std::invalid_argument("frame width must be positive");
  if (!(config.frame_shift_fraction > 0.0) || config.frame_shift_fraction > 1.0)
    throw std::invalid_argument("frame shift fraction must be in (0, 1]");
  if (width_in_samples(config, sample_rate) < 2)
    throw std::invalid_argument("frame width shorter than 2 samples");
  if (shift_in_samples(config, sample_rate) < 1)
    throw std::invalid_argument("frame shift shorter than 1 sample");
  resolved_dft_size(config, sample_rate);  // throws if explicit size is too small
  if (config.num_mel_filters < 1)
    throw std::invalid_argument("need at least one mel filter");
  if (config.num_cepstra < 1 || config.num_cepstra > config.num_mel_filters)
    throw std::invalid_argument("num_cepstra must be in [1, num_mel_filters]");
  const double fmax = resolved_fmax(config, sample_rate);
  if (config.fmin_hz < 0.0 || !(config.fmin_hz < fmax) || fmax > sample_rate / 2.0)
    throw std::invalid_argument("mel band edges must satisfy 0 <= fmin < fmax <= Nyquist");
  if (config.pre_emphasis < 0.0 || config.pre_emphasis >= 1.0)
    throw std::invalid_argument("pre_emphasis must be in [0, 1)");
}

std::size_t frame_count(std::size_t num_samples, std::size_t width, std::size_t shift) {
  if (width == 0) throw std::invalid_argument("frame width must be positive");
  if (shift == 0) throw std::invalid_argument("frame shift must be positive");
  if (num_samples < width) return 0;
  return (num_samples - width) / shift + 1;
}

std::vector<double> window_coefficients(WindowKind kind, std::size_t length) {
  if (length < 2) throw std::invalid_argument("window length must be at least 2");
  std::vector<double> w(length);
  const double denom = static_cast<double>(length - 1);
  switch (kind) {
    case WindowKind::Hamming:
      for (std::size_t n = 0; n < length; ++n)
        w[n] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(n) / denom);
      break;
    case WindowKind::Hann:
      for (std::size_t n = 0; n < length; ++n)
        w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) / denom);
      break;
    case WindowKind::Rectangular:
      for (std::size_t n = 0; n < length; ++n) w[n] = 1.0;
      break;
  }
  return w;
}

Spectrogram stft(const Signal& signal, const FrameConfig& config) {
  validate_config(config, signal.sample_rate);
  const std::size_t width = width_in_samples(config, signal.sample_rate);
  const std::size_t shift = shift_in_samples(config, signal.sample_rate);
  const std::size_t dft = resolved_dft_size(config, signal.sample_rate);
  const std::size_t frames = frame_count(signal.samples.size(), width, shift);
  const std::size_t bins = dft / 2 + 1;
  const std::vector<double> win = window_coefficients(config.window, width);

  Spectrogram out;
  out.config = config;
  out.sample_rate = signal.sample_rate;
  out.magnitudes = Matrix(frames, bins);

  const double* samples = signal.samples.data();
  std::vector<double> emphasized;
  if (config.pre_emphasis > 0.0 && !signal.samples.empty()) {
    emphasized.resize(signal.samples.size());
    emphasized[0] = signal.samples[0] - config.pre_emphasis * signal.samples[0];
    for (std::size_t i = 1; i < signal.samples.size(); ++i)
      emphasized[i] = signal.samples[i] - config.pre_emphasis * signal.samples[i - 1];
    samples = emphasized.data();
  }

  const bool pow2 = is_power_of_two(dft);
  std::vector<std::complex<double>> buf(dft);
  std::vector<std::complex<double>> spec;
  for (std::size_t r = 0; r < frames; ++r) {
    const double* x = samples + r * shift;
    for (std::size_t m = 0; m < width; ++m) buf[m] = {x[m] * win[m], 0.0};
    for (std::size_t m = width; m < dft; ++m) buf[m] = {0.0, 0.0};
    const std::vector<std::complex<double>>* result = &buf;
    if (pow2) {
      fft_radix2(buf);
    } else {
      dft_direct(buf, spec);
      result = &spec;
    }
    double* row = out.magnitudes.row(r);
    for (std::size_t k = 0; k < bins; ++k) row[k] = std::abs((*result)[k]);
  }
  return out;
}

double hz_to_mel(double hz) {
  if (hz < 0.0) throw std::invalid_argument("frequency must be non-negative");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  if (mel < 0.0) throw std::invalid_argument("mel value must be non-negative");
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Matrix mel_filterbank(const FrameConfig& config, int sample_rate) {
  validate_config(config, sample_rate);
  const std::size_t dft = resolved_dft_size(config, sample_rate);
  const std::size_t bins = dft / 2 + 1;
  const std::size_t m = config.num_mel_filters;
  const double mel_lo = hz_to_mel(config.fmin_hz);
  const double mel_hi = hz_to_mel(resolved_fmax(config, sample_rate));

  // Filter edge frequencies, equally spaced in mel, snapped to DFT bins.
  std::vector<std::size_t> edge(m + 2);
  for (std::size_t i = 0; i < m + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(m + 1);
    const double hz = mel_to_hz(mel);
    long long b = std::llround(hz * static_cast<double>(dft) / sample_rate);
    if (b < 0) b = 0;
    if (b > static_cast<long long>(bins - 1)) b = static_cast<long long>(bins - 1);
    edge[i] = static_cast<std::size_t>(b);
  }

  Matrix fb(m, bins);
  for (std::size_t f = 0; f < m; ++f) {
    const std::size_t left = edge[f];
    const std::size_t center = edge[f + 1];
    const std::size_t right = edge[f + 2];
    double* row = fb.row(f);
    for (std::size_t k = left + 1; k <= center; ++k)
      row[k] = static_cast<double>(k - left) / static_cast<double>(center - left);
    for (std::size_t k = center; k + 1 <= right; ++k)
      row[k] = static_cast<double>(right - k) / static_cast<double>(right - center);
    row[center] = 1.0;  // guard for degenerate filters whose edges coincide
  }
  return fb;
}

Matrix dct_matrix(std::size_t num_out, std::size_t n) {
  if (n == 0 || num_out == 0 || num_out > n)
    throw std::invalid_argument("dct_matrix requires 0 < num_out <= n");
  Matrix d(num_out, n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double s = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < num_out; ++k) {
    double* row = d.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (k == 0) {
        row[i] = s0;
      } else {
        row[i] = s * std::cos(kPi * static_cast<double>(k) *
                              (2.0 * static_cast<double>(i) + 1.0) /
                              (2.0 * static_cast<double>(n)));
      }
    }
  }
  return d;
}

FeatureMatrix log_mel_from_spectrogram(const Spectrogram& spec) {
  const Matrix fb = mel_filterbank(spec.config, spec.sample_rate);
  const std::size_t frames = spec.num_frames();
  const std::size_t bins = spec.num_bins();
  const std::size_t m = fb.rows();

  FeatureMatrix out;
  out.kind = FeatureKind::LogMel;
  out.config = spec.config;
  out.sample_rate = spec.sample_rate;
  out.values = Matrix(frames, m);
  std::vector<double> power(bins);
  for (std::size_t r = 0; r < frames; ++r) {
    const double* mag = spec.magnitudes.row(r);
    for (std::size_t k = 0; k < bins; ++k) power[k] = mag[k] * mag[k];
    double* dst = out.values.row(r);
    for (std::size_t f = 0; f < m; ++f) {
      const double* w = fb.row(f);
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) acc += w[k] * power[k];
      dst[f] = std::log(acc + kLogMelFloor);
    }
  }
  return out;
}

FeatureMatrix log_mel(const Signal& signal, const FrameConfig& config) {
  return log_mel_from_spectrogram(stft(signal, config));
}

FeatureMatrix mfcc_from_spectrogram(const Spectrogram& spec) {
  const Matrix fb = mel_filterbank(spec.config, spec.sample_rate);
  const Matrix dct = dct_matrix(spec.config.num_cepstra, spec.config.num_mel_filters);
  const std::size_t frames = spec.num_frames();
  const std::size_t bins = spec.num_bins();
  const std::size_t m = fb.rows();
  const std::size_t c = dct.rows();

  FeatureMatrix out;
  out.kind = FeatureKind::Mfcc;
  out.config = spec.config;
  out.sample_rate = spec.sample_rate;
  out.values = Matrix(frames, c);
  std::vector<double> power(bins);
  std::vector<double> logmel(m);
  for (std::size_t r = 0; r < frames; ++r) {
    const double* mag = spec.magnitudes.row(r);
    for (std::size_t k = 0; k < bins; ++k) power[k] = mag[k] * mag[k];
    for (std::size_t f = 0; f < m; ++f) {
      const double* w = fb.row(f);
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) acc += w[k] * power[k];
      logmel[f] = std::log(acc + kLogMelFloor);
    }
    double* dst = out.values.row(r);
    for (std::size_t k = 0; k < c; ++k) {
      const double* row = dct.row(k);
      double acc = 0.0;
      for (std::size_t f = 0; f < m; ++f) acc += row[f] * logmel[f];
      dst[k] = acc;
    }
  }
  return out;
}

FeatureMatrix mfcc(const Signal& signal, const FrameConfig& config) {
  return mfcc_from_spectrogram(stft(signal, config));
}

FeatureMatrix extract_features(const Signal& signal, const FrameConfig& config,
                               FeatureKind kind) {
  return kind == FeatureKind::LogMel ? log_mel(signal, config) : mfcc(signal, config);
}

const char* feature_kind_name(FeatureKind kind) {
  return kind == FeatureKind::LogMel ? "log_mel" : "mfcc";
}

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "log_mel" || name == "logmel") return FeatureKind::LogMel;
  if (name == "mfcc") return FeatureKind::Mfcc;
  throw std::invalid_argument("unknown feature kind: " + name);
}

const char* window_kind_name(WindowKind kind) {
  switch (kind) {
    case WindowKind::Hamming: return "hamming";
    case WindowKind::Hann: return "hann";
    case WindowKind::Rectangular: return "rectangular";
  }
  return "hamming";
}

WindowKind window_kind_from_name(const std::string& name) {
  if (name == "hamming") return WindowKind::Hamming;
  if (name == "hann") return WindowKind::Hann;
  if (name == "rectangular" || name == "rect") return WindowKind::Rectangular;
  throw std::invalid_argument("unknown window kind: " + name);
}

}  // namespace fraug::dsp
