#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fraug/matrix.hpp"
#include "fraug/wav.hpp"

namespace fraug::dsp {

enum class WindowKind { Hamming, Hann, Rectangular };
enum class FeatureKind { LogMel, Mfcc };

// Framing and feature parameters. Width is given in milliseconds and the
// shift as a fraction of the width, so the same config describes the same
// analysis at any sample rate.
struct FrameConfig {
  double frame_width_ms = 64.0;
  double frame_shift_fraction = 0.5;  // in (0, 1]
  std::size_t dft_size = 0;           // 0 = smallest power of two >= width in samples
  WindowKind window = WindowKind::Hamming;
  std::size_t num_mel_filters = 40;
  std::size_t num_cepstra = 30;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;       // 0 = Nyquist
  double pre_emphasis = 0.0;  // 0 = off; typical 0.97 when enabled

  bool operator==(const FrameConfig&) const = default;
};

std::size_t width_in_samples(const FrameConfig& config, int sample_rate);
std::size_t shift_in_samples(const FrameConfig& config, int sample_rate);
std::size_t resolved_dft_size(const FrameConfig& config, int sample_rate);
double resolved_fmax(const FrameConfig& config, int sample_rate);

// Throws std::invalid_argument if the config cannot be applied at the
// given sample rate (non-positive width, shift fraction outside (0, 1],
// dft size smaller than the frame, bad mel band edges, ...).
void validate_config(const FrameConfig& config, int sample_rate);

// Number of complete frames of `width` samples at hop `shift` that fit in
// `num_samples`; a trailing partial frame is dropped.
std::size_t frame_count(std::size_t num_samples, std::size_t width, std::size_t shift);

std::vector<double> window_coefficients(WindowKind kind, std::size_t length);

// Magnitude short-time spectrum: rows are frames, columns DFT bins
// 0..dft_size/2. Frames are windowed and zero-padded to dft_size.
struct Spectrogram {
  Matrix magnitudes;
  FrameConfig config;
  int sample_rate = 0;

  std::size_t num_frames() const { return magnitudes.rows(); }
  std::size_t num_bins() const { return magnitudes.cols(); }
};

Spectrogram stft(const Signal& signal, const FrameConfig& config);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filterbank with edges snapped to DFT bins. Rows are
// filters (num_mel_filters), columns DFT bins; each row peaks with weight
// 1.0 at its center bin (degenerate narrow filters keep that single 1.0).
Matrix mel_filterbank(const FrameConfig& config, int sample_rate);

// Orthonormal DCT-II: rows 0..num_out-1 over inputs of length n.
Matrix dct_matrix(std::size_t num_out, std::size_t n);

// A feature matrix plus the provenance needed to interpret it.
struct FeatureMatrix {
  Matrix values;  // frames x dims
  FeatureKind kind = FeatureKind::LogMel;
  FrameConfig config;
  int sample_rate = 0;

  std::size_t num_frames() const { return values.rows(); }
  std::size_t dims() const { return values.cols(); }
};

// log(filterbank . |X|^2 + 1e-10). All arithmetic in double; narrowing
// to float happens only at the feature-file boundary.
FeatureMatrix log_mel(const Signal& signal, const FrameConfig& config);
FeatureMatrix log_mel_from_spectrogram(const Spectrogram& spec);

// DCT-II of the log-mel rows, keeping num_cepstra coefficients.
FeatureMatrix mfcc(const Signal& signal, const FrameConfig& config);
FeatureMatrix mfcc_from_spectrogram(const Spectrogram& spec);

FeatureMatrix extract_features(const Signal& signal, const FrameConfig& config,
                               FeatureKind kind);

const char* feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);
const char* window_kind_name(WindowKind kind);
WindowKind window_kind_from_name(const std::string& name);

constexpr double kLogMelFloor = 1e-10;

}  // namespace fraug::dsp
