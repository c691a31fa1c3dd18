#pragma once

#include <string>
#include <vector>

#include "fraug/dsp.hpp"
#include "fraug/rng.hpp"

namespace fraug::aug {

// Ordered set of frame configs: the baseline at index 0, then one config
// per augmentation fold. The waveform is never touched; each fold is just
// a different (width, shift) analysis of the same samples.
struct AugPlan {
  std::vector<dsp::FrameConfig> configs;
  static constexpr std::size_t baseline_index = 0;

  std::size_t fold_count() const { return configs.empty() ? 0 : configs.size() - 1; }
};

// Full cartesian product widths x shifts with the baseline combination
// moved to index 0. Fields other than width/shift are copied from
// `base`. The baseline pair must be one of the grid combinations.
AugPlan fraug_plan(const std::vector<double>& widths_ms,
                   const std::vector<double>& shift_fractions, double baseline_width_ms,
                   double baseline_shift_fraction,
                   const dsp::FrameConfig& base = dsp::FrameConfig{});

double resolve_shift_ms(double width_ms, double shift_fraction);

// Plans serialize as a JSON array of {width_ms, shift_fraction} objects;
// parsing fills the remaining FrameConfig fields from `base`.
std::string plan_to_json(const AugPlan& plan);
AugPlan plan_from_json(const std::string& text,
                       const dsp::FrameConfig& base = dsp::FrameConfig{});

enum class NoiseSource { White, Pink, Directory };

struct NoiseSpec {
  NoiseSource source = NoiseSource::White;
  std::string directory;  // used when source == Directory
  std::vector<double> snr_choices_db{0.0, 5.0, 10.0, 15.0};
  std::uint64_t seed = 0;
};

// signal + g * noise_segment, where the segment is a random circular
// offset into the (tiled) noise and g sets the exact target SNR:
// g = rms(signal) / (rms(segment) * 10^(snr_db/20)).
dsp::Signal mix_noise(const dsp::Signal& signal, const dsp::Signal& noise, double snr_db,
                      Rng rng);

// Unit-variance-ish seeded generators (rms 0.1) for self-contained tests.
dsp::Signal white_noise(std::size_t num_samples, int sample_rate, Rng rng);
dsp::Signal pink_noise(std::size_t num_samples, int sample_rate, Rng rng);

// Linear-interpolation resampling of the time axis: output length
// round(len/factor); duration and pitch scale together.
dsp::Signal speed_perturb(const dsp::Signal& signal, double factor);

// Pitch shift by 2^(semitones/12): resample by the pitch ratio, then
// overlap-add time-stretch back to exactly the input length.
dsp::Signal pitch_perturb(const dsp::Signal& signal, double semitones);

struct WarpSpec {
  double alpha = 1.0;
  double boundary_hz = 4800.0;
};

// Piecewise-linear frequency warp f -> alpha*f below boundary_hz, then
// linearly mapped so Nyquist stays fixed. Magnitudes are resampled onto
// the original bin grid with inverse-map interpolation weighted by the
// Jacobian of the warp, which keeps total spectral mass conserved.
dsp::Spectrogram vtlp_warp(const dsp::Spectrogram& spectrogram, const WarpSpec& spec);

}  // namespace fraug::aug
