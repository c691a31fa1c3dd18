#include "fraug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace fraug::aug {

namespace {

constexpr double kPi = std::numbers::pi;

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

double resolve_shift_ms(double width_ms, double shift_fraction) {
  if (!(shift_fraction > 0.0) || shift_fraction > 1.0)
    throw std::invalid_argument("shift fraction must be in (0, 1]");
  if (!(width_ms > 0.0)) throw std::invalid_argument("frame width must be positive");
  return width_ms * shift_fraction;
}

AugPlan fraug_plan(const std::vector<double>& widths_ms,
                   const std::vector<double>& shift_fractions, double baseline_width_ms,
                   double baseline_shift_fraction, const dsp::FrameConfig& base) {
  if (widths_ms.empty() || shift_fractions.empty())
    throw std::invalid_argument("fraug_plan: width and shift lists must be non-empty");
  for (std::size_t i = 0; i < widths_ms.size(); ++i)
    for (std::size_t j = i + 1; j < widths_ms.size(); ++j)
      if (widths_ms[i] == widths_ms[j])
        throw std::invalid_argument("fraug_plan: duplicate width " +
                                    std::to_string(widths_ms[i]));
  for (std::size_t i = 0; i < shift_fractions.size(); ++i)
    for (std::size_t j = i + 1; j < shift_fractions.size(); ++j)
      if (shift_fractions[i] == shift_fractions[j])
        throw std::invalid_argument("fraug_plan: duplicate shift fraction " +
                                    std::to_string(shift_fractions[i]));

  bool baseline_in_grid =
      std::find(widths_ms.begin(), widths_ms.end(), baseline_width_ms) != widths_ms.end() &&
      std::find(shift_fractions.begin(), shift_fractions.end(), baseline_shift_fraction) !=
          shift_fractions.end();
  if (!baseline_in_grid)
    throw std::invalid_argument("fraug_plan: baseline (width, shift) not in the grid");

  AugPlan plan;
  plan.configs.reserve(widths_ms.size() * shift_fractions.size());
  dsp::FrameConfig baseline = base;
  baseline.frame_width_ms = baseline_width_ms;
  baseline.frame_shift_fraction = baseline_shift_fraction;
  plan.configs.push_back(baseline);
  for (double w : widths_ms) {
    for (double s : shift_fractions) {
      if (w == baseline_width_ms && s == baseline_shift_fraction) continue;
      dsp::FrameConfig c = base;
      c.frame_width_ms = w;
      c.frame_shift_fraction = s;
      plan.configs.push_back(c);
    }
  }
  return plan;
}

std::string plan_to_json(const AugPlan& plan) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : plan.configs)
    arr.push_back({{"width_ms", c.frame_width_ms}, {"shift_fraction", c.frame_shift_fraction}});
  return arr.dump(2);
}

AugPlan plan_from_json(const std::string& text, const dsp::FrameConfig& base) {
  nlohmann::json arr = nlohmann::json::parse(text);
  if (!arr.is_array() || arr.empty())
    throw std::invalid_argument("plan JSON must be a non-empty array");
  AugPlan plan;
  for (const auto& item : arr) {
    dsp::FrameConfig c = base;
    c.frame_width_ms = item.at("width_ms").get<double>();
    c.frame_shift_fraction = item.at("shift_fraction").get<double>();
    plan.configs.push_back(c);
  }
  for (std::size_t i = 0; i < plan.configs.size(); ++i)
    for (std::size_t j = i + 1; j < plan.configs.size(); ++j)
      if (plan.configs[i].frame_width_ms == plan.configs[j].frame_width_ms &&
          plan.configs[i].frame_shift_fraction == plan.configs[j].frame_shift_fraction)
        throw std::invalid_argument("plan JSON contains duplicate (width, shift) pairs");
  return plan;
}

dsp::Signal mix_noise(const dsp::Signal& signal, const dsp::Signal& noise, double snr_db,
                      Rng rng) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("snr_db must be finite");
  if (signal.samples.empty()) throw std::invalid_argument("mix_noise: empty signal");
  if (noise.samples.empty()) throw std::invalid_argument("mix_noise: empty noise");
  const double rms_signal = rms(signal.samples);
  if (rms_signal == 0.0)
    throw std::invalid_argument("mix_noise: all-zero signal has undefined SNR");

  // Random circular offset into the noise; shorter noise tiles naturally.
  const std::size_t n = signal.samples.size();
  const std::size_t offset =
      static_cast<std::size_t>(rng.uniform_int(0, noise.samples.size() - 1));
  std::vector<double> segment(n);
  for (std::size_t i = 0; i < n; ++i)
    segment[i] = noise.samples[(offset + i) % noise.samples.size()];
  const double rms_segment = rms(segment);
  if (rms_segment == 0.0)
    throw std::invalid_argument("mix_noise: selected noise segment is all-zero");

  const double gain = rms_signal / (rms_segment * std::pow(10.0, snr_db / 20.0));
  dsp::Signal out;
  out.sample_rate = signal.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = signal.samples[i] + gain * segment[i];
  return out;
}

dsp::Signal white_noise(std::size_t num_samples, int sample_rate, Rng rng) {
  dsp::Signal out;
  out.sample_rate = sample_rate;
  out.samples.resize(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) out.samples[i] = rng.normal(0.0, 0.1);
  return out;
}

dsp::Signal pink_noise(std::size_t num_samples, int sample_rate, Rng rng) {
  // Voss-McCartney: sum of octave-spaced sample-and-hold white sources.
  constexpr int kRows = 8;
  dsp::Signal out;
  out.sample_rate = sample_rate;
  out.samples.resize(num_samples);
  double rows[kRows];
  for (double& r : rows) r = rng.normal(0.0, 1.0);
  for (std::size_t i = 0; i < num_samples; ++i) {
    for (int r = 0; r < kRows; ++r)
      if (i % (std::size_t{1} << r) == 0) rows[r] = rng.normal(0.0, 1.0);
    double acc = 0.0;
    for (double v : rows) acc += v;
    out.samples[i] = acc;
  }
  const double scale = rms(out.samples);
  if (scale > 0.0)
    for (double& x : out.samples) x *= 0.1 / scale;
  return out;
}

dsp::Signal speed_perturb(const dsp::Signal& signal, double factor) {
  if (!(factor >= 0.5) || !(factor <= 2.0))
    throw std::invalid_argument("speed factor must be in [0.5, 2.0]");
  const std::size_t n = signal.samples.size();
  dsp::Signal out;
  out.sample_rate = signal.sample_rate;
  if (n == 0) return out;

  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) / factor));
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * factor;
    std::size_t idx = static_cast<std::size_t>(pos);
    if (idx >= n - 1) {
      out.samples[i] = signal.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(idx);
    if (frac == 0.0) {
      out.samples[i] = signal.samples[idx];  // exact pass-through at factor 1.0
    } else {
      out.samples[i] =
          signal.samples[idx] + frac * (signal.samples[idx + 1] - signal.samples[idx]);
    }
  }
  return out;
}

namespace {

// Waveform-similarity overlap-add time stretch to an exact output length.
// Each synthesis grain is chosen near its nominal analysis position by
// maximizing normalized correlation against the natural continuation of
// the previous grain, which keeps pitch periods aligned across joins.
std::vector<double> wsola_stretch(const std::vector<double>& x, std::size_t out_len) {
  constexpr std::size_t kGrain = 1024;
  constexpr std::size_t kHop = 256;
  constexpr std::size_t kSearch = 192;
  constexpr std::size_t kTemplate = 512;

  const std::size_t n = x.size();
  if (out_len == 0) return {};
  if (n <= kGrain + 2 * kSearch + kTemplate) {
    // Too short for grain alignment: plain linear resample.
    std::vector<double> out(out_len);
    const double step = out_len > 1
                            ? static_cast<double>(n - 1) / static_cast<double>(out_len - 1)
                            : 0.0;
    for (std::size_t i = 0; i < out_len; ++i) {
      const double pos = static_cast<double>(i) * step;
      std::size_t idx = static_cast<std::size_t>(pos);
      if (idx >= n - 1) {
        out[i] = x[n - 1];
      } else {
        const double frac = pos - static_cast<double>(idx);
        out[i] = x[idx] + frac * (x[idx + 1] - x[idx]);
      }
    }
    return out;
  }

  std::vector<double> win(kGrain);
  for (std::size_t i = 0; i < kGrain; ++i)
    win[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                  static_cast<double>(kGrain - 1));

  std::vector<double> out(out_len, 0.0);
  std::vector<double> weight(out_len, 0.0);

  const std::size_t max_pos = n - kGrain;
  const std::size_t out_span = out_len > kGrain ? out_len - kGrain : 0;
  const double scale = out_span > 0
                           ? static_cast<double>(max_pos > kSearch ? max_pos - kSearch : 0) /
                                 static_cast<double>(out_span)
                           : 0.0;

  std::size_t prev_pos = 0;
  bool have_prev = false;
  bool last_grain = false;
  for (std::size_t t = 0; !last_grain; t += kHop) {
    std::size_t t_clamped = t;
    if (t >= out_span) {  // final grain lands exactly at the end
      t_clamped = out_span;
      last_grain = true;
    }
    std::size_t nominal =
        static_cast<std::size_t>(std::llround(static_cast<double>(t_clamped) * scale));
    nominal = std::min(nominal, max_pos);

    std::size_t pos = nominal;
    if (have_prev) {
      // Target: where the previous grain would continue naturally.
      const std::size_t target = std::min(prev_pos + kHop, n - kTemplate);
      const std::size_t lo = nominal > kSearch ? nominal - kSearch : 0;
      const std::size_t hi = std::min(nominal + kSearch, n - kTemplate);
      double best = -2.0;
      for (std::size_t p = lo; p <= hi; ++p) {
        double dot = 0.0, e1 = 0.0, e2 = 0.0;
        const double* a = x.data() + p;
        const double* b = x.data() + target;
        for (std::size_t i = 0; i < kTemplate; ++i) {
          dot += a[i] * b[i];
          e1 += a[i] * a[i];
          e2 += b[i] * b[i];
        }
        const double denom = std::sqrt(e1 * e2);
        const double corr = denom > 1e-12 ? dot / denom : 0.0;
        if (corr > best) {
          best = corr;
          pos = p;
        }
      }
      pos = std::min(pos, max_pos);
    }

    const std::size_t span = std::min(kGrain, out_len - t_clamped);
    for (std::size_t i = 0; i < span; ++i) {
      out[t_clamped + i] += x[pos + i] * win[i];
      weight[t_clamped + i] += win[i];
    }
    prev_pos = pos;
    have_prev = true;
  }

  for (std::size_t i = 0; i < out_len; ++i)
    if (weight[i] > 1e-9) out[i] /= weight[i];
  return out;
}

}  // namespace

dsp::Signal pitch_perturb(const dsp::Signal& signal, double semitones) {
  if (!(std::abs(semitones) <= 12.0))
    throw std::invalid_argument("pitch shift must satisfy |semitones| <= 12");
  if (semitones == 0.0) return signal;

  const double ratio = std::pow(2.0, semitones / 12.0);
  // Resampling by `ratio` scales pitch and duration together; the
  // overlap-add stretch restores the original duration, leaving pitch.
  dsp::Signal resampled = speed_perturb(signal, ratio);
  dsp::Signal out;
  out.sample_rate = signal.sample_rate;
  out.samples = wsola_stretch(resampled.samples, signal.samples.size());
  return out;
}

dsp::Spectrogram vtlp_warp(const dsp::Spectrogram& spectrogram, const WarpSpec& spec) {
  if (!(spec.alpha > 0.0)) throw std::invalid_argument("vtlp alpha must be positive");
  const double nyquist = spectrogram.sample_rate / 2.0;
  if (!(spec.boundary_hz > 0.0) || !(spec.boundary_hz < nyquist))
    throw std::invalid_argument("vtlp boundary must be in (0, Nyquist)");
  const double f0 = spec.boundary_hz;
  const double warped_f0 = spec.alpha * f0;
  if (!(warped_f0 < nyquist))
    throw std::invalid_argument("vtlp alpha * boundary must stay below Nyquist");

  const std::size_t bins = spectrogram.num_bins();
  const std::size_t frames = spectrogram.num_frames();
  const std::size_t dft = (bins - 1) * 2;
  const double bin_hz = static_cast<double>(spectrogram.sample_rate) / static_cast<double>(dft);

  // Inverse warp and its slope (the Jacobian weight) per output bin.
  std::vector<double> src_pos(bins);
  std::vector<double> jacobian(bins);
  const double upper_slope_inv = (nyquist - f0) / (nyquist - warped_f0);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    double src_f, slope;
    if (f < warped_f0) {
      src_f = f / spec.alpha;
      slope = 1.0 / spec.alpha;
    } else {
      src_f = f0 + (f - warped_f0) * upper_slope_inv;
      slope = upper_slope_inv;
    }
    double pos = src_f / bin_hz;
    if (pos < 0.0) pos = 0.0;
    if (pos > static_cast<double>(bins - 1)) pos = static_cast<double>(bins - 1);
    src_pos[k] = pos;
    jacobian[k] = slope;
  }

  dsp::Spectrogram out;
  out.config = spectrogram.config;
  out.sample_rate = spectrogram.sample_rate;
  out.magnitudes = Matrix(frames, bins);
  for (std::size_t r = 0; r < frames; ++r) {
    const double* src = spectrogram.magnitudes.row(r);
    double* dst = out.magnitudes.row(r);
    for (std::size_t k = 0; k < bins; ++k) {
      const double pos = src_pos[k];
      const std::size_t idx = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(idx);
      double v;
      if (frac == 0.0) {
        v = src[idx];
      } else {
        v = src[idx] + frac * (src[idx + 1] - src[idx]);
      }
      dst[k] = v * jacobian[k];
    }
  }
  return out;
}

}  // namespace fraug::aug
