#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace fraug::dsp {

// Mono waveform with samples normalized to [-1, 1).
struct Signal {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads a 16-bit PCM mono RIFF/WAVE file. Rejects anything else
// (wrong magic, compressed formats, multi-channel, other bit depths)
// with a WavError naming the offending field.
Signal read_wav(const std::filesystem::path& path);

// Writes a canonical 44-byte-header 16-bit PCM mono file. Samples are
// scaled by 32768, rounded to nearest and clamped to the int16 range.
// The write is atomic: a temporary file is renamed into place.
void write_wav(const Signal& signal, const std::filesystem::path& path);

}  // namespace fraug::dsp
