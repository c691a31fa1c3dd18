#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fraug/dsp.hpp"
#include "fraug/rng.hpp"

namespace fraug::corpus {

enum class Split { Train, Validation, Test };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

struct Utterance {
  std::string id;
  std::filesystem::path audio_path;  // absolute after load_manifest resolves it
  int label = 0;                     // 0 = control, 1 = depressed
  Split split = Split::Train;
};

struct Manifest {
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> split_members(Split split) const;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON-lines, one {id, path, label, split} object per line. Paths are
// resolved relative to the manifest's directory. Malformed lines report
// their 1-based line number; duplicate ids and missing audio files are
// rejected with the offending ids listed.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Class-separation knobs for the synthetic corpus. Class 1 ("depressed")
// defaults to lower mean F0, narrower F0 variation and a slower syllable
// rate than class 0, with overlapping distributions.
struct SynthParams {
  struct ClassProfile {
    double f0_mean_mu;        // Hz, population mean of per-utterance mean F0
    double f0_mean_sd;        // Hz, population spread
    double f0_wander;         // relative F0 spread across syllables
    double syllable_rate_mu;  // syllables per second
    double syllable_rate_sd;
  };

  ClassProfile control{165.0, 20.0, 0.060, 3.6, 0.50};
  ClassProfile depressed{135.0, 16.0, 0.030, 2.6, 0.45};
  double duration_min_s = 2.0;
  double duration_max_s = 6.0;
  double noise_rms_min = 0.010;
  double noise_rms_max = 0.030;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  int sample_rate = 16000;
};

// Writes wav/<id>.wav files plus manifest.jsonl under out_dir and returns
// the manifest. Deterministic: each utterance is generated from a seed
// derived from (seed, utterance id), so the tree is byte-identical across
// runs with the same arguments.
Manifest synth_corpus(std::size_t n_per_class, std::uint64_t seed, const SynthParams& params,
                      const std::filesystem::path& out_dir);

// One fixed-length slice of a feature matrix; the trainer's input unit.
struct Segment {
  Matrix features;
  std::string source_utterance;
  dsp::FrameConfig source_config;
  std::size_t index = 0;  // position of this segment within its source
  int label = 0;
};

// Crops every feature matrix to the minimum frame count over the list,
// with an independent uniform start offset per matrix.
std::vector<dsp::FeatureMatrix> random_crop(const std::vector<dsp::FeatureMatrix>& features,
                                            std::uint64_t seed);

// Non-overlapping consecutive slices of frames_per_segment frames; the
// trailing remainder is dropped.
std::vector<Segment> segmentize(const dsp::FeatureMatrix& features,
                                std::size_t frames_per_segment = 120,
                                std::string_view source_utterance = "", int label = 0);

// Equal-count class subsample (min class count from each class), sampled
// without replacement and shuffled, all driven by the seed.
std::vector<Segment> balanced_sample(const std::vector<Segment>& segments,
                                     std::uint64_t seed);

}  // namespace fraug::corpus
