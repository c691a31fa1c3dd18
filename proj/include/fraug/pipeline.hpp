#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fraug/augment.hpp"
#include "fraug/corpus.hpp"
#include "fraug/dsp.hpp"
#include "fraug/stats.hpp"
#include "fraug/trainer.hpp"

namespace fraug::pipeline {

enum class PolicyKind { None, Fraug, Noise, Vtlp, Speed, Pitch };

const char* policy_kind_name(PolicyKind kind);
PolicyKind policy_kind_from_name(const std::string& name);

// One concrete parameterization of an augmentation policy. Only the
// fields relevant to `kind` are meaningful.
struct PolicyVariant {
  PolicyKind kind = PolicyKind::None;

  // fraug: the (width, shift) grid; the experiment's baseline pair must
  // be a member.
  std::vector<double> widths_ms;
  std::vector<double> shift_fractions;

  // noise / vtlp: number of folds, each with one parameter draw.
  std::size_t folds = 4;
  aug::NoiseSource noise_source = aug::NoiseSource::White;
  std::string noise_directory;
  std::vector<double> snr_choices_db{0.0, 5.0, 10.0, 15.0};
  std::vector<double> vtlp_alphas{0.9, 0.95, 1.05, 1.1};
  double vtlp_boundary_hz = 4800.0;

  // speed / pitch: one fold per listed value.
  std::vector<double> speed_factors;
  std::vector<double> pitch_semitones;

  // Canonical JSON; also the basis for the content-derived seeds, so
  // identical variants always reproduce identical results.
  nlohmann::json to_json() const;
  static PolicyVariant from_json(const nlohmann::json& obj);

  std::size_t fold_count(const dsp::FrameConfig& baseline) const;
};

struct Policy {
  std::string name;
  std::vector<PolicyVariant> variants;  // best-on-validation is selected

  nlohmann::json to_json() const;
  static Policy from_json(const nlohmann::json& obj);
};

struct ExperimentConfig {
  std::filesystem::path manifest_path;
  dsp::FeatureKind feature = dsp::FeatureKind::LogMel;
  dsp::FrameConfig baseline;
  std::vector<Policy> policies;
  train::TrainConfig train;
  std::filesystem::path out_dir;
  std::uint64_t master_seed = 0;
  std::size_t frames_per_segment = 120;
  // Fixed affine input transform x -> (x - center) / scale applied to
  // segments entering the model (features on disk stay raw).
  double input_center = -10.0;
  double input_scale = 8.0;
  std::size_t jobs = 1;
  bool write_feature_files = true;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& obj,
                                             const std::filesystem::path& base_dir);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

// Hash of the canonical config JSON (paths as given, jobs excluded);
// stamped into every artifact sidecar together with the master seed.
std::string experiment_config_hash(const ExperimentConfig& config);

// One extraction group: a frame config plus an optional waveform/spectral
// transform. Fold 0 of every policy is the untouched baseline.
struct Fold {
  std::string tag;  // "base", "L128_R0.25", "fold1", ...
  dsp::FrameConfig config;
  PolicyKind kind = PolicyKind::None;  // transform applied before extraction
  std::uint64_t fold_seed = 0;         // per-utterance draws derive from this
  double snr_db = 0.0;
  aug::NoiseSource noise_source = aug::NoiseSource::White;
  std::string noise_directory;
  double speed_factor = 1.0;
  double pitch_semitones = 0.0;
  aug::WarpSpec warp;
  nlohmann::json params;  // human-readable fold description for sidecars
};

// Expands a policy variant into its folds (baseline first). Per-fold
// parameter draws (SNR, VTLP alpha) come from seeds derived from the
// master seed and the variant's content.
std::vector<Fold> materialize_folds(const PolicyVariant& variant,
                                    const dsp::FrameConfig& baseline,
                                    std::uint64_t master_seed);

// Runs body(i) for i in [0, count) on up to `jobs` threads. Each index
// owns its outputs, so results are identical for any jobs value; the
// first exception is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body);

// The waveform-domain transform of a noise/speed/pitch fold. Throws for
// folds that do not touch the waveform (none, fraug, vtlp).
dsp::Signal apply_fold_waveform(const dsp::Signal& signal, const corpus::Utterance& utterance,
                                const Fold& fold);

// Features of one utterance under one fold: applies the fold's waveform
// or spectral transform, then extracts at the fold's frame config.
// Values are narrowed through float32, matching the feature-file payload.
dsp::FeatureMatrix extract_fold_features(const dsp::Signal& signal,
                                         const corpus::Utterance& utterance,
                                         const Fold& fold, dsp::FeatureKind kind);

struct UnitRecord {
  std::string id;
  int label = 0;
  double prob = 0.0;
  int predicted = 0;
};

struct PolicyOutcome {
  std::string name;
  std::size_t selected_variant = 0;
  std::size_t folds = 0;
  double validation_f1 = 0.0;
  double test_f1 = 0.0;
  std::vector<UnitRecord> validation_units;
  std::vector<UnitRecord> test_units;
};

struct ExperimentResult {
  std::vector<PolicyOutcome> policies;
  std::string config_hash;
  std::filesystem::path out_dir;
  std::string results_csv;  // policy,validation_f1,test_f1,folds
  std::string reports_csv;  // pairings against the "none" policy
  nlohmann::json reports_json;
};

// extract -> train (ensemble per policy variant) -> select best variant
// on validation -> evaluate once on test; writes features, models,
// predictions, reports.csv/json and results.csv under out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Standalone extraction (CLI `extract`): one feature file per
// (utterance, config); validation/test get the baseline config only.
// Returns the number of feature files written.
std::size_t extract_manifest_features(const corpus::Manifest& manifest,
                                      const aug::AugPlan& plan, dsp::FeatureKind kind,
                                      const std::filesystem::path& out_dir, std::size_t jobs,
                                      std::uint64_t master_seed = 0);

}  // namespace fraug::pipeline
