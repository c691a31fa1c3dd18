#include "fraug/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "fraug/features_io.hpp"

namespace fraug::pipeline {

namespace {

using nlohmann::json;

std::string format_num(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

std::string format_f1(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

}  // namespace

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= count) break;
          body(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

const char* noise_source_name(aug::NoiseSource source) {
  switch (source) {
    case aug::NoiseSource::White: return "white";
    case aug::NoiseSource::Pink: return "pink";
    case aug::NoiseSource::Directory: return "directory";
  }
  return "white";
}

aug::NoiseSource noise_source_from_name(const std::string& name) {
  if (name == "white") return aug::NoiseSource::White;
  if (name == "pink") return aug::NoiseSource::Pink;
  if (name == "directory") return aug::NoiseSource::Directory;
  throw std::invalid_argument("unknown noise source '" + name +
                              "' (expected white, pink or directory)");
}

std::string sanitize_name(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("policy") : out;
}

std::string fold_tag_for_config(const dsp::FrameConfig& config) {
  return "L" + format_num(config.frame_width_ms) + "_R" + format_num(config.frame_shift_fraction);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void standardize_matrix(Matrix& m, double center, double scale) {
  for (double& v : m.data()) v = (v - center) / scale;
}

std::vector<double> require_number_array(const json& obj, const char* key) {
  if (!obj.contains(key) || !obj.at(key).is_array() || obj.at(key).empty())
    throw std::invalid_argument(std::string("policy field '") + key +
                                "' must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& v : obj.at(key)) {
    if (!v.is_number())
      throw std::invalid_argument(std::string("policy field '") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

const char* policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::None: return "none";
    case PolicyKind::Fraug: return "fraug";
    case PolicyKind::Noise: return "noise";
    case PolicyKind::Vtlp: return "vtlp";
    case PolicyKind::Speed: return "speed";
    case PolicyKind::Pitch: return "pitch";
  }
  return "none";
}

PolicyKind policy_kind_from_name(const std::string& name) {
  if (name == "none") return PolicyKind::None;
  if (name == "fraug") return PolicyKind::Fraug;
  if (name == "noise") return PolicyKind::Noise;
  if (name == "vtlp") return PolicyKind::Vtlp;
  if (name == "speed") return PolicyKind::Speed;
  if (name == "pitch") return PolicyKind::Pitch;
  throw std::invalid_argument("unknown policy '" + name +
                              "' (expected none, fraug, noise, vtlp, speed or pitch)");
}

json PolicyVariant::to_json() const {
  json o;
  o["policy"] = policy_kind_name(kind);
  switch (kind) {
    case PolicyKind::None: break;
    case PolicyKind::Fraug:
      o["widths_ms"] = widths_ms;
      o["shift_fractions"] = shift_fractions;
      break;
    case PolicyKind::Noise:
      o["folds"] = folds;
      o["source"] = noise_source_name(noise_source);
      if (noise_source == aug::NoiseSource::Directory) o["directory"] = noise_directory;
      o["snr_choices_db"] = snr_choices_db;
      break;
    case PolicyKind::Vtlp:
      o["folds"] = folds;
      o["alphas"] = vtlp_alphas;
      o["boundary_hz"] = vtlp_boundary_hz;
      break;
    case PolicyKind::Speed:
      o["factors"] = speed_factors;
      break;
    case PolicyKind::Pitch:
      o["semitones"] = pitch_semitones;
      break;
  }
  return o;
}

PolicyVariant PolicyVariant::from_json(const json& obj) {
  if (!obj.is_object() || !obj.contains("policy") || !obj.at("policy").is_string())
    throw std::invalid_argument("policy object needs a string field 'policy'");
  PolicyVariant v;
  v.kind = policy_kind_from_name(obj.at("policy").get<std::string>());
  switch (v.kind) {
    case PolicyKind::None:
      break;
    case PolicyKind::Fraug:
      v.widths_ms = require_number_array(obj, "widths_ms");
      v.shift_fractions = require_number_array(obj, "shift_fractions");
      break;
    case PolicyKind::Noise:
      v.folds = obj.value("folds", std::size_t{4});
      v.noise_source = noise_source_from_name(obj.value("source", std::string("white")));
      v.noise_directory = obj.value("directory", std::string());
      if (obj.contains("snr_choices_db")) v.snr_choices_db = require_number_array(obj, "snr_choices_db");
      if (v.noise_source == aug::NoiseSource::Directory && v.noise_directory.empty())
        throw std::invalid_argument("noise policy with source 'directory' needs 'directory'");
      break;
    case PolicyKind::Vtlp:
      v.folds = obj.value("folds", std::size_t{4});
      if (obj.contains("alphas")) v.vtlp_alphas = require_number_array(obj, "alphas");
      v.vtlp_boundary_hz = obj.value("boundary_hz", 4800.0);
      break;
    case PolicyKind::Speed:
      v.speed_factors = require_number_array(obj, "factors");
      break;
    case PolicyKind::Pitch:
      v.pitch_semitones = require_number_array(obj, "semitones");
      break;
  }
  if ((v.kind == PolicyKind::Noise || v.kind == PolicyKind::Vtlp) && v.folds == 0)
    throw std::invalid_argument("policy 'folds' must be at least 1");
  return v;
}

std::size_t PolicyVariant::fold_count(const dsp::FrameConfig& baseline) const {
  switch (kind) {
    case PolicyKind::None: return 0;
    case PolicyKind::Fraug:
      return aug::fraug_plan(widths_ms, shift_fractions, baseline.frame_width_ms,
                             baseline.frame_shift_fraction, baseline)
          .fold_count();
    case PolicyKind::Noise:
    case PolicyKind::Vtlp: return folds;
    case PolicyKind::Speed: return speed_factors.size();
    case PolicyKind::Pitch: return pitch_semitones.size();
  }
  return 0;
}

json Policy::to_json() const {
  json arr = json::array();
  for (const auto& v : variants) arr.push_back(v.to_json());
  return json{{"name", name}, {"variants", arr}};
}

Policy Policy::from_json(const json& obj) {
  if (!obj.is_object()) throw std::invalid_argument("policy entry must be a JSON object");
  Policy p;
  if (obj.contains("variants")) {
    if (!obj.at("variants").is_array() || obj.at("variants").empty())
      throw std::invalid_argument("'variants' must be a non-empty array");
    for (const auto& v : obj.at("variants")) p.variants.push_back(PolicyVariant::from_json(v));
  } else {
    p.variants.push_back(PolicyVariant::from_json(obj));
  }
  p.name = obj.value("name", std::string(policy_kind_name(p.variants.front().kind)));
  return p;
}

ExperimentConfig experiment_config_from_json(const json& obj,
                                             const std::filesystem::path& base_dir) {
  if (!obj.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  ExperimentConfig cfg;
  if (!obj.contains("manifest") || !obj.at("manifest").is_string())
    throw std::invalid_argument("experiment config needs a string field 'manifest'");
  std::filesystem::path manifest = obj.at("manifest").get<std::string>();
  cfg.manifest_path = manifest.is_absolute() ? manifest : base_dir / manifest;
  cfg.feature = dsp::feature_kind_from_name(obj.value("feature", std::string("log_mel")));
  if (obj.contains("baseline")) cfg.baseline = io::frame_config_from_json(obj.at("baseline"));
  if (obj.contains("policies")) {
    if (!obj.at("policies").is_array() || obj.at("policies").empty())
      throw std::invalid_argument("'policies' must be a non-empty array");
    for (const auto& p : obj.at("policies")) cfg.policies.push_back(Policy::from_json(p));
  } else {
    // Bare configs compare the un-augmented baseline against the default
    // frame-rate grid.
    PolicyVariant none;
    PolicyVariant fraug;
    fraug.kind = PolicyKind::Fraug;
    fraug.widths_ms = {64.0, 128.0};
    fraug.shift_fractions = {0.5, 0.25, 0.1};
    cfg.policies.push_back(Policy{"none", {none}});
    cfg.policies.push_back(Policy{"fraug", {fraug}});
  }
  if (obj.contains("train")) {
    const json& t = obj.at("train");
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.dropout_p = t.value("dropout_p", cfg.train.dropout_p);
    cfg.train.ensemble_size = t.value("ensemble_size", cfg.train.ensemble_size);
  }
  std::filesystem::path out = obj.value("out", std::string("out"));
  cfg.out_dir = out.is_absolute() ? out : base_dir / out;
  cfg.master_seed = obj.value("seed", std::uint64_t{0});
  cfg.frames_per_segment = obj.value("frames_per_segment", std::size_t{120});
  cfg.input_center = obj.value("input_center", cfg.input_center);
  cfg.input_scale = obj.value("input_scale", cfg.input_scale);
  cfg.jobs = obj.value("jobs", std::size_t{1});
  cfg.write_feature_files = obj.value("write_features", true);
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& config) {
  json policies = json::array();
  for (const auto& p : config.policies) policies.push_back(p.to_json());
  return json{{"manifest", config.manifest_path.generic_string()},
              {"feature", dsp::feature_kind_name(config.feature)},
              {"baseline", io::frame_config_to_json(config.baseline)},
              {"policies", policies},
              {"train",
               {{"epochs", config.train.epochs},
                {"learning_rate", config.train.learning_rate},
                {"batch_size", config.train.batch_size},
                {"dropout_p", config.train.dropout_p},
                {"ensemble_size", config.train.ensemble_size}}},
              {"out", config.out_dir.generic_string()},
              {"seed", config.master_seed},
              {"frames_per_segment", config.frames_per_segment},
              {"input_center", config.input_center},
              {"input_scale", config.input_scale},
              {"jobs", config.jobs},
              {"write_features", config.write_feature_files}};
}

std::string experiment_config_hash(const ExperimentConfig& config) {
  json j = experiment_config_to_json(config);
  j.erase("jobs");  // runtime knob; must not change any result
  return io::json_hash(j);
}

std::vector<Fold> materialize_folds(const PolicyVariant& variant,
                                    const dsp::FrameConfig& baseline,
                                    std::uint64_t master_seed) {
  std::vector<Fold> folds;
  Fold base;
  base.tag = "base";
  base.config = baseline;
  base.kind = PolicyKind::None;
  base.params = json{{"transform", "none"}};
  folds.push_back(base);

  const std::string key = io::json_hash(variant.to_json());
  switch (variant.kind) {
    case PolicyKind::None:
      break;
    case PolicyKind::Fraug: {
      const aug::AugPlan plan =
          aug::fraug_plan(variant.widths_ms, variant.shift_fractions, baseline.frame_width_ms,
                          baseline.frame_shift_fraction, baseline);
      for (std::size_t i = 1; i < plan.configs.size(); ++i) {
        Fold f;
        f.config = plan.configs[i];
        f.tag = fold_tag_for_config(f.config);
        f.kind = PolicyKind::Fraug;
        f.params = json{{"transform", "fraug"},
                        {"width_ms", f.config.frame_width_ms},
                        {"shift_fraction", f.config.frame_shift_fraction}};
        folds.push_back(std::move(f));
      }
      break;
    }
    case PolicyKind::Noise: {
      if (variant.snr_choices_db.empty())
        throw std::invalid_argument("noise policy needs at least one SNR choice");
      for (std::size_t j = 1; j <= variant.folds; ++j) {
        Fold f;
        f.tag = "fold" + std::to_string(j);
        f.config = baseline;
        f.kind = PolicyKind::Noise;
        f.fold_seed = derive_seed(master_seed, "fold:" + key, j);
        Rng rng(f.fold_seed);
        f.snr_db = variant.snr_choices_db[rng.index(variant.snr_choices_db.size())];
        f.noise_source = variant.noise_source;
        f.noise_directory = variant.noise_directory;
        f.params = json{{"transform", "noise"},
                        {"source", noise_source_name(f.noise_source)},
                        {"snr_db", f.snr_db}};
        folds.push_back(std::move(f));
      }
      break;
    }
    case PolicyKind::Vtlp: {
      if (variant.vtlp_alphas.empty())
        throw std::invalid_argument("vtlp policy needs at least one alpha choice");
      for (std::size_t j = 1; j <= variant.folds; ++j) {
        Fold f;
        f.tag = "fold" + std::to_string(j);
        f.config = baseline;
        f.kind = PolicyKind::Vtlp;
        f.fold_seed = derive_seed(master_seed, "fold:" + key, j);
        Rng rng(f.fold_seed);
        f.warp.alpha = variant.vtlp_alphas[rng.index(variant.vtlp_alphas.size())];
        f.warp.boundary_hz = variant.vtlp_boundary_hz;
        f.params = json{{"transform", "vtlp"},
                        {"alpha", f.warp.alpha},
                        {"boundary_hz", f.warp.boundary_hz}};
        folds.push_back(std::move(f));
      }
      break;
    }
    case PolicyKind::Speed: {
      for (std::size_t j = 0; j < variant.speed_factors.size(); ++j) {
        Fold f;
        f.tag = "fold" + std::to_string(j + 1);
        f.config = baseline;
        f.kind = PolicyKind::Speed;
        f.speed_factor = variant.speed_factors[j];
        f.params = json{{"transform", "speed"}, {"factor", f.speed_factor}};
        folds.push_back(std::move(f));
      }
      break;
    }
    case PolicyKind::Pitch: {
      for (std::size_t j = 0; j < variant.pitch_semitones.size(); ++j) {
        Fold f;
        f.tag = "fold" + std::to_string(j + 1);
        f.config = baseline;
        f.kind = PolicyKind::Pitch;
        f.pitch_semitones = variant.pitch_semitones[j];
        f.params = json{{"transform", "pitch"}, {"semitones", f.pitch_semitones}};
        folds.push_back(std::move(f));
      }
      break;
    }
  }
  return folds;
}

namespace {

dsp::Signal fold_noise_signal(const dsp::Signal& signal, const corpus::Utterance& utterance,
                              const Fold& fold) {
  const std::uint64_t utt_seed = derive_seed(fold.fold_seed, utterance.id);
  if (fold.noise_source == aug::NoiseSource::Directory) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(fold.noise_directory)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::invalid_argument("noise directory '" + fold.noise_directory +
                                  "' contains no .wav files");
    Rng rng(derive_seed(utt_seed, "pick"));
    dsp::Signal noise = dsp::read_wav(files[rng.index(files.size())]);
    if (noise.sample_rate != signal.sample_rate)
      throw std::invalid_argument("noise file sample rate " +
                                  std::to_string(noise.sample_rate) + " does not match signal " +
                                  std::to_string(signal.sample_rate));
    return noise;
  }
  Rng rng(derive_seed(utt_seed, "gen"));
  return fold.noise_source == aug::NoiseSource::Pink
             ? aug::pink_noise(signal.samples.size(), signal.sample_rate, rng)
             : aug::white_noise(signal.samples.size(), signal.sample_rate, rng);
}

}  // namespace

dsp::Signal apply_fold_waveform(const dsp::Signal& signal, const corpus::Utterance& utterance,
                                const Fold& fold) {
  switch (fold.kind) {
    case PolicyKind::Noise: {
      const dsp::Signal noise = fold_noise_signal(signal, utterance, fold);
      return aug::mix_noise(
          signal, noise, fold.snr_db,
          Rng(derive_seed(derive_seed(fold.fold_seed, utterance.id), "mix")));
    }
    case PolicyKind::Speed:
      return aug::speed_perturb(signal, fold.speed_factor);
    case PolicyKind::Pitch:
      return aug::pitch_perturb(signal, fold.pitch_semitones);
    case PolicyKind::None:
    case PolicyKind::Fraug:
    case PolicyKind::Vtlp:
      break;
  }
  throw std::invalid_argument(std::string("fold '") + fold.tag +
                              "' does not transform the waveform");
}

dsp::FeatureMatrix extract_fold_features(const dsp::Signal& signal,
                                         const corpus::Utterance& utterance, const Fold& fold,
                                         dsp::FeatureKind kind) {
  dsp::FeatureMatrix fm;
  switch (fold.kind) {
    case PolicyKind::None:
    case PolicyKind::Fraug:
      fm = dsp::extract_features(signal, fold.config, kind);
      break;
    case PolicyKind::Noise:
    case PolicyKind::Speed:
    case PolicyKind::Pitch:
      fm = dsp::extract_features(apply_fold_waveform(signal, utterance, fold), fold.config, kind);
      break;
    case PolicyKind::Vtlp: {
      const dsp::Spectrogram warped = aug::vtlp_warp(dsp::stft(signal, fold.config), fold.warp);
      fm = kind == dsp::FeatureKind::LogMel ? dsp::log_mel_from_spectrogram(warped)
                                            : dsp::mfcc_from_spectrogram(warped);
      break;
    }
  }
  // Features always pass through float32 before use or storage, so the
  // in-memory pipeline and a feature-file round trip see identical values.
  fm.values = io::round_matrix_f32(fm.values);
  return fm;
}

namespace {

// result[fold][utterance]; each wav is read once per call.
std::vector<std::vector<dsp::FeatureMatrix>> extract_groups(
    const std::vector<const corpus::Utterance*>& utterances, const std::vector<Fold>& folds,
    dsp::FeatureKind kind, std::size_t jobs) {
  std::vector<std::vector<dsp::FeatureMatrix>> result(folds.size());
  for (auto& g : result) g.resize(utterances.size());
  parallel_for(utterances.size(), jobs, [&](std::size_t i) {
    const dsp::Signal signal = dsp::read_wav(utterances[i]->audio_path);
    for (std::size_t f = 0; f < folds.size(); ++f)
      result[f][i] = extract_fold_features(signal, *utterances[i], folds[f], kind);
  });
  return result;
}

std::vector<corpus::Segment> build_subset(
    const std::vector<const std::vector<dsp::FeatureMatrix>*>& groups,
    const std::vector<Fold>& folds, const std::vector<const corpus::Utterance*>& utterances,
    std::size_t frames_per_segment, double center, double scale, std::uint64_t model_seed) {
  std::vector<corpus::Segment> all;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto cropped =
        corpus::random_crop(*groups[g], derive_seed(model_seed, "crop:" + folds[g].tag));
    std::size_t produced = 0;
    for (std::size_t i = 0; i < cropped.size(); ++i) {
      auto segments = corpus::segmentize(cropped[i], frames_per_segment, utterances[i]->id,
                                         utterances[i]->label);
      produced += segments.size();
      for (auto& s : segments) all.push_back(std::move(s));
    }
    if (produced == 0)
      throw std::invalid_argument(
          "training fold '" + folds[g].tag + "': cropped utterances have " +
          std::to_string(cropped.empty() ? 0 : cropped.front().num_frames()) +
          " frames, fewer than frames_per_segment = " + std::to_string(frames_per_segment));
  }
  auto subset = corpus::balanced_sample(all, derive_seed(model_seed, "balance"));
  for (auto& s : subset) standardize_matrix(s.features, center, scale);
  return subset;
}

std::vector<UnitRecord> predict_units(const std::vector<train::ModelParams>& models,
                                      const std::vector<const corpus::Utterance*>& utterances,
                                      const std::vector<dsp::FeatureMatrix>& features,
                                      std::size_t frames_per_segment, double center,
                                      double scale) {
  std::vector<UnitRecord> out;
  out.reserve(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto segments = corpus::segmentize(features[i], frames_per_segment,
                                             utterances[i]->id, utterances[i]->label);
    if (segments.empty())
      throw std::runtime_error("utterance '" + utterances[i]->id + "' has " +
                               std::to_string(features[i].num_frames()) +
                               " frames, fewer than frames_per_segment = " +
                               std::to_string(frames_per_segment));
    std::vector<Matrix> mats;
    mats.reserve(segments.size());
    for (const auto& s : segments) {
      Matrix m = s.features;
      standardize_matrix(m, center, scale);
      mats.push_back(std::move(m));
    }
    const train::Prediction pred = train::ensemble_predict(models, mats);
    out.push_back({utterances[i]->id, utterances[i]->label, pred.utterance_prob,
                   pred.utterance_label});
  }
  return out;
}

double units_f1(const std::vector<UnitRecord>& units) {
  std::vector<stats::UnitPrediction> preds;
  std::vector<stats::UnitLabel> labels;
  for (const auto& u : units) {
    preds.push_back({u.id, u.predicted});
    labels.push_back({u.id, u.label});
  }
  return stats::f1(stats::confusion(preds, labels));
}

std::vector<stats::UnitPrediction> to_unit_predictions(const std::vector<UnitRecord>& units) {
  std::vector<stats::UnitPrediction> preds;
  preds.reserve(units.size());
  for (const auto& u : units) preds.push_back({u.id, u.predicted});
  return preds;
}

json units_to_json(const std::vector<UnitRecord>& units) {
  json arr = json::array();
  for (const auto& u : units)
    arr.push_back(json{{"id", u.id}, {"label", u.label}, {"prob", u.prob}, {"pred", u.predicted}});
  return arr;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.policies.empty())
    throw std::invalid_argument("experiment needs at least one policy");
  for (const auto& p : config.policies)
    if (p.variants.empty())
      throw std::invalid_argument("policy '" + p.name + "' has no variants");
  if (config.frames_per_segment == 0)
    throw std::invalid_argument("frames_per_segment must be positive");
  if (!(config.input_scale > 0.0) || !std::isfinite(config.input_scale) ||
      !std::isfinite(config.input_center))
    throw std::invalid_argument("input_center/input_scale must be finite, scale positive");
  train::validate_train_config(config.train);

  const corpus::Manifest manifest = corpus::load_manifest(config.manifest_path);
  const auto train_utts = manifest.split_members(corpus::Split::Train);
  const auto val_utts = manifest.split_members(corpus::Split::Validation);
  const auto test_utts = manifest.split_members(corpus::Split::Test);
  if (train_utts.empty() || val_utts.empty() || test_utts.empty())
    throw std::invalid_argument("manifest must populate all of train, validation and test");

  const std::string config_hash = experiment_config_hash(config);
  const std::filesystem::path features_root = config.out_dir / "features";
  const std::filesystem::path models_root = config.out_dir / "models";
  const std::filesystem::path predictions_root = config.out_dir / "predictions";
  std::filesystem::create_directories(config.out_dir);
  std::filesystem::create_directories(models_root);
  std::filesystem::create_directories(predictions_root);
  if (config.write_feature_files) std::filesystem::create_directories(features_root);

  Fold base_fold;
  base_fold.tag = "base";
  base_fold.config = config.baseline;
  base_fold.params = json{{"transform", "none"}};

  // Baseline features of the untouched audio are shared by every policy:
  // fold 0 of each training set, and the only validation/test extraction.
  const std::vector<Fold> base_only{base_fold};
  const auto train_base = extract_groups(train_utts, base_only, config.feature, config.jobs);
  const auto val_base = extract_groups(val_utts, base_only, config.feature, config.jobs);
  const auto test_base = extract_groups(test_utts, base_only, config.feature, config.jobs);
  for (std::size_t i = 0; i < val_utts.size(); ++i)
    if (val_base[0][i].num_frames() < config.frames_per_segment)
      throw std::invalid_argument("validation utterance '" + val_utts[i]->id + "' has " +
                                  std::to_string(val_base[0][i].num_frames()) +
                                  " frames, fewer than frames_per_segment");
  for (std::size_t i = 0; i < test_utts.size(); ++i)
    if (test_base[0][i].num_frames() < config.frames_per_segment)
      throw std::invalid_argument("test utterance '" + test_utts[i]->id + "' has " +
                                  std::to_string(test_base[0][i].num_frames()) +
                                  " frames, fewer than frames_per_segment");

  const auto write_group = [&](const std::filesystem::path& dir, const Fold& fold,
                               const std::vector<const corpus::Utterance*>& utts,
                               const std::vector<dsp::FeatureMatrix>& feats,
                               const std::string& policy_name, std::size_t variant_index) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < utts.size(); ++i) {
      json extra{{"source_id", utts[i]->id},
                 {"label", utts[i]->label},
                 {"split", corpus::split_name(utts[i]->split)},
                 {"policy", policy_name},
                 {"variant", variant_index},
                 {"fold", fold.tag},
                 {"fold_params", fold.params},
                 {"master_seed", config.master_seed},
                 {"config_hash", config_hash}};
      io::write_features(feats[i], dir / (utts[i]->id + ".feat"), extra);
    }
  };

  ExperimentResult result;
  result.config_hash = config_hash;
  result.out_dir = config.out_dir;

  for (std::size_t pi = 0; pi < config.policies.size(); ++pi) {
    const Policy& policy = config.policies[pi];
    const std::string policy_dir = std::to_string(pi) + "_" + sanitize_name(policy.name);

    std::size_t best_variant = 0;
    double best_val_f1 = -1.0;
    std::size_t best_folds = 0;
    std::vector<train::ModelParams> best_models;
    std::vector<UnitRecord> best_val_units;

    for (std::size_t vi = 0; vi < policy.variants.size(); ++vi) {
      const PolicyVariant& variant = policy.variants[vi];
      const std::vector<Fold> folds =
          materialize_folds(variant, config.baseline, config.master_seed);

      std::vector<std::vector<dsp::FeatureMatrix>> extra_groups;
      if (folds.size() > 1) {
        const std::vector<Fold> rest(folds.begin() + 1, folds.end());
        extra_groups = extract_groups(train_utts, rest, config.feature, config.jobs);
      }
      std::vector<const std::vector<dsp::FeatureMatrix>*> groups{&train_base[0]};
      for (const auto& g : extra_groups) groups.push_back(&g);

      if (config.write_feature_files) {
        const std::filesystem::path vdir = features_root / policy_dir / ("v" + std::to_string(vi));
        for (std::size_t f = 0; f < folds.size(); ++f)
          write_group(vdir / folds[f].tag, folds[f], train_utts, *groups[f], policy.name, vi);
        write_group(vdir / "base", base_fold, val_utts, val_base[0], policy.name, vi);
        write_group(vdir / "base", base_fold, test_utts, test_base[0], policy.name, vi);
      }

      train::TrainConfig train_cfg = config.train;
      train_cfg.seed =
          derive_seed(config.master_seed, "train:" + io::json_hash(variant.to_json()));
      const auto subset_fn = [&](std::size_t, std::uint64_t model_seed) {
        return build_subset(groups, folds, train_utts, config.frames_per_segment,
                            config.input_center, config.input_scale, model_seed);
      };
      const auto trained = train::train_ensemble(subset_fn, train_cfg, config.jobs);

      std::vector<train::ModelParams> models;
      models.reserve(trained.size());
      const std::filesystem::path mdir = models_root / policy_dir / ("v" + std::to_string(vi));
      std::filesystem::create_directories(mdir);
      for (std::size_t m = 0; m < trained.size(); ++m) {
        json extra{{"policy", policy.name},
                   {"variant", vi},
                   {"variant_params", variant.to_json()},
                   {"model_index", m},
                   {"model_seed", trained[m].model_seed},
                   {"loss_trajectory", trained[m].loss_trajectory},
                   {"master_seed", config.master_seed},
                   {"config_hash", config_hash}};
        train::write_model(trained[m].params, mdir / ("model_" + std::to_string(m) + ".fmdl"),
                           extra);
        models.push_back(trained[m].params);
      }

      auto val_units = predict_units(models, val_utts, val_base[0], config.frames_per_segment,
                                     config.input_center, config.input_scale);
      const double vf1 = units_f1(val_units);
      if (vf1 > best_val_f1) {
        best_val_f1 = vf1;
        best_variant = vi;
        best_folds = folds.size() - 1;
        best_models = std::move(models);
        best_val_units = std::move(val_units);
      }
    }

    // Only the variant selected on validation ever touches the test split.
    const auto test_units = predict_units(best_models, test_utts, test_base[0],
                                          config.frames_per_segment, config.input_center,
                                          config.input_scale);

    PolicyOutcome outcome;
    outcome.name = policy.name;
    outcome.selected_variant = best_variant;
    outcome.folds = best_folds;
    outcome.validation_f1 = best_val_f1;
    outcome.test_f1 = units_f1(test_units);
    outcome.validation_units = best_val_units;
    outcome.test_units = test_units;

    for (const char* split : {"validation", "test"}) {
      const auto& units = std::string(split) == "validation" ? outcome.validation_units
                                                             : outcome.test_units;
      json pj{{"system", policy.name},
              {"split", split},
              {"variant", best_variant},
              {"variant_params", policy.variants[best_variant].to_json()},
              {"folds", best_folds},
              {"master_seed", config.master_seed},
              {"config_hash", config_hash},
              {"units", units_to_json(units)}};
      write_text_file(predictions_root / (policy_dir + "_" + split + ".json"),
                      pj.dump(2) + "\n");
    }
    result.policies.push_back(std::move(outcome));
  }

  std::string results_csv = "policy,validation_f1,test_f1,folds\n";
  for (const auto& o : result.policies)
    results_csv += o.name + "," + format_f1(o.validation_f1) + "," + format_f1(o.test_f1) + "," +
                   std::to_string(o.folds) + "\n";
  result.results_csv = results_csv;

  // Pair every policy against the first un-augmented one, if present.
  std::size_t base_index = config.policies.size();
  for (std::size_t pi = 0; pi < config.policies.size(); ++pi) {
    if (config.policies[pi].variants.front().kind == PolicyKind::None) {
      base_index = pi;
      break;
    }
  }
  std::string reports_csv = std::string(stats::kReportCsvHeader) + "\n";
  json reports_json = json::array();
  if (base_index < config.policies.size()) {
    std::vector<stats::UnitLabel> val_labels, test_labels;
    for (const auto* u : val_utts) val_labels.push_back({u->id, u->label});
    for (const auto* u : test_utts) test_labels.push_back({u->id, u->label});
    const PolicyOutcome& base = result.policies[base_index];
    for (std::size_t pi = 0; pi < result.policies.size(); ++pi) {
      if (pi == base_index) continue;
      const PolicyOutcome& other = result.policies[pi];
      for (const char* split : {"validation", "test"}) {
        const bool is_val = std::string(split) == "validation";
        const auto report = stats::compare_systems(
            to_unit_predictions(is_val ? base.validation_units : base.test_units),
            to_unit_predictions(is_val ? other.validation_units : other.test_units),
            is_val ? val_labels : test_labels, stats::McNemarMode::Auto, base.name, other.name);
        reports_csv += stats::eval_report_csv_rows(report, split, base.folds, other.folds);
        reports_json.push_back(json{{"split", split}, {"report", stats::eval_report_to_json(report)}});
      }
    }
  }
  result.reports_csv = reports_csv;
  result.reports_json = reports_json;

  write_text_file(config.out_dir / "results.csv", results_csv);
  write_text_file(config.out_dir / "reports.csv", reports_csv);
  write_text_file(config.out_dir / "reports.json", reports_json.dump(2) + "\n");

  json summary = json::array();
  for (const auto& o : result.policies)
    summary.push_back(json{{"policy", o.name},
                           {"selected_variant", o.selected_variant},
                           {"folds", o.folds},
                           {"validation_f1", o.validation_f1},
                           {"test_f1", o.test_f1}});
  json experiment{{"config", experiment_config_to_json(config)},
                  {"config_hash", config_hash},
                  {"master_seed", config.master_seed},
                  {"results", summary}};
  write_text_file(config.out_dir / "experiment.json", experiment.dump(2) + "\n");

  return result;
}

std::size_t extract_manifest_features(const corpus::Manifest& manifest, const aug::AugPlan& plan,
                                      dsp::FeatureKind kind,
                                      const std::filesystem::path& out_dir, std::size_t jobs,
                                      std::uint64_t master_seed) {
  if (plan.configs.empty()) throw std::invalid_argument("extraction plan has no configs");
  const std::string config_hash =
      io::json_hash(nlohmann::json{{"plan", nlohmann::json::parse(aug::plan_to_json(plan))},
                                   {"feature", dsp::feature_kind_name(kind)}});
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < plan.configs.size(); ++i) {
    tags.push_back(i == aug::AugPlan::baseline_index ? "base"
                                                     : fold_tag_for_config(plan.configs[i]));
    std::filesystem::create_directories(out_dir / tags.back());
  }

  std::atomic<std::size_t> written{0};
  parallel_for(manifest.utterances.size(), jobs, [&](std::size_t i) {
    const corpus::Utterance& utt = manifest.utterances[i];
    const dsp::Signal signal = dsp::read_wav(utt.audio_path);
    const std::size_t limit =
        utt.split == corpus::Split::Train ? plan.configs.size() : std::size_t{1};
    for (std::size_t c = 0; c < limit; ++c) {
      const dsp::FeatureMatrix fm = [&] {
        dsp::FeatureMatrix raw = dsp::extract_features(signal, plan.configs[c], kind);
        raw.values = io::round_matrix_f32(raw.values);
        return raw;
      }();
      nlohmann::json extra{{"source_id", utt.id},
                           {"label", utt.label},
                           {"split", corpus::split_name(utt.split)},
                           {"fold", tags[c]},
                           {"master_seed", master_seed},
                           {"config_hash", config_hash}};
      io::write_features(fm, out_dir / tags[c] / (utt.id + ".feat"), extra);
      written.fetch_add(1);
    }
  });
  return written.load();
}

}  // namespace fraug::pipeline
