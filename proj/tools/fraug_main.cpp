// fraug: command-line front end for the frame-rate augmentation toolkit.
//
// Exit codes: 0 success, 2 command-line usage errors, 1 anything that
// fails at run time (missing files, malformed inputs, ...).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fraug/augment.hpp"
#include "fraug/corpus.hpp"
#include "fraug/dsp.hpp"
#include "fraug/features_io.hpp"
#include "fraug/pipeline.hpp"
#include "fraug/rng.hpp"
#include "fraug/stats.hpp"
#include "fraug/trainer.hpp"
#include "fraug/wav.hpp"

using namespace fraug;

namespace {

using nlohmann::json;

// Flag values that parse but make no sense; reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Re-tags invalid flag *content* (bad enum name, malformed list, a grid
// that excludes its own baseline) as a usage error.
template <typename Fn>
auto usage_guard(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<double> parse_number_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (item.empty())
      throw UsageError(std::string(flag) + ": empty entry in list '" + text + "'");
    bool percent = false;
    if (item.back() == '%') {
      percent = true;
      item.pop_back();
    }
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(item, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != item.size())
      throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    out.push_back(percent ? value / 100.0 : value);
    start = end + 1;
  }
  return out;
}

// Shift fractions accept "50%", "0.5" and bare "50" (read as percent when
// greater than one, since a fraction cannot exceed 1).
std::vector<double> parse_shift_list(const std::string& text, const char* flag) {
  auto values = parse_number_list(text, flag);
  for (double& v : values)
    if (v > 1.0) v /= 100.0;
  return values;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return j;
}

void print_or_json(bool as_json, const json& machine, const std::string& human) {
  if (as_json)
    std::cout << machine.dump(2) << "\n";
  else
    std::cout << human;
}

stats::McNemarMode mode_from_name(const std::string& name) {
  if (name == "exact") return stats::McNemarMode::Exact;
  if (name == "chi2") return stats::McNemarMode::Chi2Corrected;
  if (name == "auto") return stats::McNemarMode::Auto;
  throw UsageError("--mode must be exact, chi2 or auto (got '" + name + "')");
}

struct LoadedPredictions {
  std::string system;
  std::string split;
  std::vector<stats::UnitPrediction> preds;
  std::vector<stats::UnitLabel> labels;
};

LoadedPredictions load_predictions(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  if (!j.is_object() || !j.contains("units") || !j.at("units").is_array())
    throw std::runtime_error("'" + path.string() + "' is not a predictions file (no 'units')");
  LoadedPredictions out;
  out.system = j.value("system", path.stem().string());
  out.split = j.value("split", std::string("test"));
  for (const auto& u : j.at("units")) {
    out.preds.push_back({u.at("id").get<std::string>(), u.at("pred").get<int>()});
    out.labels.push_back({u.at("id").get<std::string>(), u.at("label").get<int>()});
  }
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::size_t n = 20;
  std::uint64_t seed = 0;
  double duration_min = 2.0;
  double duration_max = 6.0;
  bool as_json = false;
};

void run_synth(const SynthArgs& a) {
  if (a.n == 0) throw UsageError("--n must be at least 1");
  corpus::SynthParams params;
  params.duration_min_s = a.duration_min;
  params.duration_max_s = a.duration_max;
  const auto manifest = corpus::synth_corpus(a.n, a.seed, params, a.out);
  const std::filesystem::path manifest_path = std::filesystem::path(a.out) / "manifest.jsonl";
  print_or_json(a.as_json,
                json{{"manifest", manifest_path.string()},
                     {"utterances", manifest.utterances.size()},
                     {"seed", a.seed}},
                "wrote " + std::to_string(manifest.utterances.size()) + " utterances under " +
                    a.out + " (manifest " + manifest_path.string() + ")\n");
}

// -------------------------------------------------------------- extract

struct ExtractArgs {
  std::string manifest;
  std::string out;
  std::string widths = "64,128";
  std::string shifts = "50%,25%,10%";
  double baseline_width = 64.0;
  double baseline_shift = 0.5;
  std::string feature = "log_mel";
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  bool as_json = false;
};

void run_extract(const ExtractArgs& a) {
  const auto widths = parse_number_list(a.widths, "--widths");
  const auto shifts = parse_shift_list(a.shifts, "--shifts");
  const auto kind = usage_guard([&] { return dsp::feature_kind_from_name(a.feature); });
  const auto plan = usage_guard(
      [&] { return aug::fraug_plan(widths, shifts, a.baseline_width, a.baseline_shift); });
  const auto manifest = corpus::load_manifest(a.manifest);
  const std::size_t files =
      pipeline::extract_manifest_features(manifest, plan, kind, a.out, a.jobs, a.seed);
  print_or_json(a.as_json,
                json{{"files", files}, {"out", a.out}, {"folds", plan.fold_count()}},
                "wrote " + std::to_string(files) + " feature files under " + a.out + " (" +
                    std::to_string(plan.fold_count()) + " augmentation folds)\n");
}

// -------------------------------------------------------------- augment

struct AugmentArgs {
  std::string manifest;
  std::string out;
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t folds = 4;
  std::string source = "white";
  std::string noise_dir;
  std::string snr_choices = "0,5,10,15";
  std::string factors;
  std::string semitones;
  bool as_json = false;
};

void run_augment(const AugmentArgs& a) {
  const auto kind = usage_guard([&] { return pipeline::policy_kind_from_name(a.policy); });
  if (kind == pipeline::PolicyKind::None)
    throw UsageError("--policy none leaves the corpus unchanged; nothing to write");
  if (kind == pipeline::PolicyKind::Fraug)
    throw UsageError(
        "fraug never touches the waveform; use `fraug extract` (or `fraug experiment`) "
        "to realize its analysis folds");
  if (kind == pipeline::PolicyKind::Vtlp)
    throw UsageError(
        "vtlp transforms spectrograms, not waveforms; run it via `fraug experiment`");

  pipeline::PolicyVariant variant;
  variant.kind = kind;
  if (kind == pipeline::PolicyKind::Noise) {
    variant.folds = a.folds;
    variant.noise_source = usage_guard([&] {
      json probe{{"policy", "noise"}, {"source", a.source}, {"directory", a.noise_dir}};
      return pipeline::PolicyVariant::from_json(probe).noise_source;
    });
    variant.noise_directory = a.noise_dir;
    variant.snr_choices_db = parse_number_list(a.snr_choices, "--snr-choices");
  } else if (kind == pipeline::PolicyKind::Speed) {
    if (a.factors.empty()) throw UsageError("--policy speed needs --factors (e.g. 0.9,1.1)");
    variant.speed_factors = parse_number_list(a.factors, "--factors");
  } else {
    if (a.semitones.empty()) throw UsageError("--policy pitch needs --semitones (e.g. -2,2)");
    variant.pitch_semitones = parse_number_list(a.semitones, "--semitones");
  }

  const auto manifest = corpus::load_manifest(a.manifest);
  const auto folds = usage_guard(
      [&] { return pipeline::materialize_folds(variant, dsp::FrameConfig{}, a.seed); });
  const auto train_utts = manifest.split_members(corpus::Split::Train);
  if (train_utts.empty()) throw std::runtime_error("manifest has no train utterances to augment");

  const std::filesystem::path out_dir(a.out);
  const std::filesystem::path wav_dir = out_dir / "wav";
  std::filesystem::create_directories(wav_dir);

  corpus::Manifest augmented = manifest;  // originals keep their entries
  std::size_t written = 0;
  for (std::size_t f = 1; f < folds.size(); ++f) {
    std::vector<corpus::Utterance> fold_entries(train_utts.size());
    pipeline::parallel_for(train_utts.size(), a.jobs, [&](std::size_t i) {
      const corpus::Utterance& utt = *train_utts[i];
      const dsp::Signal transformed =
          pipeline::apply_fold_waveform(dsp::read_wav(utt.audio_path), utt, folds[f]);
      const std::string id = utt.id + "__" + folds[f].tag;
      const std::filesystem::path path = wav_dir / (id + ".wav");
      dsp::write_wav(transformed, path);
      fold_entries[i] = corpus::Utterance{id, path, utt.label, corpus::Split::Train};
    });
    for (auto& e : fold_entries) augmented.utterances.push_back(std::move(e));
    written += fold_entries.size();
  }
  const std::filesystem::path manifest_path = out_dir / "manifest.jsonl";
  corpus::save_manifest(augmented, manifest_path);

  json fold_params = json::array();
  for (std::size_t f = 1; f < folds.size(); ++f) fold_params.push_back(folds[f].params);
  print_or_json(a.as_json,
                json{{"manifest", manifest_path.string()},
                     {"augmented_files", written},
                     {"folds", folds.size() - 1},
                     {"fold_params", fold_params},
                     {"master_seed", a.seed}},
                "wrote " + std::to_string(written) + " augmented wavs (" +
                    std::to_string(folds.size() - 1) + " folds) under " + wav_dir.string() +
                    "\nmanifest: " + manifest_path.string() + "\n");
}

// ----------------------------------------------------- train / experiment

struct ExperimentArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::string policy;  // train: restrict to this policy
  std::string widths;
  std::string shifts;
  std::string feature;
  std::int64_t seed = -1;
  std::size_t jobs = 0;
  std::size_t folds = 0;
  bool as_json = false;
};

pipeline::ExperimentConfig experiment_config(const ExperimentArgs& a) {
  const std::filesystem::path config_path(a.config);
  auto cfg = usage_guard([&] {
    return pipeline::experiment_config_from_json(load_json_file(config_path),
                                                 config_path.parent_path());
  });
  if (!a.manifest.empty()) cfg.manifest_path = a.manifest;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(a.seed);
  if (a.jobs > 0) cfg.jobs = a.jobs;
  if (!a.feature.empty())
    cfg.feature = usage_guard([&] { return dsp::feature_kind_from_name(a.feature); });
  if (!a.widths.empty() || !a.shifts.empty()) {
    pipeline::Policy* fraug = nullptr;
    for (auto& p : cfg.policies)
      if (!fraug && p.variants.front().kind == pipeline::PolicyKind::Fraug) fraug = &p;
    if (!fraug) {
      pipeline::PolicyVariant v;
      v.kind = pipeline::PolicyKind::Fraug;
      v.widths_ms = {64.0, 128.0};
      v.shift_fractions = {0.5, 0.25, 0.1};
      cfg.policies.push_back(pipeline::Policy{"fraug", {v}});
      fraug = &cfg.policies.back();
    }
    for (auto& v : fraug->variants) {
      if (v.kind != pipeline::PolicyKind::Fraug) continue;
      if (!a.widths.empty()) v.widths_ms = parse_number_list(a.widths, "--widths");
      if (!a.shifts.empty()) v.shift_fractions = parse_shift_list(a.shifts, "--shifts");
    }
  }
  if (a.folds > 0)
    for (auto& p : cfg.policies)
      for (auto& v : p.variants)
        if (v.kind == pipeline::PolicyKind::Noise || v.kind == pipeline::PolicyKind::Vtlp)
          v.folds = a.folds;
  return cfg;
}

void print_experiment_result(const pipeline::ExperimentResult& result, bool as_json) {
  if (as_json) {
    json summary = json::array();
    for (const auto& o : result.policies)
      summary.push_back(json{{"policy", o.name},
                             {"selected_variant", o.selected_variant},
                             {"folds", o.folds},
                             {"validation_f1", o.validation_f1},
                             {"test_f1", o.test_f1}});
    std::cout << json{{"out", result.out_dir.string()},
                      {"config_hash", result.config_hash},
                      {"results", summary}}
                     .dump(2)
              << "\n";
    return;
  }
  std::cout << result.results_csv << "wrote " << (result.out_dir / "results.csv").string()
            << "\n";
}

void run_experiment_cmd(const ExperimentArgs& a) {
  const auto cfg = experiment_config(a);
  print_experiment_result(pipeline::run_experiment(cfg), a.as_json);
}

void run_train(const ExperimentArgs& a) {
  auto cfg = experiment_config(a);
  if (!a.policy.empty()) {
    std::vector<pipeline::Policy> kept;
    for (const auto& p : cfg.policies)
      if (p.name == a.policy) kept.push_back(p);
    if (kept.empty())
      throw UsageError("config defines no policy named '" + a.policy + "'");
    cfg.policies = std::move(kept);
  } else {
    cfg.policies.resize(1);
  }
  print_experiment_result(pipeline::run_experiment(cfg), a.as_json);
}

// ------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string a_path;
  std::string b_path;
  std::string mode = "auto";
  bool as_json = false;
};

void run_evaluate(const EvaluateArgs& a) {
  const auto mode = mode_from_name(a.mode);
  const auto sys_a = load_predictions(a.a_path);
  if (a.b_path.empty()) {
    const auto counts = stats::confusion(sys_a.preds, sys_a.labels);
    const json machine{{"system", sys_a.system},
                       {"split", sys_a.split},
                       {"f1", stats::f1(counts)},
                       {"precision", stats::precision(counts)},
                       {"recall", stats::recall(counts)},
                       {"tp", counts.tp},
                       {"fp", counts.fp},
                       {"fn", counts.fn},
                       {"tn", counts.tn}};
    char line[160];
    std::snprintf(line, sizeof(line), "%s (%s): F1 %.4f, precision %.4f, recall %.4f\n",
                  sys_a.system.c_str(), sys_a.split.c_str(), stats::f1(counts),
                  stats::precision(counts), stats::recall(counts));
    print_or_json(a.as_json, machine, line);
    return;
  }
  const auto sys_b = load_predictions(a.b_path);
  if (sys_a.split != sys_b.split)
    throw std::runtime_error("prediction files cover different splits ('" + sys_a.split +
                             "' vs '" + sys_b.split + "')");
  auto labels_a = sys_a.labels;
  auto labels_b = sys_b.labels;
  const auto by_id = [](const stats::UnitLabel& x, const stats::UnitLabel& y) {
    return x.id < y.id;
  };
  std::sort(labels_a.begin(), labels_a.end(), by_id);
  std::sort(labels_b.begin(), labels_b.end(), by_id);
  for (std::size_t i = 0; i < labels_a.size() && i < labels_b.size(); ++i)
    if (labels_a[i].id != labels_b[i].id || labels_a[i].label != labels_b[i].label)
      throw std::runtime_error("prediction files disagree about unit '" + labels_a[i].id + "'");
  const auto report =
      stats::compare_systems(sys_a.preds, sys_b.preds, sys_a.labels, mode, sys_a.system,
                             sys_b.system);
  if (a.as_json) {
    std::cout << stats::eval_report_to_json(report).dump(2) << "\n";
  } else {
    std::cout << stats::kReportCsvHeader << "\n"
              << stats::eval_report_csv_rows(report, sys_a.split, 0, 0);
  }
}

// -------------------------------------------------------------- mcnemar

struct McnemarArgs {
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  std::string mode = "auto";
  bool as_json = false;
};

void run_mcnemar(const McnemarArgs& a) {
  const auto mode = mode_from_name(a.mode);
  const double p = stats::mcnemar(a.b, a.c, mode);
  char line[96];
  std::snprintf(line, sizeof(line), "p = %.9g (b = %llu, c = %llu)\n", p,
                static_cast<unsigned long long>(a.b), static_cast<unsigned long long>(a.c));
  print_or_json(a.as_json,
                json{{"b", a.b}, {"c", a.c}, {"mode", a.mode}, {"p_value", p}}, line);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fraug: frame-rate based data augmentation for speech classifiers"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic speech corpus");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n", synth.n, "Utterances per class")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Master seed")->capture_default_str();
  synth_cmd->add_option("--duration-min", synth.duration_min, "Shortest utterance, seconds")
      ->capture_default_str();
  synth_cmd->add_option("--duration-max", synth.duration_max, "Longest utterance, seconds")
      ->capture_default_str();
  synth_cmd->add_flag("--json", synth.as_json, "Machine-readable output");
  synth_cmd->callback([&] { run_synth(synth); });

  ExtractArgs extract;
  auto* extract_cmd =
      app.add_subcommand("extract", "Extract multi-frame-rate features from a manifest");
  extract_cmd->add_option("--manifest", extract.manifest, "Corpus manifest (JSON lines)")
      ->required();
  extract_cmd->add_option("--out", extract.out, "Output directory")->required();
  extract_cmd->add_option("--widths", extract.widths, "Frame widths in ms, comma-separated")
      ->capture_default_str();
  extract_cmd
      ->add_option("--shifts", extract.shifts, "Frame shifts as fractions of the width (50% = 0.5)")
      ->capture_default_str();
  extract_cmd->add_option("--baseline-width", extract.baseline_width, "Baseline width, ms")
      ->capture_default_str();
  extract_cmd->add_option("--baseline-shift", extract.baseline_shift, "Baseline shift fraction")
      ->capture_default_str();
  extract_cmd->add_option("--feature", extract.feature, "log_mel or mfcc")->capture_default_str();
  extract_cmd->add_option("--jobs", extract.jobs, "Worker threads")->capture_default_str();
  extract_cmd->add_option("--seed", extract.seed, "Master seed stamped into sidecars")
      ->capture_default_str();
  extract_cmd->add_flag("--json", extract.as_json, "Machine-readable output");
  extract_cmd->callback([&] { run_extract(extract); });

  AugmentArgs augment;
  auto* augment_cmd = app.add_subcommand(
      "augment", "Apply a waveform augmentation policy (noise, speed, pitch) to a corpus");
  augment_cmd->add_option("--manifest", augment.manifest, "Corpus manifest")->required();
  augment_cmd->add_option("--out", augment.out, "Output directory")->required();
  augment_cmd->add_option("--policy", augment.policy, "noise, speed or pitch")->required();
  augment_cmd->add_option("--seed", augment.seed, "Master seed")->capture_default_str();
  augment_cmd->add_option("--jobs", augment.jobs, "Worker threads")->capture_default_str();
  augment_cmd->add_option("--folds", augment.folds, "Noise folds")->capture_default_str();
  augment_cmd->add_option("--source", augment.source, "Noise source: white, pink or directory")
      ->capture_default_str();
  augment_cmd->add_option("--noise-dir", augment.noise_dir, "Directory of noise wavs");
  augment_cmd->add_option("--snr-choices", augment.snr_choices, "SNR choices in dB")
      ->capture_default_str();
  augment_cmd->add_option("--factors", augment.factors, "Speed factors, e.g. 0.9,1.1");
  augment_cmd->add_option("--semitones", augment.semitones, "Pitch shifts, e.g. -2,2");
  augment_cmd->add_flag("--json", augment.as_json, "Machine-readable output");
  augment_cmd->callback([&] { run_augment(augment); });

  ExperimentArgs train;
  auto* train_cmd =
      app.add_subcommand("train", "Train the segment classifier ensemble for one policy");
  train_cmd->add_option("--config", train.config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--manifest", train.manifest, "Override the config's manifest");
  train_cmd->add_option("--out", train.out, "Override the config's output directory");
  train_cmd->add_option("--policy", train.policy, "Policy name to train (default: first)");
  train_cmd->add_option("--seed", train.seed, "Override the master seed");
  train_cmd->add_option("--jobs", train.jobs, "Worker threads");
  train_cmd->add_option("--widths", train.widths, "Override fraug frame widths (ms)");
  train_cmd->add_option("--shifts", train.shifts, "Override fraug shift fractions");
  train_cmd->add_option("--folds", train.folds, "Override noise/vtlp fold counts");
  train_cmd->add_option("--feature", train.feature, "Override the feature kind");
  train_cmd->add_flag("--json", train.as_json, "Machine-readable output");
  train_cmd->callback([&] { run_train(train); });

  EvaluateArgs evaluate;
  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "Score prediction files; compare two with McNemar's test");
  evaluate_cmd->add_option("--a", evaluate.a_path, "Predictions JSON (system A)")->required();
  evaluate_cmd->add_option("--b", evaluate.b_path, "Predictions JSON (system B, optional)");
  evaluate_cmd->add_option("--mode", evaluate.mode, "McNemar mode: exact, chi2 or auto")
      ->capture_default_str();
  evaluate_cmd->add_flag("--json", evaluate.as_json, "Machine-readable output");
  evaluate_cmd->callback([&] { run_evaluate(evaluate); });

  McnemarArgs mcnemar;
  auto* mcnemar_cmd =
      app.add_subcommand("mcnemar", "McNemar significance from discordant-pair counts");
  mcnemar_cmd->add_option("--b", mcnemar.b, "Units only system A got right")->required();
  mcnemar_cmd->add_option("--c", mcnemar.c, "Units only system B got right")->required();
  mcnemar_cmd->add_option("--mode", mcnemar.mode, "exact, chi2 or auto")->capture_default_str();
  mcnemar_cmd->add_flag("--json", mcnemar.as_json, "Machine-readable output");
  mcnemar_cmd->callback([&] { run_mcnemar(mcnemar); });

  ExperimentArgs experiment;
  auto* experiment_cmd = app.add_subcommand(
      "experiment", "Run the full policy comparison: extract, train, select, evaluate");
  experiment_cmd->add_option("--config", experiment.config, "Experiment config (JSON)")
      ->required();
  experiment_cmd->add_option("--manifest", experiment.manifest, "Override the config's manifest");
  experiment_cmd->add_option("--out", experiment.out, "Override the config's output directory");
  experiment_cmd->add_option("--seed", experiment.seed, "Override the master seed");
  experiment_cmd->add_option("--jobs", experiment.jobs, "Worker threads");
  experiment_cmd->add_option("--widths", experiment.widths, "Override fraug frame widths (ms)");
  experiment_cmd->add_option("--shifts", experiment.shifts, "Override fraug shift fractions");
  experiment_cmd->add_option("--folds", experiment.folds, "Override noise/vtlp fold counts");
  experiment_cmd->add_option("--feature", experiment.feature, "Override the feature kind");
  experiment_cmd->add_flag("--json", experiment.as_json, "Machine-readable output");
  experiment_cmd->callback([&] { run_experiment_cmd(experiment); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
