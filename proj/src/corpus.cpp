#include "fraug/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

#include "fraug/wav.hpp"

namespace fraug::corpus {

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw ManifestError("unknown split name: " + name);
}

std::vector<const Utterance*> Manifest::split_members(Split split) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances)
    if (u.split == split) out.push_back(&u);
  return out;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest: " + path.string());
  const std::filesystem::path base = path.parent_path();

  Manifest manifest;
  std::set<std::string> seen_ids;
  std::vector<std::string> missing;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError("manifest parse error at line " + std::to_string(line_no) + ": " +
                          e.what());
    }
    Utterance u;
    try {
      u.id = obj.at("id").get<std::string>();
      u.audio_path = obj.at("path").get<std::string>();
      u.label = obj.at("label").get<int>();
      u.split = split_from_name(obj.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError("manifest field error at line " + std::to_string(line_no) + ": " +
                          e.what());
    }
    if (u.label != 0 && u.label != 1)
      throw ManifestError("manifest label must be 0 or 1 at line " + std::to_string(line_no));
    if (!seen_ids.insert(u.id).second)
      throw ManifestError("duplicate utterance id in manifest: " + u.id);
    if (u.audio_path.is_relative()) u.audio_path = base / u.audio_path;
    if (check_files && !std::filesystem::exists(u.audio_path)) missing.push_back(u.id);
    manifest.utterances.push_back(std::move(u));
  }
  if (!missing.empty()) {
    std::string msg = "manifest references missing audio files for ids:";
    for (const auto& id : missing) msg += " " + id;
    throw ManifestError(msg);
  }
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const std::filesystem::path base = path.parent_path();
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ManifestError("cannot open manifest for writing: " + tmp.string());
    for (const auto& u : manifest.utterances) {
      std::filesystem::path rel = u.audio_path;
      if (rel.is_absolute() && !base.empty()) {
        std::error_code ec;
        auto candidate = std::filesystem::relative(rel, base, ec);
        if (!ec && !candidate.empty()) rel = candidate;
      }
      nlohmann::json obj{{"id", u.id},
                         {"path", rel.generic_string()},
                         {"label", u.label},
                         {"split", split_name(u.split)}};
      out << obj.dump() << "\n";
    }
    if (!out) throw ManifestError("manifest write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// One synthetic utterance: syllable-paced harmonic pulse trains with a
// per-syllable F0 draw, raised-cosine amplitude envelopes and a white
// noise floor. The class profile controls mean F0, F0 spread and rate.
dsp::Signal synth_utterance(const SynthParams& params,
                            const SynthParams::ClassProfile& profile, Rng& rng) {
  const int sr = params.sample_rate;
  const double duration = rng.uniform(params.duration_min_s, params.duration_max_s);
  const std::size_t n = static_cast<std::size_t>(std::llround(duration * sr));

  double f0_mean = rng.normal(profile.f0_mean_mu, profile.f0_mean_sd);
  f0_mean = std::clamp(f0_mean, 80.0, 320.0);
  double rate = rng.normal(profile.syllable_rate_mu, profile.syllable_rate_sd);
  rate = std::clamp(rate, 1.2, 6.0);
  const double noise_rms = rng.uniform(params.noise_rms_min, params.noise_rms_max);

  dsp::Signal sig;
  sig.sample_rate = sr;
  sig.samples.assign(n, 0.0);

  const double syllable_period = 1.0 / rate;
  const double voiced_fraction = 0.6;
  const std::size_t voiced_len =
      static_cast<std::size_t>(std::llround(voiced_fraction * syllable_period * sr));
  std::size_t start = 0;
  while (start + voiced_len <= n) {
    // Per-syllable F0 with a mild declination across the syllable.
    double z = rng.normal(0.0, 1.0);
    z = std::clamp(z, -2.5, 2.5);
    const double f0_start = f0_mean * (1.0 + profile.f0_wander * z);
    const double amplitude = rng.uniform(0.15, 0.30);

    const std::size_t harmonics = std::min<std::size_t>(
        10, static_cast<std::size_t>(0.45 * sr / f0_start));
    double phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t i = 0; i < voiced_len; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(voiced_len);
      const double f0 = f0_start * (1.0 - 0.08 * u);
      phase += kTwoPi * f0 / sr;
      double v = 0.0;
      for (std::size_t h = 1; h <= harmonics; ++h)
        v += std::sin(static_cast<double>(h) * phase) / static_cast<double>(h);
      const double envelope = 0.5 - 0.5 * std::cos(kTwoPi * u);
      sig.samples[start + i] = amplitude * envelope * v;
    }
    start += static_cast<std::size_t>(std::llround(syllable_period * sr));
  }

  for (std::size_t i = 0; i < n; ++i) sig.samples[i] += rng.normal(0.0, noise_rms);
  return sig;
}

Split split_for_index(std::size_t index, std::size_t total, const SynthParams& params) {
  const auto n_train =
      static_cast<std::size_t>(std::llround(params.train_fraction * static_cast<double>(total)));
  const auto n_val = static_cast<std::size_t>(
      std::llround(params.validation_fraction * static_cast<double>(total)));
  if (index < n_train) return Split::Train;
  if (index < n_train + n_val) return Split::Validation;
  return Split::Test;
}

}  // namespace

Manifest synth_corpus(std::size_t n_per_class, std::uint64_t seed, const SynthParams& params,
                      const std::filesystem::path& out_dir) {
  if (n_per_class < 1) throw std::invalid_argument("synth_corpus: n_per_class must be >= 1");
  if (!(params.duration_min_s > 0.0) || params.duration_max_s < params.duration_min_s)
    throw std::invalid_argument("synth_corpus: bad duration range");
  if (params.train_fraction < 0.0 || params.validation_fraction < 0.0 ||
      params.train_fraction + params.validation_fraction > 1.0)
    throw std::invalid_argument("synth_corpus: bad split fractions");

  std::filesystem::create_directories(out_dir / "wav");
  Manifest manifest;
  for (int label = 0; label <= 1; ++label) {
    const auto& profile = label == 0 ? params.control : params.depressed;
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Utterance u;
      u.id = "synth_c" + std::to_string(label) + "_" + std::to_string(i);
      u.label = label;
      u.split = split_for_index(i, n_per_class, params);
      u.audio_path = out_dir / "wav" / (u.id + ".wav");

      Rng rng(derive_seed(seed, u.id));
      const dsp::Signal sig = synth_utterance(params, profile, rng);
      dsp::write_wav(sig, u.audio_path);
      manifest.utterances.push_back(std::move(u));
    }
  }
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

std::vector<dsp::FeatureMatrix> random_crop(const std::vector<dsp::FeatureMatrix>& features,
                                            std::uint64_t seed) {
  if (features.empty()) throw std::invalid_argument("random_crop: empty feature list");
  std::size_t min_frames = features.front().num_frames();
  for (const auto& f : features) min_frames = std::min(min_frames, f.num_frames());

  Rng rng(seed);
  std::vector<dsp::FeatureMatrix> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    const std::size_t slack = f.num_frames() - min_frames;
    const std::size_t offset = static_cast<std::size_t>(rng.uniform_int(0, slack));
    dsp::FeatureMatrix cropped;
    cropped.kind = f.kind;
    cropped.config = f.config;
    cropped.sample_rate = f.sample_rate;
    cropped.values = Matrix(min_frames, f.dims());
    for (std::size_t r = 0; r < min_frames; ++r)
      std::copy(f.values.row(offset + r), f.values.row(offset + r) + f.dims(),
                cropped.values.row(r));
    out.push_back(std::move(cropped));
  }
  return out;
}

std::vector<Segment> segmentize(const dsp::FeatureMatrix& features,
                                std::size_t frames_per_segment,
                                std::string_view source_utterance, int label) {
  if (frames_per_segment < 1)
    throw std::invalid_argument("segmentize: frames_per_segment must be >= 1");
  const std::size_t count = features.num_frames() / frames_per_segment;
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Segment seg;
    seg.features = Matrix(frames_per_segment, features.dims());
    const std::size_t base = s * frames_per_segment;
    for (std::size_t r = 0; r < frames_per_segment; ++r)
      std::copy(features.values.row(base + r), features.values.row(base + r) + features.dims(),
                seg.features.row(r));
    seg.source_utterance = std::string(source_utterance);
    seg.source_config = features.config;
    seg.index = s;
    seg.label = label;
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<Segment> balanced_sample(const std::vector<Segment>& segments,
                                     std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const int label = segments[i].label;
    if (label != 0 && label != 1)
      throw std::invalid_argument("balanced_sample: labels must be 0 or 1");
    by_class[label].push_back(i);
  }
  if (by_class[0].empty())
    throw std::invalid_argument("balanced_sample: class 0 absent from input");
  if (by_class[1].empty())
    throw std::invalid_argument("balanced_sample: class 1 absent from input");

  Rng rng(seed);
  const std::size_t per_class = std::min(by_class[0].size(), by_class[1].size());
  std::vector<std::size_t> chosen;
  chosen.reserve(2 * per_class);
  for (auto& indices : by_class) {
    rng.shuffle(indices);
    chosen.insert(chosen.end(), indices.begin(), indices.begin() + per_class);
  }
  rng.shuffle(chosen);

  std::vector<Segment> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(segments[i]);
  return out;
}

}  // namespace fraug::corpus
