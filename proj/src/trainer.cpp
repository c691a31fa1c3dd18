#include "fraug/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "fraug/features_io.hpp"

namespace fraug::train {

namespace {

// Four independent accumulator chains: a fixed, deterministic summation
// order that the compiler can still turn into SIMD lanes.
double dot(const double* a, const double* b, std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc0 + acc2) + (acc1 + acc3)) + tail;
}

void axpy(double* dst, const double* src, double scale, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ForwardState {
  Matrix conv_pre;            // T1 x channels, pre-activation
  Matrix conv_act;            // T1 x channels, after ReLU (+ dropout)
  std::vector<std::size_t> argmax;  // T2 * channels, row index into conv_act
  std::vector<double> pooled_mean;  // channels
  std::vector<double> h_pre;        // hidden
  std::vector<double> h;            // hidden
  double z = 0.0;
  double p = 0.0;
  std::size_t t1 = 0;
  std::size_t t2 = 0;
};

void run_forward(const ModelParams& params, const Matrix& segment,
                 const Matrix* dropout_mask, ForwardState& s) {
  constexpr std::size_t kC = ModelParams::kConvChannels;
  constexpr std::size_t kH = ModelParams::kHidden;
  const std::size_t dims = params.in_dims;
  if (segment.cols() != dims)
    throw std::invalid_argument("forward: segment has " + std::to_string(segment.cols()) +
                                " dims, model expects " + std::to_string(dims));
  if (segment.rows() < ModelParams::kKernel + 2)
    throw std::invalid_argument("forward: segment too short for conv + pooling");
  const std::size_t t1 = segment.rows() - (ModelParams::kKernel - 1);
  const std::size_t t2 = t1 / 3;
  if (t2 == 0) throw std::invalid_argument("forward: segment too short for pooling");
  if (dropout_mask != nullptr &&
      (dropout_mask->rows() != t1 || dropout_mask->cols() != kC))
    throw std::invalid_argument("forward: dropout mask shape mismatch");

  const std::size_t patch = ModelParams::kKernel * dims;
  s.t1 = t1;
  s.t2 = t2;
  if (s.conv_pre.rows() != t1 || s.conv_pre.cols() != kC) {
    s.conv_pre = Matrix(t1, kC);
    s.conv_act = Matrix(t1, kC);
  }
  s.argmax.assign(t2 * kC, 0);
  s.pooled_mean.assign(kC, 0.0);
  s.h_pre.assign(kH, 0.0);
  s.h.assign(kH, 0.0);

  // Rows t..t+2 of a row-major matrix are one contiguous patch.
  for (std::size_t t = 0; t < t1; ++t) {
    const double* x = segment.row(t);
    double* pre = s.conv_pre.row(t);
    double* act = s.conv_act.row(t);
    for (std::size_t o = 0; o < kC; ++o) {
      const double v = dot(params.conv_w.data() + o * patch, x, patch) + params.conv_b[o];
      pre[o] = v;
      double a = v > 0.0 ? v : 0.0;
      if (dropout_mask != nullptr) a *= (*dropout_mask)(t, o);
      act[o] = a;
    }
  }

  for (std::size_t tp = 0; tp < t2; ++tp) {
    const std::size_t base = 3 * tp;
    for (std::size_t o = 0; o < kC; ++o) {
      std::size_t best = base;
      double best_v = s.conv_act(base, o);
      for (std::size_t d = 1; d < 3; ++d) {
        const double v = s.conv_act(base + d, o);
        if (v > best_v) {  // strict: first maximum wins ties
          best_v = v;
          best = base + d;
        }
      }
      s.argmax[tp * kC + o] = best;
      s.pooled_mean[o] += best_v;
    }
  }
  for (std::size_t o = 0; o < kC; ++o) s.pooled_mean[o] /= static_cast<double>(t2);

  for (std::size_t j = 0; j < kH; ++j) {
    const double v = dot(params.fc1_w.data() + j * kC, s.pooled_mean.data(), kC) +
                     params.fc1_b[j];
    s.h_pre[j] = v;
    s.h[j] = v > 0.0 ? v : 0.0;
  }
  s.z = dot(params.fc2_w.data(), s.h.data(), kH) + params.fc2_b;
  s.p = sigmoid(s.z);
}

}  // namespace

std::size_t ModelParams::total_scalars() const {
  return conv_w.size() + conv_b.size() + fc1_w.size() + fc1_b.size() + fc2_w.size() + 1;
}

bool ModelParams::shapes_consistent() const {
  return in_dims > 0 && conv_w.size() == kConvChannels * kKernel * in_dims &&
         conv_b.size() == kConvChannels && fc1_w.size() == kHidden * kConvChannels &&
         fc1_b.size() == kHidden && fc2_w.size() == kHidden;
}

ModelParams init_params(std::size_t in_dims, Rng& rng) {
  if (in_dims == 0) throw std::invalid_argument("init_params: in_dims must be positive");
  ModelParams p;
  p.in_dims = in_dims;
  const std::size_t patch = ModelParams::kKernel * in_dims;

  auto fill_glorot = [&rng](std::vector<double>& w, std::size_t n, double fan_in,
                            double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    w.resize(n);
    for (double& v : w) v = rng.uniform(-limit, limit);
  };

  fill_glorot(p.conv_w, ModelParams::kConvChannels * patch, static_cast<double>(patch),
              static_cast<double>(ModelParams::kKernel * ModelParams::kConvChannels));
  p.conv_b.assign(ModelParams::kConvChannels, 0.0);
  fill_glorot(p.fc1_w, ModelParams::kHidden * ModelParams::kConvChannels,
              ModelParams::kConvChannels, ModelParams::kHidden);
  p.fc1_b.assign(ModelParams::kHidden, 0.0);
  fill_glorot(p.fc2_w, ModelParams::kHidden, ModelParams::kHidden, 1.0);
  p.fc2_b = 0.0;
  return p;
}

void validate_train_config(const TrainConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(config.learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config.dropout_p < 0.0 || config.dropout_p >= 1.0)
    throw std::invalid_argument("dropout_p must be in [0, 1)");
  if (config.ensemble_size < 1) throw std::invalid_argument("ensemble_size must be >= 1");
}

Matrix make_dropout_mask(std::size_t rows, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout_p must be in [0, 1)");
  Matrix mask(rows, ModelParams::kConvChannels, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : mask.data()) v = rng.uniform01() < p ? 0.0 : keep_scale;
  return mask;
}

double forward(const ModelParams& params, const Matrix& segment,
               const Matrix* dropout_mask) {
  if (!params.shapes_consistent())
    throw std::invalid_argument("forward: inconsistent model shapes");
  ForwardState s;
  run_forward(params, segment, dropout_mask, s);
  return s.p;
}

double loss(double probability, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("loss: label must be 0 or 1");
  const double p = std::clamp(probability, 1e-12, 1.0 - 1e-12);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

Gradients gradient(const ModelParams& params, const std::vector<BatchItem>& batch,
                   double* mean_loss) {
  if (!params.shapes_consistent())
    throw std::invalid_argument("gradient: inconsistent model shapes");
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  constexpr std::size_t kC = ModelParams::kConvChannels;
  constexpr std::size_t kH = ModelParams::kHidden;
  const std::size_t patch = ModelParams::kKernel * params.in_dims;

  Gradients g;
  g.conv_w.assign(params.conv_w.size(), 0.0);
  g.conv_b.assign(kC, 0.0);
  g.fc1_w.assign(params.fc1_w.size(), 0.0);
  g.fc1_b.assign(kH, 0.0);
  g.fc2_w.assign(kH, 0.0);
  g.fc2_b = 0.0;

  ForwardState s;
  std::vector<double> dmean(kC);
  std::vector<double> dh(kH);
  double loss_acc = 0.0;
  for (const BatchItem& item : batch) {
    run_forward(params, *item.features, item.dropout_mask, s);
    loss_acc += loss(s.p, item.label);

    // d(loss)/d(z) through the sigmoid; exact, no clamping involved.
    const double dz = s.p - static_cast<double>(item.label);

    g.fc2_b += dz;
    axpy(g.fc2_w.data(), s.h.data(), dz, kH);
    for (std::size_t j = 0; j < kH; ++j)
      dh[j] = s.h_pre[j] > 0.0 ? dz * params.fc2_w[j] : 0.0;

    std::fill(dmean.begin(), dmean.end(), 0.0);
    for (std::size_t j = 0; j < kH; ++j) {
      if (dh[j] == 0.0) continue;
      g.fc1_b[j] += dh[j];
      axpy(g.fc1_w.data() + j * kC, s.pooled_mean.data(), dh[j], kC);
      axpy(dmean.data(), params.fc1_w.data() + j * kC, dh[j], kC);
    }

    // Mean-pool and max-pool route the gradient to one conv row per
    // (pool window, channel); conv weights then see that row's patch.
    const double inv_t2 = 1.0 / static_cast<double>(s.t2);
    for (std::size_t tp = 0; tp < s.t2; ++tp) {
      for (std::size_t o = 0; o < kC; ++o) {
        double d = dmean[o] * inv_t2;
        if (d == 0.0) continue;
        const std::size_t t = s.argmax[tp * kC + o];
        if (item.dropout_mask != nullptr) d *= (*item.dropout_mask)(t, o);
        if (s.conv_pre(t, o) <= 0.0) continue;
        axpy(g.conv_w.data() + o * patch, item.features->row(t), d, patch);
        g.conv_b[o] += d;
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& v : g.conv_w) v *= inv_n;
  for (double& v : g.conv_b) v *= inv_n;
  for (double& v : g.fc1_w) v *= inv_n;
  for (double& v : g.fc1_b) v *= inv_n;
  for (double& v : g.fc2_w) v *= inv_n;
  g.fc2_b *= inv_n;
  if (mean_loss != nullptr) *mean_loss = loss_acc * inv_n;
  return g;
}

TrainedModel train_model(const std::vector<corpus::Segment>& segments,
                         const TrainConfig& config, std::uint64_t model_seed) {
  validate_train_config(config);
  if (segments.empty()) throw std::invalid_argument("train_model: no training segments");
  const std::size_t dims = segments.front().features.cols();
  const std::size_t rows = segments.front().features.rows();
  for (const auto& s : segments)
    if (s.features.cols() != dims || s.features.rows() != rows)
      throw std::invalid_argument("train_model: segments have inconsistent shapes");

  // Canonical order, so shuffling is seed-driven rather than
  // input-order-driven.
  std::vector<std::size_t> canonical(segments.size());
  for (std::size_t i = 0; i < canonical.size(); ++i) canonical[i] = i;
  std::sort(canonical.begin(), canonical.end(), [&](std::size_t a, std::size_t b) {
    const corpus::Segment& sa = segments[a];
    const corpus::Segment& sb = segments[b];
    if (sa.source_utterance != sb.source_utterance)
      return sa.source_utterance < sb.source_utterance;
    if (sa.source_config.frame_width_ms != sb.source_config.frame_width_ms)
      return sa.source_config.frame_width_ms < sb.source_config.frame_width_ms;
    if (sa.source_config.frame_shift_fraction != sb.source_config.frame_shift_fraction)
      return sa.source_config.frame_shift_fraction < sb.source_config.frame_shift_fraction;
    return sa.index < sb.index;
  });

  Rng init_rng(derive_seed(model_seed, "init"));
  Rng shuffle_rng(derive_seed(model_seed, "shuffle"));
  Rng dropout_rng(derive_seed(model_seed, "dropout"));

  TrainedModel result;
  result.model_seed = model_seed;
  result.params = init_params(dims, init_rng);

  const std::size_t t1 = rows - (ModelParams::kKernel - 1);
  std::vector<Matrix> masks(config.batch_size);
  std::vector<BatchItem> batch;
  batch.reserve(config.batch_size);

  double lr = config.learning_rate;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t plateau = 0;
  constexpr std::size_t kPlateauPatience = 10;

  std::vector<std::size_t> order;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order = canonical;
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < count; ++i) {
        BatchItem item;
        item.features = &segments[order[start + i]].features;
        item.label = segments[order[start + i]].label;
        if (config.dropout_p > 0.0) {
          masks[i] = make_dropout_mask(t1, config.dropout_p, dropout_rng);
          item.dropout_mask = &masks[i];
        }
        batch.push_back(item);
      }

      double batch_loss = 0.0;
      Gradients g = gradient(result.params, batch, &batch_loss);
      epoch_loss += batch_loss * static_cast<double>(count);

      axpy(result.params.conv_w.data(), g.conv_w.data(), -lr, g.conv_w.size());
      axpy(result.params.conv_b.data(), g.conv_b.data(), -lr, g.conv_b.size());
      axpy(result.params.fc1_w.data(), g.fc1_w.data(), -lr, g.fc1_w.size());
      axpy(result.params.fc1_b.data(), g.fc1_b.data(), -lr, g.fc1_b.size());
      axpy(result.params.fc2_w.data(), g.fc2_w.data(), -lr, g.fc2_w.size());
      result.params.fc2_b -= lr * g.fc2_b;
    }

    const double mean_epoch_loss = epoch_loss / static_cast<double>(order.size());
    result.loss_trajectory.push_back(mean_epoch_loss);
    if (mean_epoch_loss < best_loss - 1e-4) {
      best_loss = mean_epoch_loss;
      plateau = 0;
    } else if (++plateau >= kPlateauPatience) {
      lr *= 0.5;
      plateau = 0;
    }
  }
  return result;
}

std::vector<TrainedModel> train_ensemble(const SubsetFn& subset_fn, const TrainConfig& config,
                                         std::size_t jobs) {
  validate_train_config(config);
  if (!subset_fn) throw std::invalid_argument("train_ensemble: missing subset function");
  if (jobs == 0) jobs = 1;

  std::vector<TrainedModel> models(config.ensemble_size);
  std::vector<std::uint64_t> seeds(config.ensemble_size);
  for (std::size_t m = 0; m < config.ensemble_size; ++m)
    seeds[m] = derive_seed(config.seed, "model", m);

  auto train_one = [&](std::size_t m) {
    const std::vector<corpus::Segment> subset = subset_fn(m, seeds[m]);
    models[m] = train_model(subset, config, seeds[m]);
  };

  if (jobs == 1 || config.ensemble_size == 1) {
    for (std::size_t m = 0; m < config.ensemble_size; ++m) train_one(m);
    return models;
  }

  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(config.ensemble_size);
  const std::size_t worker_count = std::min(jobs, config.ensemble_size);
  for (std::size_t w = 0; w < worker_count; ++w) {
    workers.emplace_back([&]() {
      for (;;) {
        const std::size_t m = next.fetch_add(1);
        if (m >= config.ensemble_size) return;
        try {
          train_one(m);
        } catch (...) {
          errors[m] = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return models;
}

Prediction ensemble_predict(const std::vector<ModelParams>& models,
                            const std::vector<Matrix>& utterance_segments) {
  if (models.empty()) throw std::invalid_argument("ensemble_predict: no models");
  if (utterance_segments.empty())
    throw std::invalid_argument("ensemble_predict: no segments");

  Prediction pred;
  pred.segment_probs.reserve(utterance_segments.size());
  std::vector<double> probs(models.size());
  for (const Matrix& seg : utterance_segments) {
    for (std::size_t m = 0; m < models.size(); ++m) probs[m] = forward(models[m], seg);
    std::sort(probs.begin(), probs.end());  // order-invariant summation
    double acc = 0.0;
    for (double p : probs) acc += p;
    pred.segment_probs.push_back(acc / static_cast<double>(models.size()));
  }

  std::vector<double> seg_probs = pred.segment_probs;
  std::sort(seg_probs.begin(), seg_probs.end());
  double acc = 0.0;
  for (double p : seg_probs) acc += p;
  pred.utterance_prob = acc / static_cast<double>(seg_probs.size());
  pred.utterance_label = pred.utterance_prob >= 0.5 ? 1 : 0;
  return pred;
}

namespace {

constexpr std::uint32_t kModelFileVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_model(const ModelParams& params, const std::filesystem::path& path,
                 const nlohmann::json& extra_sidecar) {
  if (!params.shapes_consistent())
    throw std::invalid_argument("write_model: inconsistent model shapes");
  const std::size_t total = 4 + params.total_scalars();

  std::string bytes;
  bytes.reserve(16 + 8 * total);
  bytes += "FMDL";
  put_u32(bytes, kModelFileVersion);
  put_u32(bytes, static_cast<std::uint32_t>(total));
  put_u32(bytes, 1);
  put_f64(bytes, static_cast<double>(params.in_dims));
  put_f64(bytes, static_cast<double>(ModelParams::kKernel));
  put_f64(bytes, static_cast<double>(ModelParams::kConvChannels));
  put_f64(bytes, static_cast<double>(ModelParams::kHidden));
  for (double v : params.conv_w) put_f64(bytes, v);
  for (double v : params.conv_b) put_f64(bytes, v);
  for (double v : params.fc1_w) put_f64(bytes, v);
  for (double v : params.fc1_b) put_f64(bytes, v);
  for (double v : params.fc2_w) put_f64(bytes, v);
  put_f64(bytes, params.fc2_b);

  {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f)
      throw io::BinIoError(io::BinIoErrorCode::Io, "cannot open for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io::BinIoError(io::BinIoErrorCode::Io, "write failed: " + tmp.string());
    f.close();
    std::filesystem::rename(tmp, path);
  }

  nlohmann::json sidecar = extra_sidecar;
  sidecar["format"] = "FMDL";
  sidecar["version"] = kModelFileVersion;
  sidecar["in_dims"] = params.in_dims;
  sidecar["kernel"] = ModelParams::kKernel;
  sidecar["conv_channels"] = ModelParams::kConvChannels;
  sidecar["hidden"] = ModelParams::kHidden;
  std::filesystem::path sidecar_path = path;
  sidecar_path += ".json";
  std::filesystem::path tmp = sidecar_path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f)
      throw io::BinIoError(io::BinIoErrorCode::Io, "cannot open for writing: " + tmp.string());
    f << sidecar.dump(2) << "\n";
    if (!f) throw io::BinIoError(io::BinIoErrorCode::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, sidecar_path);
}

ModelParams read_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io::BinIoError(io::BinIoErrorCode::Io, "cannot open: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16)
    throw io::BinIoError(io::BinIoErrorCode::Truncated,
                         "model file shorter than its header: " + path.string());
  if (std::memcmp(bytes.data(), "FMDL", 4) != 0)
    throw io::BinIoError(io::BinIoErrorCode::BadMagic,
                         "bad model file magic: " + path.string());
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kModelFileVersion)
    throw io::BinIoError(io::BinIoErrorCode::BadVersion,
                         "unsupported model file version " + std::to_string(version) + ": " +
                             path.string());
  const std::uint32_t rows = get_u32(bytes.data() + 8);
  const std::uint32_t cols = get_u32(bytes.data() + 12);
  if (cols != 1)
    throw io::BinIoError(io::BinIoErrorCode::Malformed,
                         "model file column count must be 1: " + path.string());
  const std::size_t expected = 16 + std::size_t{8} * rows;
  if (bytes.size() != expected || rows < 4)
    throw io::BinIoError(io::BinIoErrorCode::Truncated,
                         "model file payload size mismatch: " + path.string());

  const unsigned char* p = bytes.data() + 16;
  auto next_f64 = [&p]() {
    const double v = get_f64(p);
    p += 8;
    return v;
  };

  ModelParams params;
  params.in_dims = static_cast<std::size_t>(next_f64());
  const auto kernel = static_cast<std::size_t>(next_f64());
  const auto channels = static_cast<std::size_t>(next_f64());
  const auto hidden = static_cast<std::size_t>(next_f64());
  if (kernel != ModelParams::kKernel || channels != ModelParams::kConvChannels ||
      hidden != ModelParams::kHidden || params.in_dims == 0)
    throw io::BinIoError(io::BinIoErrorCode::Malformed,
                         "model file shape prologue unsupported: " + path.string());
  params.conv_w.resize(channels * kernel * params.in_dims);
  params.conv_b.resize(channels);
  params.fc1_w.resize(hidden * channels);
  params.fc1_b.resize(hidden);
  params.fc2_w.resize(hidden);
  if (rows != 4 + params.total_scalars())
    throw io::BinIoError(io::BinIoErrorCode::Malformed,
                         "model file scalar count mismatch: " + path.string());
  for (double& v : params.conv_w) v = next_f64();
  for (double& v : params.conv_b) v = next_f64();
  for (double& v : params.fc1_w) v = next_f64();
  for (double& v : params.fc1_b) v = next_f64();
  for (double& v : params.fc2_w) v = next_f64();
  params.fc2_b = next_f64();
  return params;
}

}  // namespace fraug::train
