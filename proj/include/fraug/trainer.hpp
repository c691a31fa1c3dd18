#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "json.hpp"

#include "fraug/corpus.hpp"
#include "fraug/matrix.hpp"
#include "fraug/rng.hpp"

namespace fraug::train {

// Fixed topology: conv1d (kernel 3, in = feature dims, out 16 channels)
// -> ReLU -> dropout -> max-pool (width 3, stride 3) -> temporal mean
// pool -> dense 16->32 -> ReLU -> dense 32->1 -> sigmoid.
struct ModelParams {
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kConvChannels = 16;
  static constexpr std::size_t kHidden = 32;

  std::size_t in_dims = 0;
  std::vector<double> conv_w;  // [kConvChannels][kKernel * in_dims], patch-major
  std::vector<double> conv_b;  // [kConvChannels]
  std::vector<double> fc1_w;   // [kHidden][kConvChannels]
  std::vector<double> fc1_b;   // [kHidden]
  std::vector<double> fc2_w;   // [kHidden]
  double fc2_b = 0.0;

  std::size_t total_scalars() const;
  bool shapes_consistent() const;
};

// Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases;
// consumes a fixed number of draws from rng.
ModelParams init_params(std::size_t in_dims, Rng& rng);

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double dropout_p = 0.05;
  std::uint64_t seed = 0;
  std::size_t ensemble_size = 5;
};

void validate_train_config(const TrainConfig& config);

// Inverted-dropout mask for the conv activations: entries are either 0
// or 1/(1-p), so no rescaling is needed at prediction time.
Matrix make_dropout_mask(std::size_t rows, double p, Rng& rng);

// Returns the predicted probability for one segment. A null mask means
// dropout disabled (prediction mode).
double forward(const ModelParams& params, const Matrix& segment,
               const Matrix* dropout_mask = nullptr);

// Binary cross-entropy with the probability clamped to [1e-12, 1-1e-12].
double loss(double probability, int label);

struct Gradients {
  std::vector<double> conv_w, conv_b, fc1_w, fc1_b, fc2_w;
  double fc2_b = 0.0;
};

struct BatchItem {
  const Matrix* features = nullptr;
  int label = 0;
  const Matrix* dropout_mask = nullptr;  // null = no dropout
};

// Exact analytic gradient of the mean loss over the batch. When
// mean_loss is non-null it receives the batch's mean loss.
Gradients gradient(const ModelParams& params, const std::vector<BatchItem>& batch,
                   double* mean_loss = nullptr);

struct TrainedModel {
  ModelParams params;
  std::vector<double> loss_trajectory;  // mean training loss per epoch
  std::uint64_t model_seed = 0;
};

// Seeded mini-batch gradient descent over the given segments. Segments
// are put into a canonical order before the seed-driven shuffle, so the
// result does not depend on input order. The learning rate halves after
// 10 epochs without improvement of the best epoch loss.
TrainedModel train_model(const std::vector<corpus::Segment>& segments,
                         const TrainConfig& config, std::uint64_t model_seed);

// Builds the training subset for ensemble member m; called once per
// member with that member's derived seed. Must be safe to call from
// multiple threads.
using SubsetFn =
    std::function<std::vector<corpus::Segment>(std::size_t model_index, std::uint64_t seed)>;

// Trains ensemble_size models, each on a freshly generated subset, with
// model seeds derived from config.seed. Members may train in parallel
// (up to `jobs` threads); results are identical for any jobs value.
std::vector<TrainedModel> train_ensemble(const SubsetFn& subset_fn, const TrainConfig& config,
                                         std::size_t jobs = 1);

struct Prediction {
  std::vector<double> segment_probs;
  double utterance_prob = 0.0;
  int utterance_label = 0;  // 1 iff utterance_prob >= 0.5
};

// Per-segment probability = mean over models; utterance probability =
// mean over segments; threshold 0.5 (ties classify positive). Sums are
// accumulated in sorted order so the result is exactly invariant under
// permutation of models and of segments.
Prediction ensemble_predict(const std::vector<ModelParams>& models,
                            const std::vector<Matrix>& utterance_segments);

// Model checkpoints use the feature-file container with magic "FMDL" and
// a float64 payload: four shape scalars (in_dims, kernel, channels,
// hidden), then the parameter blocks in declaration order.
void write_model(const ModelParams& params, const std::filesystem::path& path,
                 const nlohmann::json& extra_sidecar = nlohmann::json::object());
ModelParams read_model(const std::filesystem::path& path);

}  // namespace fraug::train
