#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bbvel/geometry.hpp"
#include "bbvel/random.hpp"
#include "bbvel/sample.hpp"
#include "bbvel/track.hpp"

namespace bbvel {

// Concatenated ReLU: [max(x, 0), max(-x, 0)].
std::vector<double> crelu(std::span<const double> x);

enum class Mode { Train, Eval };
enum class OptimizerKind { Adam, Sgd };
enum class DecaySchedule { PerEpoch, PerStep };

struct TrainConfig {
  int epochs = 150;
  double lr0 = 6e-4;
  double decay = 0.99;
  double dropout_p = 0.2;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  DecaySchedule schedule = DecaySchedule::PerEpoch;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Preprocessing applied to every training track before featurization.
  SmoothingConfig smoothing{5.0, -1};

  void validate() const;
  // lr0 * decay^epoch, or lr0 * decay^step for the per-step schedule.
  double learning_rate(int epoch, std::uint64_t step) const;
};

// Affine map y = W x + b with W stored (outputs x inputs).
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

// 4T -> [70 -> CReLU(140)] x 4 -> 2, with standardization of the input.
class MlpModel {
 public:
  static constexpr int kHiddenWidth = 70;
  static constexpr int kHiddenLayers = 4;
  static constexpr int kOutputs = 2;
  static constexpr int kFormatVersion = 1;

  MlpModel() = default;
  // Glorot-uniform weights (fan-in counts the doubled CReLU width), zero
  // biases, identity feature normalization.
  static MlpModel initialize(std::size_t frames, std::uint64_t seed);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t input_size() const noexcept { return 4 * frames_; }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  // Any mutable access invalidates outstanding forward caches.
  std::vector<DenseLayer>& mutable_layers() noexcept {
    ++revision_;
    return layers_;
  }
  std::uint64_t revision() const noexcept { return revision_; }

  FeatureNorm feature_norm;
  std::optional<TrainConfig> train_config;

  // Shapes match the architecture for frames() and every value is finite.
  void validate() const;

 private:
  friend MlpModel model_from_layers(std::size_t frames, std::vector<DenseLayer> layers);

  std::size_t frames_ = 0;
  std::vector<DenseLayer> layers_;
  std::uint64_t revision_ = 0;
};

// Builds a model around explicit layers; validates the shapes.
MlpModel model_from_layers(std::size_t frames, std::vector<DenseLayer> layers);

// Activations kept by a forward pass for the matching backward pass. Each
// column of a matrix is one sample.
struct ForwardCache {
  const MlpModel* model = nullptr;
  std::uint64_t revision = 0;
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;   // hidden pre-activations
  std::vector<Eigen::MatrixXd> act;   // CReLU outputs after dropout
  std::vector<Eigen::MatrixXd> mask;  // dropout scales, empty in eval mode
  Eigen::MatrixXd output;
};

// `inputs` holds standardized features, one sample per column. Train mode
// applies inverted dropout after every CReLU with masks drawn from `rng`.
ForwardCache forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs, Mode mode,
                           double dropout_p = 0.0, Rng* rng = nullptr);

struct Gradients {
  std::vector<DenseLayer> layers;
};

// Gradient of mean_b ||output_b - target_b||^2 over the cached batch.
Gradients backward_batch(const MlpModel& model, const ForwardCache& cache, const Eigen::MatrixXd& targets);

struct ForwardResult {
  Velocity2D velocity;
  ForwardCache cache;
};

ForwardResult forward(const MlpModel& model, std::span<const double> features, Mode mode,
                      double dropout_p = 0.0, std::uint64_t seed = 0);
// Gradient of ||output - target||^2 for a single-sample cache.
Gradients backward(const MlpModel& model, const ForwardCache& cache, Velocity2D target);

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;  // mean training loss over the epoch (train mode)
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> trace;
};

TrainResult train(std::span<const LabeledSample> data, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// smooth -> featurize with the stored norm -> eval-mode forward.
Velocity2D predict(const MlpModel& model, const Track& track, const SmoothingConfig& smoothing);

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace bbvel
