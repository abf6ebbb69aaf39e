#include "bbvel/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bbvel/errors.hpp"
#include "bbvel/io.hpp"

namespace bbvel {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;
constexpr std::uint64_t kDropoutStream = 13;

constexpr int kLayerCount = MlpModel::kHiddenLayers + 1;

int layer_inputs(std::size_t frames, int layer) {
  return layer == 0 ? static_cast<int>(4 * frames) : 2 * MlpModel::kHiddenWidth;
}

int layer_outputs(int layer) {
  return layer == MlpModel::kHiddenLayers ? MlpModel::kOutputs : MlpModel::kHiddenWidth;
}

void check_layer_shapes(std::size_t frames, const std::vector<DenseLayer>& layers) {
  if (frames < 2) throw ValidationError("model needs at least 2 frames");
  if (static_cast<int>(layers.size()) != kLayerCount) {
    throw ValidationError("model must have " + std::to_string(kLayerCount) + " layers");
  }
  for (int l = 0; l < kLayerCount; ++l) {
    const DenseLayer& layer = layers[l];
    if (layer.weight.rows() != layer_outputs(l) || layer.weight.cols() != layer_inputs(frames, l) ||
        layer.bias.size() != layer_outputs(l)) {
      throw ValidationError("layer " + std::to_string(l) + " has the wrong shape");
    }
  }
}

}  // namespace

std::vector<double> crelu(std::span<const double> x) {
  std::vector<double> out(2 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::max(x[i], 0.0);
    out[x.size() + i] = std::max(-x[i], 0.0);
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(lr0 > 0.0)) throw ValidationError("learning rate must be > 0");
  if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("decay must be in (0, 1]");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  smoothing.validate();
}

double TrainConfig::learning_rate(int epoch, std::uint64_t step) const {
  const double exponent = schedule == DecaySchedule::PerEpoch ? static_cast<double>(epoch)
                                                              : static_cast<double>(step);
  return lr0 * std::pow(decay, exponent);
}

MlpModel MlpModel::initialize(std::size_t frames, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInitStream));
  std::vector<DenseLayer> layers(kLayerCount);
  for (int l = 0; l < kLayerCount; ++l) {
    const int in = layer_inputs(frames, l);
    const int out = layer_outputs(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    layers[l].weight.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layers[l].weight(r, c) = rng.uniform(-limit, limit);
    }
    layers[l].bias = Eigen::VectorXd::Zero(out);
  }
  MlpModel m = model_from_layers(frames, std::move(layers));
  return m;
}

MlpModel model_from_layers(std::size_t frames, std::vector<DenseLayer> layers) {
  check_layer_shapes(frames, layers);
  MlpModel m;
  m.frames_ = frames;
  m.layers_ = std::move(layers);
  m.feature_norm = FeatureNorm::identity(4 * frames);
  return m;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpModel::validate() const {
  check_layer_shapes(frames_, layers_);
  for (const DenseLayer& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw ValidationError("model has non-finite weights");
  }
  if (feature_norm.size() != input_size() || feature_norm.std.size() != input_size()) {
    throw ValidationError("feature normalization length does not match the input size");
  }
}

ForwardCache forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs, Mode mode,
                           double dropout_p, Rng* rng) {
  if (static_cast<std::size_t>(inputs.rows()) != model.input_size()) {
    throw ValidationError("feature length " + std::to_string(inputs.rows()) + " does not match model input " +
                          std::to_string(model.input_size()));
  }
  const bool drop = mode == Mode::Train && dropout_p > 0.0;
  if (drop && rng == nullptr) throw ValidationError("train-mode dropout needs a random source");

  const auto& layers = model.layers();
  const int width = MlpModel::kHiddenWidth;
  ForwardCache cache;
  cache.model = &model;
  cache.revision = model.revision();
  cache.input = inputs;
  cache.pre.reserve(MlpModel::kHiddenLayers);
  cache.act.reserve(MlpModel::kHiddenLayers);

  const double keep_scale = drop ? 1.0 / (1.0 - dropout_p) : 1.0;
  const Eigen::MatrixXd* prev = &cache.input;
  for (int l = 0; l < MlpModel::kHiddenLayers; ++l) {
    Eigen::MatrixXd z = layers[l].weight * (*prev);
    z.colwise() += layers[l].bias;
    Eigen::MatrixXd a(2 * width, z.cols());
    a.topRows(width) = z.cwiseMax(0.0);
    a.bottomRows(width) = (-z).cwiseMax(0.0);
    if (drop) {
      Eigen::MatrixXd m(a.rows(), a.cols());
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng->uniform() < dropout_p ? 0.0 : keep_scale;
      }
      a.array() *= m.array();
      cache.mask.push_back(std::move(m));
    }
    cache.pre.push_back(std::move(z));
    cache.act.push_back(std::move(a));
    prev = &cache.act.back();
  }
  const DenseLayer& out = layers.back();
  cache.output = out.weight * (*prev);
  cache.output.colwise() += out.bias;
  return cache;
}

Gradients backward_batch(const MlpModel& model, const ForwardCache& cache, const Eigen::MatrixXd& targets) {
  if (cache.model != &model || cache.revision != model.revision()) {
    throw ValidationError("forward cache is stale or belongs to another model");
  }
  if (targets.rows() != MlpModel::kOutputs || targets.cols() != cache.output.cols()) {
    throw ValidationError("targets do not match the cached batch");
  }
  const auto& layers = model.layers();
  const int width = MlpModel::kHiddenWidth;
  const double batch = static_cast<double>(cache.output.cols());

  Gradients g;
  g.layers.resize(layers.size());
  Eigen::MatrixXd delta = (2.0 / batch) * (cache.output - targets);
  for (int l = MlpModel::kHiddenLayers; l >= 0; --l) {
    const Eigen::MatrixXd& below = l == 0 ? cache.input : cache.act[l - 1];
    g.layers[l].weight = delta * below.transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;

    Eigen::MatrixXd d_act = layers[l].weight.transpose() * delta;
    if (!cache.mask.empty()) d_act.array() *= cache.mask[l - 1].array();
    const Eigen::MatrixXd& z = cache.pre[l - 1];
    const auto pos = (z.array() > 0.0).cast<double>();
    const auto neg = (z.array() < 0.0).cast<double>();
    delta = (d_act.topRows(width).array() * pos - d_act.bottomRows(width).array() * neg).matrix();
  }
  return g;
}

ForwardResult forward(const MlpModel& model, std::span<const double> features, Mode mode, double dropout_p,
                      std::uint64_t seed) {
  const Eigen::MatrixXd input = Eigen::Map<const Eigen::VectorXd>(features.data(), features.size());
  Rng rng(seed);
  ForwardResult r;
  r.cache = forward_batch(model, input, mode, dropout_p, &rng);
  r.velocity = {r.cache.output(0, 0), r.cache.output(1, 0)};
  return r;
}

Gradients backward(const MlpModel& model, const ForwardCache& cache, Velocity2D target) {
  Eigen::MatrixXd t(2, 1);
  t << target.vx, target.vz;
  return backward_batch(model, cache, t);
}

namespace {

// First and second moment buffers shaped like the model.
struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
};

AdamState zero_like(const std::vector<DenseLayer>& layers) {
  AdamState s;
  for (const DenseLayer& l : layers) {
    s.m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  s.v = s.m;
  return s;
}

}  // namespace

TrainResult train(std::span<const LabeledSample> data, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training needs at least one sample");
  const std::size_t frames = data.front().track.frames();

  std::vector<FeatureVector> rows;
  rows.reserve(data.size());
  for (const LabeledSample& s : data) {
    if (s.track.frames() != frames) {
      throw ValidationError("sample '" + s.id + "' has " + std::to_string(s.track.frames()) +
                            " frames, expected " + std::to_string(frames));
    }
    rows.push_back(flatten(gaussian_smooth(s.track, cfg.smoothing)));
  }

  TrainResult result;
  MlpModel& model = result.model;
  model = MlpModel::initialize(frames, cfg.seed);
  model.feature_norm = FeatureNorm::fit(rows);
  model.train_config = cfg;

  const Eigen::Index n_in = static_cast<Eigen::Index>(4 * frames);
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd features(n_in, n);
  Eigen::MatrixXd targets(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const FeatureVector& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n_in; ++j) {
      features(j, i) = (row[j] - model.feature_norm.mean[j]) / model.feature_norm.std[j];
    }
    targets(0, i) = data[i].velocity.vx;
    targets(1, i) = data[i].velocity.vz;
  }
  rows.clear();

  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  Rng dropout_rng(derive_seed(cfg.seed, kDropoutStream));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  AdamState adam = zero_like(model.layers());
  std::uint64_t step = 0;
  const Eigen::Index batch_size = static_cast<Eigen::Index>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<Eigen::Index>(order));
    double loss_sum = 0.0;
    double epoch_lr = cfg.learning_rate(epoch, step);
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index b = std::min(batch_size, n - start);
      Eigen::MatrixXd xb(n_in, b);
      Eigen::MatrixXd tb(2, b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + k)];
        xb.col(k) = features.col(idx);
        tb.col(k) = targets.col(idx);
      }
      const ForwardCache cache = forward_batch(model, xb, Mode::Train, cfg.dropout_p, &dropout_rng);
      const double batch_loss = (cache.output - tb).colwise().squaredNorm().sum();
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      loss_sum += batch_loss;
      const Gradients g = backward_batch(model, cache, tb);

      ++step;
      const double lr = cfg.learning_rate(epoch, step - 1);
      if (cfg.schedule == DecaySchedule::PerStep && start == 0) epoch_lr = lr;
      auto& layers = model.mutable_layers();
      if (cfg.optimizer == OptimizerKind::Sgd) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
          layers[l].weight -= lr * g.layers[l].weight;
          layers[l].bias -= lr * g.layers[l].bias;
        }
        continue;
      }
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
      };
      for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weight, adam.m[l].weight, adam.v[l].weight, g.layers[l].weight);
        update(layers[l].bias, adam.m[l].bias, adam.v[l].bias, g.layers[l].bias);
      }
    }
    const EpochStats stats{epoch, epoch_lr, loss_sum / static_cast<double>(n)};
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

Velocity2D predict(const MlpModel& model, const Track& track, const SmoothingConfig& smoothing) {
  if (track.frames() != model.frames()) {
    throw ValidationError("track has " + std::to_string(track.frames()) + " frames, model expects " +
                          std::to_string(model.frames()));
  }
  const FeatureVector features = featurize(gaussian_smooth(track, smoothing), model.feature_norm);
  return forward(model, features, Mode::Eval).velocity;
}

namespace {

constexpr const char* kChecksumKey = "checksum";

json vector_to_json(std::span<const double> values) { return json(std::vector<double>(values.begin(), values.end())); }

std::vector<double> json_to_vector(const json& j, std::size_t expected, const char* what) {
  if (!j.is_array() || j.size() != expected) {
    throw FormatError(std::string("checkpoint field '") + what + "' has the wrong length");
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const json& v : j) {
    if (!v.is_number()) throw FormatError(std::string("checkpoint field '") + what + "' is not numeric");
    out.push_back(v.get<double>());
  }
  return out;
}

json model_to_json(const MlpModel& model) {
  json j;
  j["version"] = MlpModel::kFormatVersion;
  j["arch"] = {{"T", model.frames()},
               {"hidden", std::vector<int>(MlpModel::kHiddenLayers, MlpModel::kHiddenWidth)},
               {"activation", "crelu"},
               {"outputs", MlpModel::kOutputs}};
  j["feature_norm"] = {{"mean", model.feature_norm.mean}, {"std", model.feature_norm.std}};
  json weights = json::array();
  for (const DenseLayer& l : model.layers()) {
    // Row-major weight matrix.
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    weights.push_back({{"rows", l.weight.rows()},
                       {"cols", l.weight.cols()},
                       {"W", std::move(w)},
                       {"b", vector_to_json(std::span<const double>(l.bias.data(), l.bias.size()))}});
  }
  j["weights"] = std::move(weights);
  j["train_config"] = model.train_config ? train_config_to_json(*model.train_config) : json(nullptr);
  return j;
}

}  // namespace

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  model.validate();
  json j = model_to_json(model);
  j[kChecksumKey] = "fnv1a64:" + hex64(fnv1a64(j.dump()));
  write_file(path, j.dump() + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("model file '" + path.string() + "' is not valid JSON (truncated or corrupt): " + e.what());
  }
  if (!j.is_object()) throw FormatError("model file '" + path.string() + "' is not a JSON object");
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw FormatError("model file '" + path.string() + "' has no version field");
  }
  const int version = j["version"].get<int>();
  if (version != MlpModel::kFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(version) + " in model file '" + path.string() +
                      "' (supported: " + std::to_string(MlpModel::kFormatVersion) + ")");
  }
  if (!j.contains(kChecksumKey) || !j[kChecksumKey].is_string()) {
    throw FormatError("model file '" + path.string() + "' has no checksum");
  }
  const std::string stored = j[kChecksumKey].get<std::string>();
  j.erase(kChecksumKey);
  if (stored != "fnv1a64:" + hex64(fnv1a64(j.dump()))) {
    throw FormatError("checksum mismatch in model file '" + path.string() + "'");
  }

  try {
    const json& arch = j.at("arch");
    if (arch.at("activation").get<std::string>() != "crelu" ||
        arch.at("hidden").get<std::vector<int>>() !=
            std::vector<int>(MlpModel::kHiddenLayers, MlpModel::kHiddenWidth) ||
        arch.at("outputs").get<int>() != MlpModel::kOutputs) {
      throw FormatError("model file '" + path.string() + "' describes an unsupported architecture");
    }
    const std::size_t frames = arch.at("T").get<std::size_t>();
    const json& weights = j.at("weights");
    if (!weights.is_array() || weights.size() != static_cast<std::size_t>(kLayerCount)) {
      throw FormatError("model file '" + path.string() + "' has the wrong number of layers");
    }
    std::vector<DenseLayer> layers(kLayerCount);
    for (int l = 0; l < kLayerCount; ++l) {
      const json& lj = weights[static_cast<std::size_t>(l)];
      const Eigen::Index rows = layer_outputs(l);
      const Eigen::Index cols = layer_inputs(frames, l);
      if (lj.at("rows").get<Eigen::Index>() != rows || lj.at("cols").get<Eigen::Index>() != cols) {
        throw FormatError("layer " + std::to_string(l) + " shape does not match the architecture");
      }
      const std::vector<double> w = json_to_vector(lj.at("W"), static_cast<std::size_t>(rows * cols), "W");
      const std::vector<double> b = json_to_vector(lj.at("b"), static_cast<std::size_t>(rows), "b");
      layers[l].weight.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layers[l].weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      }
      layers[l].bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    }
    MlpModel model = model_from_layers(frames, std::move(layers));
    const json& norm = j.at("feature_norm");
    model.feature_norm.mean = json_to_vector(norm.at("mean"), 4 * frames, "feature_norm.mean");
    model.feature_norm.std = json_to_vector(norm.at("std"), 4 * frames, "feature_norm.std");
    if (!j.at("train_config").is_null()) model.train_config = train_config_from_json(j.at("train_config"));
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw FormatError("model file '" + path.string() + "' is malformed: " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError("model file '" + path.string() + "' is invalid: " + e.what());
  }
}

}  // namespace bbvel
