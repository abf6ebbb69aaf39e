#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "bbvel/errors.hpp"
#include "bbvel/io.hpp"
#include "bbvel/mlp.hpp"
#include "bbvel/synth.hpp"
#include "test_util.hpp"

using namespace bbvel;
using testing::TempDir;

namespace {

std::vector<double> random_input(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

std::vector<LabeledSample> small_dataset(std::size_t n, std::uint64_t seed, std::size_t frames = 40,
                                         bool noisy = true) {
  const Camera cam;
  GenConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  cfg.frames = frames;
  if (noisy) cfg.noise = NoiseConfig{};
  return generate_dataset(cam, default_prior_model(cam), cfg).samples;
}

bool same_weights(const MlpModel& a, const MlpModel& b) {
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    if (a.layers()[l].weight != b.layers()[l].weight || a.layers()[l].bias != b.layers()[l].bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("crelu") {
  CHECK(crelu(std::vector<double>{1, -2}) == std::vector<double>{1, 0, 0, 2});
  CHECK(crelu(std::vector<double>{0, 0}) == std::vector<double>{0, 0, 0, 0});
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + rng.index(20));
    for (double& v : x) v = rng.normal(0, 5);
    const std::vector<double> y = crelu(x);
    CHECK(y.size() == 2 * x.size());
    double abs_sum = 0.0;
    for (double v : x) abs_sum += std::abs(v);
    CHECK(std::accumulate(y.begin(), y.end(), 0.0) == doctest::Approx(abs_sum));
    for (double v : y) CHECK(v >= 0.0);
  }
}

TEST_CASE("architecture shape") {
  const MlpModel m = MlpModel::initialize(40, 1);
  // 160 -> 70, three 140 -> 70 transitions, 140 -> 2.
  const std::size_t expected = (160 * 70 + 70) + 3 * (140 * 70 + 70) + (140 * 2 + 2);
  CHECK(expected == 41162);
  CHECK(m.parameter_count() == 41162);
  CHECK(m.input_size() == 160);
  CHECK(m.layers().size() == 5);
  for (std::size_t l = 0; l + 1 < m.layers().size(); ++l) CHECK(m.layers()[l].weight.rows() == 70);
  CHECK(m.layers()[1].weight.cols() == 140);
  CHECK(m.layers()[4].weight.rows() == 2);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("initialization") {
  const MlpModel a = MlpModel::initialize(40, 5);
  CHECK(same_weights(a, MlpModel::initialize(40, 5)));
  CHECK_FALSE(same_weights(a, MlpModel::initialize(40, 6)));
  for (const DenseLayer& l : a.layers()) {
    CHECK(l.bias.isZero());
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= limit);
  }
}

TEST_CASE("model_from_layers rejects wrong shapes") {
  std::vector<DenseLayer> layers = MlpModel::initialize(40, 1).layers();
  CHECK_THROWS_AS(model_from_layers(41, layers), ValidationError);
  layers.pop_back();
  CHECK_THROWS_AS(model_from_layers(40, layers), ValidationError);
}

TEST_CASE("zero network outputs zero") {
  std::vector<DenseLayer> layers = MlpModel::initialize(10, 1).layers();
  for (DenseLayer& l : layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const MlpModel m = model_from_layers(10, layers);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Velocity2D v = forward(m, random_input(40, s), Mode::Eval).velocity;
    CHECK(v.vx == 0.0);
    CHECK(v.vz == 0.0);
  }
}

TEST_CASE("forward rejects a length mismatch") {
  const MlpModel m = MlpModel::initialize(40, 1);
  CHECK_THROWS_AS(forward(m, random_input(159, 1), Mode::Eval), ValidationError);
}

TEST_CASE("dropout off makes train mode equal eval mode") {
  const auto [m, x] = testing::random_pair(40, 3);
  const Velocity2D e = forward(m, x, Mode::Eval).velocity;
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(forward(m, x, Mode::Train, 0.0, s).velocity == e);
}

TEST_CASE("eval mode is deterministic, train mode depends on the mask seed") {
  const auto [m, x] = testing::random_pair(40, 4);
  CHECK(forward(m, x, Mode::Eval).velocity == forward(m, x, Mode::Eval).velocity);
  CHECK(forward(m, x, Mode::Train, 0.2, 1).velocity == forward(m, x, Mode::Train, 0.2, 1).velocity);
  CHECK(forward(m, x, Mode::Train, 0.2, 1).velocity != forward(m, x, Mode::Train, 0.2, 2).velocity);
}

TEST_CASE("inverted dropout preserves the expectation of the first transition") {
  const auto [m, x] = testing::random_pair(40, 8);
  const ForwardResult eval = forward(m, x, Mode::Eval);
  constexpr int kMasks = 10000;
  const double p = 0.2;
  const Eigen::Index width = eval.cache.pre[1].rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(width);
  for (int k = 0; k < kMasks; ++k) {
    const ForwardResult tr = forward(m, x, Mode::Train, p, derive_seed(8, static_cast<std::uint64_t>(k)));
    // The first affine layer sees no dropout; its output matches exactly.
    if (k == 0) CHECK(tr.cache.pre[0] == eval.cache.pre[0]);
    const Eigen::VectorXd z = tr.cache.pre[1].col(0);
    sum += z;
    sum_sq += z.cwiseProduct(z);
  }
  // pre[1] is linear in the first dropout mask, so its mean equals the eval value.
  double z_sum = 0.0;
  double z_sq = 0.0;
  double z_max = 0.0;
  for (Eigen::Index i = 0; i < width; ++i) {
    const double mean = sum(i) / kMasks;
    const double var = sum_sq(i) / kMasks - mean * mean;
    const double se = std::sqrt(var / kMasks);
    const double z = (mean - eval.cache.pre[1](i, 0)) / se;
    z_sum += z;
    z_sq += z * z;
    z_max = std::max(z_max, std::abs(z));
  }
  const double n = static_cast<double>(width);
  // Mean z-score within three of its own standard errors; spread near one.
  CHECK(std::abs(z_sum / n) < 3.0 / std::sqrt(n));
  CHECK(z_sq / n < 2.0);
  CHECK(z_max < 4.5);
}

TEST_CASE("output layer gradient has the closed form") {
  const auto [m, x] = testing::random_pair(40, 9);
  const ForwardResult r = forward(m, x, Mode::Eval);
  const Velocity2D target{0.3, -2.0};
  const Gradients g = backward(m, r.cache, target);
  Eigen::Vector2d residual(r.velocity.vx - target.vx, r.velocity.vz - target.vz);
  const Eigen::MatrixXd expected = 2.0 * residual * r.cache.act.back().transpose();
  CHECK((g.layers.back().weight - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.layers.back().bias - 2.0 * residual).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero residual gives zero gradients") {
  const auto [m, x] = testing::random_pair(40, 10);
  const ForwardResult r = forward(m, x, Mode::Eval);
  const Gradients g = backward(m, r.cache, r.velocity);
  for (const DenseLayer& l : g.layers) {
    CHECK(l.weight.isZero());
    CHECK(l.bias.isZero());
  }
}

TEST_CASE("analytic gradients match finite differences") {
  // Short tracks keep the check fast; the full-size check runs in the acceptance suite.
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto [m, x] = testing::random_pair(4, seed);
    const testing::GradCheck r = testing::finite_difference_check(m, x, {0.5, -1.0});
    CHECK(r.checked == m.parameter_count());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  const MlpModel m = MlpModel::initialize(5, 2);
  Eigen::MatrixXd x(20, 3);
  Eigen::MatrixXd t(2, 3);
  Rng rng(3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  const Gradients batch = backward_batch(m, forward_batch(m, x, Mode::Eval), t);
  for (std::size_t l = 0; l < batch.layers.size(); ++l) {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(batch.layers[l].weight.rows(), batch.layers[l].weight.cols());
    for (Eigen::Index c = 0; c < 3; ++c) {
      const std::vector<double> xc(x.col(c).data(), x.col(c).data() + x.rows());
      sum += backward(m, forward(m, xc, Mode::Eval).cache, {t(0, c), t(1, c)}).layers[l].weight;
    }
    CHECK((batch.layers[l].weight - sum / 3.0).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward rejects a stale cache") {
  auto [m, x] = testing::random_pair(4, 1);
  const ForwardResult r = forward(m, x, Mode::Eval);
  m.mutable_layers()[0].bias(0) += 1.0;
  CHECK_THROWS_AS(backward(m, r.cache, {0, 0}), ValidationError);
  const MlpModel other = MlpModel::initialize(4, 2);
  const ForwardResult r2 = forward(other, x, Mode::Eval);
  CHECK_THROWS_AS(backward(m, r2.cache, {0, 0}), ValidationError);
}

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  for (int e = 0; e < 150; ++e) CHECK(cfg.learning_rate(e, 12345) == 6e-4 * std::pow(0.99, e));
  cfg.schedule = DecaySchedule::PerStep;
  CHECK(cfg.learning_rate(3, 10) == 6e-4 * std::pow(0.99, 10));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.dropout_p = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.lr0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.decay = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  CHECK_THROWS_AS(train(std::vector<LabeledSample>{}, cfg), ValidationError);
}

TEST_CASE("training rejects inconsistent track lengths") {
  std::vector<LabeledSample> data = small_dataset(4, 1);
  data[2].track.boxes.pop_back();
  CHECK_THROWS_AS(train(data, TrainConfig{}), ValidationError);
}

TEST_CASE("training is deterministic") {
  const std::vector<LabeledSample> data = small_dataset(150, 2, 10);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  const TrainResult a = train(data, cfg);
  const TrainResult b = train(data, cfg);
  CHECK(same_weights(a.model, b.model));
  REQUIRE(a.trace.size() == 3);
  for (std::size_t e = 0; e < a.trace.size(); ++e) {
    CHECK(a.trace[e].loss == b.trace[e].loss);
    CHECK(a.trace[e].learning_rate == 6e-4 * std::pow(0.99, static_cast<double>(e)));
  }
  cfg.seed = 5;
  CHECK_FALSE(same_weights(a.model, train(data, cfg).model));
}

TEST_CASE("training reduces the loss") {
  const std::vector<LabeledSample> data = small_dataset(500, 3, 20, false);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr0 = 5e-3;
  cfg.seed = 1;
  const TrainResult r = train(data, cfg);
  CHECK(r.trace.back().loss < 0.5 * r.trace.front().loss);
}

TEST_CASE("a single sample is memorized") {
  // A lone sample standardizes to the zero vector, so only biases can adapt;
  // a larger step size lets them reach the target within 150 epochs.
  const std::vector<LabeledSample> data = small_dataset(1, 6);
  REQUIRE(data.size() == 1);
  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.dropout_p = 0.0;
  cfg.seed = 2;
  const TrainResult r = train(data, cfg);
  CHECK(r.trace.size() == 150);
  CHECK(r.trace.back().loss < 1e-3);
}

TEST_CASE("sgd option trains") {
  const std::vector<LabeledSample> data = small_dataset(200, 7, 10);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.lr0 = 1e-3;
  cfg.epochs = 5;
  const TrainResult r = train(data, cfg);
  CHECK(std::isfinite(r.trace.back().loss));
  CHECK(r.trace.back().loss < r.trace.front().loss);
}

TEST_CASE("non-finite loss aborts training") {
  std::vector<LabeledSample> data = small_dataset(10, 8, 10);
  for (LabeledSample& s : data) s.velocity = {1e200, -1e200};
  TrainConfig cfg;
  cfg.epochs = 2;
  CHECK_THROWS_AS(train(data, cfg), NumericError);
}

TEST_CASE("predict is smooth, featurize, eval forward") {
  const std::vector<LabeledSample> data = small_dataset(100, 9, 10);
  TrainConfig cfg;
  cfg.epochs = 2;
  const MlpModel m = train(data, cfg).model;
  const SmoothingConfig sm{5.0, -1};
  for (const LabeledSample& s : data) {
    const Velocity2D p = predict(m, s.track, sm);
    const Velocity2D manual = forward(m, featurize(gaussian_smooth(s.track, sm), m.feature_norm), Mode::Eval).velocity;
    CHECK(p == manual);
    CHECK(predict(m, s.track, sm) == p);
  }
  Track short_track = data.front().track;
  short_track.boxes.pop_back();
  CHECK_THROWS_AS(predict(m, short_track, sm), ValidationError);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  const std::vector<LabeledSample> data = small_dataset(100, 10, 10);
  TrainConfig cfg;
  cfg.epochs = 2;
  const MlpModel m = train(data, cfg).model;
  const std::string path = dir.file("model.json");
  save_model(m, path);
  const MlpModel back = load_model(path);
  CHECK(same_weights(m, back));
  CHECK(back.feature_norm.mean == m.feature_norm.mean);
  CHECK(back.feature_norm.std == m.feature_norm.std);
  REQUIRE(back.train_config);
  CHECK(back.train_config->epochs == 2);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::vector<double> x = random_input(m.input_size(), s);
    CHECK(forward(m, x, Mode::Eval).velocity == forward(back, x, Mode::Eval).velocity);
  }

  SUBCASE("truncated file") {
    const std::string text = read_file(path);
    write_file(path, text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_model(path), FormatError);
  }
  SUBCASE("unsupported version") {
    json j = json::parse(read_file(path));
    j["version"] = 7;
    write_file(path, j.dump());
    try {
      load_model(path);
      FAIL("expected an error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
    }
  }
  SUBCASE("tampered weight") {
    json j = json::parse(read_file(path));
    j["weights"][0]["W"][0] = j["weights"][0]["W"][0].get<double>() + 1.0;
    write_file(path, j.dump());
    CHECK_THROWS_AS(load_model(path), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model(dir.file("nope.json")), IoError); }
}
