#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "bbvel/errors.hpp"
#include "bbvel/eval.hpp"
#include "bbvel/geometry.hpp"
#include "bbvel/io.hpp"
#include "bbvel/mlp.hpp"
#include "bbvel/priors.hpp"
#include "bbvel/synth.hpp"

namespace bbvel::cli {

namespace {

// Raised for flag combinations that parse but make no sense (n = 0, ...).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::map<std::string, DistanceConvention> kConventions = {
    {"euclidean", DistanceConvention::Euclidean}, {"longitudinal", DistanceConvention::Longitudinal}};

Camera camera_or_default(const std::string& path) { return path.empty() ? Camera{} : load_camera(path); }

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

constexpr const char* kTrackFormat =
    "Track JSONL: one object per line, {\"id\": str, \"fps\": num, \"boxes\": [[x,y,w,h], ...]},\n"
    "optionally with \"velocity\": [Vx,Vz] (m/s), \"distance\": d (m) and \"position\": [X,Z] (m)\n"
    "stated at the last frame. Boxes are pixels, top-left origin; Vx/X point right, Vz/Z forward.";
constexpr const char* kCameraFormat =
    "Camera JSON: {\"f\": focal px, \"H\": mount height m, \"img_w\": px, \"img_h\": px};\n"
    "principal point at the image center. Defaults when omitted: f=1000, H=1.5, 1280x720.";

// ---------------------------------------------------------------- fit-priors

struct FitPriorsArgs {
  std::string annotations;
  std::string camera;
  std::string output;
  std::string basis = "inv_z";
  int degree = -1;
  std::string depth_source = "backprojected";
};

int cmd_fit_priors(const FitPriorsArgs& a, std::ostream& out, std::ostream& err) {
  const Camera cam = load_camera(a.camera);
  const std::vector<LabeledSample> samples = read_labeled_samples(a.annotations);
  PriorFitOptions opt;
  opt.basis = a.basis == "z" ? SizeBasis::Z : SizeBasis::InvZ;
  opt.degree = a.degree;
  opt.depth_source = a.depth_source == "label" ? DepthSource::Label : DepthSource::BackProjected;
  const PriorFitResult fit = fit_priors(samples, cam, opt);
  for (const std::string& w : fit.warnings) err << "warning: " << w << "\n";
  save_prior(fit.model, a.output);
  out << "fitted priors from " << samples.size() << " samples (" << fit.model.seed_points.size()
      << " seed points) -> " << a.output << "\n";
  return kOk;
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string priors;
  std::string camera;
  std::string output;
  std::string manifest;
  long long n = static_cast<long long>(GenConfig::kFullScaleSampleCount);
  std::uint64_t seed = 0;
  std::size_t frames = Track::kDefaultFrames;
  double fps = Track::kDefaultFps;
  double jitter_lateral = 0.5;
  double jitter_longitudinal = 2.0;
  bool noise = false;
  double noise_xy = 2.0;
  double noise_wh = 1.0;
  double drift_w = 0.0;
  double drift_h = 0.0;
  double accel_sigma = 0.0;
  std::string distance = "euclidean";
  int max_retries = 32;
  unsigned threads = 1;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.n < 1) throw UsageError("-n must be >= 1");
  const Camera cam = camera_or_default(a.camera);
  const PriorModel pm = a.priors.empty() ? default_prior_model(cam) : load_prior(a.priors);

  GenConfig cfg;
  cfg.n_samples = static_cast<std::size_t>(a.n);
  cfg.frames = a.frames;
  cfg.fps = a.fps;
  cfg.jitter = {a.jitter_lateral, a.jitter_longitudinal};
  if (a.noise) cfg.noise = NoiseConfig{a.noise_xy, a.noise_wh, a.drift_w, a.drift_h};
  cfg.accel_sigma = a.accel_sigma;
  cfg.distance = kConventions.at(a.distance);
  cfg.max_retries = a.max_retries;
  cfg.seed = a.seed;
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }

  const GenerationResult result = generate_dataset(cam, pm, cfg, a.threads);
  for (std::size_t idx : result.skipped) {
    err << "skipped sample " << idx << ": no valid trajectory after " << cfg.max_retries << " retries\n";
  }
  write_file(a.output, to_jsonl(result.samples));

  json config = {{"n", cfg.n_samples},
                 {"frames", cfg.frames},
                 {"fps", cfg.fps},
                 {"jitter", {cfg.jitter.lateral, cfg.jitter.longitudinal}},
                 {"noise", cfg.noise ? json{cfg.noise->sigma_xy, cfg.noise->sigma_wh, cfg.noise->drift_w,
                                            cfg.noise->drift_h}
                                     : json(nullptr)},
                 {"accel_sigma", cfg.accel_sigma},
                 {"distance", a.distance},
                 {"max_retries", cfg.max_retries},
                 {"seed", cfg.seed},
                 {"camera", camera_to_json(cam)},
                 {"priors", prior_to_json(pm)}};
  const json manifest = {{"seed", cfg.seed},
                         {"config_hash", "fnv1a64:" + hex64(fnv1a64(config.dump()))},
                         {"n", cfg.n_samples},
                         {"written", result.samples.size()},
                         {"skip_count", result.skipped.size()},
                         {"skipped", result.skipped},
                         {"output", std::filesystem::path(a.output).filename().string()}};
  const std::string manifest_path = a.manifest.empty() ? with_suffix(a.output, ".manifest.json") : a.manifest;
  write_file(manifest_path, manifest.dump(2) + "\n");
  out << "wrote " << result.samples.size() << " samples (" << result.skipped.size() << " skipped) -> " << a.output
      << "\n";
  return kOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string output;
  std::string loss_trace;
  std::uint64_t seed = 0;
  TrainConfig cfg;
  std::string optimizer = "adam";
  std::string schedule = "epoch";
  bool quiet = false;
};

int cmd_train(TrainArgs a, std::ostream& out, std::ostream& err) {
  a.cfg.seed = a.seed;
  a.cfg.optimizer = a.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  a.cfg.schedule = a.schedule == "step" ? DecaySchedule::PerStep : DecaySchedule::PerEpoch;
  try {
    a.cfg.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const std::vector<LabeledSample> data = read_labeled_samples(a.data);
  if (data.empty()) throw ValidationError("training file '" + a.data + "' contains no samples");

  const TrainResult result = train(data, a.cfg, [&](const EpochStats& s) {
    if (!a.quiet && (s.epoch % 10 == 0 || s.epoch + 1 == a.cfg.epochs)) {
      err << "epoch " << s.epoch << " lr " << s.learning_rate << " loss " << s.loss << "\n";
    }
  });

  save_model(result.model, a.output);
  std::ostringstream trace;
  trace << "epoch,lr,loss\n";
  char buf[128];
  for (const EpochStats& s : result.trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", s.epoch, s.learning_rate, s.loss);
    trace << buf;
  }
  const std::string trace_path = a.loss_trace.empty() ? with_suffix(a.output, ".loss.csv") : a.loss_trace;
  write_file(trace_path, trace.str());
  out << "trained on " << data.size() << " samples, final loss " << result.trace.back().loss << " -> " << a.output
      << "\n";
  return kOk;
}

// ---------------------------------------------------------- predict/baseline

template <typename Estimator>
int run_estimator(const std::string& tracks, const std::string& output, std::ostream& out, std::ostream& err,
                  Estimator&& estimate) {
  std::vector<Prediction> preds;
  std::vector<std::string> failures;
  for (const RecordResult& r : read_track_records_lenient(tracks)) {
    const std::string where = "line " + std::to_string(r.line);
    if (!r.record) {
      failures.push_back(where + ": " + r.error);
      continue;
    }
    try {
      const std::string id = r.record->id.empty() ? "line-" + std::to_string(r.line) : r.record->id;
      preds.push_back({id, estimate(r.record->track)});
    } catch (const Error& e) {
      failures.push_back(where + " (" + r.record->id + "): " + e.what());
    }
  }
  write_file(output, to_jsonl(preds));
  out << "wrote " << preds.size() << " predictions -> " << output << "\n";
  if (!failures.empty()) {
    err << failures.size() << " record(s) failed:\n";
    for (const std::string& f : failures) err << "  " << f << "\n";
    return kDataError;
  }
  return kOk;
}

struct PredictArgs {
  std::string model;
  std::string tracks;
  std::string output;
  std::optional<double> smooth_sigma;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const MlpModel model = load_model(a.model);
  SmoothingConfig smoothing{5.0, -1};
  if (model.train_config) smoothing = model.train_config->smoothing;
  if (a.smooth_sigma) smoothing = {*a.smooth_sigma, -1};
  smoothing.validate();
  return run_estimator(a.tracks, a.output, out, err,
                       [&](const Track& t) { return predict(model, t, smoothing); });
}

struct BaselineArgs {
  std::string camera;
  std::string tracks;
  std::string output;
  std::size_t window = 0;
  double smooth_sigma = 0.0;
};

int cmd_baseline(const BaselineArgs& a, std::ostream& out, std::ostream& err) {
  const Camera cam = camera_or_default(a.camera);
  const SmoothingConfig smoothing{a.smooth_sigma, -1};
  smoothing.validate();
  return run_estimator(a.tracks, a.output, out, err, [&](const Track& t) {
    return geometric_velocity(cam, gaussian_smooth(t, smoothing), a.window);
  });
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string preds;
  std::string truth;
  std::string output;
  std::string csv;
  std::string name = "method";
  double near_max = 20.0;
  double far_min = 45.0;
  std::string distance = "euclidean";
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  BucketSpec spec{a.near_max, a.far_min, kConventions.at(a.distance)};
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const std::vector<Prediction> preds = read_predictions(a.preds);
  const std::vector<LabeledSample> truth = read_labeled_samples(a.truth);
  std::map<std::string, Velocity2D> by_id;
  for (const Prediction& p : preds) {
    if (!by_id.emplace(p.id, p.velocity).second) throw FormatError("duplicate prediction id '" + p.id + "'");
  }
  std::vector<Velocity2D> aligned;
  aligned.reserve(truth.size());
  for (const LabeledSample& s : truth) {
    const auto it = by_id.find(s.id);
    if (it == by_id.end()) throw FormatError("no prediction for truth id '" + s.id + "'");
    aligned.push_back(it->second);
  }
  const EvalReport report = e_v(aligned, truth, spec);

  std::vector<NamedReport> rows = {{a.name, report}};
  out << compare_table(rows);
  if (!a.output.empty()) {
    json j = {{"method", a.name},
              {"E_v", report.overall},
              {"E_v_rms", report.overall_rms()},
              {"buckets", json::object()},
              {"spec", {{"near_max", spec.near_max}, {"far_min", spec.far_min}, {"distance", a.distance}}}};
    for (Bucket b : kBuckets) {
      const int k = static_cast<int>(b);
      j["buckets"][bucket_name(b)] = {
          {"E_v", report.bucket_error[k]}, {"rms", report.rms(b)}, {"count", report.bucket_count[k]}};
    }
    write_file(a.output, j.dump(2) + "\n");
  }
  if (!a.csv.empty()) write_file(a.csv, compare_csv(rows));
  return kOk;
}

// -------------------------------------------------------------- export-stats

struct ExportArgs {
  std::string data;
  std::string camera;
  std::string output;
  std::string hist_output;
  bool all_frames = false;
  int bins = 40;
  double vel_range = 15.0;
};

int cmd_export_stats(const ExportArgs& a, std::ostream& out, std::ostream&) {
  if (a.bins < 1) throw UsageError("--bins must be >= 1");
  if (!(a.vel_range > 0.0)) throw UsageError("--vel-range must be > 0");
  const Camera cam = camera_or_default(a.camera);
  const std::vector<LabeledSample> data = read_labeled_samples(a.data);

  std::ostringstream csv;
  csv << "id,frame,x,y,w,h,X,Z,h_m,w_m,vx,vz\n";
  char buf[512];
  for (const LabeledSample& s : data) {
    const std::size_t first = a.all_frames ? 0 : s.track.frames() - 1;
    for (std::size_t t = first; t < s.track.frames(); ++t) {
      const BBox& b = s.track.boxes[t];
      const GroundPoint g = back_project(cam, bbox_reference_point(cam, b));
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                    s.id.c_str(), t, b.x, b.y, b.w, b.h, g.X, g.Z, b.h * g.Z / cam.f, b.w * g.Z / cam.f,
                    s.velocity.vx, s.velocity.vz);
      csv << buf;
    }
  }
  write_file(a.output, csv.str());

  // Histograms over [-range, range]; outliers land in the end bins.
  std::vector<std::size_t> hx(a.bins, 0);
  std::vector<std::size_t> hz(a.bins, 0);
  const double width = 2.0 * a.vel_range / a.bins;
  auto bin_of = [&](double v) {
    const int k = static_cast<int>(std::floor((v + a.vel_range) / width));
    return static_cast<std::size_t>(std::clamp(k, 0, a.bins - 1));
  };
  for (const LabeledSample& s : data) {
    ++hx[bin_of(s.velocity.vx)];
    ++hz[bin_of(s.velocity.vz)];
  }
  std::ostringstream hist;
  hist << "component,bin_lo,bin_hi,count\n";
  for (const auto& [name, h] : {std::pair{"vx", &hx}, std::pair{"vz", &hz}}) {
    for (int k = 0; k < a.bins; ++k) {
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%zu\n", name, -a.vel_range + k * width,
                    -a.vel_range + (k + 1) * width, (*h)[k]);
      hist << buf;
    }
  }
  const std::string hist_path = a.hist_output.empty() ? with_suffix(a.output, "_velocity_hist.csv") : a.hist_output;
  write_file(hist_path, hist.str());
  out << "exported " << data.size() << " samples -> " << a.output << ", " << hist_path << "\n";
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Numeric: return kNumericFailure;
    default: return kDataError;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vehicle velocity from bounding-box tracks: prior fitting, synthetic generation, MLP training,\n"
               "prediction, geometric baseline and distance-bucketed evaluation.",
               "bbvel"};
  app.require_subcommand(1);
  app.footer(std::string("Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.\n\n") + kTrackFormat +
             "\n" + kCameraFormat);
  std::function<int()> action;

  FitPriorsArgs fp;
  auto* sub = app.add_subcommand("fit-priors", "Fit location/size/velocity priors from labeled annotations");
  sub->add_option("annotations,--annotations", fp.annotations, "Labeled track JSONL")->required();
  sub->add_option("-c,--camera", fp.camera, "Camera JSON")->required();
  sub->add_option("-o,--output", fp.output, "Output prior JSON")->required();
  sub->add_option("--basis", fp.basis, "Size polynomial variable: inv_z (1/Z) or z")
      ->capture_default_str()
      ->check(CLI::IsMember({"inv_z", "z"}));
  sub->add_option("--degree", fp.degree, "Size polynomial degree (-1: 1 for inv_z, 2 for z)")->capture_default_str();
  sub->add_option("--depth-source", fp.depth_source,
                  "Depth for size fits: backprojected (first box) or label (last box, labeled depth)")
      ->capture_default_str()
      ->check(CLI::IsMember({"backprojected", "label"}));
  sub->footer(
      "Prior JSON: {\"version\":1, \"seed_points\":[[X,Z],...], \"h_poly\":[...], \"w_poly\":[...],\n"
      "\"basis\":\"inv_z\"|\"z\", \"vel_mean\":[Vx,Vz], \"vel_cov\":[[..],[..]], \"bounds\":{...},\n"
      "\"size_bounds\":{...}}. Polynomials are highest power first and give pixel sizes.");
  sub->callback([&] { action = [&] { return cmd_fit_priors(fp, out, err); }; });

  GenerateArgs ga;
  sub = app.add_subcommand("generate", "Generate labeled synthetic tracks from a prior");
  sub->add_option("-p,--priors", ga.priors, "Prior JSON (built-in motorway prior when omitted)");
  sub->add_option("-c,--camera", ga.camera, "Camera JSON");
  sub->add_option("-o,--output", ga.output, "Output track JSONL")->required();
  sub->add_option("--manifest", ga.manifest, "Manifest path (default: <output stem>.manifest.json)");
  sub->add_option("-n,--samples", ga.n, "Number of samples")->capture_default_str();
  sub->add_option("--seed", ga.seed, "Master seed (required)")->required();
  sub->add_option("--frames", ga.frames, "Frames per track")->capture_default_str();
  sub->add_option("--fps", ga.fps, "Frame rate")->capture_default_str();
  sub->add_option("--jitter-lateral", ga.jitter_lateral, "Seed jitter std-dev in X [m]")->capture_default_str();
  sub->add_option("--jitter-longitudinal", ga.jitter_longitudinal, "Seed jitter std-dev in Z [m]")
      ->capture_default_str();
  sub->add_flag("--noise", ga.noise, "Add simulated tracker noise to every track");
  sub->add_option("--noise-xy", ga.noise_xy, "Tracker noise std-dev on x, y [px]")->capture_default_str();
  sub->add_option("--noise-wh", ga.noise_wh, "Tracker noise std-dev on w, h [px]")->capture_default_str();
  sub->add_option("--drift-w", ga.drift_w, "Width drift [px/frame]")->capture_default_str();
  sub->add_option("--drift-h", ga.drift_h, "Height drift [px/frame]")->capture_default_str();
  sub->add_option("--accel-sigma", ga.accel_sigma, "Constant-acceleration std-dev [m/s^2]; 0 = constant velocity")
      ->capture_default_str();
  sub->add_option("--distance", ga.distance, "Distance label: euclidean or longitudinal")
      ->capture_default_str()
      ->check(CLI::IsMember({"euclidean", "longitudinal"}));
  sub->add_option("--max-retries", ga.max_retries, "Resampling attempts per sample")->capture_default_str();
  sub->add_option("--threads", ga.threads, "Worker threads (output does not depend on it)")->capture_default_str();
  sub->footer(std::string("Writes track JSONL with velocity/distance/position labels at the last frame, plus a\n"
                          "manifest {seed, config_hash, n, written, skip_count, skipped}.\n") +
              kTrackFormat);
  sub->callback([&] { action = [&] { return cmd_generate(ga, out, err); }; });

  TrainArgs ta;
  sub = app.add_subcommand("train", "Train the velocity MLP on labeled tracks");
  sub->add_option("data,--data", ta.data, "Labeled track JSONL")->required();
  sub->add_option("-o,--output", ta.output, "Output model JSON")->required();
  sub->add_option("--seed", ta.seed, "Seed for init, shuffling and dropout (required)")->required();
  sub->add_option("--epochs", ta.cfg.epochs, "Epochs")->capture_default_str();
  sub->add_option("--lr", ta.cfg.lr0, "Initial learning rate")->capture_default_str();
  sub->add_option("--decay", ta.cfg.decay, "Exponential learning-rate decay rate")->capture_default_str();
  sub->add_option("--decay-schedule", ta.schedule, "Apply decay per epoch or per step")
      ->capture_default_str()
      ->check(CLI::IsMember({"epoch", "step"}));
  sub->add_option("--dropout", ta.cfg.dropout_p, "Dropout probability after each CReLU")->capture_default_str();
  sub->add_option("--batch-size", ta.cfg.batch_size, "Minibatch size")->capture_default_str();
  sub->add_option("--optimizer", ta.optimizer, "adam or sgd")
      ->capture_default_str()
      ->check(CLI::IsMember({"adam", "sgd"}));
  sub->add_option("--smooth-sigma", ta.cfg.smoothing.sigma, "Gaussian smoothing of training tracks [frames]")
      ->capture_default_str();
  sub->add_option("--loss-trace", ta.loss_trace, "Loss trace CSV (default: <output stem>.loss.csv)");
  sub->add_flag("-q,--quiet", ta.quiet, "No per-epoch progress");
  sub->footer(
      "Model JSON: {\"version\":1, \"arch\":{\"T\",\"hidden\":[70,70,70,70],\"activation\":\"crelu\"},\n"
      "\"feature_norm\":{\"mean\",\"std\"}, \"weights\":[{\"rows\",\"cols\",\"W\" row-major,\"b\"},...],\n"
      "\"train_config\":{...}, \"checksum\"}. Loss trace CSV columns: epoch,lr,loss.");
  sub->callback([&] { action = [&] { return cmd_train(ta, out, err); }; });

  PredictArgs pa;
  sub = app.add_subcommand("predict", "Predict velocities with a trained model");
  sub->add_option("-m,--model", pa.model, "Model JSON")->required();
  sub->add_option("tracks,--tracks", pa.tracks, "Track JSONL")->required();
  sub->add_option("-o,--output", pa.output, "Output prediction JSONL")->required();
  sub->add_option("--smooth-sigma", pa.smooth_sigma,
                  "Gaussian smoothing before the MLP [frames] (default: the model's training setting)");
  sub->footer("Prediction JSONL: {\"id\", \"velocity\": [Vx, Vz]} per line. Bad records are reported and skipped.");
  sub->callback([&] { action = [&] { return cmd_predict(pa, out, err); }; });

  BaselineArgs ba;
  sub = app.add_subcommand("baseline", "Geometric back-projection velocity baseline");
  sub->add_option("-c,--camera", ba.camera, "Camera JSON");
  sub->add_option("tracks,--tracks", ba.tracks, "Track JSONL")->required();
  sub->add_option("-o,--output", ba.output, "Output prediction JSONL")->required();
  sub->add_option("--window", ba.window, "Least-squares window in frames (0 = whole track)")->capture_default_str();
  sub->add_option("--smooth-sigma", ba.smooth_sigma, "Gaussian smoothing before back-projection [frames]")
      ->capture_default_str();
  sub->footer("Prediction JSONL: {\"id\", \"velocity\": [Vx, Vz]} per line. Bad records are reported and skipped.");
  sub->callback([&] { action = [&] { return cmd_baseline(ba, out, err); }; });

  EvalArgs ea;
  sub = app.add_subcommand("eval", "Distance-bucketed velocity error E_v");
  sub->add_option("preds,--preds", ea.preds, "Prediction JSONL")->required();
  sub->add_option("truth,--truth", ea.truth, "Labeled track JSONL")->required();
  sub->add_option("-o,--output", ea.output, "Report JSON");
  sub->add_option("--csv", ea.csv, "Report CSV");
  sub->add_option("--name", ea.name, "Method name in the report")->capture_default_str();
  sub->add_option("--near", ea.near_max, "Near/medium boundary [m]")->capture_default_str();
  sub->add_option("--far", ea.far_min, "Medium/far boundary [m]")->capture_default_str();
  sub->add_option("--distance", ea.distance, "euclidean (label) or longitudinal (position Z)")
      ->capture_default_str()
      ->check(CLI::IsMember({"euclidean", "longitudinal"}));
  sub->footer(
      "E_v per bucket is the mean of ||V - V_hat||^2 [m^2/s^2]; overall is the plain mean of the three\n"
      "buckets. d < near -> near, near <= d < far -> medium, d >= far -> far. RMS = sqrt(E_v).\n"
      "CSV columns: method,E_v,E_v_near,E_v_medium,E_v_far,n_near,n_medium,n_far.");
  sub->callback([&] { action = [&] { return cmd_eval(ea, out, err); }; });

  ExportArgs xa;
  sub = app.add_subcommand("export-stats", "Export per-box statistics and velocity histograms as CSV");
  sub->add_option("data,--data", xa.data, "Labeled track JSONL")->required();
  sub->add_option("-c,--camera", xa.camera, "Camera JSON");
  sub->add_option("-o,--output", xa.output, "Box statistics CSV")->required();
  sub->add_option("--hist-output", xa.hist_output, "Histogram CSV (default: <output stem>_velocity_hist.csv)");
  sub->add_flag("--all-frames", xa.all_frames, "One row per frame instead of the last frame only");
  sub->add_option("--bins", xa.bins, "Histogram bins")->capture_default_str();
  sub->add_option("--vel-range", xa.vel_range, "Histogram range +/- [m/s]")->capture_default_str();
  sub->footer(
      "Box CSV columns: id,frame,x,y,w,h,X,Z,h_m,w_m,vx,vz (X, Z back-projected; h_m = h Z / f,\n"
      "w_m = w Z / f). Histogram CSV columns: component,bin_lo,bin_hi,count.");
  sub->callback([&] { action = [&] { return cmd_export_stats(xa, out, err); }; });

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace bbvel::cli
