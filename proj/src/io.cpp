#include "bbvel/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bbvel/errors.hpp"

namespace bbvel {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

json parse_json_file(const std::filesystem::path& path, const char* what) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + " file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

double number_at(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw FormatError(std::string("missing or non-numeric field '") + key + "'");
  }
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw FormatError(std::string("field '") + key + "' is not finite");
  return v;
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw FormatError(std::string(what) + " must be numeric");
  return j.get<double>();
}

std::pair<double, double> pair_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw FormatError(std::string(what) + " must be a 2-element array");
  return {number(j[0], what), number(j[1], what)};
}

const char* basis_name(SizeBasis b) { return b == SizeBasis::InvZ ? "inv_z" : "z"; }

}  // namespace

json camera_to_json(const Camera& cam) {
  return {{"f", cam.f}, {"H", cam.H}, {"img_w", cam.img_w}, {"img_h", cam.img_h}};
}

Camera camera_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("camera must be a JSON object");
  Camera cam;
  cam.f = number_at(j, "f");
  cam.H = number_at(j, "H");
  cam.img_w = static_cast<int>(number_at(j, "img_w"));
  cam.img_h = static_cast<int>(number_at(j, "img_h"));
  try {
    cam.validate();
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  return cam;
}

Camera load_camera(const std::filesystem::path& path) {
  try {
    return camera_from_json(parse_json_file(path, "camera"));
  } catch (const FormatError& e) {
    throw FormatError("camera file '" + path.string() + "': " + e.what());
  }
}

void save_camera(const Camera& cam, const std::filesystem::path& path) {
  write_file(path, camera_to_json(cam).dump(2) + "\n");
}

json prior_to_json(const PriorModel& pm) {
  json seeds = json::array();
  for (const GroundPoint& p : pm.seed_points) seeds.push_back({p.X, p.Z});
  return {{"version", 1},
          {"seed_points", std::move(seeds)},
          {"h_poly", pm.h_poly},
          {"w_poly", pm.w_poly},
          {"basis", basis_name(pm.basis)},
          {"vel_mean", {pm.vel_mean.vx, pm.vel_mean.vz}},
          {"vel_cov", {{pm.vel_cov.xx, pm.vel_cov.xz}, {pm.vel_cov.xz, pm.vel_cov.zz}}},
          {"bounds",
           {{"x_min", pm.bounds.x_min},
            {"x_max", pm.bounds.x_max},
            {"z_min", pm.bounds.z_min},
            {"z_max", pm.bounds.z_max}}},
          {"size_bounds",
           {{"h_min", pm.size_bounds.h_min},
            {"h_max", pm.size_bounds.h_max},
            {"w_min", pm.size_bounds.w_min},
            {"w_max", pm.size_bounds.w_max}}}};
}

PriorModel prior_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("prior model must be a JSON object");
  if (!j.contains("version") || j["version"] != 1) throw FormatError("unsupported prior model version");
  PriorModel pm;
  try {
    for (const json& p : j.at("seed_points")) {
      const auto [x, z] = pair_of(p, "seed point");
      pm.seed_points.push_back({x, z});
    }
    pm.h_poly = j.at("h_poly").get<std::vector<double>>();
    pm.w_poly = j.at("w_poly").get<std::vector<double>>();
    const std::string basis = j.at("basis").get<std::string>();
    if (basis == "inv_z") {
      pm.basis = SizeBasis::InvZ;
    } else if (basis == "z") {
      pm.basis = SizeBasis::Z;
    } else {
      throw FormatError("unknown size basis '" + basis + "'");
    }
    const auto [mx, mz] = pair_of(j.at("vel_mean"), "vel_mean");
    pm.vel_mean = {mx, mz};
    const json& cov = j.at("vel_cov");
    const auto [c00, c01] = pair_of(cov.at(0), "vel_cov row");
    const auto [c10, c11] = pair_of(cov.at(1), "vel_cov row");
    if (std::abs(c01 - c10) > 1e-12 * std::max(1.0, std::abs(c01))) {
      throw FormatError("vel_cov is not symmetric");
    }
    pm.vel_cov = {c00, c01, c11};
    if (j.contains("bounds")) {
      const json& b = j.at("bounds");
      pm.bounds = {number_at(b, "x_min"), number_at(b, "x_max"), number_at(b, "z_min"), number_at(b, "z_max")};
    }
    if (j.contains("size_bounds")) {
      const json& b = j.at("size_bounds");
      pm.size_bounds = {number_at(b, "h_min"), number_at(b, "h_max"), number_at(b, "w_min"), number_at(b, "w_max")};
    }
    pm.validate();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed prior model: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("invalid prior model: ") + e.what());
  }
  return pm;
}

PriorModel load_prior(const std::filesystem::path& path) {
  try {
    return prior_from_json(parse_json_file(path, "prior"));
  } catch (const FormatError& e) {
    throw FormatError("prior file '" + path.string() + "': " + e.what());
  }
}

void save_prior(const PriorModel& pm, const std::filesystem::path& path) {
  write_file(path, prior_to_json(pm).dump(1) + "\n");
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"lr0", cfg.lr0},
          {"decay", cfg.decay},
          {"decay_schedule", cfg.schedule == DecaySchedule::PerEpoch ? "epoch" : "step"},
          {"dropout", cfg.dropout_p},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"optimizer", cfg.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"smoothing_sigma", cfg.smoothing.sigma},
          {"smoothing_radius", cfg.smoothing.radius}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.epochs = j.at("epochs").get<int>();
  cfg.lr0 = j.at("lr0").get<double>();
  cfg.decay = j.at("decay").get<double>();
  cfg.schedule = j.at("decay_schedule").get<std::string>() == "step" ? DecaySchedule::PerStep : DecaySchedule::PerEpoch;
  cfg.dropout_p = j.at("dropout").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.eps = j.at("eps").get<double>();
  cfg.smoothing.sigma = j.at("smoothing_sigma").get<double>();
  cfg.smoothing.radius = j.at("smoothing_radius").get<int>();
  return cfg;
}

json record_to_json(const TrackRecord& r) {
  json boxes = json::array();
  for (const BBox& b : r.track.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  json j = {{"id", r.id}, {"fps", r.track.fps}, {"boxes", std::move(boxes)}};
  if (r.velocity) j["velocity"] = {r.velocity->vx, r.velocity->vz};
  if (r.distance) j["distance"] = *r.distance;
  if (r.position) j["position"] = {r.position->X, r.position->Z};
  return j;
}

TrackRecord record_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("record is not a JSON object");
  TrackRecord r;
  if (j.contains("id")) {
    r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  }
  r.track.fps = j.contains("fps") ? number_at(j, "fps") : Track::kDefaultFps;
  if (!j.contains("boxes")) throw FormatError("record has no \"boxes\" field");
  const json& boxes = j["boxes"];
  if (!boxes.is_array()) throw FormatError("\"boxes\" must be an array");
  for (const json& b : boxes) {
    if (!b.is_array() || b.size() != 4) throw FormatError("each box must be [x, y, w, h]");
    r.track.boxes.push_back({number(b[0], "box"), number(b[1], "box"), number(b[2], "box"), number(b[3], "box")});
  }
  try {
    validate(r.track);
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  if (j.contains("velocity")) {
    const auto [vx, vz] = pair_of(j["velocity"], "\"velocity\"");
    r.velocity = Velocity2D{vx, vz};
  }
  if (j.contains("distance")) r.distance = number_at(j, "distance");
  if (j.contains("position")) {
    const auto [x, z] = pair_of(j["position"], "\"position\"");
    r.position = GroundPoint{x, z};
  }
  return r;
}

TrackRecord to_record(const LabeledSample& s) {
  return {s.id, s.track, s.velocity, s.distance, s.position};
}

LabeledSample to_labeled(const TrackRecord& r) {
  if (!r.velocity) throw FormatError("record '" + r.id + "' has no \"velocity\" label");
  if (!r.distance) throw FormatError("record '" + r.id + "' has no \"distance\" label");
  return {r.id, r.track, *r.velocity, *r.distance, r.position};
}

namespace {

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line_no, line);
  }
}

}  // namespace

std::vector<TrackRecord> read_track_records(const std::filesystem::path& path) {
  std::vector<TrackRecord> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

std::vector<LabeledSample> read_labeled_samples(const std::filesystem::path& path) {
  std::vector<LabeledSample> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    try {
      TrackRecord r = record_from_json(json::parse(line));
      if (r.id.empty()) r.id = "line-" + std::to_string(line_no);
      out.push_back(to_labeled(r));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

std::vector<RecordResult> read_track_records_lenient(const std::filesystem::path& path) {
  std::vector<RecordResult> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    RecordResult r;
    r.line = line_no;
    try {
      r.record = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      r.error = std::string("malformed JSON: ") + e.what();
    } catch (const FormatError& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::string to_jsonl(std::span<const LabeledSample> samples) {
  std::string out;
  for (const LabeledSample& s : samples) {
    out += record_to_json(to_record(s)).dump();
    out += '\n';
  }
  return out;
}

std::string to_jsonl(std::span<const Prediction> preds) {
  std::string out;
  for (const Prediction& p : preds) {
    out += json{{"id", p.id}, {"velocity", {p.velocity.vx, p.velocity.vz}}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    try {
      const json j = json::parse(line);
      if (!j.is_object() || !j.contains("id") || !j.contains("velocity")) {
        throw FormatError("prediction needs \"id\" and \"velocity\"");
      }
      const auto [vx, vz] = pair_of(j["velocity"], "\"velocity\"");
      out.push_back({j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump(), {vx, vz}});
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace bbvel
