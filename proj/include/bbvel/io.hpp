#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bbvel/geometry.hpp"
#include "bbvel/mlp.hpp"
#include "bbvel/priors.hpp"
#include "bbvel/sample.hpp"

namespace bbvel {

using json = nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Whole-file helpers; failures raise IoError naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Camera: {"f", "H", "img_w", "img_h"}.
json camera_to_json(const Camera& cam);
Camera camera_from_json(const json& j);
Camera load_camera(const std::filesystem::path& path);
void save_camera(const Camera& cam, const std::filesystem::path& path);

// Prior model, format version 1.
json prior_to_json(const PriorModel& pm);
PriorModel prior_from_json(const json& j);
PriorModel load_prior(const std::filesystem::path& path);
void save_prior(const PriorModel& pm, const std::filesystem::path& path);

json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

// One line of a track JSONL stream:
// {"id", "fps", "boxes": [[x,y,w,h],...], "velocity"?: [vx,vz], "distance"?: d,
//  "position"?: [X,Z]}.
struct TrackRecord {
  std::string id;
  Track track;
  std::optional<Velocity2D> velocity;
  std::optional<double> distance;
  std::optional<GroundPoint> position;
};

json record_to_json(const TrackRecord& r);
TrackRecord record_from_json(const json& j);
TrackRecord to_record(const LabeledSample& s);
// Requires velocity and distance labels.
LabeledSample to_labeled(const TrackRecord& r);

// Parses a JSONL stream strictly; the first bad line raises FormatError
// citing its 1-based line number. Blank lines are ignored.
std::vector<TrackRecord> read_track_records(const std::filesystem::path& path);
std::vector<LabeledSample> read_labeled_samples(const std::filesystem::path& path);

// Per-line result of a lenient parse.
struct RecordResult {
  std::size_t line = 0;
  std::optional<TrackRecord> record;
  std::string error;
};
std::vector<RecordResult> read_track_records_lenient(const std::filesystem::path& path);

std::string to_jsonl(std::span<const LabeledSample> samples);

// {"id", "velocity": [vx, vz]}.
struct Prediction {
  std::string id;
  Velocity2D velocity;
};
std::string to_jsonl(std::span<const Prediction> preds);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace bbvel
