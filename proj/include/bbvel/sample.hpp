#pragma once

#include <optional>
#include <string>

#include "bbvel/geometry.hpp"
#include "bbvel/track.hpp"

namespace bbvel {

enum class DistanceConvention { Euclidean, Longitudinal };

double distance_of(GroundPoint p, DistanceConvention convention);

// A track with its ground truth stated at the final frame.
struct LabeledSample {
  std::string id;
  Track track;
  Velocity2D velocity;
  double distance = 0.0;
  // Ground point at the final frame, when known (always set for synthetic data).
  std::optional<GroundPoint> position;
};

}  // namespace bbvel
