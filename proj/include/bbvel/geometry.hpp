#pragma once

#include <cstddef>

#include "bbvel/track.hpp"

namespace bbvel {

// Forward-looking pinhole camera at height H above a flat road. Image
// coordinates are measured from the principal point, which sits at the
// image center: u grows to the right, v grows downward. Ground coordinates:
// X to the right, Z forward.
struct Camera {
  double f = 1000.0;  // focal length [px]
  double H = 1.5;     // mounting height [m]
  int img_w = 1280;
  int img_h = 720;

  void validate() const;
  double cx() const noexcept { return 0.5 * img_w; }
  double cy() const noexcept { return 0.5 * img_h; }

  bool operator==(const Camera&) const = default;
};

struct GroundPoint {
  double X = 0.0;
  double Z = 0.0;
};

struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
};

// Ground-plane velocity relative to the ego-vehicle [m/s].
struct Velocity2D {
  double vx = 0.0;
  double vz = 0.0;

  bool operator==(const Velocity2D&) const = default;
};

// (f X / Z, f H / Z). Throws DomainError for Z <= 0.
ImagePoint project(const Camera& cam, GroundPoint p);

// (H u / v, f H / v). Throws DomainError for v <= 0.
GroundPoint back_project(const Camera& cam, ImagePoint ip);

// Bottom-center of the box in principal-point-relative coordinates.
ImagePoint bbox_reference_point(const Camera& cam, const BBox& box);

// Back-projects every frame and returns the least-squares slopes of X(t) and
// Z(t) over the last `window` frames (0 = whole track).
Velocity2D geometric_velocity(const Camera& cam, const Track& track, std::size_t window = 0);

}  // namespace bbvel
