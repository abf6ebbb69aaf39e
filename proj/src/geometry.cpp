#include "bbvel/geometry.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "bbvel/errors.hpp"

namespace bbvel {

void Camera::validate() const {
  if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError("camera focal length must be > 0");
  if (!(H > 0.0) || !std::isfinite(H)) throw ValidationError("camera height must be > 0");
  if (img_w <= 0 || img_h <= 0) throw ValidationError("camera image size must be > 0");
}

ImagePoint project(const Camera& cam, GroundPoint p) {
  if (!(p.Z > 0.0)) throw DomainError("point not in front of camera");
  return {cam.f * p.X / p.Z, cam.f * cam.H / p.Z};
}

GroundPoint back_project(const Camera& cam, ImagePoint ip) {
  if (!(ip.v > 0.0)) throw DomainError("point at or above horizon");
  return {cam.H * ip.u / ip.v, cam.f * cam.H / ip.v};
}

ImagePoint bbox_reference_point(const Camera& cam, const BBox& box) {
  validate(box);
  return {box.x + 0.5 * box.w - cam.cx(), box.y + box.h - cam.cy()};
}

Velocity2D geometric_velocity(const Camera& cam, const Track& track, std::size_t window) {
  if (track.frames() < 2) throw ValidationError("track needs at least 2 frames");
  if (!(track.fps > 0.0)) throw ValidationError("track fps must be > 0");
  const std::size_t n = (window == 0 || window > track.frames()) ? track.frames() : window;
  if (n < 2) throw ValidationError("velocity window needs at least 2 frames");
  const std::size_t first = track.frames() - n;

  // Centered times make the slope a plain ratio of sums.
  const double t_mean = 0.5 * static_cast<double>(n - 1) / track.fps;
  std::vector<GroundPoint> points(n);
  double x_mean = 0.0;
  double z_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const BBox& box = track.boxes[first + i];
    const ImagePoint ip = bbox_reference_point(cam, box);
    if (!(ip.v > 0.0)) {
      throw DomainError("frame " + std::to_string(first + i) + ": point at or above horizon");
    }
    points[i] = back_project(cam, ip);
    x_mean += points[i].X;
    z_mean += points[i].Z;
  }
  x_mean /= static_cast<double>(n);
  z_mean /= static_cast<double>(n);

  double sxx = 0.0;
  double sx = 0.0;
  double sz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) / track.fps - t_mean;
    sxx += dt * dt;
    sx += dt * (points[i].X - x_mean);
    sz += dt * (points[i].Z - z_mean);
  }
  return {sx / sxx, sz / sxx};
}

}  // namespace bbvel
