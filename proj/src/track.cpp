#include "bbvel/track.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bbvel/errors.hpp"
#include "bbvel/random.hpp"

namespace bbvel {

void validate(const BBox& box) {
  if (!std::isfinite(box.x) || !std::isfinite(box.y) || !std::isfinite(box.w) ||
      !std::isfinite(box.h)) {
    throw ValidationError("bounding box has non-finite coordinates");
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw ValidationError("degenerate bounding box (w and h must be > 0)");
  }
}

void validate(const Track& track) {
  if (track.frames() < 2) throw ValidationError("track needs at least 2 frames");
  if (!(track.fps > 0.0) || !std::isfinite(track.fps)) {
    throw ValidationError("track fps must be > 0");
  }
  for (std::size_t t = 0; t < track.frames(); ++t) {
    try {
      validate(track.boxes[t]);
    } catch (const ValidationError& e) {
      throw ValidationError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
}

int SmoothingConfig::effective_radius() const {
  return radius >= 0 ? radius : static_cast<int>(std::ceil(3.0 * sigma));
}

void SmoothingConfig::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("smoothing sigma must be >= 0");
  if (effective_radius() < static_cast<int>(std::ceil(3.0 * sigma))) {
    throw ValidationError("smoothing radius must be >= ceil(3 sigma)");
  }
}

std::vector<double> gaussian_kernel(const SmoothingConfig& cfg) {
  cfg.validate();
  if (cfg.sigma == 0.0) return {1.0};
  const int r = cfg.effective_radius();
  std::vector<double> weights(2 * r + 1);
  double total = 0.0;
  for (int k = -r; k <= r; ++k) {
    const double w = std::exp(-0.5 * (k * k) / (cfg.sigma * cfg.sigma));
    weights[k + r] = w;
    total += w;
  }
  for (double& w : weights) w /= total;
  return weights;
}

Track gaussian_smooth(const Track& track, const SmoothingConfig& cfg) {
  validate(track);
  if (cfg.sigma == 0.0) {
    cfg.validate();
    return track;
  }
  const std::vector<double> kernel = gaussian_kernel(cfg);
  const int r = static_cast<int>(kernel.size() / 2);
  const int n = static_cast<int>(track.frames());

  Track out{std::vector<BBox>(track.frames()), track.fps};
  for (int t = 0; t < n; ++t) {
    BBox acc{};
    for (int k = -r; k <= r; ++k) {
      const BBox& src = track.boxes[std::clamp(t + k, 0, n - 1)];
      const double w = kernel[k + r];
      acc.x += w * src.x;
      acc.y += w * src.y;
      acc.w += w * src.w;
      acc.h += w * src.h;
    }
    out.boxes[t] = acc;
  }
  return out;
}

FeatureNorm FeatureNorm::identity(std::size_t n) {
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

FeatureNorm FeatureNorm::fit(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw ValidationError("cannot fit feature normalization on zero rows");
  const std::size_t n = rows.front().size();
  FeatureNorm norm{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (const FeatureVector& row : rows) {
    if (row.size() != n) throw ValidationError("feature rows have inconsistent lengths");
    for (std::size_t j = 0; j < n; ++j) norm.mean[j] += row[j];
  }
  const double count = static_cast<double>(rows.size());
  for (double& m : norm.mean) m /= count;
  for (const FeatureVector& row : rows) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - norm.mean[j];
      norm.std[j] += d * d;
    }
  }
  for (double& s : norm.std) s = std::max(std::sqrt(s / count), kStdFloor);
  return norm;
}

FeatureVector flatten(const Track& track) {
  FeatureVector values;
  values.reserve(4 * track.frames());
  for (const BBox& b : track.boxes) {
    values.push_back(b.x);
    values.push_back(b.y);
    values.push_back(b.w);
    values.push_back(b.h);
  }
  return values;
}

Track unflatten(std::span<const double> values, double fps) {
  if (values.size() % 4 != 0) throw ValidationError("feature length must be a multiple of 4");
  Track track{std::vector<BBox>(values.size() / 4), fps};
  for (std::size_t t = 0; t < track.frames(); ++t) {
    track.boxes[t] = {values[4 * t], values[4 * t + 1], values[4 * t + 2], values[4 * t + 3]};
  }
  return track;
}

FeatureVector featurize(const Track& track, const FeatureNorm& norm) {
  if (4 * track.frames() != norm.size()) {
    throw ValidationError("track has " + std::to_string(track.frames()) + " frames, expected " +
                          std::to_string(norm.size() / 4));
  }
  FeatureVector values = flatten(track);
  for (std::size_t j = 0; j < values.size(); ++j) {
    values[j] = (values[j] - norm.mean[j]) / norm.std[j];
  }
  return values;
}

Track add_tracker_noise(const Track& track, const NoiseConfig& noise, std::uint64_t seed) {
  Rng rng(seed);
  Track out = track;
  for (std::size_t t = 0; t < out.frames(); ++t) {
    BBox& b = out.boxes[t];
    // Draw all four coordinates every frame so the stream layout does not
    // depend on which sigmas are zero.
    const double nx = rng.normal();
    const double ny = rng.normal();
    const double nw = rng.normal();
    const double nh = rng.normal();
    const double ft = static_cast<double>(t);
    b.x += noise.sigma_xy * nx;
    b.y += noise.sigma_xy * ny;
    b.w = std::max(1.0, b.w + noise.sigma_wh * nw + noise.drift_w * ft);
    b.h = std::max(1.0, b.h + noise.sigma_wh * nh + noise.drift_h * ft);
  }
  return out;
}

}  // namespace bbvel
