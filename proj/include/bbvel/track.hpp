#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bbvel {

// Axis-aligned image box, top-left corner plus size, in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const BBox&) const = default;
};

// Box trajectory b = (b_1, ..., b_T) sampled at a fixed frame rate.
struct Track {
  static constexpr std::size_t kDefaultFrames = 40;
  static constexpr double kDefaultFps = 20.0;

  std::vector<BBox> boxes;
  double fps = kDefaultFps;

  std::size_t frames() const noexcept { return boxes.size(); }
  bool operator==(const Track&) const = default;
};

void validate(const BBox& box);
void validate(const Track& track);

struct SmoothingConfig {
  double sigma = 0.0;
  // Kernel half-width in frames; negative selects ceil(3 sigma).
  int radius = -1;

  int effective_radius() const;
  void validate() const;
};

// Truncated Gaussian weights of length 2r+1, normalized to sum to one.
std::vector<double> gaussian_kernel(const SmoothingConfig& cfg);

// Convolves each of x, y, w, h independently with the truncated Gaussian.
// Out-of-range taps read the nearest end sample (replicate padding).
Track gaussian_smooth(const Track& track, const SmoothingConfig& cfg);

using FeatureVector = std::vector<double>;

// Per-feature standardization statistics, x -> (x - mean) / std.
struct FeatureNorm {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const noexcept { return mean.size(); }
  static FeatureNorm identity(std::size_t n);
  // Population statistics over the rows; std floored at kStdFloor.
  static FeatureNorm fit(std::span<const FeatureVector> rows);
};

// Frame-major flatten: (x1, y1, w1, h1, x2, ...).
FeatureVector flatten(const Track& track);
Track unflatten(std::span<const double> values, double fps = Track::kDefaultFps);

// flatten followed by standardization with `norm`; the norm length fixes 4T.
FeatureVector featurize(const Track& track, const FeatureNorm& norm);

struct NoiseConfig {
  double sigma_xy = 2.0;
  double sigma_wh = 1.0;
  // Linear drift added to w and h, in pixels per frame.
  double drift_w = 0.0;
  double drift_h = 0.0;

  static NoiseConfig none() { return {0.0, 0.0, 0.0, 0.0}; }
};

// Simulated tracker imperfection: i.i.d. Gaussian pixel noise per coordinate
// plus optional size drift; w and h are clamped to at least one pixel.
Track add_tracker_noise(const Track& track, const NoiseConfig& noise, std::uint64_t seed);

}  // namespace bbvel
