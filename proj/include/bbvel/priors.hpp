#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bbvel/geometry.hpp"
#include "bbvel/sample.hpp"

namespace bbvel {

// Least-squares polynomial fit via the normal equations. Coefficients are
// returned highest power first, so {2, 3, 1} means 2x^2 + 3x + 1.
std::vector<double> polyfit(std::span<const double> xs, std::span<const double> ys, int degree);
double polyval(std::span<const double> coeffs, double x);

// Symmetric 2x2 covariance [[xx, xz], [xz, zz]].
struct Cov2 {
  double xx = 0.0;
  double xz = 0.0;
  double zz = 0.0;
};

struct VelocityGaussian {
  Velocity2D mean;
  Cov2 cov;
};

// Sample mean and unbiased sample covariance; needs at least two samples.
VelocityGaussian fit_gaussian(std::span<const Velocity2D> vels);

struct LocationBounds {
  double x_min = -9.0;
  double x_max = 9.0;
  double z_min = 5.0;
  double z_max = 100.0;

  void validate() const;
  bool contains(GroundPoint p) const noexcept {
    return p.X >= x_min && p.X <= x_max && p.Z >= z_min && p.Z <= z_max;
  }
};

// Physical vehicle size bands [m].
struct SizeBounds {
  double h_min = 1.3;
  double h_max = 2.5;
  double w_min = 1.5;
  double w_max = 3.0;
};

// Variable the size polynomials are expressed in: 1/Z or Z.
enum class SizeBasis { InvZ, Z };

struct PriorModel {
  std::vector<GroundPoint> seed_points;
  SizeBasis basis = SizeBasis::InvZ;
  std::vector<double> h_poly;
  std::vector<double> w_poly;
  Velocity2D vel_mean;
  Cov2 vel_cov;
  LocationBounds bounds;
  SizeBounds size_bounds;

  double height_px(double z) const;
  double width_px(double z) const;
  void validate() const;
};

// Depths in the supported range where the size polynomials leave the
// physical bands, one message per offending quantity; empty when consistent.
std::vector<std::string> check_size_bands(const PriorModel& pm, const Camera& cam);

// A plausible motorway prior used when no annotations are available.
PriorModel default_prior_model(const Camera& cam);

// Gaussian jitter applied to a drawn seed point [m]; zero disables it.
struct JitterConfig {
  double lateral = 0.5;
  double longitudinal = 2.0;
};

struct Scenario {
  GroundPoint start;
  Velocity2D velocity;
  double height_m = 0.0;
  double width_m = 0.0;
};

// Seed point (uniform over the empirical list, jittered, kept inside the
// bounds), velocity from the Gaussian, and physical size from the size
// polynomials at the seed depth clamped to the size bands.
Scenario sample_scenario(const Camera& cam, const PriorModel& pm, std::uint64_t seed,
                         const JitterConfig& jitter = {});

enum class DepthSource { BackProjected, Label };

struct PriorFitOptions {
  SizeBasis basis = SizeBasis::InvZ;
  // Negative selects 1 for InvZ and 2 for Z.
  int degree = -1;
  DepthSource depth_source = DepthSource::BackProjected;
  LocationBounds bounds;
  SizeBounds size_bounds;
};

struct PriorFitResult {
  PriorModel model;
  std::size_t seeds_out_of_bounds = 0;
  std::vector<std::string> warnings;
};

PriorFitResult fit_priors(std::span<const LabeledSample> samples, const Camera& cam,
                          const PriorFitOptions& options = {});

}  // namespace bbvel
