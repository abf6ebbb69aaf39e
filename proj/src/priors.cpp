#include "bbvel/priors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "bbvel/errors.hpp"
#include "bbvel/random.hpp"

namespace bbvel {

std::vector<double> polyfit(std::span<const double> xs, std::span<const double> ys, int degree) {
  if (degree < 0) throw FitError("polynomial degree must be >= 0");
  if (xs.size() != ys.size()) throw FitError("polyfit: xs and ys differ in length");
  const std::set<double> distinct(xs.begin(), xs.end());
  const std::size_t m = static_cast<std::size_t>(degree) + 1;
  if (distinct.size() < m) {
    throw FitError("polyfit: rank-deficient design (" + std::to_string(distinct.size()) +
                   " distinct x values for degree " + std::to_string(degree) + ")");
  }

  // Work on x / scale so the Gram matrix stays well conditioned, then undo it.
  double scale = 0.0;
  for (double x : xs) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) scale = 1.0;

  // Gram matrix indexed by ascending power.
  std::vector<double> gram(m * m, 0.0);
  std::vector<double> rhs(m, 0.0);
  std::vector<double> powers(2 * m - 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i] / scale;
    powers[0] = 1.0;
    for (std::size_t k = 1; k < powers.size(); ++k) powers[k] = powers[k - 1] * x;
    for (std::size_t r = 0; r < m; ++r) {
      rhs[r] += powers[r] * ys[i];
      for (std::size_t c = 0; c < m; ++c) gram[r * m + c] += powers[r + c];
    }
  }

  double diag_max = 0.0;
  for (std::size_t r = 0; r < m; ++r) diag_max = std::max(diag_max, std::abs(gram[r * m + r]));

  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(gram[r * m + col]) > std::abs(gram[pivot * m + col])) pivot = r;
    }
    if (std::abs(gram[pivot * m + col]) <= 1e-13 * diag_max) {
      throw FitError("polyfit: rank-deficient design matrix");
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < m; ++c) std::swap(gram[col * m + c], gram[pivot * m + c]);
      std::swap(rhs[col], rhs[pivot]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      const double factor = gram[r * m + col] / gram[col * m + col];
      for (std::size_t c = col; c < m; ++c) gram[r * m + c] -= factor * gram[col * m + c];
      rhs[r] -= factor * rhs[col];
    }
  }
  std::vector<double> ascending(m);
  for (std::size_t r = m; r-- > 0;) {
    double acc = rhs[r];
    for (std::size_t c = r + 1; c < m; ++c) acc -= gram[r * m + c] * ascending[c];
    ascending[r] = acc / gram[r * m + r];
  }

  std::vector<double> coeffs(m);
  for (std::size_t k = 0; k < m; ++k) {
    coeffs[m - 1 - k] = ascending[k] / std::pow(scale, static_cast<double>(k));
  }
  return coeffs;
}

double polyval(std::span<const double> coeffs, double x) {
  double acc = 0.0;
  for (double c : coeffs) acc = acc * x + c;
  return acc;
}

VelocityGaussian fit_gaussian(std::span<const Velocity2D> vels) {
  if (vels.size() < 2) throw FitError("velocity Gaussian needs at least 2 samples");
  const double n = static_cast<double>(vels.size());
  VelocityGaussian g;
  for (const Velocity2D& v : vels) {
    g.mean.vx += v.vx;
    g.mean.vz += v.vz;
  }
  g.mean.vx /= n;
  g.mean.vz /= n;
  for (const Velocity2D& v : vels) {
    const double dx = v.vx - g.mean.vx;
    const double dz = v.vz - g.mean.vz;
    g.cov.xx += dx * dx;
    g.cov.xz += dx * dz;
    g.cov.zz += dz * dz;
  }
  g.cov.xx /= n - 1.0;
  g.cov.xz /= n - 1.0;
  g.cov.zz /= n - 1.0;
  return g;
}

void LocationBounds::validate() const {
  if (!(x_min < x_max) || !(z_min < z_max)) throw ValidationError("location bounds need min < max");
  if (!(z_min > 0.0)) throw ValidationError("location bounds need z_min > 0");
}

namespace {

double basis_value(SizeBasis basis, double z) { return basis == SizeBasis::InvZ ? 1.0 / z : z; }

}  // namespace

double PriorModel::height_px(double z) const { return polyval(h_poly, basis_value(basis, z)); }
double PriorModel::width_px(double z) const { return polyval(w_poly, basis_value(basis, z)); }

void PriorModel::validate() const {
  if (seed_points.empty()) throw ValidationError("prior model has no seed points");
  if (h_poly.empty() || w_poly.empty()) throw ValidationError("prior model lacks size polynomials");
  bounds.validate();
  const double det = vel_cov.xx * vel_cov.zz - vel_cov.xz * vel_cov.xz;
  const double tol = 1e-12 * std::max(1.0, std::abs(vel_cov.xx) + std::abs(vel_cov.zz));
  if (vel_cov.xx < 0.0 || vel_cov.zz < 0.0 || det < -tol) {
    throw ValidationError("velocity covariance is not positive semi-definite");
  }
  for (const GroundPoint& p : seed_points) {
    if (!std::isfinite(p.X) || !std::isfinite(p.Z) || !(p.Z > 0.0)) {
      throw ValidationError("seed point has invalid coordinates");
    }
  }
}

std::vector<std::string> check_size_bands(const PriorModel& pm, const Camera& cam) {
  std::vector<std::string> problems;
  constexpr int kSteps = 200;
  double worst_h_lo = 0.0;
  double worst_h_hi = 0.0;
  double worst_w_lo = 0.0;
  double worst_w_hi = 0.0;
  for (int i = 0; i <= kSteps; ++i) {
    const double z = pm.bounds.z_min + (pm.bounds.z_max - pm.bounds.z_min) * i / kSteps;
    const double h_m = pm.height_px(z) * z / cam.f;
    const double w_m = pm.width_px(z) * z / cam.f;
    if (h_m < pm.size_bounds.h_min && worst_h_lo == 0.0) worst_h_lo = z;
    if (h_m > pm.size_bounds.h_max && worst_h_hi == 0.0) worst_h_hi = z;
    if (w_m < pm.size_bounds.w_min && worst_w_lo == 0.0) worst_w_lo = z;
    if (w_m > pm.size_bounds.w_max && worst_w_hi == 0.0) worst_w_hi = z;
  }
  auto note = [&problems](double z, const char* what) {
    if (z == 0.0) return;
    std::ostringstream os;
    os << what << " starting at Z=" << z << " m";
    problems.push_back(os.str());
  };
  note(worst_h_lo, "height polynomial below the physical band");
  note(worst_h_hi, "height polynomial above the physical band");
  note(worst_w_lo, "width polynomial below the physical band");
  note(worst_w_hi, "width polynomial above the physical band");
  return problems;
}

PriorModel default_prior_model(const Camera& cam) {
  PriorModel pm;
  pm.basis = SizeBasis::InvZ;
  pm.h_poly = {cam.f * 1.6, 0.0};
  pm.w_poly = {cam.f * 1.9, 0.0};
  pm.vel_mean = {0.0, -0.3};
  pm.vel_cov = {0.6, 0.1, 9.0};

  // Lane-structured seeds biased towards the ego lane, with a depth mix close
  // to the near/medium/far proportions of motorway annotations.
  constexpr double kLanes[] = {-7.2, -3.6, 0.0, 3.6, 7.2};
  constexpr double kLaneWeights[] = {0.1, 0.25, 0.35, 0.2, 0.1};
  Rng rng(0x5EEDULL);
  while (pm.seed_points.size() < 400) {
    double pick = rng.uniform();
    std::size_t lane = 0;
    while (lane + 1 < std::size(kLanes) && pick >= kLaneWeights[lane]) pick -= kLaneWeights[lane++];
    const double band = rng.uniform();
    double z = 0.0;
    if (band < 0.14) {
      z = rng.uniform(8.0, 20.0);
    } else if (band < 0.76) {
      z = rng.uniform(20.0, 45.0);
    } else {
      z = rng.uniform(45.0, 95.0);
    }
    const GroundPoint p{kLanes[lane] + rng.normal(0.0, 0.4), z};
    // Keep seeds whose vehicle fits horizontally into the image.
    const double half_width_px = 0.5 * cam.f * 1.9 / p.Z;
    if (std::abs(cam.f * p.X / p.Z) + half_width_px < cam.cx() - 2.0 && pm.bounds.contains(p)) {
      pm.seed_points.push_back(p);
    }
  }
  return pm;
}

Scenario sample_scenario(const Camera& cam, const PriorModel& pm, std::uint64_t seed,
                         const JitterConfig& jitter) {
  Rng rng(seed);
  Scenario s;
  const GroundPoint base = pm.seed_points[rng.index(pm.seed_points.size())];
  s.start = base;
  if (jitter.lateral > 0.0 || jitter.longitudinal > 0.0) {
    constexpr int kTries = 16;
    bool placed = false;
    for (int i = 0; i < kTries && !placed; ++i) {
      const GroundPoint p{base.X + rng.normal(0.0, jitter.lateral),
                          base.Z + rng.normal(0.0, jitter.longitudinal)};
      if (pm.bounds.contains(p)) {
        s.start = p;
        placed = true;
      }
    }
    if (!placed) {
      s.start.X = std::clamp(base.X, pm.bounds.x_min, pm.bounds.x_max);
      s.start.Z = std::clamp(base.Z, pm.bounds.z_min, pm.bounds.z_max);
    }
  }

  // Cholesky factor of cov + 1e-12 I; an all-zero covariance yields the mean.
  const bool degenerate = pm.vel_cov.xx == 0.0 && pm.vel_cov.xz == 0.0 && pm.vel_cov.zz == 0.0;
  const double kRidge = degenerate ? 0.0 : 1e-12;
  const double l11 = std::sqrt(std::max(pm.vel_cov.xx, 0.0) + kRidge);
  const double l21 = l11 > 0.0 ? pm.vel_cov.xz / l11 : 0.0;
  const double l22 = std::sqrt(std::max(pm.vel_cov.zz + kRidge - l21 * l21, 0.0));
  const double n1 = rng.normal();
  const double n2 = rng.normal();
  s.velocity = {pm.vel_mean.vx + l11 * n1, pm.vel_mean.vz + l21 * n1 + l22 * n2};

  const double z = s.start.Z;
  s.height_m = std::clamp(pm.height_px(z) * z / cam.f, pm.size_bounds.h_min, pm.size_bounds.h_max);
  s.width_m = std::clamp(pm.width_px(z) * z / cam.f, pm.size_bounds.w_min, pm.size_bounds.w_max);
  return s;
}

PriorFitResult fit_priors(std::span<const LabeledSample> samples, const Camera& cam,
                          const PriorFitOptions& options) {
  cam.validate();
  options.bounds.validate();
  if (samples.empty()) throw FitError("no annotated samples to fit priors from");

  PriorFitResult result;
  PriorModel& pm = result.model;
  pm.basis = options.basis;
  pm.bounds = options.bounds;
  pm.size_bounds = options.size_bounds;

  std::vector<double> size_x;
  std::vector<double> heights;
  std::vector<double> widths;
  std::vector<Velocity2D> vels;
  for (const LabeledSample& s : samples) {
    if (s.track.boxes.empty()) throw FitError("sample '" + s.id + "' has no boxes");
    const BBox& first = s.track.boxes.front();
    const ImagePoint ip = bbox_reference_point(cam, first);
    if (!(ip.v > 0.0)) throw FitError("sample '" + s.id + "': first box at or above the horizon");
    const GroundPoint seed = back_project(cam, ip);
    if (pm.bounds.contains(seed)) {
      pm.seed_points.push_back(seed);
    } else {
      ++result.seeds_out_of_bounds;
    }

    double depth = seed.Z;
    const BBox* sized = &first;
    if (options.depth_source == DepthSource::Label) {
      depth = s.position ? s.position->Z : s.distance;
      sized = &s.track.boxes.back();
    }
    size_x.push_back(basis_value(options.basis, depth));
    heights.push_back(sized->h);
    widths.push_back(sized->w);
    vels.push_back(s.velocity);
  }
  if (pm.seed_points.empty()) throw FitError("all seed points fall outside the location bounds");
  if (result.seeds_out_of_bounds > 0) {
    result.warnings.push_back(std::to_string(result.seeds_out_of_bounds) +
                              " seed point(s) outside the location bounds were dropped");
  }

  const int degree = options.degree >= 0 ? options.degree : (options.basis == SizeBasis::InvZ ? 1 : 2);
  pm.h_poly = polyfit(size_x, heights, degree);
  pm.w_poly = polyfit(size_x, widths, degree);

  const VelocityGaussian g = fit_gaussian(vels);
  pm.vel_mean = g.mean;
  pm.vel_cov = g.cov;

  for (std::string& msg : check_size_bands(pm, cam)) result.warnings.push_back(std::move(msg));
  pm.validate();
  return result;
}

}  // namespace bbvel
