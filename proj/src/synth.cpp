#include "bbvel/synth.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "bbvel/errors.hpp"
#include "bbvel/random.hpp"

namespace bbvel {

namespace {

constexpr std::uint64_t kScenarioStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kAccelStream = 3;

bool box_inside_image(const Camera& cam, const BBox& b) {
  return b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= cam.img_w && b.y + b.h <= cam.img_h;
}

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "syn-%06zu", index);
  return buf;
}

}  // namespace

double distance_of(GroundPoint p, DistanceConvention convention) {
  return convention == DistanceConvention::Euclidean ? std::hypot(p.X, p.Z) : p.Z;
}

void GenConfig::validate() const {
  if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
  if (frames < 2) throw ValidationError("frames must be >= 2");
  if (!(fps > 0.0)) throw ValidationError("fps must be > 0");
  if (accel_sigma < 0.0) throw ValidationError("accel_sigma must be >= 0");
  if (max_retries < 0) throw ValidationError("max_retries must be >= 0");
}

std::optional<LabeledSample> generate_track(const Camera& cam, const PriorModel& pm,
                                            const GenConfig& cfg, std::size_t index) {
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    const std::uint64_t attempt_seed = derive_seed(cfg.seed, index, static_cast<std::uint64_t>(attempt));
    const Scenario sc = sample_scenario(cam, pm, derive_seed(attempt_seed, kScenarioStream), cfg.jitter);

    Velocity2D accel;
    if (cfg.accel_sigma > 0.0) {
      Rng rng(derive_seed(attempt_seed, kAccelStream));
      accel = {rng.normal(0.0, cfg.accel_sigma), rng.normal(0.0, cfg.accel_sigma)};
    }

    Track track{std::vector<BBox>(cfg.frames), cfg.fps};
    GroundPoint last{};
    bool ok = true;
    for (std::size_t t = 0; t < cfg.frames && ok; ++t) {
      const double dt = static_cast<double>(t) / cfg.fps;
      const GroundPoint p{sc.start.X + sc.velocity.vx * dt + 0.5 * accel.vx * dt * dt,
                          sc.start.Z + sc.velocity.vz * dt + 0.5 * accel.vz * dt * dt};
      if (p.Z < pm.bounds.z_min || p.Z > pm.bounds.z_max) {
        ok = false;
        break;
      }
      const ImagePoint ip = project(cam, p);
      const double w = cam.f * sc.width_m / p.Z;
      const double h = cam.f * sc.height_m / p.Z;
      const BBox box{cam.cx() + ip.u - 0.5 * w, cam.cy() + ip.v - h, w, h};
      if (!box_inside_image(cam, box)) {
        ok = false;
        break;
      }
      track.boxes[t] = box;
      last = p;
    }
    if (!ok) continue;

    const double t_end = static_cast<double>(cfg.frames - 1) / cfg.fps;
    LabeledSample s;
    s.id = sample_id(index);
    s.velocity = {sc.velocity.vx + accel.vx * t_end, sc.velocity.vz + accel.vz * t_end};
    s.position = last;
    s.distance = distance_of(last, cfg.distance);
    s.track = cfg.noise ? add_tracker_noise(track, *cfg.noise, derive_seed(attempt_seed, kNoiseStream))
                        : std::move(track);
    return s;
  }
  return std::nullopt;
}

GenerationResult generate_dataset(const Camera& cam, const PriorModel& pm, const GenConfig& cfg,
                                  unsigned threads) {
  cam.validate();
  pm.validate();
  cfg.validate();

  std::vector<std::optional<LabeledSample>> slots(cfg.n_samples);
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cfg.n_samples)));
  if (workers == 1) {
    for (std::size_t i = 0; i < cfg.n_samples; ++i) slots[i] = generate_track(cam, pm, cfg, i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < cfg.n_samples; i += workers) slots[i] = generate_track(cam, pm, cfg, i);
      });
    }
  }

  GenerationResult result;
  result.samples.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      result.samples.push_back(std::move(*slots[i]));
    } else {
      result.skipped.push_back(i);
    }
  }
  if (2 * result.skipped.size() > cfg.n_samples) {
    throw ConfigError("generation skipped " + std::to_string(result.skipped.size()) + " of " +
                      std::to_string(cfg.n_samples) +
                      " samples; the prior is inconsistent with the bounds or the image");
  }
  return result;
}

}  // namespace bbvel
