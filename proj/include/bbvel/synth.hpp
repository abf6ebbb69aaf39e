#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bbvel/geometry.hpp"
#include "bbvel/priors.hpp"
#include "bbvel/sample.hpp"
#include "bbvel/track.hpp"

namespace bbvel {

struct GenConfig {
  // Sample count of a full-scale training run.
  static constexpr std::size_t kFullScaleSampleCount = 11536;

  std::size_t n_samples = kFullScaleSampleCount;
  std::size_t frames = Track::kDefaultFrames;
  double fps = Track::kDefaultFps;
  JitterConfig jitter;
  // Tracker noise applied after the clean track is built; unset means clean.
  std::optional<NoiseConfig> noise;
  // Std-dev of a constant acceleration per axis [m/s^2]; 0 keeps constant velocity.
  double accel_sigma = 0.0;
  DistanceConvention distance = DistanceConvention::Euclidean;
  int max_retries = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Builds sample `index` deterministically from (cfg.seed, index). Returns
// nullopt when every retry left the depth bounds or the image.
std::optional<LabeledSample> generate_track(const Camera& cam, const PriorModel& pm,
                                            const GenConfig& cfg, std::size_t index);

struct GenerationResult {
  std::vector<LabeledSample> samples;
  std::vector<std::size_t> skipped;
};

// Generates cfg.n_samples samples in index order; `threads` only changes the
// schedule, never the output. Throws ConfigError when more than half skip.
GenerationResult generate_dataset(const Camera& cam, const PriorModel& pm, const GenConfig& cfg,
                                  unsigned threads = 1);

}  // namespace bbvel
