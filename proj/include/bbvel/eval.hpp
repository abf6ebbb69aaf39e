#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bbvel/geometry.hpp"
#include "bbvel/sample.hpp"

namespace bbvel {

enum class Bucket { Near = 0, Medium = 1, Far = 2 };
inline constexpr std::array<Bucket, 3> kBuckets = {Bucket::Near, Bucket::Medium, Bucket::Far};

const char* bucket_name(Bucket b) noexcept;

// Near: d < near_max; medium: near_max <= d < far_min; far: d >= far_min.
struct BucketSpec {
  double near_max = 20.0;
  double far_min = 45.0;
  DistanceConvention convention = DistanceConvention::Euclidean;

  void validate() const;
};

Bucket bucketize(double distance, const BucketSpec& spec);

// Distance of a labeled sample under spec.convention. Uses the stored
// final-frame position when the convention needs it, the label otherwise.
double sample_distance(const LabeledSample& s, const BucketSpec& spec);

struct EvalReport {
  double overall = 0.0;                      // unweighted mean of the three buckets
  std::array<double, 3> bucket_error{};      // mean ||V - V_hat||^2 per bucket [m^2/s^2]
  std::array<std::size_t, 3> bucket_count{};
  std::vector<double> residuals;             // per-sample squared error, input order

  double rms(Bucket b) const;
  double overall_rms() const;
};

// Throws ValidationError naming any empty bucket.
EvalReport e_v(std::span<const Velocity2D> preds, std::span<const Velocity2D> truths,
               std::span<const double> distances, const BucketSpec& spec = {});

// Convenience overload taking the truth and distances from labeled samples.
EvalReport e_v(std::span<const Velocity2D> preds, std::span<const LabeledSample> truths,
               const BucketSpec& spec = {});

using NamedReport = std::pair<std::string, EvalReport>;

// Rows sorted by overall error, ascending.
std::string compare_table(std::vector<NamedReport> reports);
std::string compare_csv(std::vector<NamedReport> reports);

struct CsvRow {
  std::string method;
  double overall = 0.0;
  std::array<double, 3> bucket_error{};
};
std::vector<CsvRow> parse_compare_csv(const std::string& csv);

}  // namespace bbvel
