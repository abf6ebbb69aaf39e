#include "bbvel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "bbvel/errors.hpp"

namespace bbvel {

const char* bucket_name(Bucket b) noexcept {
  switch (b) {
    case Bucket::Near: return "near";
    case Bucket::Medium: return "medium";
    case Bucket::Far: return "far";
  }
  return "?";
}

void BucketSpec::validate() const {
  if (!(near_max > 0.0 && near_max < far_min)) throw ValidationError("bucket boundaries need 0 < near < far");
}

Bucket bucketize(double distance, const BucketSpec& spec) {
  if (!(distance > 0.0)) throw ValidationError("distance must be > 0");
  if (distance < spec.near_max) return Bucket::Near;
  if (distance < spec.far_min) return Bucket::Medium;
  return Bucket::Far;
}

double sample_distance(const LabeledSample& s, const BucketSpec& spec) {
  if (spec.convention == DistanceConvention::Longitudinal) {
    if (!s.position) throw ValidationError("sample '" + s.id + "' has no position for longitudinal bucketing");
    return s.position->Z;
  }
  return s.distance;
}

double EvalReport::rms(Bucket b) const { return std::sqrt(bucket_error[static_cast<int>(b)]); }
double EvalReport::overall_rms() const { return std::sqrt(overall); }

EvalReport e_v(std::span<const Velocity2D> preds, std::span<const Velocity2D> truths,
               std::span<const double> distances, const BucketSpec& spec) {
  spec.validate();
  if (preds.size() != truths.size() || preds.size() != distances.size()) {
    throw ValidationError("predictions, truths and distances differ in length");
  }
  EvalReport report;
  report.residuals.reserve(preds.size());
  std::array<double, 3> sums{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double dx = preds[i].vx - truths[i].vx;
    const double dz = preds[i].vz - truths[i].vz;
    const double sq = dx * dx + dz * dz;
    const int b = static_cast<int>(bucketize(distances[i], spec));
    sums[b] += sq;
    ++report.bucket_count[b];
    report.residuals.push_back(sq);
  }
  for (Bucket b : kBuckets) {
    const int k = static_cast<int>(b);
    if (report.bucket_count[k] == 0) {
      throw ValidationError(std::string("no samples in the ") + bucket_name(b) + " bucket");
    }
    report.bucket_error[k] = sums[k] / static_cast<double>(report.bucket_count[k]);
  }
  report.overall = (report.bucket_error[0] + report.bucket_error[1] + report.bucket_error[2]) / 3.0;
  return report;
}

EvalReport e_v(std::span<const Velocity2D> preds, std::span<const LabeledSample> truths, const BucketSpec& spec) {
  std::vector<Velocity2D> vels;
  std::vector<double> dists;
  vels.reserve(truths.size());
  dists.reserve(truths.size());
  for (const LabeledSample& s : truths) {
    vels.push_back(s.velocity);
    dists.push_back(sample_distance(s, spec));
  }
  return e_v(preds, vels, dists, spec);
}

namespace {

void sort_rows(std::vector<NamedReport>& reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const NamedReport& a, const NamedReport& b) { return a.second.overall < b.second.overall; });
}

}  // namespace

std::string compare_table(std::vector<NamedReport> reports) {
  sort_rows(reports);
  std::size_t name_width = 6;
  for (const auto& [name, r] : reports) name_width = std::max(name_width, name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s  %10s  %10s  %10s  %10s  %8s\n", static_cast<int>(name_width), "method",
                "E_v", "E_v_near", "E_v_medium", "E_v_far", "RMS");
  os << buf;
  for (const auto& [name, r] : reports) {
    std::snprintf(buf, sizeof(buf), "%-*s  %10.4f  %10.4f  %10.4f  %10.4f  %8.4f\n", static_cast<int>(name_width),
                  name.c_str(), r.overall, r.bucket_error[0], r.bucket_error[1], r.bucket_error[2], r.overall_rms());
    os << buf;
  }
  return os.str();
}

std::string compare_csv(std::vector<NamedReport> reports) {
  sort_rows(reports);
  std::ostringstream os;
  os << "method,E_v,E_v_near,E_v_medium,E_v_far,n_near,n_medium,n_far\n";
  char buf[512];
  for (const auto& [name, r] : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%zu\n", name.c_str(), r.overall,
                  r.bucket_error[0], r.bucket_error[1], r.bucket_error[2], r.bucket_count[0], r.bucket_count[1],
                  r.bucket_count[2]);
    os << buf;
  }
  return os.str();
}

std::vector<CsvRow> parse_compare_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::vector<CsvRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) throw FormatError("comparison CSV row has too few columns");
    CsvRow row;
    row.method = cells[0];
    row.overall = std::stod(cells[1]);
    for (int k = 0; k < 3; ++k) row.bucket_error[k] = std::stod(cells[2 + k]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bbvel
