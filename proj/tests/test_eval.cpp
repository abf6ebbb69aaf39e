#include <doctest.h>

#include <string>

#include "bbvel/errors.hpp"
#include "bbvel/eval.hpp"
#include "bbvel/random.hpp"

using namespace bbvel;

namespace {

struct Fixture {
  std::vector<Velocity2D> preds;
  std::vector<Velocity2D> truths;
  std::vector<double> distances;
};

Fixture random_fixture(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Fixture f;
  for (std::size_t i = 0; i < n; ++i) {
    f.truths.push_back({rng.normal(0, 1), rng.normal(0, 3)});
    f.preds.push_back({rng.normal(0, 1), rng.normal(0, 3)});
    // Guarantee every bucket is populated.
    const double d = i < 3 ? 10.0 + 25.0 * static_cast<double>(i) : rng.uniform(6.0, 95.0);
    f.distances.push_back(d);
  }
  return f;
}

}  // namespace

TEST_CASE("bucket boundaries") {
  const BucketSpec spec;
  CHECK(bucketize(15.0, spec) == Bucket::Near);
  CHECK(bucketize(19.999, spec) == Bucket::Near);
  CHECK(bucketize(20.0, spec) == Bucket::Medium);
  CHECK(bucketize(44.999, spec) == Bucket::Medium);
  CHECK(bucketize(45.0, spec) == Bucket::Far);
  CHECK(bucketize(60.0, spec) == Bucket::Far);
  CHECK_THROWS_AS(bucketize(0.0, spec), ValidationError);
  CHECK_THROWS_AS(bucketize(-3.0, spec), ValidationError);
  CHECK_THROWS_AS((BucketSpec{30.0, 30.0}.validate()), ValidationError);
}

TEST_CASE("three-residual hand example") {
  const std::vector<Velocity2D> truths{{0, 0}, {0, 0}, {0, 0}};
  const std::vector<Velocity2D> preds{{1, 0}, {0, 2}, {2, 2}};
  const std::vector<double> d{10, 30, 60};
  const EvalReport r = e_v(preds, truths, d);
  CHECK(r.bucket_error[0] == 1.0);
  CHECK(r.bucket_error[1] == 4.0);
  CHECK(r.bucket_error[2] == 8.0);
  CHECK(r.overall == 13.0 / 3.0);
  CHECK(r.bucket_count == std::array<std::size_t, 3>{1, 1, 1});
  CHECK(r.residuals == std::vector<double>{1, 4, 8});
  CHECK(r.rms(Bucket::Medium) == 2.0);
}

TEST_CASE("perfect predictions give zero error") {
  const Fixture f = random_fixture(1, 50);
  const EvalReport r = e_v(f.truths, f.truths, f.distances);
  CHECK(r.overall == 0.0);
  for (double e : r.bucket_error) CHECK(e == 0.0);
}

TEST_CASE("empty bucket is named") {
  const std::vector<Velocity2D> v{{0, 0}, {1, 1}};
  const std::vector<double> d{10, 60};
  try {
    e_v(v, v, d);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("medium") != std::string::npos);
  }
  CHECK_THROWS_AS(e_v(v, v, std::vector<double>{10}), ValidationError);
}

TEST_CASE("permutation invariance") {
  Fixture f = random_fixture(2, 200);
  const EvalReport a = e_v(f.preds, f.truths, f.distances);
  std::vector<std::size_t> order(f.preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(3);
  rng.shuffle(std::span<std::size_t>(order));
  Fixture g;
  for (std::size_t i : order) {
    g.preds.push_back(f.preds[i]);
    g.truths.push_back(f.truths[i]);
    g.distances.push_back(f.distances[i]);
  }
  const EvalReport b = e_v(g.preds, g.truths, g.distances);
  for (int k = 0; k < 3; ++k) CHECK(b.bucket_error[k] == doctest::Approx(a.bucket_error[k]).epsilon(1e-12));
  CHECK(b.bucket_count == a.bucket_count);
}

TEST_CASE("scaling residuals by c scales errors by c squared") {
  const Fixture f = random_fixture(4, 100);
  const EvalReport a = e_v(f.preds, f.truths, f.distances);
  for (double c : {0.5, 2.0, 3.7}) {
    std::vector<Velocity2D> scaled;
    for (std::size_t i = 0; i < f.preds.size(); ++i) {
      scaled.push_back({f.truths[i].vx + c * (f.preds[i].vx - f.truths[i].vx),
                        f.truths[i].vz + c * (f.preds[i].vz - f.truths[i].vz)});
    }
    const EvalReport b = e_v(scaled, f.truths, f.distances);
    for (int k = 0; k < 3; ++k) CHECK(b.bucket_error[k] == doctest::Approx(c * c * a.bucket_error[k]).epsilon(1e-10));
  }
}

TEST_CASE("overall is the unweighted bucket mean") {
  // Bucket sizes 1, 2 and 5 with distinct errors.
  const std::vector<double> d{10, 30, 30, 50, 50, 50, 50, 50};
  const std::vector<Velocity2D> truth(d.size(), Velocity2D{0, 0});
  const std::vector<Velocity2D> preds{{3, 0}, {1, 0}, {1, 0}, {0, 2}, {0, 2}, {0, 2}, {0, 2}, {0, 2}};
  const EvalReport r = e_v(preds, truth, d);
  CHECK(r.overall == doctest::Approx((9.0 + 1.0 + 4.0) / 3.0));
  // A pooled mean would give (9 + 2 + 20) / 8.
  CHECK(r.overall != doctest::Approx(31.0 / 8.0));
}

TEST_CASE("labeled sample overload and distance convention") {
  std::vector<LabeledSample> samples(3);
  samples[0] = {"a", {}, {0, 0}, std::hypot(18.0, 19.0), GroundPoint{18.0, 19.0}};
  samples[1] = {"b", {}, {0, 0}, 30.0, GroundPoint{0.0, 30.0}};
  samples[2] = {"c", {}, {0, 0}, 60.0, GroundPoint{0.0, 60.0}};
  const std::vector<Velocity2D> preds{{1, 0}, {0, 2}, {2, 2}};
  // Euclidean distance 26.2 puts the first sample in the medium bucket.
  CHECK_THROWS_AS(e_v(preds, samples), ValidationError);
  const BucketSpec longitudinal{20.0, 45.0, DistanceConvention::Longitudinal};
  CHECK(e_v(preds, samples, longitudinal).overall == 13.0 / 3.0);
  samples[0].position.reset();
  CHECK_THROWS_AS(e_v(preds, samples, longitudinal), ValidationError);
}

TEST_CASE("comparison table and CSV") {
  const std::vector<Velocity2D> truths{{0, 0}, {0, 0}, {0, 0}};
  const std::vector<double> d{10, 30, 60};
  const EvalReport good = e_v(std::vector<Velocity2D>{{0.1, 0}, {0, 0.2}, {0.3, 0.1}}, truths, d);
  const EvalReport bad = e_v(std::vector<Velocity2D>{{1, 0}, {0, 2}, {2, 2}}, truths, d);

  const std::string single = compare_table({{"only", good}});
  CHECK(std::count(single.begin(), single.end(), '\n') == 2);

  const std::string table = compare_table({{"geometric", bad}, {"mlp", good}});
  CHECK(table.find("mlp") < table.find("geometric"));

  const std::string csv = compare_csv({{"geometric", bad}, {"mlp", good}});
  CHECK(csv.rfind("method,E_v,E_v_near,E_v_medium,E_v_far,n_near,n_medium,n_far\n", 0) == 0);
  const std::vector<CsvRow> rows = parse_compare_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "mlp");
  CHECK(rows[0].overall == good.overall);
  CHECK(rows[0].bucket_error == good.bucket_error);
  CHECK(rows[1].overall == bad.overall);
  CHECK(rows[1].bucket_error == bad.bucket_error);
}
