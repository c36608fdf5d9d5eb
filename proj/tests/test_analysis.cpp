#include <algorithm>
#include <cmath>

#include "core/analysis.hpp"
#include "core/data.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"
#include "doctest.h"

using namespace must;
using namespace must::analysis;

TEST_CASE("sigmoid derivative identity and envelope") {
  SUBCASE("sigma'(0) = 1/4") {
    std::vector<double> g{0.0};
    SigmoidIdentityReport r = check_sigmoid_derivative_identity(g);
    CHECK(r.pass);
    CHECK(1.0 / (2.0 + std::exp(0.0) + std::exp(-0.0)) == doctest::Approx(0.25));
  }
  SUBCASE("even function: sigma'(5) == sigma'(-5)") {
    auto sprime = [](double g) {
      double s = 1.0 / (1.0 + std::exp(-g));
      return s * (1.0 - s);
    };
    CHECK(std::abs(sprime(5.0) - sprime(-5.0)) < 1e-15);
  }
  SUBCASE("random grid in [-10, 10]") {
    Rng rng(4);
    std::vector<double> g(2000);
    for (double& v : g) v = 20.0 * rng.uniform() - 10.0;
    SigmoidIdentityReport r = check_sigmoid_derivative_identity(g);
    CHECK(r.max_identity_error < 1e-12);
    CHECK(r.max_bound_violation <= 1e-12);
    CHECK(r.pass);
  }
}

namespace {

Network binary_net(uint64_t seed, int64_t in_dim = 2, int32_t domains = 2) {
  Rng rng(seed);
  return Network(parse_arch("bn,affine:6,relu,affine:out,sigmoid", in_dim, 2),
                 domains, rng);
}

Dataset random_target(uint64_t seed, int64_t n, int64_t dim = 2) {
  Rng rng(seed);
  Dataset ds;
  ds.domain_name = "target";
  ds.features = rng.normal_matrix(n, dim, 0.0, 1.5);
  ds.labels.assign(static_cast<size_t>(n), -1);
  return ds;
}

}  // namespace

TEST_CASE("bound report on identical teacher and student has zero lhs") {
  Network teacher = binary_net(3);
  Network student = teacher;  // same function -> zero residual
  Dataset target = random_target(5, 20);
  BoundReport r = lemma_bound_report(teacher, student, target, 0.5);
  for (double v : r.lhs) CHECK(v == 0.0);
  CHECK(r.mean_abs_residual == 0.0);
  CHECK(r.min_slack >= 0.0);
  CHECK(r.pass);
}

TEST_CASE("lambda zero makes the measured gradient vanish") {
  Network teacher = binary_net(7);
  Network student = binary_net(8, 2, 1);
  Dataset target = random_target(9, 15);
  BoundReport r = lemma_bound_report(teacher, student, target, 0.0);
  for (double v : r.lhs) CHECK(v == 0.0);
  CHECK(r.pass);
}

TEST_CASE("the envelope holds on random teacher/student pairs") {
  for (uint64_t seed = 20; seed < 30; ++seed) {
    Network teacher = binary_net(seed);
    Network student = binary_net(seed + 1000, 2, 1);
    Dataset target = random_target(seed + 2000, 25);
    BoundReport r = lemma_bound_report(teacher, student, target, 0.75);
    INFO("seed ", seed, " min_slack ", r.min_slack);
    CHECK(r.min_slack >= -1e-9);
    CHECK(r.max_per_sample_violation <= 1e-12);
    CHECK(r.pass);
    CHECK(r.rho >= 0.0);
    for (double a : r.A) CHECK(a >= 0.0);
    // Signed variant never exceeds the absolute variant.
    for (size_t j = 0; j < r.rhs_abs.size(); ++j) {
      CHECK(r.rhs_signed[j] <= r.rhs_abs[j] + 1e-15);
    }
  }
}

TEST_CASE("bound report rejects non-binary heads and empty targets") {
  Rng rng(1);
  Network softmax_net(parse_arch("affine:4,relu,affine:out,softmax", 2, 3), 1,
                      rng);
  Network sig = binary_net(2);
  Dataset target = random_target(3, 10);
  CHECK_THROWS_AS(lemma_bound_report(softmax_net, sig, target, 0.5), Error);
  CHECK_THROWS_AS(lemma_bound_report(sig, softmax_net, target, 0.5), Error);
}

TEST_CASE("consistency of constant snapshots is zero") {
  std::vector<Matrix> snaps(6, Matrix::filled(4, 1, 0.7));
  std::vector<int64_t> steps{0, 10, 20, 30, 40, 50};
  ConsistencyReport r = consistency_track(snaps, steps, 3);
  for (double v : r.mean_std) CHECK(v == 0.0);
  CHECK(r.time_averaged_mean_std == 0.0);
  CHECK(r.window_end_steps.front() == 20);
  CHECK(r.window_end_steps.back() == 50);
}

TEST_CASE("alternating 0/1 probabilities with window 2 give std one half") {
  std::vector<Matrix> snaps;
  std::vector<int64_t> steps;
  for (int t = 0; t < 8; ++t) {
    snaps.push_back(Matrix::filled(3, 1, t % 2 == 0 ? 0.0 : 1.0));
    steps.push_back(t);
  }
  ConsistencyReport r = consistency_track(snaps, steps, 2);
  for (double v : r.mean_std) CHECK(v == doctest::Approx(0.5));
  CHECK(r.time_averaged_mean_std == doctest::Approx(0.5));
}

TEST_CASE("consistency is invariant to sample order") {
  Rng rng(11);
  std::vector<Matrix> snaps;
  std::vector<int64_t> steps;
  for (int t = 0; t < 10; ++t) {
    Matrix m(5, 2);
    for (double& v : m.data()) v = rng.uniform();
    snaps.push_back(m);
    steps.push_back(t);
  }
  ConsistencyReport base = consistency_track(snaps, steps, 4);

  std::vector<int64_t> perm{4, 2, 0, 3, 1};
  std::vector<Matrix> shuffled;
  for (const Matrix& m : snaps) shuffled.push_back(m.select_rows(perm));
  ConsistencyReport moved = consistency_track(shuffled, steps, 4);
  REQUIRE(base.mean_std.size() == moved.mean_std.size());
  for (size_t i = 0; i < base.mean_std.size(); ++i) {
    CHECK(base.mean_std[i] == doctest::Approx(moved.mean_std[i]).epsilon(1e-12));
  }
}

TEST_CASE("consistency rejects oversized windows and ragged snapshots") {
  std::vector<Matrix> snaps(3, Matrix::filled(2, 1, 0.5));
  std::vector<int64_t> steps{0, 1, 2};
  CHECK_THROWS_AS(consistency_track(snaps, steps, 4), Error);
  CHECK_THROWS_AS(consistency_track(snaps, steps, 0), Error);
  snaps.push_back(Matrix::filled(3, 1, 0.5));
  steps.push_back(3);
  CHECK_THROWS_AS(consistency_track(snaps, steps, 2), Error);
}

TEST_CASE("margin probe against the hyperplane distance closed form") {
  // f(x) = sigmoid(3 x0 + 4 x1 - 2): distance to the boundary is
  // |3 x0 + 4 x1 - 2| / 5.
  Rng rng(1);
  Network net(parse_arch("affine:out,sigmoid", 2, 2), 1, rng);
  net.layers_mut()[0].w = Matrix{{3.0}, {4.0}};
  net.layers_mut()[0].b = Matrix{{-2.0}};

  Rng data(2);
  Matrix x = data.normal_matrix(40, 2, 0.0, 1.0);
  auto grid = parse_eps_grid("0:0.01:3");
  MarginCurve curve = margin_probe(net, x, 0, grid);
  CHECK(curve.flip_counts.front() == 0);  // eps = 0 flips nothing
  for (int64_t i = 0; i < x.rows(); ++i) {
    const double dist = std::abs(3.0 * x(i, 0) + 4.0 * x(i, 1) - 2.0) / 5.0;
    const double flip = curve.flip_eps[static_cast<size_t>(i)];
    if (dist <= 3.0 - 0.01) {
      CHECK(flip >= dist - 1e-9);
      CHECK(flip <= dist + 0.01 + 1e-9);
    } else {
      CHECK(std::isinf(flip));
    }
  }
}

TEST_CASE("flip counts are cumulative and non-decreasing") {
  Rng rng(5);
  Network net(parse_arch("bn,affine:8,relu,affine:out,softmax", 3, 3), 2, rng);
  Matrix x = rng.normal_matrix(30, 3, 0.0, 1.0);
  auto grid = parse_eps_grid("0:0.25:5");
  MarginCurve curve = margin_probe(net, x, 1, grid);
  for (size_t i = 1; i < curve.flip_counts.size(); ++i) {
    CHECK(curve.flip_counts[i] >= curve.flip_counts[i - 1]);
  }
  CHECK(curve.flip_counts.back() + curve.never_flipped == curve.num_samples);
}

TEST_CASE("zero input gradients are recorded as never flipping") {
  Rng rng(6);
  Network net(parse_arch("affine:out,sigmoid", 2, 2), 1, rng);
  net.layers_mut()[0].w = Matrix(2, 1);  // constant 0.5 probability everywhere
  Matrix x = rng.normal_matrix(7, 2, 0.0, 1.0);
  auto grid = parse_eps_grid("0:0.5:2");
  MarginCurve curve = margin_probe(net, x, 0, grid);
  CHECK(curve.zero_grad_samples == 7);
  CHECK(curve.never_flipped == 7);
  CHECK(curve.flip_counts.back() == 0);
}

TEST_CASE("eps grid parsing") {
  auto grid = parse_eps_grid("0:0.05:2");
  CHECK(grid.size() == 41);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == doctest::Approx(2.0));
  auto list = parse_eps_grid("0,0.5,1.25");
  CHECK(list.size() == 3);
  CHECK_THROWS_AS(parse_eps_grid("1:0:2"), Error);
  CHECK_THROWS_AS(parse_eps_grid("a,b"), Error);
  std::vector<double> bad{0.5, 0.5};
  Rng rng(7);
  Network net(parse_arch("affine:out,sigmoid", 2, 2), 1, rng);
  CHECK_THROWS_AS(margin_probe(net, Matrix(2, 2), 0, bad), Error);
}
