#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "somnus/cluster.hpp"
#include "somnus/error.hpp"

using namespace somnus;

namespace {

ThetaDraws random_draws(Rng& rng, std::size_t m, std::size_t n, std::size_t d, double spread) {
  ThetaDraws t(m, n, d);
  std::vector<double> base(n * d);
  for (auto& b : base) b = rng.normal(0.0, 2.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) t.at(j, i)[c] = base[i * d + c] + rng.normal(0.0, spread);
  return t;
}

ThetaDraws point_masses(const Eigen::MatrixXd& x, std::size_t m) {
  std::vector<Eigen::MatrixXd> v(m, x);
  return ThetaDraws::from_matrices(v);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("two separated triplets") {
  Eigen::MatrixXd x(6, 10);
  x.setZero();
  x.row(0).setConstant(0.0);
  x.row(1).setConstant(0.1);
  x.row(2).setConstant(-0.1);
  x.row(3).setConstant(10.0);
  x.row(4).setConstant(10.2);
  x.row(5).setConstant(9.9);
  const auto s = posterior_mean_kmeans(point_masses(x, 3), 2, 20, 1);
  CHECK(s.assignments[0] == s.assignments[1]);
  CHECK(s.assignments[1] == s.assignments[2]);
  CHECK(s.assignments[3] == s.assignments[4]);
  CHECK(s.assignments[4] == s.assignments[5]);
  CHECK(s.assignments[0] != s.assignments[3]);
  const int lo = s.assignments[0], hi = s.assignments[3];
  CHECK(s.centers(lo, 0) == doctest::Approx(0.0));
  CHECK(s.centers(hi, 0) == doctest::Approx((10.0 + 10.2 + 9.9) / 3.0).epsilon(1e-12));
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(s.assign_probs(i, s.assignments[static_cast<std::size_t>(i)]) == 1.0);
}

TEST_CASE("K = 1 gives the grand mean") {
  Rng rng(2);
  const auto t = random_draws(rng, 20, 7, 3, 0.5);
  const auto s = posterior_mean_kmeans(t, 1, 5, 3);
  const Eigen::MatrixXd means = t.mean();
  CHECK((s.centers.row(0) - means.colwise().mean()).norm() < 1e-12);
  double want = 0.0;
  for (std::size_t j = 0; j < t.n_draws(); ++j)
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        const double diff = t.at(j, i)[c] - s.centers(0, static_cast<Eigen::Index>(c));
        want += diff * diff;
      }
  CHECK(s.expected_loss == doctest::Approx(want / 20.0).epsilon(1e-12));
}

TEST_CASE("posterior-mean K-means reaches the brute-force minimum of the expected loss") {
  Rng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + rng.index(6);
    const int k = 2 + static_cast<int>(rng.index(2));
    const auto t = random_draws(rng, 1 + rng.index(10), n, 2 + rng.index(3), 1.0);
    const auto best = oracle::minimise(n, k, [&](const std::vector<int>& l) { return oracle::expected_loss(t, l, k); });
    const auto s = posterior_mean_kmeans(t, k, 100, static_cast<std::uint64_t>(trial));
    CHECK(s.expected_loss == doctest::Approx(best.loss).epsilon(1e-10));
    CHECK(adjusted_rand_index(s.assignments, best.labels) == doctest::Approx(1.0));
  }
}

TEST_CASE("bias-variance identity behind the posterior-mean reduction") {
  Rng rng(4);
  const auto t = random_draws(rng, 30, 5, 4, 1.3);
  const Eigen::MatrixXd mean = t.mean();
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd b(4);
    for (Eigen::Index c = 0; c < 4; ++c) b(c) = rng.normal(0.0, 3.0);
    for (std::size_t i = 0; i < 5; ++i) {
      double e_tb = 0.0, e_tm = 0.0;
      for (std::size_t j = 0; j < 30; ++j)
        for (std::size_t c = 0; c < 4; ++c) {
          const double x = t.at(j, i)[c];
          e_tb += (x - b(static_cast<Eigen::Index>(c))) * (x - b(static_cast<Eigen::Index>(c)));
          e_tm += (x - mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))) *
                  (x - mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
        }
      const double gap = (mean.row(static_cast<Eigen::Index>(i)).transpose() - b).squaredNorm();
      CHECK(std::abs(e_tb / 30.0 - e_tm / 30.0 - gap) < 1e-10);
    }
  }
}

TEST_CASE("concatenated K-means matches the brute-force minimum of the draw-wise loss") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + rng.index(6);
    const auto t = random_draws(rng, 2, n, 3, 1.5);
    const auto best = oracle::minimise(n, 2, [&](const std::vector<int>& l) { return oracle::drawwise_loss(t, l, 2); });
    const auto s = concatenated_kmeans(t, 2, 100, static_cast<std::uint64_t>(trial));
    CHECK(oracle::drawwise_loss(t, s.assignments, 2) == doctest::Approx(best.loss).epsilon(1e-10));
  }
}

TEST_CASE("point-mass draws: concatenated and posterior-mean K-means agree") {
  Rng rng(6);
  Eigen::MatrixXd x(30, 10);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  x.topRows(10).array() += 4.0;
  const auto t = point_masses(x, 4);
  const auto a = posterior_mean_kmeans(t, 3, 50, 1);
  const auto b = concatenated_kmeans(t, 3, 50, 1);
  CHECK(adjusted_rand_index(a.assignments, b.assignments) == 1.0);
  CHECK_THROWS_AS(concatenated_kmeans(t, 3, 5, 1, 100), ValidationError);
}

TEST_CASE("assignment probabilities") {
  SUBCASE("point masses give one-hot rows") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 1, 1, 5, 5, 6, 6;
    Eigen::MatrixXd centers(2, 2);
    centers << 0.5, 0.5, 5.5, 5.5;
    const auto p = assignment_probabilities(point_masses(x, 3), centers);
    CHECK(p(0, 0) == 1.0);
    CHECK(p(3, 1) == 1.0);
    CHECK(p(2, 0) == 0.0);
  }
  SUBCASE("symmetric cloud between two centers") {
    Rng rng(7);
    const std::size_t m = 10000;
    ThetaDraws t(m, 1, 2);
    for (std::size_t j = 0; j < m; ++j) {
      t.at(j, 0)[0] = rng.normal(0.0, 1e-3);
      t.at(j, 0)[1] = rng.normal(0.0, 1e-3);
    }
    Eigen::MatrixXd centers(2, 2);
    centers << -1, 0, 1, 0;
    const auto p = assignment_probabilities(t, centers);
    CHECK(std::abs(p(0, 0) - 0.5) < 3.0 * std::sqrt(0.25 / static_cast<double>(m)));
  }
  SUBCASE("one-dimensional Gaussian oracle") {
    Rng rng(8);
    const std::size_t m = 10000;
    ThetaDraws t(m, 3, 1);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i < 3; ++i) t.at(j, i)[0] = rng.normal(0.5, 1.0);
    Eigen::MatrixXd centers(2, 1);
    centers << -1, 1;
    const auto p = assignment_probabilities(t, centers);
    const double want = normal_cdf(0.5);
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(std::abs(p(i, 1) - want) < 3.0 * std::sqrt(want * (1 - want) / static_cast<double>(m)));
      CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
    }
  }
  SUBCASE("ties go to the smallest index") {
    ThetaDraws t(1, 1, 1);
    t.at(0, 0)[0] = 0.0;
    Eigen::MatrixXd centers(3, 1);
    centers << 1, -1, 1;
    CHECK(assignment_probabilities(t, centers)(0, 0) == 1.0);
  }
}

TEST_CASE("solution invariants and loss dominance over random partitions") {
  Rng rng(9);
  const auto t = random_draws(rng, 40, 60, 10, 1.5);
  const auto s = posterior_mean_kmeans(t, 4, 100, 2);
  for (Eigen::Index i = 0; i < s.assign_probs.rows(); ++i) {
    CHECK(std::abs(s.assign_probs.row(i).sum() - 1.0) < 1e-12);
    const auto u = static_cast<std::size_t>(i);
    if (!s.boundary[u]) CHECK(s.assign_probs(i, s.assignments[u]) == s.assign_probs.row(i).maxCoeff());
  }
  CHECK(s.centers.allFinite());
  const Eigen::MatrixXd means = t.mean();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels(60);
    for (auto& l : labels) l = static_cast<int>(rng.index(4));
    CHECK(s.expected_loss <= expected_kmeans_loss(t, labels, cluster_means(means, labels, 4)) + 1e-9);
  }
}

TEST_CASE("K-means errors") {
  Rng rng(10);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(kmeans(x, 4, 3, rng), ValidationError);
  CHECK_THROWS_AS(kmeans(x, 2, 3, rng), ValidationError);  // one distinct point
  CHECK_THROWS_AS(kmeans(x, 0, 3, rng), ValidationError);
}

TEST_CASE("adjusted Rand index") {
  CHECK(adjusted_rand_index({0, 0, 1, 1, 2}, {5, 5, 3, 3, 1}) == 1.0);
  CHECK(adjusted_rand_index({1, 1, 2, 2}, {1, 2, 1, 2}) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK_THROWS_AS(adjusted_rand_index({1, 2}, {1, 2, 3}), ValidationError);
  Rng rng(11);
  std::vector<int> a(10000), b(10000);
  for (auto& v : a) v = static_cast<int>(rng.index(4));
  for (auto& v : b) v = static_cast<int>(rng.index(4));
  CHECK(std::abs(adjusted_rand_index(a, b)) < 0.02);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> x(30), y(30);
    for (auto& v : x) v = static_cast<int>(rng.index(3));
    for (auto& v : y) v = static_cast<int>(rng.index(4));
    std::vector<int> relabelled(x);
    for (auto& v : relabelled) v = (v + 1) % 3 + 10;
    CHECK(adjusted_rand_index(x, y) == doctest::Approx(adjusted_rand_index(y, x)).epsilon(1e-14));
    CHECK(adjusted_rand_index(relabelled, y) == doctest::Approx(adjusted_rand_index(x, y)).epsilon(1e-14));
  }
}

TEST_CASE("per-draw K-means co-clustering") {
  Eigen::MatrixXd x(8, 3);
  Rng rng(12);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal(0.0, 0.1);
  x.topRows(4).array() += 5.0;
  const auto t = point_masses(x, 6);
  const auto ref = posterior_mean_kmeans(t, 2, 10, 1);
  const auto co = per_sample_kmeans_coclustering(t, 2, 3, &ref.assignments);
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index l = 0; l < 8; ++l)
      CHECK(co.matrix(i, l) == (ref.assignments[static_cast<std::size_t>(i)] == ref.assignments[static_cast<std::size_t>(l)] ? 1.0 : 0.0));
  CHECK(co.mean_ari == 1.0);
  CHECK(co.ari_to_reference.size() == 6);

  const auto noisy = random_draws(rng, 25, 12, 2, 2.0);
  const auto c2 = per_sample_kmeans_coclustering(noisy, 3, 4, nullptr);
  CHECK((c2.matrix - c2.matrix.transpose()).norm() == 0.0);
  for (Eigen::Index i = 0; i < 12; ++i) CHECK(c2.matrix(i, i) == 1.0);
  CHECK(c2.ari_to_reference.empty());
}

TEST_CASE("K sweep losses decrease") {
  Rng rng(13);
  const auto t = random_draws(rng, 10, 20, 4, 0.5);
  const auto rows = k_sweep(t, 5, 20, 1);
  REQUIRE(rows.size() == 5);
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r].within_loss <= rows[r - 1].within_loss + 1e-12);
  for (const auto& r : rows) CHECK(r.expected_loss >= r.within_loss);
}

TEST_CASE("clusters JSON round trip") {
  Rng rng(14);
  const auto t = random_draws(rng, 10, 6, 10, 0.5);
  const auto s = posterior_mean_kmeans(t, 2, 10, 1);
  std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  const auto j = to_json(s, ids, std::vector<std::string>(10, "x"));
  std::vector<std::string> back_ids;
  const auto back = cluster_solution_from_json(nlohmann::json::parse(j.dump()), &back_ids);
  CHECK(back_ids == ids);
  CHECK(back.assignments == s.assignments);
  CHECK((back.assign_probs - s.assign_probs).norm() == 0.0);
  CHECK(j["patients"][0]["assignment"].get<int>() == s.assignments[0] + 1);
}
