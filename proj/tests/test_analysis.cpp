#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "somnus/analysis.hpp"
#include "somnus/error.hpp"
#include "somnus/model.hpp"
#include "somnus/simulate.hpp"

using namespace somnus;

namespace {

// Draws that repeat one parameter vector: fixed effects `fx`, no factors,
// omega = 1 and z = theta so that theta is reproduced exactly.
PosteriorDraws point_mass(const FixedEffects& fx, const Eigen::MatrixXd& theta, const std::vector<std::string>& ids,
                          std::size_t copies) {
  ParamLayout layout(ids.size(), 0);
  FactorParams f;
  f.loadings = Eigen::MatrixXd::Zero(10, 0);
  f.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids.size()), 0);
  f.omega2 = Eigen::VectorXd::Ones(10);
  const auto x = layout.pack(fx, f, theta);
  RowMatrix values(static_cast<Eigen::Index>(copies), static_cast<Eigen::Index>(x.size()));
  for (std::size_t r = 0; r < copies; ++r)
    for (std::size_t c = 0; c < x.size(); ++c) values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x[c];
  return PosteriorDraws(layout, ids, 1, copies, values);
}

double t_density(double t, double nu) {
  return std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * std::numbers::pi) *
         std::pow(1 + t * t / nu, -(nu + 1) / 2);
}

double t_cdf_quadrature(double t, double nu) {
  const int n = 20000;  // Simpson on [0, t]
  const double h = t / n;
  double s = t_density(0, nu) + t_density(t, nu);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * t_density(i * h, nu);
  return 0.5 + s * h / 3.0;
}

SleepRecord block_record(const std::string& id, int rem, int nonrem, int rem_events, int nonrem_events) {
  SleepRecord r;
  r.patient_id = id;
  r.stages.assign(static_cast<std::size_t>(nonrem), Stage::NonREM);
  r.stages.insert(r.stages.end(), static_cast<std::size_t>(rem), Stage::REM);
  for (int e = 0; e < nonrem_events; ++e) r.events.push_back({60.0 * e, 15.0, Stage::NonREM});
  for (int e = 0; e < rem_events; ++e) r.events.push_back({kEpochSec * nonrem + 60.0 * e, 15.0, Stage::REM});
  return r;
}

}  // namespace

TEST_CASE("night statistics") {
  const auto r = block_record("a", 120, 240, 4, 6);
  const auto s = night_statistics(r);
  CHECK(s[kTimeREM] == doctest::Approx(1.0));
  CHECK(s[kTimeNonREM] == doctest::Approx(2.0));
  CHECK(s[kEventsREM] == 4);
  CHECK(s[kAhiNonREM] == doctest::Approx(3.0));
}

TEST_CASE("type-7 quantile") {
  std::vector<double> v = {4, 1, 3, 2};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(v, 0.975) == doctest::Approx(3.925));
}

TEST_CASE("ppc collapses under point-mass deterministic dynamics") {
  FixedEffects fx;
  fx.mu.fill(-60.0);
  fx.lambda = {1e-300, 1e-300};
  const std::vector<std::string> ids = {"p1", "p2"};
  const auto draws = point_mass(fx, Eigen::MatrixXd::Zero(2, 10), ids, 5);
  std::vector<SleepRecord> records = {block_record("p2", 0, 80, 0, 0), block_record("p1", 0, 50, 0, 0)};
  PpcOptions opt;
  opt.n_sims_per_draw = 3;
  const auto rep = posterior_predictive(draws, records, opt);
  REQUIRE(rep.cells.size() == 2);
  CHECK(rep.n_draws_used == 5);
  for (const auto& row : rep.cells) {
    for (const auto& c : row) {
      CHECK(c.degenerate);
      CHECK(c.covered);
      CHECK(c.lower == c.observed);
      CHECK(c.mean == doctest::Approx(c.observed));
    }
  }
  CHECK(rep.cells[0][kTimeNonREM].observed == doctest::Approx(80 * 30 / 3600.0));
  for (double c : rep.coverage) CHECK(c == 1.0);
}

TEST_CASE("ppc exclusions and errors") {
  FixedEffects fx;
  fx.mu.fill(-3.0);
  fx.lambda = {0.01, 0.01};
  const auto draws = point_mass(fx, Eigen::MatrixXd::Zero(1, 10), {"p1"}, 2);
  SleepRecord awake;
  awake.patient_id = "p1";
  awake.stages.assign(20, Stage::Awake);
  const auto rep = posterior_predictive(draws, {awake}, {});
  CHECK(rep.cells.empty());
  REQUIRE(rep.excluded.size() == 1);
  CHECK(rep.excluded[0].reason == "no sleep epochs");
  CHECK_THROWS_AS(posterior_predictive(draws, {block_record("zz", 10, 10, 0, 0)}, {}), ValidationError);
}

TEST_CASE("ppc is calibrated at the generating parameters") {
  ScenarioConfig cfg;
  cfg.n_patients = 150;
  cfg.n_epochs = 400;
  cfg.seed = 5;
  const auto [records, truth] = generate_scenario(cfg);
  FixedEffects fx;
  fx.mu = truth.mu;
  fx.tau = truth.tau;
  fx.lambda = truth.lambda;
  const auto draws = point_mass(fx, truth.theta, truth.patient_ids, 200);
  PpcOptions opt;
  opt.seed = 9;
  const auto rep = posterior_predictive(draws, records, opt);
  for (int q = 0; q < kPpcStats; ++q) {
    INFO(std::string(kPpcStatNames[static_cast<std::size_t>(q)]));
    CHECK(rep.coverage[static_cast<std::size_t>(q)] >= 0.9);
  }
  const auto again = posterior_predictive(draws, records, opt);
  CHECK(again.cells[7][kEventsREM].upper == rep.cells[7][kEventsREM].upper);
}

TEST_CASE("scree spectrum") {
  Rng rng(3);
  const int n = 1000;
  SUBCASE("three strong factors") {
    Eigen::MatrixXd lam(10, 3);
    for (Eigen::Index i = 0; i < lam.size(); ++i) lam.data()[i] = rng.normal();
    Eigen::MatrixXd th(n, 10);
    for (int i = 0; i < n; ++i) {
      Eigen::Vector3d eta(rng.normal(), rng.normal(), rng.normal());
      for (int c = 0; c < 10; ++c) th(i, c) = lam.row(c).dot(eta) + rng.normal(0.0, 0.1);
    }
    const auto s = scree_spectrum(th);
    CHECK(s.cumulative_fraction(2) > 0.6);
    CHECK(s.cumulative_fraction(9) == doctest::Approx(1.0));
    for (int e = 1; e < 10; ++e) CHECK(s.eigenvalues(e) <= s.eigenvalues(e - 1));
    // Generating covariance oracle: share of the top three eigenvalues.
    Eigen::MatrixXd sigma = lam * lam.transpose();
    sigma.diagonal().array() += 0.01;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    const double top3 = eig.eigenvalues().tail(3).sum() / eig.eigenvalues().sum();
    CHECK(s.cumulative_fraction(2) == doctest::Approx(top3).epsilon(0.02));
  }
  SUBCASE("isotropic") {
    Eigen::MatrixXd th(n, 10);
    for (Eigen::Index i = 0; i < th.size(); ++i) th.data()[i] = rng.normal();
    const auto s = scree_spectrum(th);
    CHECK(s.eigenvalues(0) / s.eigenvalues(9) < 2.0);
  }
  SUBCASE("zero variance") {
    const auto s = scree_spectrum(Eigen::MatrixXd::Constant(50, 10, 0.3));
    CHECK(s.eigenvalues.cwiseAbs().maxCoeff() < 1e-20);
  }
}

TEST_CASE("factor alignment") {
  Rng rng(8);
  Eigen::MatrixXd truth(10, 3);
  for (Eigen::Index i = 0; i < truth.size(); ++i) truth.data()[i] = rng.normal();
  const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  auto scramble = [&](const Eigen::MatrixXd& m, std::size_t p, int signs) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (int c = 0; c < 3; ++c) out.col(c) = ((signs >> c) & 1 ? -1.0 : 1.0) * m.col(perms[p][static_cast<std::size_t>(c)]);
    return out;
  };

  SUBCASE("exact symmetry removal") {
    std::vector<Eigen::MatrixXd> draws;
    for (int d = 0; d < 12; ++d) draws.push_back(scramble(truth, static_cast<std::size_t>(d) % 6, d % 8));
    const auto a = align_factors(draws);
    for (const auto& m : a.draws) CHECK((m - a.draws[0]).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((a.mean - a.draws[0]).cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t d = 0; d < draws.size(); ++d) {
      const Eigen::MatrixXd before = draws[d] * draws[d].transpose();
      const Eigen::MatrixXd after = a.draws[d] * a.draws[d].transpose();
      CHECK((before - after).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("k = 1 fixes the sign by the largest entry") {
    Eigen::MatrixXd l(10, 1);
    l << 0.1, -2.0, 0.3, 0.0, 0.5, 0.2, -0.1, 0.4, 0.0, 1.0;
    const auto a = align_factors({-l, l, -l});
    CHECK(a.mean(1, 0) == doctest::Approx(2.0));
    CHECK(a.mean(0, 0) == doctest::Approx(-0.1));
  }
  SUBCASE("switching oracle") {
    std::vector<Eigen::MatrixXd> draws;
    for (int d = 0; d < 400; ++d) {
      Eigen::MatrixXd noisy = truth;
      for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += rng.normal(0.0, 0.05);
      draws.push_back(scramble(noisy, rng.index(6), static_cast<int>(rng.index(8))));
    }
    const auto a = align_factors(draws);
    double best = 1e300;
    for (std::size_t p = 0; p < 6; ++p)
      for (int s = 0; s < 8; ++s) best = std::min(best, std::sqrt((scramble(truth, p, s) - a.mean).squaredNorm() / 30.0));
    CHECK(best < 0.05);
    for (std::size_t d = 0; d < draws.size(); ++d) {
      const Eigen::MatrixXd diff = draws[d] * draws[d].transpose() - a.draws[d] * a.draws[d].transpose();
      CHECK(diff.cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(a.zeroed.cwiseAbs().maxCoeff() <= a.mean.cwiseAbs().maxCoeff());
  }
  SUBCASE("empty") { CHECK_THROWS_AS(align_factors({Eigen::MatrixXd::Zero(10, 0)}), ValidationError); }
}

TEST_CASE("weighted cluster summaries") {
  SUBCASE("hand example") {
    Eigen::MatrixXd w(3, 2);
    w << 1, 0, 1, 0, 0, 1;
    const auto s = cluster_weighted_summary({1, 2, 3}, w);
    CHECK(s[0].mean == 1.5);
    CHECK(s[0].sd == doctest::Approx(std::sqrt(0.5)));
    CHECK(s[1].mean == 3.0);
    CHECK(std::isnan(s[1].sd));
  }
  SUBCASE("one-hot weights give plain group statistics") {
    Rng rng(4);
    std::vector<double> x(30);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(30, 3);
    std::array<std::vector<double>, 3> groups;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal(5.0, 2.0);
      const auto g = i % 3;
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) = 1.0;
      groups[g].push_back(x[i]);
    }
    const auto s = cluster_weighted_summary(x, w);
    for (std::size_t g = 0; g < 3; ++g) {
      double m = 0;
      for (double v : groups[g]) m += v;
      m /= static_cast<double>(groups[g].size());
      double ss = 0;
      for (double v : groups[g]) ss += (v - m) * (v - m);
      CHECK(s[g].mean == doctest::Approx(m).epsilon(1e-14));
      CHECK(s[g].sd == doctest::Approx(std::sqrt(ss / static_cast<double>(groups[g].size() - 1))).epsilon(1e-14));
    }
  }
  SUBCASE("uniform weights give the grand mean") {
    const auto s = cluster_weighted_summary({1, 4, 7, 10}, Eigen::MatrixXd::Constant(4, 2, 0.5));
    CHECK(s[0].mean == doctest::Approx(5.5));
    CHECK(s[1].mean == doctest::Approx(5.5));
  }
  SUBCASE("missing values and absent clusters") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd w(3, 2);
    w << 1, 0, 1, 0, 0, 1;
    const auto s = cluster_weighted_summary({2.0, nan, nan}, w);
    CHECK(s[0].present);
    CHECK(s[0].mean == 2.0);
    CHECK_FALSE(s[1].present);
  }
}

TEST_CASE("ordinary least squares") {
  SUBCASE("three points") {
    Eigen::MatrixXd x(3, 2);
    x << 1, 0, 1, 1, 1, 2;
    const Eigen::Vector3d y(0, 1, 3);
    const auto fit = ols_regress(y, x, {"intercept", "x"});
    CHECK(fit.estimates[0] == doctest::Approx(-1.0 / 6.0));
    CHECK(fit.estimates[1] == doctest::Approx(1.5));
    CHECK(fit.df == 1);
    // residuals (1/6, -1/3, 1/6): sigma^2 = 1/6, se(slope) = sqrt(sigma^2 / Sxx) with Sxx = 2
    CHECK(fit.std_errors[1] == doctest::Approx(std::sqrt(1.0 / 12.0)));
    for (double p : fit.p_values) CHECK((p >= 0.0 && p <= 1.0));
  }
  SUBCASE("exact fit is degenerate") {
    Eigen::MatrixXd x(10, 2);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) {
      x(i, 0) = 1;
      x(i, 1) = i;
      y(i) = 2 * i + 1;
    }
    const auto fit = ols_regress(y, x, {"intercept", "x"});
    CHECK(fit.degenerate);
    CHECK(fit.estimates[0] == doctest::Approx(1.0));
    CHECK(fit.estimates[1] == doctest::Approx(2.0));
    CHECK(fit.std_errors[0] == 0.0);
    CHECK(fit.std_errors[1] == 0.0);
  }
  SUBCASE("residuals are orthogonal to the design") {
    Rng rng(6);
    Eigen::MatrixXd x(50, 4);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) {
      x.row(i) << 1, rng.normal(), rng.normal(10, 3), rng.uniform();
      y(i) = 3 + x(i, 1) - 0.5 * x(i, 2) + rng.normal();
    }
    const auto fit = ols_regress(y, x, {"a", "b", "c", "d"});
    const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(fit.estimates.data(), 4);
    const Eigen::VectorXd r = y - x * beta;
    for (int c = 0; c < 4; ++c) CHECK(std::abs(x.col(c).dot(r)) <= 1e-8 * x.col(c).norm() * y.norm());
    // Normal-equations oracle for the standard errors.
    const Eigen::MatrixXd inv = (x.transpose() * x).inverse();
    const double s2 = r.squaredNorm() / 46.0;
    for (int c = 0; c < 4; ++c) CHECK(fit.std_errors[static_cast<std::size_t>(c)] == doctest::Approx(std::sqrt(s2 * inv(c, c))).epsilon(1e-9));
  }
  SUBCASE("rank deficiency names the columns") {
    Eigen::MatrixXd x(6, 3);
    x << 1, 0, 1, 1, 1, 0, 1, 0, 1, 1, 1, 0, 1, 1, 0, 1, 0, 1;
    try {
      ols_regress(Eigen::VectorXd::LinSpaced(6, 0, 5), x, {"intercept", "cluster2", "cluster3"});
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("collinear") != std::string::npos);
      CHECK(std::string(e.what()).find("cluster") != std::string::npos);
    }
  }
  SUBCASE("t distribution") {
    CHECK(student_t_cdf(2.015, 5) == doctest::Approx(0.95).epsilon(1e-3));
    for (double t : {0.3, 1.0, 2.015, 4.0}) {
      CHECK(std::abs(student_t_cdf(t, 5) - t_cdf_quadrature(t, 5)) < 1e-10);
      CHECK(std::abs(student_t_cdf(-t, 7.5) - (1.0 - t_cdf_quadrature(t, 7.5))) < 1e-10);
    }
    CHECK(student_t_cdf(0.0, 3) == 0.5);
  }
}

TEST_CASE("cluster design matrix") {
  ClusterSolution s;
  s.k = 3;
  s.assignments = {0, 1, 2, 1};
  s.assign_probs = Eigen::MatrixXd(4, 3);
  s.assign_probs << 0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0, 0, 1, 0.3, 0.6, 0.1;
  Eigen::MatrixXd cov(4, 1);
  cov << 30, 40, 50, 60;
  std::vector<std::string> names;
  const auto hard = cluster_design(s, 1, DummyMode::Hard, cov, {"age"}, &names);
  CHECK(names == std::vector<std::string>{"intercept", "cluster1", "cluster3", "age"});
  CHECK(hard(0, 1) == 1.0);
  CHECK(hard(1, 1) == 0.0);
  CHECK(hard(2, 2) == 1.0);
  CHECK(hard(3, 3) == 60.0);
  const auto soft = cluster_design(s, 1, DummyMode::Probability, cov, {"age"}, &names);
  CHECK(soft(3, 1) == 0.3);
  CHECK_THROWS_AS(cluster_design(s, 3, DummyMode::Hard, cov, {"age"}, &names), ValidationError);
}

TEST_CASE("principal component projection") {
  SUBCASE("one axis") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(5, 10, 2.0);
    for (int i = 0; i < 5; ++i) x(i, 3) = i;
    const auto p = pca_projection(x);
    CHECK(std::abs(p.loading(3)) == doctest::Approx(1.0));
    CHECK(p.loading(3) > 0);
    for (int i = 0; i < 5; ++i) CHECK(p.scores(i) == doctest::Approx(i - 2.0));
    CHECK(p.explained == doctest::Approx(1.0));
  }
  SUBCASE("correlated pair") {
    Rng rng(12);
    Eigen::MatrixXd x(20000, 2);
    const double a = std::sqrt(1.5), b = std::sqrt(0.5);  // [[2,1],[1,2]] = (a u)(a u)^T + (b v)(b v)^T scaled
    for (int i = 0; i < x.rows(); ++i) {
      const double u = rng.normal(), v = rng.normal();
      x(i, 0) = a * u + b * v;
      x(i, 1) = a * u - b * v;
    }
    const auto p = pca_projection(x, {0, 1});
    CHECK(p.loading.norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.loading(0) == doctest::Approx(std::numbers::sqrt2 / 2).epsilon(0.01));
    CHECK(p.loading(1) == doctest::Approx(std::numbers::sqrt2 / 2).epsilon(0.01));
    CHECK(p.explained == doctest::Approx(0.75).epsilon(0.02));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(pca_projection(Eigen::MatrixXd::Ones(4, 10)), ValidationError);
    CHECK_THROWS_AS(pca_projection(Eigen::MatrixXd::Random(1, 10)), ValidationError);
  }
}

TEST_CASE("summary-statistic clustering") {
  std::vector<SleepRecord> records;
  std::vector<int> planted;
  for (int i = 0; i < 20; ++i) {
    const bool high = i % 2 == 1;
    records.push_back(block_record("p" + std::to_string(i), 100 + i % 3, 200 + i % 5, high ? 30 : 2, 5 + i % 2));
    planted.push_back(high ? 1 : 0);
  }
  const auto s = summary_stat_clustering(records, 2, 10, 1);
  CHECK(adjusted_rand_index(s.solution.assignments, planted) == 1.0);
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(s.standardized.col(c).mean()) < 1e-12);
    const double sd = std::sqrt(s.standardized.col(c).squaredNorm() / 19.0);
    CHECK(std::abs(sd - 1.0) < 1e-12);
  }
  const int hi = s.solution.assignments[1];
  CHECK(s.solution.centers(hi, 0) > 10.0);
  CHECK(s.solution.centers(1 - hi, 2) == doctest::Approx(s.features.col(2).mean()).epsilon(0.05));
  records[0] = block_record("p0", 100, 200, 2, 5);
  for (auto& r : records) r = block_record(r.patient_id, 100, 200 + static_cast<int>(r.patient_id.size()), 3, 4);
  CHECK_THROWS_AS(summary_stat_clustering(records, 2, 10, 1), ValidationError);
}

TEST_CASE("covariates file") {
  std::istringstream in("patient_id,BSRT,sex,age\np1,12.5,F,40\np2,NA,M,\np3,9,F,51\n");
  const auto t = parse_covariates(in);
  CHECK(t.patient_ids.size() == 3);
  CHECK_FALSE(t.column("BSRT").categorical);
  CHECK(std::isnan(t.column("BSRT").numeric[1]));
  CHECK(t.column("sex").categorical);
  CHECK(t.column("sex").levels[1] == "M");
  CHECK(std::isnan(t.column("age").numeric[1]));
  CHECK_THROWS_AS(t.column("nope"), ValidationError);
  std::istringstream dup("patient_id,x\np1,1\np1,2\n");
  CHECK_THROWS_AS(parse_covariates(dup), ParseError);
  std::istringstream bad("id,x\np1,1\n");
  CHECK_THROWS_AS(parse_covariates(bad), ParseError);
}

TEST_CASE("ppc does not depend on the thread count") {
  ScenarioConfig cfg;
  cfg.n_patients = 12;
  cfg.n_epochs = 200;
  const auto [records, truth] = generate_scenario(cfg);
  FixedEffects fx;
  fx.mu = truth.mu;
  fx.tau = truth.tau;
  fx.lambda = truth.lambda;
  const auto draws = point_mass(fx, truth.theta, truth.patient_ids, 20);
  PpcOptions one;
  one.n_sims_per_draw = 2;
  PpcOptions many = one;
  many.threads = 3;
  const auto a = posterior_predictive(draws, records, one);
  const auto b = posterior_predictive(draws, records, many);
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    for (int q = 0; q < kPpcStats; ++q) {
      CHECK(a.cells[i][static_cast<std::size_t>(q)].lower == b.cells[i][static_cast<std::size_t>(q)].lower);
      CHECK(a.cells[i][static_cast<std::size_t>(q)].mean == b.cells[i][static_cast<std::size_t>(q)].mean);
    }
}
