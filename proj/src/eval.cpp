#include "somnus/eval.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "somnus/analysis.hpp"
#include "somnus/cluster.hpp"
#include "somnus/error.hpp"
#include "somnus/rng.hpp"
#include "somnus/stats.hpp"

namespace somnus {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct IntervalTally {
  double sq_error = 0.0;
  std::size_t covered = 0;
  std::size_t count = 0;

  // `values` is consumed (sorted).
  void add(std::vector<double>& values, double truth) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    sq_error += (mean - truth) * (mean - truth);
    const double lo = quantile(values, 0.025);
    const double hi = quantile(values, 0.975);
    covered += truth >= lo && truth <= hi;
    ++count;
  }
  double mse() const { return count ? sq_error / static_cast<double>(count) : kNaN; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t replication, std::uint64_t purpose) {
  return Rng::stream(seed, replication, 40 + purpose).engine()();
}

RecoveryMetrics recovery_metrics(const PosteriorDraws& draws, const GroundTruth& truth) {
  RecoveryMetrics m;
  m.fixed_applicable = truth.scenario != Scenario::S2;
  m.covariance_applicable = truth.scenario != Scenario::S3;
  for (const auto& c : draws.chains) m.divergences += c.divergences;
  const std::size_t nd = draws.n_draws();
  std::vector<double> buf(nd);

  if (m.fixed_applicable) {
    IntervalTally t;
    std::vector<FixedEffects> fx(nd);
    for (std::size_t r = 0; r < nd; ++r) fx[r] = draws.fixed_effects(r);
    for (int p = 0; p < 10; ++p) {
      double truth_value = 0.0;
      for (std::size_t r = 0; r < nd; ++r) {
        if (p < 4) {
          buf[r] = fx[r].mu[static_cast<std::size_t>(p)];
        } else if (p < 8) {
          buf[r] = fx[r].tau[static_cast<std::size_t>(p - 4)];
        } else {
          buf[r] = fx[r].lambda[static_cast<std::size_t>(p - 8)];
        }
      }
      if (p < 4) {
        truth_value = truth.mu[static_cast<std::size_t>(p)];
      } else if (p < 8) {
        truth_value = truth.tau[static_cast<std::size_t>(p - 4)];
      } else {
        truth_value = truth.lambda[static_cast<std::size_t>(p - 8)];
      }
      t.add(buf, truth_value);
    }
    m.fixed_mse = t.mse();
    m.fixed_covered = t.covered;
    m.fixed_count = t.count;
  }

  if (m.covariance_applicable) {
    const Eigen::MatrixXd sigma = truth.covariance();
    std::vector<Eigen::MatrixXd> cov(nd);
    for (std::size_t r = 0; r < nd; ++r) cov[r] = draws.factors(r).covariance();
    IntervalTally t;
    for (Eigen::Index a = 0; a < 10; ++a) {
      for (Eigen::Index b = a; b < 10; ++b) {
        for (std::size_t r = 0; r < nd; ++r) buf[r] = cov[r](a, b);
        t.add(buf, sigma(a, b));
      }
    }
    m.covariance_mse = t.mse();
    m.covariance_covered = t.covered;
    m.covariance_count = t.count;
  }

  std::unordered_map<std::string, Eigen::Index> truth_row;
  for (std::size_t i = 0; i < truth.patient_ids.size(); ++i) truth_row[truth.patient_ids[i]] = static_cast<Eigen::Index>(i);
  const std::size_t n = draws.patient_ids().size();
  // n x 10 blocks per draw, stored draw-major.
  std::vector<Eigen::MatrixXd> theta(nd);
  for (std::size_t r = 0; r < nd; ++r) theta[r] = draws.theta(r);
  IntervalTally t;
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = truth_row.find(draws.patient_ids()[i]);
    if (it == truth_row.end()) throw ValidationError("patient " + draws.patient_ids()[i] + " is not in the truth");
    for (Eigen::Index c = 0; c < 10; ++c) {
      for (std::size_t r = 0; r < nd; ++r) buf[r] = theta[r](static_cast<Eigen::Index>(i), c);
      t.add(buf, truth.theta(it->second, c));
    }
  }
  m.random_mse = t.mse();
  m.random_covered = t.covered;
  m.random_count = t.count;
  return m;
}

Table1Report summarize_table1(Scenario scenario, std::vector<RecoveryMetrics> reps) {
  Table1Report out;
  out.scenario = scenario;
  out.replications = std::move(reps);
  double fm = 0, cm = 0, rm = 0;
  std::size_t fc = 0, fn = 0, cc = 0, cn = 0, rc = 0, rn = 0;
  for (const auto& m : out.replications) {
    if (m.fixed_applicable) {
      fm += m.fixed_mse * static_cast<double>(m.fixed_count);
      fc += m.fixed_covered;
      fn += m.fixed_count;
    }
    if (m.covariance_applicable) {
      cm += m.covariance_mse * static_cast<double>(m.covariance_count);
      cc += m.covariance_covered;
      cn += m.covariance_count;
    }
    rm += m.random_mse * static_cast<double>(m.random_count);
    rc += m.random_covered;
    rn += m.random_count;
  }
  auto ratio = [](double a, std::size_t b) { return b ? a / static_cast<double>(b) : kNaN; };
  out.fixed_mse = ratio(fm, fn);
  out.fixed_coverage = ratio(static_cast<double>(fc), fn);
  out.covariance_mse = ratio(cm, cn);
  out.covariance_coverage = ratio(static_cast<double>(cc), cn);
  out.random_mse = ratio(rm, rn);
  out.random_coverage = ratio(static_cast<double>(rc), rn);
  return out;
}

Table1Report run_table1(const Table1Config& cfg, const Progress& progress) {
  if (cfg.replications < 1) throw ValidationError("table1: replications must be >= 1");
  std::vector<RecoveryMetrics> reps;
  for (int r = 0; r < cfg.replications; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig sc = cfg.scenario;
    sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 1);
    const auto [records, truth] = generate_scenario(sc);
    SamplerConfig smp = cfg.sampler;
    smp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 2);
    const auto draws = sample(derive_sufficient_stats(records), cfg.priors, cfg.n_factors, smp);
    reps.push_back(recovery_metrics(draws, truth));
    if (progress) progress(r, seconds_since(t0));
  }
  return summarize_table1(cfg.scenario.scenario, std::move(reps));
}

double within_cluster_variance(const std::vector<double>& y, const std::vector<int>& labels, int k) {
  if (y.size() != labels.size() || y.empty()) throw ValidationError("within-cluster variance: length mismatch");
  std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum[static_cast<std::size_t>(labels[i])] += y[i];
    ++count[static_cast<std::size_t>(labels[i])];
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const double d = y[i] - sum[c] / static_cast<double>(count[c]);
    ss += d * d;
  }
  return ss / static_cast<double>(y.size());
}

ClusteringComparison compare_clusterings(const std::vector<SleepRecord>& records, const GroundTruth& truth,
                                         const std::vector<double>& outcomes, const PosteriorDraws& draws, int k,
                                         int restarts, std::uint64_t seed) {
  if (truth.assignments.size() != truth.patient_ids.size() || outcomes.size() != truth.patient_ids.size()) {
    throw ValidationError("clustering comparison needs mixture assignments and one outcome per patient");
  }
  if (draws.patient_ids() != truth.patient_ids) throw ValidationError("draws and truth list different patients");
  std::vector<std::string> record_ids;
  for (const auto& r : records) record_ids.push_back(r.patient_id);
  if (record_ids != truth.patient_ids) throw ValidationError("records and truth list different patients");

  ClusteringComparison c;
  const auto theta = posterior_mean_kmeans(ThetaDraws::from_posterior(draws), k, restarts, seed);
  const auto summary = summary_stat_clustering(records, k, restarts, seed);
  c.ari_theta = adjusted_rand_index(theta.assignments, truth.assignments);
  c.ari_summary = adjusted_rand_index(summary.solution.assignments, truth.assignments);
  c.within_variance_theta = within_cluster_variance(outcomes, theta.assignments, k);
  c.within_variance_summary = within_cluster_variance(outcomes, summary.solution.assignments, k);
  return c;
}

Table2Report summarize_table2(std::vector<ClusteringComparison> reps) {
  Table2Report out;
  out.replications = std::move(reps);
  for (const auto& c : out.replications) {
    out.mean_ari_theta += c.ari_theta;
    out.mean_ari_summary += c.ari_summary;
    out.mean_within_theta += c.within_variance_theta;
    out.mean_within_summary += c.within_variance_summary;
    out.theta_better_ari += c.ari_theta > c.ari_summary;
    out.theta_lower_within += c.within_variance_theta < c.within_variance_summary;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(out.replications.size(), 1));
  out.mean_ari_theta /= n;
  out.mean_ari_summary /= n;
  out.mean_within_theta /= n;
  out.mean_within_summary /= n;
  return out;
}

Table2Report run_table2(const Table2Config& cfg, const Progress& progress) {
  if (cfg.replications < 1) throw ValidationError("table2: replications must be >= 1");
  std::vector<ClusteringComparison> reps;
  for (int r = 0; r < cfg.replications; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig sc = cfg.scenario;
    sc.scenario = Scenario::S3;
    sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 1);
    const auto [records, truth] = generate_scenario(sc);
    const auto outcome_set = generate_outcomes(truth, sc);
    std::vector<double> y;
    for (const auto& o : outcome_set.outcomes) y.push_back(o.y);
    SamplerConfig smp = cfg.sampler;
    smp.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 2);
    const auto draws = sample(derive_sufficient_stats(records), cfg.priors, cfg.n_factors, smp);
    reps.push_back(compare_clusterings(records, truth, y, draws, cfg.k, cfg.restarts,
                                       derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 3)));
    if (progress) progress(r, seconds_since(t0));
  }
  return summarize_table2(std::move(reps));
}

nlohmann::ordered_json to_json(const Table1Report& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  nlohmann::ordered_json j;
  j["scenario"] = scenario_name(r.scenario);
  j["replications"] = r.replications.size();
  j["fixed_effect_mse"] = num(r.fixed_mse);
  j["fixed_effect_coverage"] = num(r.fixed_coverage);
  j["covariance_mse"] = num(r.covariance_mse);
  j["covariance_coverage"] = num(r.covariance_coverage);
  j["random_effect_mse"] = num(r.random_mse);
  j["random_effect_coverage"] = num(r.random_coverage);
  auto& per = j["per_replication"] = nlohmann::ordered_json::array();
  for (const auto& m : r.replications) {
    per.push_back({{"fixed_effect_mse", m.fixed_applicable ? num(m.fixed_mse) : nullptr},
                   {"fixed_effect_coverage", m.fixed_applicable ? num(static_cast<double>(m.fixed_covered) / static_cast<double>(m.fixed_count)) : nullptr},
                   {"covariance_mse", m.covariance_applicable ? num(m.covariance_mse) : nullptr},
                   {"covariance_coverage", m.covariance_applicable ? num(static_cast<double>(m.covariance_covered) / static_cast<double>(m.covariance_count)) : nullptr},
                   {"random_effect_mse", num(m.random_mse)},
                   {"random_effect_coverage", num(static_cast<double>(m.random_covered) / static_cast<double>(m.random_count))},
                   {"divergences", m.divergences}});
  }
  return j;
}

nlohmann::ordered_json to_json(const Table2Report& r) {
  nlohmann::ordered_json j;
  j["replications"] = r.replications.size();
  j["mean_ari_theta"] = r.mean_ari_theta;
  j["mean_ari_summary"] = r.mean_ari_summary;
  j["mean_within_variance_theta"] = r.mean_within_theta;
  j["mean_within_variance_summary"] = r.mean_within_summary;
  j["theta_better_ari"] = r.theta_better_ari;
  j["theta_lower_within_variance"] = r.theta_lower_within;
  auto& per = j["per_replication"] = nlohmann::ordered_json::array();
  for (const auto& c : r.replications) {
    per.push_back({{"ari_theta", c.ari_theta},
                   {"ari_summary", c.ari_summary},
                   {"within_variance_theta", c.within_variance_theta},
                   {"within_variance_summary", c.within_variance_summary}});
  }
  return j;
}

}  // namespace somnus
