#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnus/model.hpp"
#include "somnus/nuts.hpp"
#include "somnus/simulate.hpp"

namespace somnus {

// Recovery metrics of one fit against its simulation truth. Fixed effects are
// (mu, tau, lambda) on the natural scale; covariance entries are the 55
// distinct entries of Sigma = L L^T + diag(omega2); random effects are all
// n x 10 entries of theta. Coverage uses central 95% intervals.
struct RecoveryMetrics {
  bool fixed_applicable = true;       // false for Scenario 2
  bool covariance_applicable = true;  // false for Scenario 3
  double fixed_mse = 0.0;
  std::size_t fixed_covered = 0, fixed_count = 0;
  double covariance_mse = 0.0;
  std::size_t covariance_covered = 0, covariance_count = 0;
  double random_mse = 0.0;
  std::size_t random_covered = 0, random_count = 0;
  std::size_t divergences = 0;
};

RecoveryMetrics recovery_metrics(const PosteriorDraws& draws, const GroundTruth& truth);

struct Table1Config {
  ScenarioConfig scenario;
  SamplerConfig sampler;
  PriorSpec priors = PriorSpec::defaults();
  std::size_t n_factors = 3;
  int replications = 20;
  std::uint64_t seed = 1;
};

struct Table1Report {
  Scenario scenario = Scenario::S1;
  std::vector<RecoveryMetrics> replications;
  // Pooled over replications; NaN when not applicable.
  double fixed_mse = 0.0, fixed_coverage = 0.0;
  double covariance_mse = 0.0, covariance_coverage = 0.0;
  double random_mse = 0.0, random_coverage = 0.0;
};

using Progress = std::function<void(int replication, double seconds)>;

/// Replication r simulates with seed derive_seed(seed, r, 1) and samples with
/// derive_seed(seed, r, 2).
Table1Report run_table1(const Table1Config& cfg, const Progress& progress = {});
Table1Report summarize_table1(Scenario scenario, std::vector<RecoveryMetrics> reps);

struct ClusteringComparison {
  double ari_theta = 0.0;
  double ari_summary = 0.0;
  double within_variance_theta = 0.0;
  double within_variance_summary = 0.0;
};

/// Pooled within-cluster variance: sum over clusters of squared deviations from
/// the cluster mean, divided by n.
double within_cluster_variance(const std::vector<double>& y, const std::vector<int>& labels, int k);

struct Table2Config {
  ScenarioConfig scenario;  // forced to Scenario 3
  SamplerConfig sampler;
  PriorSpec priors = PriorSpec::defaults();
  std::size_t n_factors = 3;
  int k = 4;
  int restarts = 20;
  int replications = 20;
  std::uint64_t seed = 1;
};

struct Table2Report {
  std::vector<ClusteringComparison> replications;
  double mean_ari_theta = 0.0, mean_ari_summary = 0.0;
  double mean_within_theta = 0.0, mean_within_summary = 0.0;
  int theta_better_ari = 0;     // replications with ari_theta > ari_summary
  int theta_lower_within = 0;   // replications with a lower within-cluster variance
};

ClusteringComparison compare_clusterings(const std::vector<SleepRecord>& records, const GroundTruth& truth,
                                         const std::vector<double>& outcomes, const PosteriorDraws& draws, int k,
                                         int restarts, std::uint64_t seed);
Table2Report run_table2(const Table2Config& cfg, const Progress& progress = {});
Table2Report summarize_table2(std::vector<ClusteringComparison> reps);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t replication, std::uint64_t purpose);

nlohmann::ordered_json to_json(const Table1Report& r);
nlohmann::ordered_json to_json(const Table2Report& r);

}  // namespace somnus
