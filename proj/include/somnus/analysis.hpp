#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "somnus/cluster.hpp"
#include "somnus/nuts.hpp"
#include "somnus/records.hpp"

namespace somnus {

// ---- posterior predictive checks ----

enum PpcStat { kTimeREM = 0, kTimeNonREM, kEventsREM, kEventsNonREM, kAhiREM, kAhiNonREM };
inline constexpr int kPpcStats = 6;
inline constexpr std::array<const char*, kPpcStats> kPpcStatNames = {
    "time_rem_h", "time_nonrem_h", "events_rem", "events_nonrem", "ahi_rem", "ahi_nonrem"};

/// Time in REM / NonREM (hours), event counts and stage-specific AHI of a night.
std::array<double, kPpcStats> night_statistics(const SleepRecord& record);

struct PpcCell {
  double observed = 0.0;
  double mean = 0.0;
  double lower = 0.0;  // 2.5% quantile
  double upper = 0.0;  // 97.5% quantile
  bool covered = false;
  bool degenerate = false;  // lower == upper
};

struct PpcReport {
  std::vector<std::string> patient_ids;
  std::vector<std::array<PpcCell, kPpcStats>> cells;  // per patient
  std::array<double, kPpcStats> coverage{};
  std::vector<Exclusion> excluded;
  std::size_t n_draws_used = 0;
  std::size_t n_sims_per_draw = 0;
};

struct PpcOptions {
  std::size_t n_sims_per_draw = 1;
  /// Use at most this many draws, evenly spaced (0 = all).
  std::size_t max_draws = 0;
  std::uint64_t seed = 1;
  /// Durations used when neither the patient nor the cohort has any events.
  double fallback_duration_lo = 10.0;
  double fallback_duration_hi = 40.0;
  std::size_t threads = 1;
};

/// Replicates each patient's night from every used draw: the replicate starts
/// in the patient's first observed sleep stage and runs for their observed
/// number of sleep epochs; a move to Awake is replaced by a stage drawn
/// uniformly from the stages the patient entered after waking (their first
/// sleep stage if they never woke); event durations are resampled from the
/// patient's own durations in that stage, else from the whole cohort's.
/// Durations of events cut by a stage change or the end of the recording are
/// only used when the patient has no complete event in that stage.
PpcReport posterior_predictive(const PosteriorDraws& draws, const std::vector<SleepRecord>& records,
                               const PpcOptions& options);

nlohmann::ordered_json to_json(const PpcReport& report);
void write_ppc_csv(std::ostream& out, const PpcReport& report);

/// Type-7 (linear interpolation) sample quantile; sorts `values`.
double quantile(std::vector<double>& values, double p);

// ---- scree pre-fit ----

struct ScreeReport {
  Eigen::VectorXd eigenvalues;  // descending
  Eigen::VectorXd cumulative_fraction;
};

/// Eigenvalues of the sample covariance of the rows of `theta_means`.
ScreeReport scree_spectrum(const Eigen::MatrixXd& theta_means);

/// Fits the model with no factor columns (diagonal covariance) and returns the
/// scree spectrum of the posterior-mean random effects.
ScreeReport diagonal_prefit_scree(const SufficientStats& stats, const PriorSpec& priors, const SamplerConfig& cfg);

nlohmann::ordered_json to_json(const ScreeReport& report);

// ---- factor alignment ----

struct AlignedLoadings {
  Eigen::MatrixXd mean;    // 10 x k
  Eigen::MatrixXd lower;   // 2.5% quantile
  Eigen::MatrixXd upper;   // 97.5% quantile
  Eigen::MatrixXi flagged; // 1 where the 95% interval contains zero
  Eigen::MatrixXd zeroed;  // mean with flagged entries set to 0
  std::vector<Eigen::MatrixXd> draws;  // aligned loadings per draw
};

/// Removes column permutation and sign switching from the loadings draws.
/// The pivot is the first draw with each column's largest-|entry| made
/// positive; every draw's columns are greedily matched to the pivot by
/// absolute cosine similarity and sign-flipped to agree with it.
AlignedLoadings align_factors(const std::vector<Eigen::MatrixXd>& loadings);
AlignedLoadings align_factors(const PosteriorDraws& draws);

nlohmann::ordered_json to_json(const AlignedLoadings& a);

// ---- cluster summaries and regression ----

struct WeightedSummary {
  bool present = false;  // false when the cluster carries no weight
  double weight = 0.0;
  double mean = 0.0;
  double sd = 0.0;  // frequency-weight convention, NaN when weight <= 1
};

/// Per-cluster weighted mean and SD of `values` with weights from the columns
/// of `weights` (n x K). NaN values are dropped. The SD is
/// sqrt(sum w (x - mean)^2 / (sum w - 1)).
std::vector<WeightedSummary> cluster_weighted_summary(const std::vector<double>& values, const Eigen::MatrixXd& weights);

struct RegressionFit {
  std::vector<std::string> names;
  std::vector<double> estimates;
  std::vector<double> std_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  std::size_t n = 0;
  std::size_t df = 0;
  double sigma = 0.0;
  std::string weight_mode;
  bool degenerate = false;  // zero residual variance
};

/// Least squares via column-pivoted QR with classical standard errors and
/// two-sided t-test p values on n - p degrees of freedom. Throws a
/// ValidationError naming the collinear columns when the design is rank
/// deficient.
RegressionFit ols_regress(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const std::vector<std::string>& names);

/// P(T <= t) for Student's t with `df` degrees of freedom, via the regularized
/// incomplete beta function.
double student_t_cdf(double t, double df);

enum class DummyMode { Hard, Probability };

/// Design matrix: intercept, one column per non-reference cluster, then the
/// covariates. Hard mode uses 0/1 indicators of the assignment; probability
/// mode uses the assignment probabilities.
Eigen::MatrixXd cluster_design(const ClusterSolution& clusters, int reference, DummyMode mode,
                               const Eigen::MatrixXd& covariates, const std::vector<std::string>& covariate_names,
                               std::vector<std::string>* names);

struct PcaProjection {
  Eigen::VectorXd scores;   // first principal component score per patient
  Eigen::VectorXd loading;  // unit vector, largest-|entry| positive
  double explained = 0.0;   // share of total variance
};

/// PCA of the selected columns (default: the eight transition columns).
PcaProjection pca_projection(const Eigen::MatrixXd& theta_means, const std::vector<int>& columns = {0, 1, 2, 3, 4, 5, 6, 7});

// ---- summary-statistic baseline ----

inline constexpr std::array<const char*, 4> kSummaryFeatures = {"ahi_rem", "ahi_nonrem", "time_rem_h", "time_nonrem_h"};

struct SummaryClustering {
  Eigen::MatrixXd features;      // n x 4, original units
  Eigen::MatrixXd standardized;  // mean 0, sd 1 per column
  ClusterSolution solution;      // centers in original units
};

/// K-means on z-scored (REM AHI, NonREM AHI, time in REM, time in NonREM).
SummaryClustering summary_stat_clustering(const std::vector<SleepRecord>& records, int k, int restarts, std::uint64_t seed);

// ---- covariates ----

struct CovariateColumn {
  std::string name;
  bool categorical = false;
  std::vector<double> numeric;      // NaN for missing
  std::vector<std::string> levels;  // categorical values, "" for missing
};

struct CovariateTable {
  std::vector<std::string> patient_ids;
  std::vector<CovariateColumn> columns;
  const CovariateColumn& column(const std::string& name) const;
};

/// covars.csv: `patient_id,<name>,...`. A column is numeric when every
/// non-missing entry parses as a number; empty and NA entries are missing.
CovariateTable parse_covariates(std::istream& in);

}  // namespace somnus
