#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "somnus/nuts.hpp"
#include "somnus/rng.hpp"

namespace somnus {

/// m posterior draws of n patient vectors in R^d, stored draw-major.
class ThetaDraws {
 public:
  ThetaDraws() = default;
  ThetaDraws(std::size_t m, std::size_t n, std::size_t d);
  static ThetaDraws from_posterior(const PosteriorDraws& draws);
  /// One draw per matrix, each n x d.
  static ThetaDraws from_matrices(const std::vector<Eigen::MatrixXd>& draws);

  std::size_t n_draws() const { return m_; }
  std::size_t n_patients() const { return n_; }
  std::size_t dim() const { return d_; }
  double* at(std::size_t draw, std::size_t patient) { return &data_[(draw * n_ + patient) * d_]; }
  const double* at(std::size_t draw, std::size_t patient) const { return &data_[(draw * n_ + patient) * d_]; }
  Eigen::MatrixXd draw(std::size_t j) const;  // n x d
  Eigen::MatrixXd mean() const;               // n x d

 private:
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> data_;
};

struct KMeansResult {
  Eigen::MatrixXd centers;  // K x d
  std::vector<int> labels;  // 0-based
  double loss = 0.0;        // within-cluster sum of squares
};

/// Lloyd's algorithm from k-means++ starts, keeping the lowest-loss run. A
/// cluster emptied during the iterations is re-seeded at the point farthest
/// from its current center; a start that still ends with an empty cluster is
/// discarded, and if every start is discarded a ValidationError is thrown.
KMeansResult kmeans(const Eigen::MatrixXd& x, int k, int restarts, Rng& rng, int max_iter = 300);

/// Within-cluster sum of squares of `x` for fixed labels and centers.
double kmeans_loss(const Eigen::MatrixXd& x, const std::vector<int>& labels, const Eigen::MatrixXd& centers);

/// Centers as per-cluster means of the rows of `x`.
Eigen::MatrixXd cluster_means(const Eigen::MatrixXd& x, const std::vector<int>& labels, int k);

struct ClusterSolution {
  int k = 0;
  Eigen::MatrixXd centers;       // K x d
  std::vector<int> assignments;  // 0-based
  Eigen::MatrixXd assign_probs;  // n x K
  double expected_loss = 0.0;    // mean over draws of sum_i |theta_ij - b_{c_i}|^2
  /// True where the hard assignment is not a maximal-probability cluster.
  std::vector<bool> boundary;
};

/// Mean over draws of sum_i |theta_ij - b_{c_i}|^2.
double expected_kmeans_loss(const ThetaDraws& draws, const std::vector<int>& labels, const Eigen::MatrixXd& centers);

/// Fraction of draws in which each center is nearest to each patient; ties go
/// to the smallest center index.
Eigen::MatrixXd assignment_probabilities(const ThetaDraws& draws, const Eigen::MatrixXd& centers);

/// Bayes-optimal clustering under expected K-means loss: K-means on the
/// posterior means.
ClusterSolution posterior_mean_kmeans(const ThetaDraws& draws, int k, int restarts, std::uint64_t seed);

/// Default cap on n * d * m values for concatenated_kmeans.
inline constexpr std::size_t kConcatenatedCap = 50'000'000;

/// K-means on the concatenation of each patient's draws (one n x dm matrix).
/// Centers are reported in R^d as the mean over draws and members of each
/// cluster. Refuses inputs larger than `cap` values.
ClusterSolution concatenated_kmeans(const ThetaDraws& draws, int k, int restarts, std::uint64_t seed,
                                    std::size_t cap = kConcatenatedCap);

struct CoClustering {
  Eigen::MatrixXd matrix;              // n x n
  std::vector<double> ari_to_reference;  // per partition, empty without a reference
  double mean_ari = 0.0;
};

/// Fraction of partitions placing each pair together, and each partition's ARI
/// against `reference` when one is given.
CoClustering coclustering(const std::vector<std::vector<int>>& partitions, const std::vector<int>* reference);

/// K-means run separately on every draw, summarized by co-clustering.
CoClustering per_sample_kmeans_coclustering(const ThetaDraws& draws, int k, std::uint64_t seed,
                                            const std::vector<int>* reference, int restarts = 10);

/// Pair-counting adjusted Rand index.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct KSweepRow {
  int k = 0;
  double within_loss = 0.0;    // K-means loss on posterior means
  double expected_loss = 0.0;  // expected loss, posterior spread included
};

std::vector<KSweepRow> k_sweep(const ThetaDraws& draws, int k_max, int restarts, std::uint64_t seed);

/// clusters.json body; `column_names` label the center columns.
nlohmann::ordered_json to_json(const ClusterSolution& s, const std::vector<std::string>& patient_ids,
                               const std::vector<std::string>& column_names);
/// Reads assignments (1-based in the file) and assign_probs back.
ClusterSolution cluster_solution_from_json(const nlohmann::json& j, std::vector<std::string>* patient_ids);

}  // namespace somnus
