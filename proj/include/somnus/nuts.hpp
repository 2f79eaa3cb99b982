#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "somnus/density.hpp"
#include "somnus/model.hpp"
#include "somnus/rng.hpp"

namespace somnus {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SamplerConfig {
  int n_chains = 4;
  int n_warmup = 1000;
  int n_samples = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  double init_scale = 0.5;
  /// Upper bound on chains run concurrently. Output does not depend on it.
  int threads = 1;

  void validate() const;
};

nlohmann::json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

/// Position, momentum and cached gradient of a Hamiltonian trajectory point.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};

/// Potential plus kinetic energy for a diagonal inverse metric.
double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);

/// One velocity-Verlet step of size `eps` (negative to integrate backwards).
void leapfrog(const LogDensity& target, PhasePoint& z, double eps, const Eigen::VectorXd& inv_metric);

struct ChainInfo {
  double step_size = 0.0;
  double mean_accept_stat = 0.0;   // post-warmup
  std::size_t divergences = 0;     // post-warmup
  std::size_t warmup_divergences = 0;
  double mean_tree_depth = 0.0;
  std::size_t n_leapfrog = 0;      // total, warmup included
  std::size_t max_depth_hits = 0;  // post-warmup transitions that hit max_tree_depth
  std::vector<double> inv_metric;
};

nlohmann::json to_json(const ChainInfo& info);
ChainInfo chain_info_from_json(const nlohmann::json& j);

struct ChainResult {
  RowMatrix draws;  // n_samples x dim
  ChainInfo info;
};

/// Runs chain `chain` of `cfg` on `target`: windowed diagonal-metric and
/// dual-averaging step-size adaptation during warmup, then dynamic-length
/// trajectories with multinomial sampling and a no-U-turn stop rule.
/// Chain c draws from its own stream Rng::stream(cfg.seed, c).
ChainResult run_chain(const LogDensity& target, const SamplerConfig& cfg, std::size_t chain);

/// All chains, returned in chain order.
std::vector<ChainResult> run_chains(const LogDensity& target, const SamplerConfig& cfg);

/// Retained draws of the hierarchical model, stored in the unconstrained packing.
class PosteriorDraws {
 public:
  PosteriorDraws() = default;
  PosteriorDraws(ParamLayout layout, std::vector<std::string> patient_ids, std::size_t n_chains,
                 std::size_t n_samples, RowMatrix values);

  const ParamLayout& layout() const { return layout_; }
  const std::vector<std::string>& patient_ids() const { return patient_ids_; }
  std::size_t n_chains() const { return n_chains_; }
  std::size_t n_samples() const { return n_samples_; }
  std::size_t n_draws() const { return n_chains_ * n_samples_; }
  std::size_t dim() const { return layout_.dim(); }
  const RowMatrix& values() const { return values_; }

  /// Draw `s` of chain `c` lives in row c * n_samples + s.
  std::span<const double> row(std::size_t r) const;

  FixedEffects fixed_effects(std::size_t r) const { return layout_.fixed_effects(row(r)); }
  FactorParams factors(std::size_t r) const { return layout_.factors(row(r)); }
  Eigen::MatrixXd theta(std::size_t r) const { return layout_.theta(row(r)); }
  Eigen::MatrixXd theta_mean() const;

  /// n_samples x n_chains matrix of a scalar summary of each draw.
  template <typename F>
  Eigen::MatrixXd chains_of(F&& f) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n_samples_), static_cast<Eigen::Index>(n_chains_));
    for (std::size_t c = 0; c < n_chains_; ++c) {
      for (std::size_t s = 0; s < n_samples_; ++s) out(s, c) = f(row(c * n_samples_ + s));
    }
    return out;
  }
  Eigen::MatrixXd param_chains(std::size_t param_index) const;

  std::vector<ChainInfo> chains;
  SamplerConfig config;
  std::vector<std::string> warnings;
  bool flagged = false;

 private:
  ParamLayout layout_;
  std::vector<std::string> patient_ids_;
  std::size_t n_chains_ = 0;
  std::size_t n_samples_ = 0;
  RowMatrix values_;
};

/// Fits the hierarchical model with `n_factors` loadings columns. A post-warmup
/// divergence rate above 10% sets `flagged` and adds a warning.
PosteriorDraws sample(const SufficientStats& stats, const PriorSpec& priors, std::size_t n_factors,
                      const SamplerConfig& cfg);

}  // namespace somnus
