#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "somnus/density.hpp"
#include "somnus/stage.hpp"
#include "somnus/stats.hpp"

namespace somnus {

/// Population-level effects. mu and tau are indexed RA, RN, NA, NR; lambda is
/// the per-second event rate for (REM, NonREM).
struct FixedEffects {
  std::array<double, 4> mu{};
  std::array<double, 4> tau{};
  std::array<double, 2> lambda{};
};

/// Factor model for the random-effect covariance, Sigma = L L^T + diag(omega2).
struct FactorParams {
  Eigen::MatrixXd loadings;  // 10 x k
  Eigen::MatrixXd scores;    // n x k
  Eigen::VectorXd omega2;    // 10

  Eigen::MatrixXd covariance() const;
};

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};
struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};
struct InvGammaPrior {
  double shape = 1.0;
  double scale = 1.0;
};

struct PriorSpec {
  std::array<GammaPrior, 2> lambda;
  std::array<NormalPrior, 4> mu;
  std::array<NormalPrior, 4> tau;
  NormalPrior loading;
  std::array<InvGammaPrior, kThetaDim> omega2;

  /// lambda ~ Gamma(2, rate 50), mu, tau ~ N(0, 5^2), loadings ~ N(0, 1),
  /// omega^2 ~ Inv-Gamma(2, 1).
  static PriorSpec defaults();
  void validate() const;
};

/// priors.json: each of "lambda", "mu", "tau", "loading", "omega2" is either a
/// single {"family": ..., hyperparameters} object applied to every entry or an
/// array with one object per entry. Missing keys keep the defaults.
PriorSpec priors_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PriorSpec& priors);

std::array<double, 3> softmax3(const std::array<double, 3>& logits);

/// Next-stage probabilities (Awake, REM, NonREM) out of sleep stage `from` with
/// event status `h`. `theta` is a 10-vector of random effects.
std::array<double, 3> transition_probs(const std::array<double, 4>& mu,
                                       const std::array<double, 4>& tau,
                                       std::span<const double> theta, int h, Stage from);

/// Multinomial transition terms plus Poisson event-count terms, dropping the
/// multinomial coefficients and log(v!). `theta` is n x 10.
double log_likelihood(const SufficientStats& stats, const FixedEffects& fx,
                      const Eigen::MatrixXd& theta);

/// Packing of the unconstrained state:
///   mu(4) tau(4) log_lambda(2) loadings(10 x k, row-major) eta(n x k, row-major)
///   log_omega2(10) z(n x 10, row-major)
/// with theta_i = L eta_i + omega .* z_i.
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(std::size_t n_patients, std::size_t n_factors);

  std::size_t n_patients() const { return n_; }
  std::size_t n_factors() const { return k_; }
  std::size_t dim() const { return z_ + kThetaDim * n_; }

  static constexpr std::size_t mu() { return 0; }
  static constexpr std::size_t tau() { return 4; }
  static constexpr std::size_t log_lambda() { return 8; }
  static constexpr std::size_t loadings() { return 10; }
  std::size_t loading(std::size_t row, std::size_t factor) const { return 10 + row * k_ + factor; }
  std::size_t eta(std::size_t patient, std::size_t factor) const { return eta_ + patient * k_ + factor; }
  std::size_t log_omega2() const { return log_omega2_; }
  std::size_t z(std::size_t patient, std::size_t col) const { return z_ + patient * kThetaDim + col; }

  std::vector<std::string> names(const std::vector<std::string>& patient_ids) const;

  FixedEffects fixed_effects(std::span<const double> x) const;
  FactorParams factors(std::span<const double> x) const;
  Eigen::MatrixXd residuals(std::span<const double> x) const;  // z, n x 10
  Eigen::MatrixXd theta(std::span<const double> x) const;      // n x 10

  std::vector<double> pack(const FixedEffects& fx, const FactorParams& factors,
                           const Eigen::MatrixXd& z) const;

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::size_t eta_ = 10;
  std::size_t log_omega2_ = 10;
  std::size_t z_ = 20;
};

struct LogPosteriorTerms {
  double likelihood = 0.0;
  double prior = 0.0;     // includes the standard-normal terms on eta and z
  double jacobian = 0.0;  // log |d(lambda, omega2) / d(log lambda, log omega2)|
  double total() const { return likelihood + prior + jacobian; }
};

/// Joint log posterior of the hierarchical model in the unconstrained packing.
class PosteriorModel final : public LogDensity {
 public:
  PosteriorModel(const SufficientStats& stats, PriorSpec priors, std::size_t n_factors);

  std::size_t dim() const override { return layout_.dim(); }
  double log_density_gradient(std::span<const double> x, std::span<double> grad) const override;

  double log_posterior(std::span<const double> x) const;
  LogPosteriorTerms terms(std::span<const double> x) const;

  const ParamLayout& layout() const { return layout_; }
  const PriorSpec& priors() const { return priors_; }

 private:
  struct PatientData {
    double counts[2][2][3];
    double at_risk[2][2];
    double events[2];
    double exposure[2];
  };

  double evaluate(std::span<const double> x, double* grad, LogPosteriorTerms* terms) const;

  std::vector<PatientData> data_;
  PriorSpec priors_;
  ParamLayout layout_;
};

}  // namespace somnus
