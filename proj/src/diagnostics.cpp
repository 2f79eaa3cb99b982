#include "somnus/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "somnus/error.hpp"

namespace somnus {

namespace {

void require_chains(const Eigen::MatrixXd& chains, Eigen::Index min_rows) {
  if (chains.cols() < 1 || chains.rows() < min_rows) {
    throw ValidationError("diagnostics: need at least " + std::to_string(min_rows) + " draws per chain");
  }
  if (!chains.allFinite()) throw NumericalError("diagnostics: non-finite draws");
}

double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 2) return 0.0;
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

// Autocovariance at `lag`, normalized by the chain length.
double autocov(const Eigen::Ref<const Eigen::VectorXd>& x, double mean, Eigen::Index lag) {
  const Eigen::Index n = x.size();
  double s = 0.0;
  for (Eigen::Index t = 0; t + lag < n; ++t) s += (x(t) - mean) * (x(t + lag) - mean);
  return s / static_cast<double>(n);
}

}  // namespace

EssResult effective_sample_size(const Eigen::MatrixXd& chains) {
  require_chains(chains, 4);
  const Eigen::Index n = chains.rows();
  const Eigen::Index m = chains.cols();
  if ((chains.array() == chains(0, 0)).all()) return {0.0, true};

  Eigen::VectorXd means(m), vars(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    means(c) = chains.col(c).mean();
    vars(c) = sample_variance(chains.col(c));
  }
  const double mean_var = vars.mean();
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += sample_variance(means);
  if (!(var_plus > 0.0)) return {0.0, true};

  auto mean_acov = [&](Eigen::Index lag) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) s += autocov(chains.col(c), means(c), lag);
    return s / static_cast<double>(m);
  };
  auto rho = [&](Eigen::Index lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  std::vector<double> rho_hat(static_cast<std::size_t>(n + 1), 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[1] = rho_odd;
  Eigen::Index s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0.0) {
    rho_even = rho(s + 1);
    rho_odd = rho(s + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[static_cast<std::size_t>(s + 1)] = rho_even;
      rho_hat[static_cast<std::size_t>(s + 2)] = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (rho_even > 0.0) rho_hat[static_cast<std::size_t>(max_s + 1)] = rho_even;

  for (Eigen::Index t = 1; t <= max_s - 3; t += 2) {
    const auto u = static_cast<std::size_t>(t);
    if (rho_hat[u + 1] + rho_hat[u + 2] > rho_hat[u - 1] + rho_hat[u]) {
      rho_hat[u + 1] = (rho_hat[u - 1] + rho_hat[u]) / 2.0;
      rho_hat[u + 2] = rho_hat[u + 1];
    }
  }

  double head = 0.0;
  for (Eigen::Index t = 0; t < max_s; ++t) head += rho_hat[static_cast<std::size_t>(t)];
  const double tau = -1.0 + 2.0 * head + rho_hat[static_cast<std::size_t>(max_s + 1)];
  const double total = static_cast<double>(n * m);
  return {std::min(total / tau, total * std::log10(total)), false};
}

RhatResult split_rhat(const Eigen::MatrixXd& chains) {
  require_chains(chains, 2);
  const Eigen::Index half = chains.rows() / 2;
  const Eigen::Index m = chains.cols();
  Eigen::MatrixXd split(half, 2 * m);
  for (Eigen::Index c = 0; c < m; ++c) {
    split.col(2 * c) = chains.col(c).head(half);
    split.col(2 * c + 1) = chains.col(c).tail(half);
  }
  Eigen::VectorXd means(2 * m), vars(2 * m);
  for (Eigen::Index c = 0; c < 2 * m; ++c) {
    means(c) = split.col(c).mean();
    vars(c) = sample_variance(split.col(c));
  }
  const double n = static_cast<double>(half);
  const double w = vars.mean();
  if (!(w > 0.0)) return {std::numeric_limits<double>::infinity(), true};
  const double b = n * sample_variance(means);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return {std::sqrt(var_plus / w), false};
}

EssResult effective_sample_size(const PosteriorDraws& draws, std::size_t param_index) {
  return effective_sample_size(draws.param_chains(param_index));
}

RhatResult split_rhat(const PosteriorDraws& draws, std::size_t param_index) {
  return split_rhat(draws.param_chains(param_index));
}

DiagnosticsReport diagnose(const PosteriorDraws& draws, bool fixed_only) {
  DiagnosticsReport report;
  const auto names = draws.layout().names(draws.patient_ids());
  const std::size_t count = fixed_only ? 10 : draws.dim();
  report.min_ess = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < count; ++p) {
    ParamDiagnostic d;
    d.name = names[p];
    const Eigen::MatrixXd chains = draws.param_chains(p);
    d.mean = chains.mean();
    d.sd = std::sqrt((chains.array() - d.mean).square().sum() / static_cast<double>(chains.size() - 1));
    d.ess = effective_sample_size(chains);
    d.rhat = split_rhat(chains);
    report.min_ess = std::min(report.min_ess, d.ess.value);
    report.max_rhat = std::max(report.max_rhat, d.rhat.value);
    report.params.push_back(std::move(d));
  }
  for (const auto& info : draws.chains) report.divergences.push_back(info.divergences);
  return report;
}

nlohmann::ordered_json to_json(const DiagnosticsReport& report) {
  nlohmann::ordered_json j;
  j["min_ess"] = report.min_ess;
  j["max_rhat"] = std::isfinite(report.max_rhat) ? nlohmann::ordered_json(report.max_rhat)
                                                 : nlohmann::ordered_json("inf");
  j["divergences"] = report.divergences;
  auto& params = j["params"] = nlohmann::ordered_json::array();
  for (const auto& d : report.params) {
    params.push_back({{"name", d.name},
                      {"mean", d.mean},
                      {"sd", d.sd},
                      {"ess", d.ess.value},
                      {"ess_degenerate", d.ess.degenerate},
                      {"rhat", std::isfinite(d.rhat.value) ? nlohmann::ordered_json(d.rhat.value)
                                                           : nlohmann::ordered_json("inf")},
                      {"rhat_flagged", d.rhat.flagged}});
  }
  return j;
}

}  // namespace somnus
