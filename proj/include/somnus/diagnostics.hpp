#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "somnus/nuts.hpp"

namespace somnus {

struct EssResult {
  double value = 0.0;
  bool degenerate = false;  // every chain constant
};

struct RhatResult {
  double value = 1.0;
  bool flagged = false;  // zero within-chain variance
};

/// Effective sample size of an n_samples x n_chains matrix, pooled across
/// chains with Geyer's initial positive sequence made monotone.
EssResult effective_sample_size(const Eigen::MatrixXd& chains);
EssResult effective_sample_size(const PosteriorDraws& draws, std::size_t param_index);

/// Split R-hat: each chain is cut in two halves (the middle draw of an odd
/// chain is dropped) and R = sqrt(((n-1)/n W + B/n) / W).
RhatResult split_rhat(const Eigen::MatrixXd& chains);
RhatResult split_rhat(const PosteriorDraws& draws, std::size_t param_index);

struct ParamDiagnostic {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  EssResult ess;
  RhatResult rhat;
};

struct DiagnosticsReport {
  std::vector<ParamDiagnostic> params;
  std::vector<std::size_t> divergences;  // per chain, post-warmup
  double min_ess = 0.0;
  double max_rhat = 0.0;
};

/// Diagnostics for the named parameters. With `fixed_only` set, only mu, tau and
/// log lambda are reported; otherwise every stored coordinate is.
DiagnosticsReport diagnose(const PosteriorDraws& draws, bool fixed_only);
nlohmann::ordered_json to_json(const DiagnosticsReport& report);

}  // namespace somnus
