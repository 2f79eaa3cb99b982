#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "somnus/records.hpp"
#include "somnus/rng.hpp"

namespace somnus {

enum class Scenario { S1, S2, S3 };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Settings for one synthetic cohort. Defaults reproduce the published
/// simulation design at full scale (1000 patients x 1000 epochs).
struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  int n_patients = 1000;
  int n_epochs = 1000;
  int n_factors = 3;
  std::uint64_t seed = 1;

  Range mu{-4.0, -2.0};
  Range tau{0.0, 1.0};
  Range lambda{0.01, 0.03};  // events per second
  Range mu_awake{-3.0, -1.0};
  double loading_var = 0.2;
  double idiosyncratic_var = 0.2;

  // Scenario 2: linear drift per epoch
  Range s2_mu_intercept{-4.0, -3.0};
  Range s2_mu_slope{-0.001, 0.001};
  Range s2_lambda_intercept{0.01, 0.03};
  Range s2_lambda_slope{-0.00001, 0.00001};

  // Scenario 3: Gaussian mixture random effects
  int s3_components = 4;
  double s3_center_var = 0.25;
  double s3_component_var = 0.25;

  Range event_duration{10.0, 40.0};
  double outcome_sd = 0.2;
  Stage initial_stage = Stage::NonREM;

  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& cfg);
/// Unknown keys are rejected; missing keys keep their defaults.
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);

struct GroundTruth {
  Scenario scenario = Scenario::S1;
  std::vector<std::string> patient_ids;
  std::array<double, 4> mu{};  // intercepts in S2
  std::array<double, 4> tau{};
  std::array<double, 2> lambda{};  // intercepts in S2
  std::array<double, 2> mu_awake{};  // (AR, AN)
  std::array<double, 4> mu_slope{};
  std::array<double, 2> lambda_slope{};
  Eigen::MatrixXd loadings;             // 10 x k
  Eigen::VectorXd idiosyncratic;        // 10
  Eigen::MatrixXd theta;                // n x 10
  std::vector<int> assignments;         // S3, 0-based component per patient
  Eigen::MatrixXd component_means;      // S3, components x 10 (before centering)

  /// L L^T + diag(idiosyncratic); meaningful for S1 and S2.
  Eigen::MatrixXd covariance() const;
};

nlohmann::ordered_json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::ordered_json& j);

/// Per-epoch dynamics driving simulate_night.
struct NightModel {
  /// Probabilities of (Awake, REM, NonREM) at epoch+1 given the stage and event
  /// status of `epoch`.
  std::function<std::array<double, 3>(Stage from, int h, std::size_t epoch)> next_stage;
  /// Event rate per second in a sleep stage, constant within an epoch.
  std::function<double(Stage stage, std::size_t epoch)> event_rate;
  std::function<double(Stage stage, Rng& rng)> event_duration;
  /// When set, Awake is never emitted: a drawn transition to Awake is replaced
  /// by the sleep stage this returns, and only sleep epochs are counted.
  std::function<Stage(Rng& rng)> after_wake;
};

/// Simulates one night of `n_epochs` epochs. Events follow a per-stage
/// exponential clock on event-free sleep time (gaps are end-to-start); the
/// clock resets and any ongoing event is cut on a stage change.
SleepRecord simulate_night(const NightModel& model, Stage initial, std::size_t n_epochs, Rng& rng,
                           std::string patient_id = {});

std::string patient_id_for(std::size_t index, std::size_t n_patients);

std::pair<std::vector<SleepRecord>, GroundTruth> generate_scenario(const ScenarioConfig& cfg);

struct Outcome {
  std::string patient_id;
  double y = 0.0;
};

struct OutcomeSet {
  std::vector<Outcome> outcomes;
  std::vector<double> component_means;  // permutation of 1..K
};

/// Outcome variable sharing the S3 mixture assignments; throws for truths
/// without assignments.
OutcomeSet generate_outcomes(const GroundTruth& truth, const ScenarioConfig& cfg);

}  // namespace somnus
