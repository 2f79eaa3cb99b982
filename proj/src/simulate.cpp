#include "somnus/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "somnus/error.hpp"
#include "somnus/model.hpp"

namespace somnus {

namespace {

constexpr std::uint64_t kGlobalTag = 1;
constexpr std::uint64_t kThetaTag = 2;
constexpr std::uint64_t kNightTag = 3;
constexpr std::uint64_t kOutcomeTag = 4;

void check_range(const Range& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw ValidationError(std::string("config: range ") + name + " needs finite lo <= hi");
  }
}

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite simulated ") + what);
}

Stage draw_stage(const std::array<double, 3>& probs, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (int s = 0; s < 2; ++s) {
    acc += probs[s];
    if (u < acc) return static_cast<Stage>(s);
  }
  return Stage::NonREM;
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("config: ranges are [lo, hi] arrays");
  return Range{j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::S1: return "S1";
    case Scenario::S2: return "S2";
    case Scenario::S3: return "S3";
  }
  return "S1";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "S1") return Scenario::S1;
  if (name == "S2") return Scenario::S2;
  if (name == "S3") return Scenario::S3;
  throw ValidationError("unknown scenario '" + name + "' (expected S1, S2 or S3)");
}

void ScenarioConfig::validate() const {
  if (n_patients < 1) throw ValidationError("config: n_patients must be >= 1");
  if (n_epochs < 1) throw ValidationError("config: n_epochs must be >= 1");
  if (n_factors < 0) throw ValidationError("config: n_factors must be >= 0");
  check_range(mu, "mu");
  check_range(tau, "tau");
  check_range(lambda, "lambda");
  check_range(mu_awake, "mu_awake");
  check_range(s2_mu_intercept, "s2_mu_intercept");
  check_range(s2_mu_slope, "s2_mu_slope");
  check_range(s2_lambda_intercept, "s2_lambda_intercept");
  check_range(s2_lambda_slope, "s2_lambda_slope");
  check_range(event_duration, "event_duration");
  if (lambda.lo < 0 || s2_lambda_intercept.lo < 0) throw ValidationError("config: event rates must be >= 0");
  if (event_duration.lo <= 0) throw ValidationError("config: event durations must be > 0");
  if (loading_var < 0 || idiosyncratic_var < 0 || s3_center_var < 0 || s3_component_var < 0 ||
      outcome_sd < 0) {
    throw ValidationError("config: variances must be >= 0");
  }
  if (s3_components < 2) throw ValidationError("config: s3_components must be >= 2");
  if (!is_sleep(initial_stage)) throw ValidationError("config: initial_stage must be R or N");
}

nlohmann::json to_json(const ScenarioConfig& c) {
  return {{"scenario", scenario_name(c.scenario)},
          {"n_patients", c.n_patients},
          {"n_epochs", c.n_epochs},
          {"n_factors", c.n_factors},
          {"seed", c.seed},
          {"mu", range_json(c.mu)},
          {"tau", range_json(c.tau)},
          {"lambda", range_json(c.lambda)},
          {"mu_awake", range_json(c.mu_awake)},
          {"loading_var", c.loading_var},
          {"idiosyncratic_var", c.idiosyncratic_var},
          {"s2_mu_intercept", range_json(c.s2_mu_intercept)},
          {"s2_mu_slope", range_json(c.s2_mu_slope)},
          {"s2_lambda_intercept", range_json(c.s2_lambda_intercept)},
          {"s2_lambda_slope", range_json(c.s2_lambda_slope)},
          {"s3_components", c.s3_components},
          {"s3_center_var", c.s3_center_var},
          {"s3_component_var", c.s3_component_var},
          {"event_duration", range_json(c.event_duration)},
          {"outcome_sd", c.outcome_sd},
          {"initial_stage", std::string(1, stage_code(c.initial_stage))}};
}

ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  ScenarioConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "scenario") c.scenario = scenario_from_name(v.get<std::string>());
      else if (key == "n_patients") c.n_patients = v.get<int>();
      else if (key == "n_epochs") c.n_epochs = v.get<int>();
      else if (key == "n_factors") c.n_factors = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "mu") c.mu = range_from(v);
      else if (key == "tau") c.tau = range_from(v);
      else if (key == "lambda") c.lambda = range_from(v);
      else if (key == "mu_awake") c.mu_awake = range_from(v);
      else if (key == "loading_var") c.loading_var = v.get<double>();
      else if (key == "idiosyncratic_var") c.idiosyncratic_var = v.get<double>();
      else if (key == "s2_mu_intercept") c.s2_mu_intercept = range_from(v);
      else if (key == "s2_mu_slope") c.s2_mu_slope = range_from(v);
      else if (key == "s2_lambda_intercept") c.s2_lambda_intercept = range_from(v);
      else if (key == "s2_lambda_slope") c.s2_lambda_slope = range_from(v);
      else if (key == "s3_components") c.s3_components = v.get<int>();
      else if (key == "s3_center_var") c.s3_center_var = v.get<double>();
      else if (key == "s3_component_var") c.s3_component_var = v.get<double>();
      else if (key == "event_duration") c.event_duration = range_from(v);
      else if (key == "outcome_sd") c.outcome_sd = v.get<double>();
      else if (key == "initial_stage") {
        auto s = stage_from_code(v.get<std::string>());
        if (!s) throw ValidationError("config: initial_stage must be R or N");
        c.initial_stage = *s;
      } else {
        throw ValidationError("config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

Eigen::MatrixXd GroundTruth::covariance() const {
  Eigen::MatrixXd sigma = loadings * loadings.transpose();
  sigma.diagonal() += idiosyncratic;
  return sigma;
}

nlohmann::ordered_json to_json(const GroundTruth& t) {
  nlohmann::ordered_json j;
  j["scenario"] = scenario_name(t.scenario);
  nlohmann::ordered_json fx;
  for (int p = 0; p < 4; ++p) fx["mu_" + std::string(kTransitionNames[p])] = t.mu[p];
  for (int p = 0; p < 4; ++p) fx["tau_" + std::string(kTransitionNames[p])] = t.tau[p];
  fx["lambda_R"] = t.lambda[0];
  fx["lambda_N"] = t.lambda[1];
  fx["mu_AR"] = t.mu_awake[0];
  fx["mu_AN"] = t.mu_awake[1];
  j["fixed_effects"] = fx;
  if (t.scenario == Scenario::S2) {
    nlohmann::ordered_json sl;
    for (int p = 0; p < 4; ++p) sl["mu_" + std::string(kTransitionNames[p])] = t.mu_slope[p];
    sl["lambda_R"] = t.lambda_slope[0];
    sl["lambda_N"] = t.lambda_slope[1];
    j["slopes_per_epoch"] = sl;
  }
  j["n_factors"] = t.loadings.cols();
  std::vector<double> lam;
  for (Eigen::Index r = 0; r < t.loadings.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.loadings.cols(); ++c) lam.push_back(t.loadings(r, c));
  }
  j["loadings"] = lam;
  j["idiosyncratic_variance"] = std::vector<double>(t.idiosyncratic.data(), t.idiosyncratic.data() + t.idiosyncratic.size());
  j["theta_columns"] = std::vector<std::string>(kThetaNames.begin(), kThetaNames.end());
  nlohmann::ordered_json patients = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < t.patient_ids.size(); ++i) {
    nlohmann::ordered_json p;
    p["patient_id"] = t.patient_ids[i];
    std::vector<double> th(kThetaDim);
    for (int c = 0; c < kThetaDim; ++c) th[c] = t.theta(static_cast<Eigen::Index>(i), c);
    p["theta"] = th;
    if (!t.assignments.empty()) p["assignment"] = t.assignments[i] + 1;
    patients.push_back(p);
  }
  j["patients"] = patients;
  if (t.component_means.size() > 0) {
    nlohmann::ordered_json cm = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < t.component_means.rows(); ++r) {
      std::vector<double> row(t.component_means.cols());
      for (Eigen::Index c = 0; c < t.component_means.cols(); ++c) row[c] = t.component_means(r, c);
      cm.push_back(row);
    }
    j["component_means"] = cm;
  }
  return j;
}

GroundTruth ground_truth_from_json(const nlohmann::ordered_json& j) {
  GroundTruth t;
  try {
    t.scenario = scenario_from_name(j.at("scenario").get<std::string>());
    const auto& fx = j.at("fixed_effects");
    for (int p = 0; p < 4; ++p) {
      t.mu[p] = fx.at("mu_" + std::string(kTransitionNames[p])).get<double>();
      t.tau[p] = fx.at("tau_" + std::string(kTransitionNames[p])).get<double>();
    }
    t.lambda = {fx.at("lambda_R").get<double>(), fx.at("lambda_N").get<double>()};
    t.mu_awake = {fx.at("mu_AR").get<double>(), fx.at("mu_AN").get<double>()};
    if (j.contains("slopes_per_epoch")) {
      const auto& sl = j["slopes_per_epoch"];
      for (int p = 0; p < 4; ++p) t.mu_slope[p] = sl.at("mu_" + std::string(kTransitionNames[p])).get<double>();
      t.lambda_slope = {sl.at("lambda_R").get<double>(), sl.at("lambda_N").get<double>()};
    }
    const auto k = j.at("n_factors").get<Eigen::Index>();
    auto lam = j.at("loadings").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(lam.size()) != kThetaDim * k) throw ValidationError("truth: loadings size mismatch");
    t.loadings.resize(kThetaDim, k);
    for (Eigen::Index r = 0; r < kThetaDim; ++r) {
      for (Eigen::Index c = 0; c < k; ++c) t.loadings(r, c) = lam[r * k + c];
    }
    auto idio = j.at("idiosyncratic_variance").get<std::vector<double>>();
    t.idiosyncratic = Eigen::Map<Eigen::VectorXd>(idio.data(), static_cast<Eigen::Index>(idio.size()));
    const auto& patients = j.at("patients");
    t.theta.resize(static_cast<Eigen::Index>(patients.size()), kThetaDim);
    Eigen::Index i = 0;
    for (const auto& p : patients) {
      t.patient_ids.push_back(p.at("patient_id").get<std::string>());
      auto th = p.at("theta").get<std::vector<double>>();
      if (th.size() != kThetaDim) throw ValidationError("truth: theta must have 10 entries");
      for (int c = 0; c < kThetaDim; ++c) t.theta(i, c) = th[c];
      if (p.contains("assignment")) t.assignments.push_back(p["assignment"].get<int>() - 1);
      ++i;
    }
    if (j.contains("component_means")) {
      const auto& cm = j["component_means"];
      t.component_means.resize(static_cast<Eigen::Index>(cm.size()), kThetaDim);
      Eigen::Index r = 0;
      for (const auto& row : cm) {
        auto v = row.get<std::vector<double>>();
        for (int c = 0; c < kThetaDim; ++c) t.component_means(r, c) = v.at(c);
        ++r;
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("truth: ") + ex.what());
  }
  return t;
}

SleepRecord simulate_night(const NightModel& model, Stage initial, std::size_t n_epochs, Rng& rng,
                           std::string patient_id) {
  SleepRecord rec;
  rec.patient_id = std::move(patient_id);
  rec.stages.reserve(n_epochs);
  const bool conditional = static_cast<bool>(model.after_wake);

  Stage stage = initial;
  double hazard = 0.0;      // unit-rate budget left until the next event start
  bool need_clock = true;   // hazard must be redrawn before the clock runs again
  double event_end = -1.0;  // end of the ongoing event, if any
  std::size_t ongoing = 0;  // index of the ongoing event in rec.events

  auto cut_ongoing = [&](double at) {
    if (event_end > at) {
      rec.events[ongoing].duration_sec = at - rec.events[ongoing].start_sec;
      event_end = at;
    }
  };

  for (std::size_t j = 0; j < n_epochs; ++j) {
    rec.stages.push_back(stage);
    const double t0 = kEpochSec * static_cast<double>(j);
    const double t1 = t0 + kEpochSec;
    int h = 0;
    if (is_sleep(stage)) {
      const double rate = model.event_rate(stage, j);
      double t = t0;
      while (t < t1) {
        if (event_end > t) {
          h = 1;
          if (event_end >= t1) break;
          t = event_end;
        }
        if (!(rate > 0.0)) break;
        if (need_clock) {
          hazard = rng.exponential(1.0);
          need_clock = false;
        }
        const double wait = hazard / rate;
        if (t + wait < t1) {
          const double start = t + wait;
          const double dur = model.event_duration(stage, rng);
          require_finite(dur, "event duration");
          rec.events.push_back(Event{start, dur, stage});
          ongoing = rec.events.size() - 1;
          event_end = start + dur;
          need_clock = true;
          h = 1;
          t = start;
        } else {
          hazard -= rate * (t1 - t);
          break;
        }
      }
    }
    if (j + 1 == n_epochs) break;

    Stage next = draw_stage(model.next_stage(stage, h, j), rng);
    bool boundary = next != stage;
    if (conditional && next == Stage::Awake) {
      next = model.after_wake(rng);
      boundary = true;
    }
    if (boundary) {
      cut_ongoing(t1);
      need_clock = true;
    }
    stage = next;
  }
  cut_ongoing(rec.span_sec());
  return rec;
}

std::string patient_id_for(std::size_t index, std::size_t n_patients) {
  std::size_t width = std::max<std::size_t>(4, std::to_string(n_patients).size());
  std::string num = std::to_string(index + 1);
  return "P" + std::string(width - std::min(width, num.size()), '0') + num;
}

std::pair<std::vector<SleepRecord>, GroundTruth> generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_patients);
  const auto k = static_cast<Eigen::Index>(cfg.n_factors);

  GroundTruth truth;
  truth.scenario = cfg.scenario;
  Rng global = Rng::stream(cfg.seed, 0, kGlobalTag);
  if (cfg.scenario == Scenario::S2) {
    for (auto& m : truth.mu) m = draw(global, cfg.s2_mu_intercept);
    for (auto& s : truth.mu_slope) s = draw(global, cfg.s2_mu_slope);
    for (auto& t : truth.tau) t = draw(global, cfg.tau);
    for (auto& l : truth.lambda) l = draw(global, cfg.s2_lambda_intercept);
    for (auto& s : truth.lambda_slope) s = draw(global, cfg.s2_lambda_slope);
  } else {
    for (auto& m : truth.mu) m = draw(global, cfg.mu);
    for (auto& t : truth.tau) t = draw(global, cfg.tau);
    for (auto& l : truth.lambda) l = draw(global, cfg.lambda);
  }
  for (auto& m : truth.mu_awake) m = draw(global, cfg.mu_awake);

  const double loading_sd = std::sqrt(cfg.loading_var);
  truth.loadings.resize(kThetaDim, k);
  for (Eigen::Index r = 0; r < kThetaDim; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) truth.loadings(r, c) = global.normal(0.0, loading_sd);
  }
  truth.idiosyncratic = Eigen::VectorXd::Constant(kThetaDim, cfg.idiosyncratic_var);

  if (cfg.scenario == Scenario::S3) {
    const double center_sd = std::sqrt(cfg.s3_center_var);
    truth.component_means.resize(cfg.s3_components, kThetaDim);
    for (Eigen::Index r = 0; r < truth.component_means.rows(); ++r) {
      for (Eigen::Index c = 0; c < kThetaDim; ++c) truth.component_means(r, c) = global.normal(0.0, center_sd);
    }
  }

  truth.theta.resize(static_cast<Eigen::Index>(n), kThetaDim);
  truth.patient_ids.resize(n);
  const double idio_sd = std::sqrt(cfg.idiosyncratic_var);
  const double comp_sd = std::sqrt(cfg.s3_component_var);
  for (std::size_t i = 0; i < n; ++i) {
    truth.patient_ids[i] = patient_id_for(i, n);
    Rng rng = Rng::stream(cfg.seed, i, kThetaTag);
    const auto row = static_cast<Eigen::Index>(i);
    if (cfg.scenario == Scenario::S3) {
      int comp = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.s3_components)));
      truth.assignments.push_back(comp);
      for (Eigen::Index c = 0; c < kThetaDim; ++c) {
        truth.theta(row, c) = truth.component_means(comp, c) + rng.normal(0.0, comp_sd);
      }
    } else {
      Eigen::VectorXd eta(k);
      for (Eigen::Index f = 0; f < k; ++f) eta(f) = rng.normal();
      Eigen::VectorXd th = truth.loadings * eta;
      for (Eigen::Index c = 0; c < kThetaDim; ++c) truth.theta(row, c) = th(c) + rng.normal(0.0, idio_sd);
    }
  }
  if (cfg.scenario == Scenario::S3) {
    Eigen::RowVectorXd mean = truth.theta.colwise().mean();
    truth.theta.rowwise() -= mean;
  }
  for (Eigen::Index i = 0; i < truth.theta.size(); ++i) require_finite(truth.theta.data()[i], "random effect");

  std::vector<SleepRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd th = truth.theta.row(static_cast<Eigen::Index>(i)).transpose();
    const std::span<const double> theta(th.data(), kThetaDim);
    NightModel night;
    night.next_stage = [&](Stage from, int h, std::size_t epoch) {
      if (from == Stage::Awake) {
        return softmax3({0.0, truth.mu_awake[0], truth.mu_awake[1]});
      }
      std::array<double, 4> mu = truth.mu;
      if (cfg.scenario == Scenario::S2) {
        for (int p = 0; p < 4; ++p) mu[p] += truth.mu_slope[p] * static_cast<double>(epoch);
      }
      return transition_probs(mu, truth.tau, theta, h, from);
    };
    night.event_rate = [&](Stage s, std::size_t epoch) {
      int k_s = sleep_index(s);
      double base = truth.lambda[k_s];
      if (cfg.scenario == Scenario::S2) {
        base = std::max(0.0, base + truth.lambda_slope[k_s] * static_cast<double>(epoch));
      }
      return base * std::exp(theta[kPhiCol + k_s]);
    };
    night.event_duration = [&](Stage, Rng& r) { return draw(r, cfg.event_duration); };
    Rng rng = Rng::stream(cfg.seed, i, kNightTag);
    records.push_back(simulate_night(night, cfg.initial_stage, static_cast<std::size_t>(cfg.n_epochs), rng,
                                     truth.patient_ids[i]));
  }
  return {std::move(records), std::move(truth)};
}

OutcomeSet generate_outcomes(const GroundTruth& truth, const ScenarioConfig& cfg) {
  if (truth.assignments.empty() || truth.component_means.rows() == 0) {
    throw ValidationError("outcomes need mixture assignments (Scenario S3)");
  }
  const auto n_comp = static_cast<std::size_t>(truth.component_means.rows());
  Rng rng = Rng::stream(cfg.seed, 0, kOutcomeTag);
  OutcomeSet out;
  out.component_means.resize(n_comp);
  std::iota(out.component_means.begin(), out.component_means.end(), 1.0);
  // Fisher-Yates with the portable index draw
  for (std::size_t i = n_comp - 1; i > 0; --i) std::swap(out.component_means[i], out.component_means[rng.index(i + 1)]);
  for (std::size_t i = 0; i < truth.patient_ids.size(); ++i) {
    double mean = out.component_means[static_cast<std::size_t>(truth.assignments[i])];
    out.outcomes.push_back({truth.patient_ids[i], rng.normal(mean, cfg.outcome_sd)});
  }
  return out;
}

}  // namespace somnus
