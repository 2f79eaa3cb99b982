#include "somnus/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "somnus/error.hpp"

namespace somnus {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

// Off-diagonal targets of each sleep stage in (Awake, REM, NonREM) order.
constexpr std::array<std::array<int, 3>, 2> kParamOf{{{kRA, -1, kRN}, {kNA, kNR, -1}}};

double poisson_term(double v, double t, double rate) {
  if (t == 0.0) {
    return v == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return v * std::log(t * rate) - t * rate;
}

}  // namespace

Eigen::MatrixXd FactorParams::covariance() const {
  Eigen::MatrixXd sigma = loadings * loadings.transpose();
  sigma.diagonal() += omega2;
  return sigma;
}

PriorSpec PriorSpec::defaults() {
  PriorSpec p;
  p.lambda.fill(GammaPrior{2.0, 50.0});
  p.mu.fill(NormalPrior{0.0, 5.0});
  p.tau.fill(NormalPrior{0.0, 5.0});
  p.loading = NormalPrior{0.0, 1.0};
  p.omega2.fill(InvGammaPrior{2.0, 1.0});
  return p;
}

void PriorSpec::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  for (const auto& g : lambda) {
    if (!positive(g.shape) || !positive(g.rate)) throw ValidationError("lambda prior needs shape, rate > 0");
  }
  for (const auto* arr : {&mu, &tau}) {
    for (const auto& n : *arr) {
      if (!std::isfinite(n.mean) || !positive(n.sd)) throw ValidationError("normal prior needs finite mean, sd > 0");
    }
  }
  if (!std::isfinite(loading.mean) || !positive(loading.sd)) {
    throw ValidationError("loading prior needs finite mean, sd > 0");
  }
  for (const auto& g : omega2) {
    if (!positive(g.shape) || !positive(g.scale)) throw ValidationError("omega2 prior needs shape, scale > 0");
  }
}

namespace {

template <typename T>
T read_family(const nlohmann::json& j, const std::string& key);

template <>
NormalPrior read_family<NormalPrior>(const nlohmann::json& j, const std::string& key) {
  if (j.value("family", "") != "normal") {
    throw ValidationError("priors." + key + ": unknown family '" + j.value("family", "") +
                          "' (expected normal)");
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "family" && k != "mean" && k != "sd") throw ValidationError("priors." + key + ": unknown field " + k);
  }
  return NormalPrior{j.value("mean", 0.0), j.at("sd").get<double>()};
}

template <>
GammaPrior read_family<GammaPrior>(const nlohmann::json& j, const std::string& key) {
  if (j.value("family", "") != "gamma") {
    throw ValidationError("priors." + key + ": unknown family '" + j.value("family", "") +
                          "' (expected gamma)");
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "family" && k != "shape" && k != "rate") throw ValidationError("priors." + key + ": unknown field " + k);
  }
  return GammaPrior{j.at("shape").get<double>(), j.at("rate").get<double>()};
}

template <>
InvGammaPrior read_family<InvGammaPrior>(const nlohmann::json& j, const std::string& key) {
  if (j.value("family", "") != "inv_gamma") {
    throw ValidationError("priors." + key + ": unknown family '" + j.value("family", "") +
                          "' (expected inv_gamma)");
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "family" && k != "shape" && k != "scale") throw ValidationError("priors." + key + ": unknown field " + k);
  }
  return InvGammaPrior{j.at("shape").get<double>(), j.at("scale").get<double>()};
}

template <typename T, std::size_t N>
void read_entries(const nlohmann::json& j, const std::string& key, std::array<T, N>& out) {
  if (j.is_array()) {
    if (j.size() != N) throw ValidationError("priors." + key + ": expected " + std::to_string(N) + " entries");
    for (std::size_t i = 0; i < N; ++i) out[i] = read_family<T>(j[i], key);
  } else {
    out.fill(read_family<T>(j, key));
  }
}

nlohmann::json family_json(const NormalPrior& p) {
  return {{"family", "normal"}, {"mean", p.mean}, {"sd", p.sd}};
}
nlohmann::json family_json(const GammaPrior& p) {
  return {{"family", "gamma"}, {"shape", p.shape}, {"rate", p.rate}};
}
nlohmann::json family_json(const InvGammaPrior& p) {
  return {{"family", "inv_gamma"}, {"shape", p.shape}, {"scale", p.scale}};
}

template <typename T, std::size_t N>
nlohmann::json entries_json(const std::array<T, N>& arr) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : arr) out.push_back(family_json(p));
  return out;
}

}  // namespace

PriorSpec priors_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("priors must be a JSON object");
  PriorSpec p = PriorSpec::defaults();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lambda") read_entries(value, key, p.lambda);
      else if (key == "mu") read_entries(value, key, p.mu);
      else if (key == "tau") read_entries(value, key, p.tau);
      else if (key == "loading") p.loading = read_family<NormalPrior>(value, key);
      else if (key == "omega2") read_entries(value, key, p.omega2);
      else throw ValidationError("priors: unknown parameter family '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("priors: ") + ex.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const PriorSpec& p) {
  return {{"lambda", entries_json(p.lambda)},
          {"mu", entries_json(p.mu)},
          {"tau", entries_json(p.tau)},
          {"loading", family_json(p.loading)},
          {"omega2", entries_json(p.omega2)}};
}

std::array<double, 3> softmax3(const std::array<double, 3>& logits) {
  const double mx = std::max({logits[0], logits[1], logits[2]});
  std::array<double, 3> p{};
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::array<double, 3> transition_probs(const std::array<double, 4>& mu,
                                       const std::array<double, 4>& tau,
                                       std::span<const double> theta, int h, Stage from) {
  const auto& params = kParamOf[sleep_index(from)];
  std::array<double, 3> logits{};
  for (int kn = 0; kn < 3; ++kn) {
    int p = params[kn];
    if (p < 0) continue;
    logits[kn] = mu[p] + theta[kGammaCol + p] + (tau[p] + theta[kAlphaCol + p]) * h;
  }
  return softmax3(logits);
}

double log_likelihood(const SufficientStats& stats, const FixedEffects& fx,
                      const Eigen::MatrixXd& theta) {
  if (static_cast<std::size_t>(theta.rows()) != stats.size() || (theta.rows() > 0 && theta.cols() != kThetaDim)) {
    throw ValidationError("theta must be n x 10");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& ps = stats[i];
    Eigen::VectorXd th = theta.row(static_cast<Eigen::Index>(i)).transpose();
    std::span<const double> th_span(th.data(), kThetaDim);
    for (int h = 0; h < 2; ++h) {
      for (int ko = 0; ko < 2; ++ko) {
        if (ps.transitions.at_risk[h][ko] == 0) continue;
        auto probs = transition_probs(fx.mu, fx.tau, th_span, h, sleep_stage(ko));
        for (int kn = 0; kn < 3; ++kn) {
          long c = ps.transitions.counts[h][ko][kn];
          if (c > 0) total += static_cast<double>(c) * std::log(probs[kn]);
        }
      }
    }
    for (int k = 0; k < 2; ++k) {
      double v = static_cast<double>(ps.events.event_count[k]);
      double t = ps.events.exposure_sec[k];
      if (t == 0.0 && v > 0.0) {
        throw ValidationError("patient " + ps.patient_id + ": events with zero exposure");
      }
      total += poisson_term(v, t, fx.lambda[k] * std::exp(th[kPhiCol + k]));
    }
  }
  return total;
}

ParamLayout::ParamLayout(std::size_t n_patients, std::size_t n_factors)
    : n_(n_patients), k_(n_factors) {
  eta_ = 10 + kThetaDim * k_;
  log_omega2_ = eta_ + n_ * k_;
  z_ = log_omega2_ + kThetaDim;
}

std::vector<std::string> ParamLayout::names(const std::vector<std::string>& ids) const {
  std::vector<std::string> out;
  out.reserve(dim());
  for (auto t : kTransitionNames) out.push_back("mu_" + std::string(t));
  for (auto t : kTransitionNames) out.push_back("tau_" + std::string(t));
  out.push_back("log_lambda_R");
  out.push_back("log_lambda_N");
  for (std::size_t r = 0; r < kThetaDim; ++r) {
    for (std::size_t f = 0; f < k_; ++f) {
      out.push_back("Lambda[" + std::string(kThetaNames[r]) + "," + std::to_string(f + 1) + "]");
    }
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t f = 0; f < k_; ++f) {
      out.push_back("eta[" + ids.at(i) + "," + std::to_string(f + 1) + "]");
    }
  }
  for (auto t : kThetaNames) out.push_back("log_omega2_" + std::string(t));
  for (std::size_t i = 0; i < n_; ++i) {
    for (auto t : kThetaNames) out.push_back("z[" + ids.at(i) + "," + std::string(t) + "]");
  }
  return out;
}

FixedEffects ParamLayout::fixed_effects(std::span<const double> x) const {
  FixedEffects fx;
  for (int p = 0; p < 4; ++p) {
    fx.mu[p] = x[mu() + p];
    fx.tau[p] = x[tau() + p];
  }
  for (int k = 0; k < 2; ++k) fx.lambda[k] = std::exp(x[log_lambda() + k]);
  return fx;
}

FactorParams ParamLayout::factors(std::span<const double> x) const {
  FactorParams f;
  const auto n = static_cast<Eigen::Index>(n_);
  const auto k = static_cast<Eigen::Index>(k_);
  f.loadings.resize(kThetaDim, k);
  for (Eigen::Index r = 0; r < kThetaDim; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) f.loadings(r, c) = x[loading(r, c)];
  }
  f.scores.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < k; ++c) f.scores(i, c) = x[eta(i, c)];
  }
  f.omega2.resize(kThetaDim);
  for (Eigen::Index r = 0; r < kThetaDim; ++r) f.omega2(r) = std::exp(x[log_omega2_ + r]);
  return f;
}

Eigen::MatrixXd ParamLayout::residuals(std::span<const double> x) const {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n_), kThetaDim);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t c = 0; c < kThetaDim; ++c) z(i, c) = x[this->z(i, c)];
  }
  return z;
}

Eigen::MatrixXd ParamLayout::theta(std::span<const double> x) const {
  FactorParams f = factors(x);
  Eigen::MatrixXd th = f.scores * f.loadings.transpose();
  Eigen::ArrayXd omega = f.omega2.array().sqrt();
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t c = 0; c < kThetaDim; ++c) th(i, c) += omega(c) * x[z(i, c)];
  }
  return th;
}

std::vector<double> ParamLayout::pack(const FixedEffects& fx, const FactorParams& f,
                                      const Eigen::MatrixXd& zres) const {
  if (static_cast<std::size_t>(f.loadings.cols()) != k_ || f.loadings.rows() != kThetaDim ||
      static_cast<std::size_t>(f.scores.rows()) != n_ || static_cast<std::size_t>(f.scores.cols()) != k_ ||
      f.omega2.size() != kThetaDim || static_cast<std::size_t>(zres.rows()) != n_ ||
      (n_ > 0 && zres.cols() != kThetaDim)) {
    throw ValidationError("pack: parameter shapes do not match the layout");
  }
  std::vector<double> x(dim());
  for (int p = 0; p < 4; ++p) {
    x[mu() + p] = fx.mu[p];
    x[tau() + p] = fx.tau[p];
  }
  for (int k = 0; k < 2; ++k) x[log_lambda() + k] = std::log(fx.lambda[k]);
  for (std::size_t r = 0; r < kThetaDim; ++r) {
    for (std::size_t c = 0; c < k_; ++c) x[loading(r, c)] = f.loadings(r, c);
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t c = 0; c < k_; ++c) x[eta(i, c)] = f.scores(i, c);
  }
  for (std::size_t r = 0; r < kThetaDim; ++r) x[log_omega2_ + r] = std::log(f.omega2(r));
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t c = 0; c < kThetaDim; ++c) x[z(i, c)] = zres(i, c);
  }
  return x;
}

PosteriorModel::PosteriorModel(const SufficientStats& stats, PriorSpec priors, std::size_t n_factors)
    : priors_(std::move(priors)), layout_(stats.size(), n_factors) {
  priors_.validate();
  data_.reserve(stats.size());
  for (const auto& ps : stats.patients()) {
    PatientData d{};
    for (int h = 0; h < 2; ++h) {
      for (int ko = 0; ko < 2; ++ko) {
        d.at_risk[h][ko] = static_cast<double>(ps.transitions.at_risk[h][ko]);
        for (int kn = 0; kn < 3; ++kn) d.counts[h][ko][kn] = static_cast<double>(ps.transitions.counts[h][ko][kn]);
      }
    }
    for (int k = 0; k < 2; ++k) {
      d.events[k] = static_cast<double>(ps.events.event_count[k]);
      d.exposure[k] = ps.events.exposure_sec[k];
      if (d.exposure[k] == 0.0 && d.events[k] > 0.0) {
        throw ValidationError("patient " + ps.patient_id + ": events with zero exposure");
      }
    }
    data_.push_back(d);
  }
}

double PosteriorModel::log_density_gradient(std::span<const double> x, std::span<double> grad) const {
  return evaluate(x, grad.data(), nullptr);
}

double PosteriorModel::log_posterior(std::span<const double> x) const {
  return evaluate(x, nullptr, nullptr);
}

LogPosteriorTerms PosteriorModel::terms(std::span<const double> x) const {
  LogPosteriorTerms t;
  evaluate(x, nullptr, &t);
  return t;
}

double PosteriorModel::evaluate(std::span<const double> x, double* g, LogPosteriorTerms* out) const {
  if (x.size() != layout_.dim()) throw ValidationError("state has the wrong dimension");
  const std::size_t n = layout_.n_patients();
  const std::size_t k = layout_.n_factors();
  if (g) std::fill(g, g + layout_.dim(), 0.0);

  double lik = 0.0;
  double prior = 0.0;
  double jac = 0.0;

  const std::size_t lo2 = layout_.log_omega2();
  double omega[kThetaDim];
  for (std::size_t c = 0; c < kThetaDim; ++c) omega[c] = std::exp(0.5 * x[lo2 + c]);
  const double lambda[2] = {std::exp(x[ParamLayout::log_lambda()]),
                            std::exp(x[ParamLayout::log_lambda() + 1])};

  double theta[kThetaDim];
  double gtheta[kThetaDim];
  for (std::size_t i = 0; i < n; ++i) {
    const PatientData& d = data_[i];
    const double* eta = x.data() + layout_.eta(i, 0);
    const double* z = x.data() + layout_.z(i, 0);
    for (std::size_t c = 0; c < kThetaDim; ++c) {
      double s = omega[c] * z[c];
      const double* lrow = x.data() + layout_.loading(c, 0);
      for (std::size_t f = 0; f < k; ++f) s += lrow[f] * eta[f];
      theta[c] = s;
      gtheta[c] = 0.0;
    }

    for (int ko = 0; ko < 2; ++ko) {
      const auto& params = kParamOf[ko];
      for (int h = 0; h < 2; ++h) {
        const double nrisk = d.at_risk[h][ko];
        if (nrisk == 0.0) continue;
        double logits[3];
        double mx = 0.0;
        for (int kn = 0; kn < 3; ++kn) {
          int p = params[kn];
          logits[kn] = p < 0 ? 0.0
                             : x[p] + theta[kGammaCol + p] +
                                   (x[ParamLayout::tau() + p] + theta[kAlphaCol + p]) * h;
          mx = std::max(mx, logits[kn]);
        }
        double e[3];
        double sum = 0.0;
        for (int kn = 0; kn < 3; ++kn) {
          e[kn] = std::exp(logits[kn] - mx);
          sum += e[kn];
        }
        const double lse = mx + std::log(sum);
        for (int kn = 0; kn < 3; ++kn) lik += d.counts[h][ko][kn] * logits[kn];
        lik -= nrisk * lse;
        if (g) {
          for (int kn = 0; kn < 3; ++kn) {
            int p = params[kn];
            if (p < 0) continue;
            double r = d.counts[h][ko][kn] - nrisk * e[kn] / sum;
            g[p] += r;
            gtheta[kGammaCol + p] += r;
            if (h) {
              g[ParamLayout::tau() + p] += r;
              gtheta[kAlphaCol + p] += r;
            }
          }
        }
      }
    }

    for (int s = 0; s < 2; ++s) {
      const double t = d.exposure[s];
      if (t == 0.0) continue;
      const double v = d.events[s];
      const double rate = lambda[s] * std::exp(theta[kPhiCol + s]);
      lik += v * (std::log(t) + x[ParamLayout::log_lambda() + s] + theta[kPhiCol + s]) - t * rate;
      if (g) {
        double r = v - t * rate;
        g[ParamLayout::log_lambda() + s] += r;
        gtheta[kPhiCol + s] += r;
      }
    }

    // standard-normal priors on the non-centered scores and residuals
    for (std::size_t f = 0; f < k; ++f) prior += -0.5 * eta[f] * eta[f] - kHalfLog2Pi;
    for (std::size_t c = 0; c < kThetaDim; ++c) prior += -0.5 * z[c] * z[c] - kHalfLog2Pi;

    if (g) {
      double* gz = g + layout_.z(i, 0);
      for (std::size_t c = 0; c < kThetaDim; ++c) {
        gz[c] = omega[c] * gtheta[c] - z[c];
        g[lo2 + c] += 0.5 * omega[c] * z[c] * gtheta[c];
      }
      double* geta = g + layout_.eta(i, 0);
      for (std::size_t f = 0; f < k; ++f) {
        double s = -eta[f];
        for (std::size_t c = 0; c < kThetaDim; ++c) s += x[layout_.loading(c, f)] * gtheta[c];
        geta[f] = s;
      }
      for (std::size_t c = 0; c < kThetaDim; ++c) {
        double* gl = g + layout_.loading(c, 0);
        for (std::size_t f = 0; f < k; ++f) gl[f] += gtheta[c] * eta[f];
      }
    }
  }

  for (int p = 0; p < 4; ++p) {
    const auto& pm = priors_.mu[p];
    const auto& pt = priors_.tau[p];
    const double m = x[ParamLayout::mu() + p];
    const double t = x[ParamLayout::tau() + p];
    prior += normal_lpdf(m, pm.mean, pm.sd) + normal_lpdf(t, pt.mean, pt.sd);
    if (g) {
      g[ParamLayout::mu() + p] -= (m - pm.mean) / (pm.sd * pm.sd);
      g[ParamLayout::tau() + p] -= (t - pt.mean) / (pt.sd * pt.sd);
    }
  }
  for (int s = 0; s < 2; ++s) {
    const auto& gp = priors_.lambda[s];
    const double u = x[ParamLayout::log_lambda() + s];
    prior += (gp.shape - 1.0) * u - gp.rate * lambda[s] + gp.shape * std::log(gp.rate) -
             std::lgamma(gp.shape);
    jac += u;
    if (g) g[ParamLayout::log_lambda() + s] += gp.shape - gp.rate * lambda[s];
  }
  for (std::size_t r = 0; r < kThetaDim; ++r) {
    for (std::size_t f = 0; f < k; ++f) {
      const double l = x[layout_.loading(r, f)];
      prior += normal_lpdf(l, priors_.loading.mean, priors_.loading.sd);
      if (g) g[layout_.loading(r, f)] -= (l - priors_.loading.mean) / (priors_.loading.sd * priors_.loading.sd);
    }
  }
  for (std::size_t c = 0; c < kThetaDim; ++c) {
    const auto& ig = priors_.omega2[c];
    const double u = x[lo2 + c];
    prior += ig.shape * std::log(ig.scale) - std::lgamma(ig.shape) - (ig.shape + 1.0) * u -
             ig.scale * std::exp(-u);
    jac += u;
    if (g) g[lo2 + c] += -ig.shape + ig.scale * std::exp(-u);
  }

  if (out) *out = LogPosteriorTerms{lik, prior, jac};
  const double total = lik + prior + jac;
  return std::isfinite(total) ? total : -std::numeric_limits<double>::infinity();
}

}  // namespace somnus
