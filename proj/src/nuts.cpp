#include "somnus/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "somnus/error.hpp"

namespace somnus {

namespace {

constexpr std::uint64_t kChainTag = 11;
constexpr double kMaxDeltaH = 1000.0;
constexpr int kMaxInitTries = 100;

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

template <typename Rho>
bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::MatrixBase<Rho>& rho) {
  return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
}

void evaluate(const LogDensity& target, PhasePoint& z) {
  z.log_density = target.log_density_gradient(std::span<const double>(z.q.data(), z.q.size()),
                                              std::span<double>(z.grad.data(), z.grad.size()));
}

// Step-size adaptation by dual averaging.
class DualAveraging {
 public:
  explicit DualAveraging(double delta) : delta_(delta) {}

  void restart(double step_size) {
    mu_ = std::log(10.0 * step_size);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(accept_stat, 1.0);
    const double c = static_cast<double>(counter_);
    const double eta = 1.0 / (c + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(c) / kGamma;
    const double x_eta = std::pow(c, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step_size() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kKappa = 0.75;
  static constexpr double kT0 = 10.0;
  double delta_;
  double mu_ = 0.0;
  std::size_t counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

// Expanding variance-estimation windows: a fixed initial buffer, windows that
// double in size, and a terminal buffer for the final step-size fit.
struct WarmupSchedule {
  struct Window {
    int begin;
    int end;
  };
  std::vector<Window> windows;

  explicit WarmupSchedule(int n_warmup) {
    if (n_warmup < 20) return;
    int init = 75, term = 50, base = 25;
    if (init + base + term > n_warmup) {
      init = static_cast<int>(0.15 * n_warmup);
      term = static_cast<int>(0.1 * n_warmup);
      base = n_warmup - init - term;
    }
    const int stop = n_warmup - term;
    int start = init;
    int size = base;
    while (start < stop) {
      int end = start + size;
      if (end + 2 * size > stop) end = stop;
      windows.push_back({start, end});
      start = end;
      size *= 2;
    }
  }
};

class NutsChain {
 public:
  NutsChain(const LogDensity& target, const SamplerConfig& cfg, Rng rng)
      : target_(target),
        cfg_(cfg),
        rng_(std::move(rng)),
        dim_(static_cast<Eigen::Index>(target.dim())),
        inv_metric_(Eigen::VectorXd::Ones(dim_)) {
    z_.q.resize(dim_);
    z_.p.resize(dim_);
    z_.grad.resize(dim_);
    frames_.resize(static_cast<std::size_t>(std::max(cfg.max_tree_depth, 1)));
    for (auto& f : frames_) {
      for (auto* v : {&f.p_init_end, &f.p_sharp_init_end, &f.rho_init, &f.p_final_beg, &f.p_sharp_final_beg,
                      &f.rho_final}) {
        v->resize(dim_);
      }
      f.z_propose_final = z_;
    }
  }

  ChainResult run();

 private:
  struct Transition {
    double accept_stat;
    int depth;
    bool divergent;
  };

  void initialize();
  void sample_momentum(PhasePoint& z) {
    for (Eigen::Index i = 0; i < dim_; ++i) z.p(i) = rng_.normal() / std::sqrt(inv_metric_(i));
  }
  void init_step_size();
  Transition transition();
  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double h0, double sign, double& log_sum_weight,
                  double& sum_metro_prob);

  // Scratch space for one level of the recursion, reused across transitions.
  struct Frame {
    Eigen::VectorXd p_init_end, p_sharp_init_end, rho_init;
    Eigen::VectorXd p_final_beg, p_sharp_final_beg, rho_final;
    PhasePoint z_propose_final;
  };

  const LogDensity& target_;
  const SamplerConfig& cfg_;
  std::vector<Frame> frames_;
  PhasePoint z_fwd_, z_bck_, z_sample_, z_propose_;
  Eigen::VectorXd p_fwd_fwd_, p_sharp_fwd_fwd_, p_fwd_bck_, p_sharp_fwd_bck_;
  Eigen::VectorXd p_bck_fwd_, p_sharp_bck_fwd_, p_bck_bck_, p_sharp_bck_bck_;
  Eigen::VectorXd rho_, rho_fwd_, rho_bck_;
  Rng rng_;
  Eigen::Index dim_;
  Eigen::VectorXd inv_metric_;
  PhasePoint z_;
  double step_size_ = 1.0;
  bool divergent_ = false;
  std::size_t n_leapfrog_ = 0;
};

void NutsChain::initialize() {
  for (int attempt = 0; attempt < kMaxInitTries; ++attempt) {
    for (Eigen::Index i = 0; i < dim_; ++i) z_.q(i) = rng_.uniform(-cfg_.init_scale, cfg_.init_scale);
    evaluate(target_, z_);
    if (std::isfinite(z_.log_density) && z_.grad.allFinite()) return;
  }
  throw NumericalError("could not find a finite initial log density after 100 attempts");
}

void NutsChain::init_step_size() {
  const PhasePoint start = z_;
  sample_momentum(z_);
  double h0 = hamiltonian(z_, inv_metric_);
  leapfrog(target_, z_, step_size_, inv_metric_);
  double delta_h = h0 - hamiltonian(z_, inv_metric_);
  const int direction = delta_h > std::log(0.8) ? 1 : -1;
  while (true) {
    z_ = start;
    sample_momentum(z_);
    h0 = hamiltonian(z_, inv_metric_);
    leapfrog(target_, z_, step_size_, inv_metric_);
    double h = hamiltonian(z_, inv_metric_);
    delta_h = std::isnan(h) ? -std::numeric_limits<double>::infinity() : h0 - h;
    if (direction == 1 && !(delta_h > std::log(0.8))) break;
    if (direction == -1 && !(delta_h < std::log(0.8))) break;
    step_size_ = direction == 1 ? 2.0 * step_size_ : 0.5 * step_size_;
    if (step_size_ > 1e7) throw NumericalError("step size diverged during initialization");
    if (step_size_ == 0.0) throw NumericalError("step size collapsed to zero during initialization");
  }
  z_ = start;
}

bool NutsChain::build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                           Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho,
                           Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0,
                           double sign, double& log_sum_weight, double& sum_metro_prob) {
  if (depth == 0) {
    leapfrog(target_, z_, sign * step_size_, inv_metric_);
    ++n_leapfrog_;
    double h = hamiltonian(z_, inv_metric_);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    if (h - h0 > kMaxDeltaH) divergent_ = true;
    log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
    sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
    z_propose = z_;
    p_sharp_beg = inv_metric_.cwiseProduct(z_.p);
    p_sharp_end = p_sharp_beg;
    rho += z_.p;
    p_beg = z_.p;
    p_end = p_beg;
    return !divergent_;
  }

  Frame& f = frames_[static_cast<std::size_t>(depth - 1)];
  Eigen::VectorXd& p_init_end = f.p_init_end;
  Eigen::VectorXd& p_sharp_init_end = f.p_sharp_init_end;
  Eigen::VectorXd& rho_init = f.rho_init;
  Eigen::VectorXd& p_final_beg = f.p_final_beg;
  Eigen::VectorXd& p_sharp_final_beg = f.p_sharp_final_beg;
  Eigen::VectorXd& rho_final = f.rho_final;
  PhasePoint& z_propose_final = f.z_propose_final;

  double log_sum_weight_init = -std::numeric_limits<double>::infinity();
  rho_init.setZero();
  if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end,
                  h0, sign, log_sum_weight_init, sum_metro_prob)) {
    return false;
  }

  z_propose_final = z_;
  double log_sum_weight_final = -std::numeric_limits<double>::infinity();
  rho_final.setZero();
  if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                  p_final_beg, p_end, h0, sign, log_sum_weight_final, sum_metro_prob)) {
    return false;
  }

  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = z_propose_final;
  } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    z_propose = z_propose_final;
  }

  rho += rho_init + rho_final;

  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_init + rho_final);
  persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
  persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
  return persist;
}

NutsChain::Transition NutsChain::transition() {
  sample_momentum(z_);
  PhasePoint& z_fwd = z_fwd_ = z_;
  PhasePoint& z_bck = z_bck_ = z_;
  PhasePoint& z_sample = z_sample_ = z_;
  PhasePoint& z_propose = z_propose_ = z_;

  Eigen::VectorXd& p_fwd_fwd = p_fwd_fwd_ = z_.p;
  Eigen::VectorXd& p_sharp_fwd_fwd = p_sharp_fwd_fwd_ = inv_metric_.cwiseProduct(z_.p);
  Eigen::VectorXd& p_fwd_bck = p_fwd_bck_ = z_.p;
  Eigen::VectorXd& p_sharp_fwd_bck = p_sharp_fwd_bck_ = p_sharp_fwd_fwd;
  Eigen::VectorXd& p_bck_fwd = p_bck_fwd_ = z_.p;
  Eigen::VectorXd& p_sharp_bck_fwd = p_sharp_bck_fwd_ = p_sharp_fwd_fwd;
  Eigen::VectorXd& p_bck_bck = p_bck_bck_ = z_.p;
  Eigen::VectorXd& p_sharp_bck_bck = p_sharp_bck_bck_ = p_sharp_fwd_fwd;
  Eigen::VectorXd& rho = rho_ = z_.p;
  Eigen::VectorXd& rho_fwd = rho_fwd_;
  Eigen::VectorXd& rho_bck = rho_bck_;

  double log_sum_weight = 0.0;
  const double h0 = hamiltonian(z_, inv_metric_);
  const std::size_t leapfrog_start = n_leapfrog_;
  double sum_metro_prob = 0.0;
  int depth = 0;
  divergent_ = false;

  while (depth < cfg_.max_tree_depth) {
    rho_fwd.setZero(dim_);
    rho_bck.setZero(dim_);
    bool valid = false;
    double log_sum_weight_subtree = -std::numeric_limits<double>::infinity();

    if (rng_.uniform() > 0.5) {
      z_ = z_fwd;
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                         p_fwd_fwd, h0, 1.0, log_sum_weight_subtree, sum_metro_prob);
      z_fwd = z_;
    } else {
      z_ = z_bck;
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                         p_bck_bck, h0, -1.0, log_sum_weight_subtree, sum_metro_prob);
      z_bck = z_;
    }
    if (!valid) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  const auto steps = static_cast<double>(n_leapfrog_ - leapfrog_start);
  z_ = z_sample;
  return Transition{steps > 0 ? sum_metro_prob / steps : 0.0, depth, divergent_};
}

// Welford accumulator for the per-coordinate variance of warmup draws.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}
  void add(const Eigen::VectorXd& q) {
    ++n_;
    Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  std::size_t count() const { return n_; }
  Eigen::VectorXd variance() const { return m2_ / (static_cast<double>(n_) - 1.0); }
  void restart() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

ChainResult NutsChain::run() {
  initialize();
  init_step_size();

  DualAveraging adapt(cfg_.target_accept);
  adapt.restart(step_size_);
  WarmupSchedule schedule(cfg_.n_warmup);
  VarianceEstimator estimator(dim_);
  std::size_t window = 0;

  ChainInfo info;
  for (int it = 0; it < cfg_.n_warmup; ++it) {
    Transition t = transition();
    if (t.divergent) ++info.warmup_divergences;
    step_size_ = adapt.learn(t.accept_stat);
    if (window < schedule.windows.size()) {
      const auto& w = schedule.windows[window];
      if (it >= w.begin && it < w.end) estimator.add(z_.q);
      if (it + 1 == w.end) {
        const double n = static_cast<double>(estimator.count());
        inv_metric_ = (n / (n + 5.0)) * estimator.variance().array() + 1e-3 * (5.0 / (n + 5.0));
        estimator.restart();
        ++window;
        init_step_size();
        adapt.restart(step_size_);
      }
    }
  }
  if (cfg_.n_warmup > 0) step_size_ = adapt.final_step_size();

  ChainResult result;
  result.draws.resize(cfg_.n_samples, dim_);
  double accept_sum = 0.0;
  double depth_sum = 0.0;
  for (int s = 0; s < cfg_.n_samples; ++s) {
    Transition t = transition();
    accept_sum += t.accept_stat;
    depth_sum += t.depth;
    if (t.divergent) ++info.divergences;
    if (t.depth >= cfg_.max_tree_depth) ++info.max_depth_hits;
    result.draws.row(s) = z_.q.transpose();
  }
  info.step_size = step_size_;
  info.mean_accept_stat = accept_sum / cfg_.n_samples;
  info.mean_tree_depth = depth_sum / cfg_.n_samples;
  info.n_leapfrog = n_leapfrog_;
  info.inv_metric.assign(inv_metric_.data(), inv_metric_.data() + dim_);
  result.info = std::move(info);
  return result;
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_chains < 1 || n_samples < 1 || n_warmup < 0) {
    throw ValidationError("sampler: n_chains and n_samples must be >= 1, n_warmup >= 0");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw ValidationError("sampler: target_accept must lie in (0, 1)");
  }
  if (max_tree_depth < 1) throw ValidationError("sampler: max_tree_depth must be >= 1");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ValidationError("sampler: init_scale must be >= 0");
  if (threads < 1) throw ValidationError("sampler: threads must be >= 1");
}

nlohmann::json to_json(const SamplerConfig& c) {
  return {{"n_chains", c.n_chains},         {"n_warmup", c.n_warmup},
          {"n_samples", c.n_samples},       {"target_accept", c.target_accept},
          {"max_tree_depth", c.max_tree_depth}, {"seed", c.seed},
          {"init_scale", c.init_scale}};
}

SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("sampler config must be a JSON object");
  SamplerConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_chains") c.n_chains = v.get<int>();
      else if (key == "n_warmup") c.n_warmup = v.get<int>();
      else if (key == "n_samples") c.n_samples = v.get<int>();
      else if (key == "target_accept") c.target_accept = v.get<double>();
      else if (key == "max_tree_depth") c.max_tree_depth = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "init_scale") c.init_scale = v.get<double>();
      else throw ValidationError("sampler: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("sampler: ") + ex.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ChainInfo& i) {
  return {{"step_size", i.step_size},
          {"mean_accept_stat", i.mean_accept_stat},
          {"divergences", i.divergences},
          {"warmup_divergences", i.warmup_divergences},
          {"mean_tree_depth", i.mean_tree_depth},
          {"n_leapfrog", i.n_leapfrog},
          {"max_depth_hits", i.max_depth_hits},
          {"inv_metric", i.inv_metric}};
}

ChainInfo chain_info_from_json(const nlohmann::json& j) {
  ChainInfo i;
  i.step_size = j.at("step_size").get<double>();
  i.mean_accept_stat = j.at("mean_accept_stat").get<double>();
  i.divergences = j.at("divergences").get<std::size_t>();
  i.warmup_divergences = j.value("warmup_divergences", std::size_t{0});
  i.mean_tree_depth = j.at("mean_tree_depth").get<double>();
  i.n_leapfrog = j.at("n_leapfrog").get<std::size_t>();
  i.max_depth_hits = j.value("max_depth_hits", std::size_t{0});
  i.inv_metric = j.at("inv_metric").get<std::vector<double>>();
  return i;
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_density + 0.5 * z.p.cwiseProduct(z.p).dot(inv_metric);
}

void leapfrog(const LogDensity& target, PhasePoint& z, double eps, const Eigen::VectorXd& inv_metric) {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_metric.cwiseProduct(z.p);
  evaluate(target, z);
  z.p += 0.5 * eps * z.grad;
}

ChainResult run_chain(const LogDensity& target, const SamplerConfig& cfg, std::size_t chain) {
  cfg.validate();
  NutsChain runner(target, cfg, Rng::stream(cfg.seed, chain, kChainTag));
  return runner.run();
}

std::vector<ChainResult> run_chains(const LogDensity& target, const SamplerConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_chains);
  std::vector<ChainResult> results(n);
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.threads));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n; ++c) results[c] = run_chain(target, cfg, c);
    return results;
  }
  std::vector<std::exception_ptr> errors(n);
  for (std::size_t first = 0; first < n; first += workers) {
    std::vector<std::jthread> pool;
    for (std::size_t c = first; c < std::min(n, first + workers); ++c) {
      pool.emplace_back([&, c] {
        try {
          results[c] = run_chain(target, cfg, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

PosteriorDraws::PosteriorDraws(ParamLayout layout, std::vector<std::string> patient_ids,
                               std::size_t n_chains, std::size_t n_samples, RowMatrix values)
    : layout_(layout),
      patient_ids_(std::move(patient_ids)),
      n_chains_(n_chains),
      n_samples_(n_samples),
      values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != n_chains_ * n_samples_ ||
      static_cast<std::size_t>(values_.cols()) != layout_.dim()) {
    throw ValidationError("draws: value matrix does not match chains x samples x dim");
  }
  if (patient_ids_.size() != layout_.n_patients()) {
    throw ValidationError("draws: patient id count does not match the layout");
  }
}

std::span<const double> PosteriorDraws::row(std::size_t r) const {
  return {values_.data() + r * static_cast<std::size_t>(values_.cols()), static_cast<std::size_t>(values_.cols())};
}

Eigen::MatrixXd PosteriorDraws::theta_mean() const {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout_.n_patients()), kThetaDim);
  for (std::size_t r = 0; r < n_draws(); ++r) acc += theta(r);
  if (n_draws() > 0) acc /= static_cast<double>(n_draws());
  return acc;
}

Eigen::MatrixXd PosteriorDraws::param_chains(std::size_t param_index) const {
  return chains_of([param_index](std::span<const double> x) { return x[param_index]; });
}

PosteriorDraws sample(const SufficientStats& stats, const PriorSpec& priors, std::size_t n_factors,
                      const SamplerConfig& cfg) {
  PosteriorModel model(stats, priors, n_factors);
  auto chains = run_chains(model, cfg);
  const auto n_samples = static_cast<std::size_t>(cfg.n_samples);
  RowMatrix values(static_cast<Eigen::Index>(chains.size() * n_samples), static_cast<Eigen::Index>(model.dim()));
  for (std::size_t c = 0; c < chains.size(); ++c) {
    values.middleRows(static_cast<Eigen::Index>(c * n_samples), static_cast<Eigen::Index>(n_samples)) = chains[c].draws;
  }
  PosteriorDraws draws(model.layout(), stats.patient_ids(), chains.size(), n_samples, std::move(values));
  draws.config = cfg;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& info = chains[c].info;
    const double rate = static_cast<double>(info.divergences) / static_cast<double>(n_samples);
    if (rate > 0.1) {
      draws.flagged = true;
      draws.warnings.push_back("chain " + std::to_string(c) + ": divergence rate " +
                               std::to_string(rate) + " exceeds 0.1 after warmup");
    }
    draws.chains.push_back(info);
  }
  return draws;
}

}  // namespace somnus
