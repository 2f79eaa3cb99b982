#include "somnus/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <boost/math/special_functions/beta.hpp>

#include "somnus/error.hpp"
#include "somnus/model.hpp"
#include "somnus/simulate.hpp"

namespace somnus {

namespace {

constexpr std::uint64_t kPpcTag = 31;
constexpr std::uint64_t kSummaryTag = 25;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "NaN"; }

struct PatientPpcInput {
  std::size_t draw_index = 0;  // row in the draws' patient order
  Stage first = Stage::NonREM;
  std::size_t sleep_epochs = 0;
  std::vector<Stage> after_wake;
  std::array<std::vector<double>, 2> durations;
};

// An event whose end falls on a stage change or the end of the recording was
// cut short, so its length says little about the duration distribution.
bool censored(const SleepRecord& r, const Event& e) {
  const double end = e.end_sec();
  if (end >= r.span_sec() - 1e-9) return true;
  const double epochs = end / kEpochSec;
  const double boundary = std::round(epochs);
  if (std::abs(epochs - boundary) > 1e-9 || boundary < 1.0) return false;
  const auto j = static_cast<std::size_t>(boundary);
  return r.stages[j] != r.stages[j - 1];
}

}  // namespace

std::array<double, kPpcStats> night_statistics(const SleepRecord& record) {
  std::array<double, kPpcStats> s{};
  s[kTimeREM] = kEpochSec * static_cast<double>(record.count(Stage::REM)) / 3600.0;
  s[kTimeNonREM] = kEpochSec * static_cast<double>(record.count(Stage::NonREM)) / 3600.0;
  for (const auto& e : record.events) s[e.stage == Stage::REM ? kEventsREM : kEventsNonREM] += 1.0;
  s[kAhiREM] = s[kTimeREM] > 0.0 ? s[kEventsREM] / s[kTimeREM] : 0.0;
  s[kAhiNonREM] = s[kTimeNonREM] > 0.0 ? s[kEventsNonREM] / s[kTimeNonREM] : 0.0;
  return s;
}

double quantile(std::vector<double>& values, double p) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PpcReport posterior_predictive(const PosteriorDraws& draws, const std::vector<SleepRecord>& records,
                               const PpcOptions& options) {
  if (options.n_sims_per_draw < 1) throw ValidationError("ppc: n_sims_per_draw must be >= 1");
  if (draws.n_draws() == 0) throw ValidationError("ppc: no draws");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < draws.patient_ids().size(); ++i) index[draws.patient_ids()[i]] = i;

  PpcReport report;
  report.n_sims_per_draw = options.n_sims_per_draw;
  std::vector<PatientPpcInput> inputs;
  std::vector<const SleepRecord*> kept;
  std::array<std::vector<double>, 2> pooled;
  for (const auto& r : records) {
    const auto it = index.find(r.patient_id);
    if (it == index.end()) throw ValidationError("ppc: patient " + r.patient_id + " is not in the fitted draws");
    PatientPpcInput in;
    in.draw_index = it->second;
    in.sleep_epochs = r.count(Stage::REM) + r.count(Stage::NonREM);
    if (in.sleep_epochs == 0) {
      report.excluded.push_back({r.patient_id, "no sleep epochs"});
      continue;
    }
    in.first = *std::find_if(r.stages.begin(), r.stages.end(), is_sleep);
    for (std::size_t j = 1; j < r.stages.size(); ++j) {
      if (r.stages[j - 1] == Stage::Awake && is_sleep(r.stages[j])) in.after_wake.push_back(r.stages[j]);
    }
    if (in.after_wake.empty()) in.after_wake.push_back(in.first);
    std::array<std::vector<double>, 2> cut;
    for (const auto& e : r.events) {
      const auto k = static_cast<std::size_t>(sleep_index(e.stage));
      if (censored(r, e)) {
        cut[k].push_back(e.duration_sec);
      } else {
        in.durations[k].push_back(e.duration_sec);
        pooled[k].push_back(e.duration_sec);
      }
    }
    for (std::size_t k = 0; k < 2; ++k) {
      if (in.durations[k].empty()) in.durations[k] = cut[k];
    }
    inputs.push_back(std::move(in));
    kept.push_back(&r);
  }

  std::vector<std::size_t> used;
  const std::size_t total = draws.n_draws();
  if (options.max_draws == 0 || options.max_draws >= total) {
    for (std::size_t r = 0; r < total; ++r) used.push_back(r);
  } else {
    for (std::size_t t = 0; t < options.max_draws; ++t) used.push_back(t * total / options.max_draws);
  }
  report.n_draws_used = used.size();

  const std::size_t n = inputs.size();
  const std::size_t reps = used.size() * options.n_sims_per_draw;
  std::vector<std::array<std::vector<double>, kPpcStats>> sims(n);
  for (auto& s : sims)
    for (auto& v : s) v.reserve(reps);

  std::vector<FixedEffects> fxs;
  std::vector<Eigen::MatrixXd> thetas;
  for (std::size_t r : used) {
    fxs.push_back(draws.fixed_effects(r));
    thetas.push_back(draws.theta(r));
  }

  auto simulate_patient = [&](std::size_t i) {
    const auto& in = inputs[i];
    for (std::size_t u = 0; u < used.size(); ++u) {
      const std::size_t r = used[u];
      const FixedEffects& fx = fxs[u];
      std::array<double, kThetaDim> th{};
      for (std::size_t c = 0; c < kThetaDim; ++c) {
        th[c] = thetas[u](static_cast<Eigen::Index>(in.draw_index), static_cast<Eigen::Index>(c));
      }
      const std::array<double, 2> rate = {fx.lambda[0] * std::exp(th[kPhiCol]), fx.lambda[1] * std::exp(th[kPhiCol + 1])};
      std::array<std::array<std::array<double, 3>, 2>, 2> probs{};
      for (int h = 0; h < 2; ++h)
        for (int k = 0; k < 2; ++k) probs[h][k] = transition_probs(fx.mu, fx.tau, th, h, sleep_stage(k));

      NightModel model;
      model.next_stage = [&probs](Stage from, int h, std::size_t) { return probs[h][sleep_index(from)]; };
      model.event_rate = [&rate](Stage s, std::size_t) { return rate[static_cast<std::size_t>(sleep_index(s))]; };
      model.event_duration = [&](Stage s, Rng& rng) {
        const auto k = static_cast<std::size_t>(sleep_index(s));
        const auto& own = in.durations[k];
        if (!own.empty()) return own[rng.index(own.size())];
        if (!pooled[k].empty()) return pooled[k][rng.index(pooled[k].size())];
        return rng.uniform(options.fallback_duration_lo, options.fallback_duration_hi);
      };
      model.after_wake = [&in](Rng& rng) { return in.after_wake[rng.index(in.after_wake.size())]; };

      for (std::size_t s = 0; s < options.n_sims_per_draw; ++s) {
        Rng rng = Rng::stream(options.seed, (r * draws.layout().n_patients() + in.draw_index) * options.n_sims_per_draw + s, kPpcTag);
        const auto night = simulate_night(model, in.first, in.sleep_epochs, rng);
        const auto st = night_statistics(night);
        for (int q = 0; q < kPpcStats; ++q) sims[i][static_cast<std::size_t>(q)].push_back(st[static_cast<std::size_t>(q)]);
      }
    }
  };

  // Each patient owns its output slot and random streams, so the split over
  // threads does not change the result.
  const std::size_t n_threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(n, 1));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < n; ++i) simulate_patient(i);
  } else {
    std::vector<std::exception_ptr> errors(n_threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < n; i += n_threads) simulate_patient(i);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::array<std::size_t, kPpcStats> covered{};
  for (std::size_t i = 0; i < n; ++i) {
    report.patient_ids.push_back(kept[i]->patient_id);
    const auto observed = night_statistics(*kept[i]);
    std::array<PpcCell, kPpcStats> row;
    for (int q = 0; q < kPpcStats; ++q) {
      auto& v = sims[i][static_cast<std::size_t>(q)];
      PpcCell c;
      c.observed = observed[static_cast<std::size_t>(q)];
      double sum = 0.0;
      for (double x : v) sum += x;
      c.mean = sum / static_cast<double>(v.size());
      c.lower = quantile(v, 0.025);
      c.upper = quantile(v, 0.975);
      c.degenerate = c.lower == c.upper;
      c.covered = c.observed >= c.lower && c.observed <= c.upper;
      covered[static_cast<std::size_t>(q)] += c.covered;
      row[static_cast<std::size_t>(q)] = c;
    }
    report.cells.push_back(row);
  }
  for (int q = 0; q < kPpcStats; ++q) {
    report.coverage[static_cast<std::size_t>(q)] = n > 0 ? static_cast<double>(covered[static_cast<std::size_t>(q)]) / static_cast<double>(n) : 0.0;
  }
  return report;
}

nlohmann::ordered_json to_json(const PpcReport& report) {
  nlohmann::ordered_json j;
  j["n_draws_used"] = report.n_draws_used;
  j["n_sims_per_draw"] = report.n_sims_per_draw;
  auto& cov = j["coverage"] = nlohmann::ordered_json::object();
  for (int q = 0; q < kPpcStats; ++q) cov[kPpcStatNames[static_cast<std::size_t>(q)]] = report.coverage[static_cast<std::size_t>(q)];
  auto& ex = j["excluded"] = nlohmann::ordered_json::array();
  for (const auto& e : report.excluded) ex.push_back({{"patient_id", e.patient_id}, {"reason", e.reason}});
  auto& pats = j["patients"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    nlohmann::ordered_json p;
    p["patient_id"] = report.patient_ids[i];
    for (int q = 0; q < kPpcStats; ++q) {
      const auto& c = report.cells[i][static_cast<std::size_t>(q)];
      p[kPpcStatNames[static_cast<std::size_t>(q)]] = {{"observed", c.observed}, {"mean", c.mean}, {"lower", c.lower},
                                                       {"upper", c.upper}, {"covered", c.covered}, {"degenerate", c.degenerate}};
    }
    pats.push_back(p);
  }
  return j;
}

void write_ppc_csv(std::ostream& out, const PpcReport& report) {
  out << "patient_id,statistic,observed,mean,lower,upper,covered,degenerate\n";
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    for (int q = 0; q < kPpcStats; ++q) {
      const auto& c = report.cells[i][static_cast<std::size_t>(q)];
      out << report.patient_ids[i] << ',' << kPpcStatNames[static_cast<std::size_t>(q)] << ',' << format_double(c.observed) << ','
          << format_double(c.mean) << ',' << format_double(c.lower) << ',' << format_double(c.upper) << ','
          << (c.covered ? 1 : 0) << ',' << (c.degenerate ? 1 : 0) << '\n';
    }
  }
}

ScreeReport scree_spectrum(const Eigen::MatrixXd& theta_means) {
  if (theta_means.rows() < 2) throw ValidationError("scree: need at least two patients");
  const Eigen::MatrixXd centered = theta_means.rowwise() - theta_means.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(theta_means.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  ScreeReport r;
  r.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  r.cumulative_fraction.resize(r.eigenvalues.size());
  const double total = r.eigenvalues.sum();
  double run = 0.0;
  for (Eigen::Index e = 0; e < r.eigenvalues.size(); ++e) {
    run += r.eigenvalues(e);
    r.cumulative_fraction(e) = total > 0.0 ? run / total : 0.0;
  }
  return r;
}

ScreeReport diagonal_prefit_scree(const SufficientStats& stats, const PriorSpec& priors, const SamplerConfig& cfg) {
  const auto draws = sample(stats, priors, 0, cfg);
  return scree_spectrum(draws.theta_mean());
}

nlohmann::ordered_json to_json(const ScreeReport& report) {
  nlohmann::ordered_json j;
  j["eigenvalues"] = std::vector<double>(report.eigenvalues.data(), report.eigenvalues.data() + report.eigenvalues.size());
  j["cumulative_fraction"] = std::vector<double>(report.cumulative_fraction.data(),
                                                 report.cumulative_fraction.data() + report.cumulative_fraction.size());
  return j;
}

AlignedLoadings align_factors(const std::vector<Eigen::MatrixXd>& loadings) {
  if (loadings.empty()) throw ValidationError("align: no draws");
  const Eigen::Index rows = loadings[0].rows(), k = loadings[0].cols();
  if (k < 1) throw ValidationError("align: the fit has no factor columns");

  Eigen::MatrixXd pivot = loadings[0];
  for (Eigen::Index f = 0; f < k; ++f) {
    Eigen::Index arg = 0;
    pivot.col(f).cwiseAbs().maxCoeff(&arg);
    if (pivot(arg, f) < 0.0) pivot.col(f) = -pivot.col(f);
  }

  AlignedLoadings out;
  out.draws.reserve(loadings.size());
  for (const auto& lam : loadings) {
    if (lam.rows() != rows || lam.cols() != k) throw ValidationError("align: loadings differ in shape");
    Eigen::MatrixXd sim(k, k);  // sim(draw column, pivot column)
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        const double norm = lam.col(a).norm() * pivot.col(b).norm();
        sim(a, b) = norm > 0.0 ? lam.col(a).dot(pivot.col(b)) / norm : 0.0;
      }
    }
    Eigen::MatrixXd aligned(rows, k);
    std::vector<bool> used_a(static_cast<std::size_t>(k), false), used_b(static_cast<std::size_t>(k), false);
    for (Eigen::Index step = 0; step < k; ++step) {
      Eigen::Index best_a = -1, best_b = -1;
      double best = -1.0;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (used_a[static_cast<std::size_t>(a)]) continue;
        for (Eigen::Index b = 0; b < k; ++b) {
          if (used_b[static_cast<std::size_t>(b)]) continue;
          if (std::abs(sim(a, b)) > best) {
            best = std::abs(sim(a, b));
            best_a = a;
            best_b = b;
          }
        }
      }
      used_a[static_cast<std::size_t>(best_a)] = used_b[static_cast<std::size_t>(best_b)] = true;
      aligned.col(best_b) = sim(best_a, best_b) < 0.0 ? Eigen::VectorXd(-lam.col(best_a)) : Eigen::VectorXd(lam.col(best_a));
    }
    out.draws.push_back(std::move(aligned));
  }

  out.mean = Eigen::MatrixXd::Zero(rows, k);
  out.lower.resize(rows, k);
  out.upper.resize(rows, k);
  out.flagged.resize(rows, k);
  for (const auto& a : out.draws) out.mean += a;
  out.mean /= static_cast<double>(out.draws.size());
  std::vector<double> v(out.draws.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index f = 0; f < k; ++f) {
      for (std::size_t d = 0; d < out.draws.size(); ++d) v[d] = out.draws[d](r, f);
      out.lower(r, f) = quantile(v, 0.025);
      out.upper(r, f) = quantile(v, 0.975);
      out.flagged(r, f) = out.lower(r, f) <= 0.0 && out.upper(r, f) >= 0.0;
    }
  }
  out.zeroed = out.mean;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index f = 0; f < k; ++f)
      if (out.flagged(r, f)) out.zeroed(r, f) = 0.0;
  return out;
}

AlignedLoadings align_factors(const PosteriorDraws& draws) {
  std::vector<Eigen::MatrixXd> lams;
  lams.reserve(draws.n_draws());
  for (std::size_t r = 0; r < draws.n_draws(); ++r) lams.push_back(draws.factors(r).loadings);
  return align_factors(lams);
}

nlohmann::ordered_json to_json(const AlignedLoadings& a) {
  auto matrix = [](const auto& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::ordered_json j;
  j["rows"] = kThetaNames;
  j["mean"] = matrix(a.mean);
  j["lower"] = matrix(a.lower);
  j["upper"] = matrix(a.upper);
  j["interval_contains_zero"] = matrix(a.flagged);
  j["mean_zeroed"] = matrix(a.zeroed);
  return j;
}

std::vector<WeightedSummary> cluster_weighted_summary(const std::vector<double>& values, const Eigen::MatrixXd& weights) {
  if (static_cast<Eigen::Index>(values.size()) != weights.rows()) throw ValidationError("summary: values and weights differ in length");
  std::vector<WeightedSummary> out(static_cast<std::size_t>(weights.cols()));
  for (Eigen::Index k = 0; k < weights.cols(); ++k) {
    auto& s = out[static_cast<std::size_t>(k)];
    double sw = 0.0, swx = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::isnan(values[i])) continue;
      const double w = weights(static_cast<Eigen::Index>(i), k);
      if (w < 0.0) throw ValidationError("summary: negative weight");
      sw += w;
      swx += w * values[i];
    }
    s.weight = sw;
    if (!(sw > 0.0)) continue;
    s.present = true;
    s.mean = swx / sw;
    double ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::isnan(values[i])) continue;
      const double d = values[i] - s.mean;
      ss += weights(static_cast<Eigen::Index>(i), k) * d * d;
    }
    s.sd = sw > 1.0 ? std::sqrt(ss / (sw - 1.0)) : kNaN;
  }
  return out;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("t distribution needs df > 0");
  if (std::isnan(t)) return kNaN;
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * boost::math::ibeta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

RegressionFit ols_regress(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n) throw ValidationError("ols: response and design differ in length");
  if (static_cast<Eigen::Index>(names.size()) != p) throw ValidationError("ols: need one name per design column");
  if (n <= p) throw ValidationError("ols: need more observations than columns");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("ols: non-finite input");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    std::string cols;
    for (Eigen::Index c = qr.rank(); c < p; ++c) {
      if (!cols.empty()) cols += ", ";
      cols += names[static_cast<std::size_t>(qr.colsPermutation().indices()(c))];
    }
    throw ValidationError("ols: design is rank deficient; collinear columns: " + cols);
  }
  RegressionFit fit;
  fit.names = names;
  fit.n = static_cast<std::size_t>(n);
  fit.df = static_cast<std::size_t>(n - p);
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  double rss = resid.squaredNorm();
  if (rss <= 1e-24 * std::max(1.0, y.squaredNorm())) {
    rss = 0.0;
    fit.degenerate = true;
  }
  fit.sigma = std::sqrt(rss / static_cast<double>(fit.df));

  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd unscaled = qr.colsPermutation() * (r_inv * r_inv.transpose()) * qr.colsPermutation().transpose();
  for (Eigen::Index c = 0; c < p; ++c) {
    const double est = beta(c);
    const double se = fit.sigma * std::sqrt(unscaled(c, c));
    double t = kNaN, pv = kNaN;
    if (se > 0.0) {
      t = est / se;
      pv = 2.0 * student_t_cdf(-std::abs(t), static_cast<double>(fit.df));
    } else if (est != 0.0) {
      t = std::copysign(std::numeric_limits<double>::infinity(), est);
      pv = 0.0;
    }
    fit.estimates.push_back(est);
    fit.std_errors.push_back(se);
    fit.t_values.push_back(t);
    fit.p_values.push_back(pv);
  }
  return fit;
}

Eigen::MatrixXd cluster_design(const ClusterSolution& clusters, int reference, DummyMode mode,
                               const Eigen::MatrixXd& covariates, const std::vector<std::string>& covariate_names,
                               std::vector<std::string>* names) {
  if (reference < 0 || reference >= clusters.k) throw ValidationError("reference cluster out of range");
  const auto n = static_cast<Eigen::Index>(clusters.assignments.size());
  if (covariates.size() > 0 && covariates.rows() != n) throw ValidationError("covariates and clusters differ in length");
  if (static_cast<Eigen::Index>(covariate_names.size()) != covariates.cols()) throw ValidationError("need one name per covariate");
  Eigen::MatrixXd x(n, 1 + (clusters.k - 1) + covariates.cols());
  names->clear();
  names->push_back("intercept");
  x.col(0).setOnes();
  Eigen::Index col = 1;
  for (int c = 0; c < clusters.k; ++c) {
    if (c == reference) continue;
    names->push_back("cluster" + std::to_string(c + 1));
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, col) = mode == DummyMode::Hard ? (clusters.assignments[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0)
                                          : clusters.assign_probs(i, c);
    }
    ++col;
  }
  for (Eigen::Index c = 0; c < covariates.cols(); ++c) {
    names->push_back(covariate_names[static_cast<std::size_t>(c)]);
    x.col(col++) = covariates.col(c);
  }
  return x;
}

PcaProjection pca_projection(const Eigen::MatrixXd& theta_means, const std::vector<int>& columns) {
  if (theta_means.rows() < 2) throw ValidationError("pca: need at least two patients");
  Eigen::MatrixXd x(theta_means.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] < 0 || columns[c] >= theta_means.cols()) throw ValidationError("pca: column out of range");
    x.col(static_cast<Eigen::Index>(c)) = theta_means.col(columns[c]);
  }
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  const double total = cov.trace();
  if (!(total > 0.0)) throw ValidationError("pca: input has zero variance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index top = cov.rows() - 1;
  PcaProjection out;
  out.loading = eig.eigenvectors().col(top).normalized();
  Eigen::Index arg = 0;
  out.loading.cwiseAbs().maxCoeff(&arg);
  if (out.loading(arg) < 0.0) out.loading = -out.loading;
  out.scores = centered * out.loading;
  out.explained = eig.eigenvalues()(top) / total;
  return out;
}

SummaryClustering summary_stat_clustering(const std::vector<SleepRecord>& records, int k, int restarts, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(records.size());
  SummaryClustering out;
  out.features.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = night_statistics(records[static_cast<std::size_t>(i)]);
    out.features.row(i) << s[kAhiREM], s[kAhiNonREM], s[kTimeREM], s[kTimeNonREM];
  }
  if (n < 2) throw ValidationError("summary clustering: need at least two patients");
  const Eigen::RowVectorXd mean = out.features.colwise().mean();
  out.standardized = out.features.rowwise() - mean;
  Eigen::RowVectorXd sd(4);
  for (Eigen::Index c = 0; c < 4; ++c) {
    sd(c) = std::sqrt(out.standardized.col(c).squaredNorm() / static_cast<double>(n - 1));
    if (!(sd(c) > 0.0)) throw ValidationError(std::string("summary clustering: column ") + kSummaryFeatures[static_cast<std::size_t>(c)] + " has zero variance");
    out.standardized.col(c) /= sd(c);
  }
  Rng rng = Rng::stream(seed, 0, kSummaryTag);
  const auto fit = kmeans(out.standardized, k, restarts, rng);
  auto& s = out.solution;
  s.k = k;
  s.assignments = fit.labels;
  s.centers = (fit.centers.array().rowwise() * sd.array()).rowwise() + mean.array();
  s.assign_probs = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) s.assign_probs(i, fit.labels[static_cast<std::size_t>(i)]) = 1.0;
  s.expected_loss = fit.loss;
  s.boundary.assign(static_cast<std::size_t>(n), false);
  return out;
}

const CovariateColumn& CovariateTable::column(const std::string& name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  throw ValidationError("covariates: no column named '" + name + "'");
}

CovariateTable parse_covariates(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("covars.csv", 1, "empty file");
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "patient_id") throw ParseError("covars.csv", 1, "first column must be patient_id");
  std::set<std::string> seen_names;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty() || !seen_names.insert(header[c]).second) throw ParseError("covars.csv", 1, "empty or duplicate column name");
  }
  CovariateTable t;
  std::vector<std::vector<std::string>> raw(header.size() - 1);
  std::set<std::string> ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw ParseError("covars.csv", lineno, "expected " + std::to_string(header.size()) + " fields");
    if (f[0].empty() || !ids.insert(f[0]).second) throw ParseError("covars.csv", lineno, "empty or duplicate patient_id");
    t.patient_ids.push_back(f[0]);
    for (std::size_t c = 1; c < f.size(); ++c) raw[c - 1].push_back(f[c]);
  }
  for (std::size_t c = 0; c < raw.size(); ++c) {
    CovariateColumn col;
    col.name = header[c + 1];
    for (const auto& v : raw[c]) {
      if (!is_missing(v) && !parse_number(v)) col.categorical = true;
    }
    for (const auto& v : raw[c]) {
      if (col.categorical) {
        col.levels.push_back(is_missing(v) ? std::string() : v);
      } else {
        col.numeric.push_back(is_missing(v) ? kNaN : *parse_number(v));
      }
    }
    t.columns.push_back(std::move(col));
  }
  return t;
}

}  // namespace somnus
