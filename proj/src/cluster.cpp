#include "somnus/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "somnus/error.hpp"

namespace somnus {

namespace {

constexpr std::uint64_t kMeanTag = 21;
constexpr std::uint64_t kPerDrawTag = 22;
constexpr std::uint64_t kConcatTag = 23;
constexpr std::uint64_t kSweepTag = 24;

void check_k(int k, std::size_t n) {
  if (k < 1) throw ValidationError("K must be >= 1");
  if (static_cast<std::size_t>(k) > n) {
    throw ValidationError("K = " + std::to_string(k) + " exceeds the number of patients (" + std::to_string(n) + ")");
  }
}

int nearest(const Eigen::MatrixXd& centers, const double* x, Eigen::Index d, double* dist_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double diff = x[j] - centers(c, j);
      s += diff * diff;
    }
    if (s < best_d) {
      best_d = s;
      best = static_cast<int>(c);
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

// Row-major copy so each point is contiguous.
using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd kmeanspp(const Rows& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (x.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[static_cast<std::size_t>(pick)] == 0.0 && pick > 0) --pick;
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    }
    centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - centers.row(c)).squaredNorm());
    }
  }
  return centers;
}

// One Lloyd run; returns false when a cluster stays empty.
bool lloyd(const Rows& x, Eigen::MatrixXd& centers, std::vector<int>& labels, int max_iter) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const int k = static_cast<int>(centers.rows());
  labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest(centers, x.row(i).data(), d, &dist[static_cast<std::size_t>(i)]);
      if (c != labels[static_cast<std::size_t>(i)]) {
        labels[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    std::vector<int> size(static_cast<std::size_t>(k), 0);
    for (int c : labels) ++size[static_cast<std::size_t>(c)];
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (size[static_cast<std::size_t>(c)] > 0) continue;
      // Move the empty center onto the point farthest from its own center,
      // taking it from a cluster that can spare it.
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (size[static_cast<std::size_t>(labels[u])] > 1 && dist[u] > far_d) {
          far_d = dist[u];
          far = i;
        }
      }
      if (far < 0 || far_d <= 0.0) return false;
      const auto u = static_cast<std::size_t>(far);
      --size[static_cast<std::size_t>(labels[u])];
      labels[u] = c;
      size[static_cast<std::size_t>(c)] = 1;
      dist[u] = 0.0;
      reseeded = true;
    }
    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) centers.row(c) /= static_cast<double>(size[static_cast<std::size_t>(c)]);
    if (!changed && !reseeded) return true;
  }
  std::vector<int> size(static_cast<std::size_t>(k), 0);
  for (int c : labels) ++size[static_cast<std::size_t>(c)];
  return std::all_of(size.begin(), size.end(), [](int s) { return s > 0; });
}

ClusterSolution finish(const ThetaDraws& draws, int k, Eigen::MatrixXd centers, std::vector<int> labels) {
  ClusterSolution s;
  s.k = k;
  s.centers = std::move(centers);
  s.assignments = std::move(labels);
  s.assign_probs = assignment_probabilities(draws, s.centers);
  s.expected_loss = expected_kmeans_loss(draws, s.assignments, s.centers);
  s.boundary.resize(s.assignments.size());
  for (std::size_t i = 0; i < s.assignments.size(); ++i) {
    const auto row = s.assign_probs.row(static_cast<Eigen::Index>(i));
    s.boundary[i] = row(s.assignments[i]) + 1e-12 < row.maxCoeff();
  }
  return s;
}

}  // namespace

ThetaDraws::ThetaDraws(std::size_t m, std::size_t n, std::size_t d) : m_(m), n_(n), d_(d), data_(m * n * d, 0.0) {}

ThetaDraws ThetaDraws::from_posterior(const PosteriorDraws& draws) {
  ThetaDraws t(draws.n_draws(), draws.layout().n_patients(), kThetaDim);
  for (std::size_t r = 0; r < draws.n_draws(); ++r) {
    const Eigen::MatrixXd th = draws.theta(r);
    for (std::size_t i = 0; i < t.n_; ++i) {
      for (std::size_t c = 0; c < kThetaDim; ++c) t.at(r, i)[c] = th(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
  }
  return t;
}

ThetaDraws ThetaDraws::from_matrices(const std::vector<Eigen::MatrixXd>& draws) {
  if (draws.empty()) throw ValidationError("no draws");
  const auto n = static_cast<std::size_t>(draws[0].rows());
  const auto d = static_cast<std::size_t>(draws[0].cols());
  ThetaDraws t(draws.size(), n, d);
  for (std::size_t j = 0; j < draws.size(); ++j) {
    if (static_cast<std::size_t>(draws[j].rows()) != n || static_cast<std::size_t>(draws[j].cols()) != d) {
      throw ValidationError("draw matrices differ in shape");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) t.at(j, i)[c] = draws[j](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  }
  return t;
}

Eigen::MatrixXd ThetaDraws::draw(std::size_t j) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_));
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < d_; ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = at(j, i)[c];
  return out;
}

Eigen::MatrixXd ThetaDraws::mean() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_));
  for (std::size_t j = 0; j < m_; ++j)
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t c = 0; c < d_; ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) += at(j, i)[c];
  if (m_ > 0) out /= static_cast<double>(m_);
  return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& x, int k, int restarts, Rng& rng, int max_iter) {
  check_k(k, static_cast<std::size_t>(x.rows()));
  if (restarts < 1) throw ValidationError("restarts must be >= 1");
  if (!x.allFinite()) throw NumericalError("K-means input is not finite");
  const Rows rows = x;
  KMeansResult best;
  best.loss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Eigen::MatrixXd centers = kmeanspp(rows, k, rng);
    std::vector<int> labels;
    if (!lloyd(rows, centers, labels, max_iter)) continue;
    const double loss = kmeans_loss(x, labels, centers);
    if (loss < best.loss) {
      best.loss = loss;
      best.centers = std::move(centers);
      best.labels = std::move(labels);
    }
  }
  if (best.labels.empty()) {
    throw ValidationError("K-means left a cluster empty in every restart (fewer than K distinct points?)");
  }
  return best;
}

double kmeans_loss(const Eigen::MatrixXd& x, const std::vector<int>& labels, const Eigen::MatrixXd& centers) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

Eigen::MatrixXd cluster_means(const Eigen::MatrixXd& x, const std::vector<int>& labels, int k) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, x.cols());
  std::vector<int> size(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    c.row(l) += x.row(i);
    ++size[static_cast<std::size_t>(l)];
  }
  for (int l = 0; l < k; ++l) {
    if (size[static_cast<std::size_t>(l)] > 0) c.row(l) /= static_cast<double>(size[static_cast<std::size_t>(l)]);
  }
  return c;
}

double expected_kmeans_loss(const ThetaDraws& draws, const std::vector<int>& labels, const Eigen::MatrixXd& centers) {
  const std::size_t d = draws.dim();
  double total = 0.0;
  for (std::size_t j = 0; j < draws.n_draws(); ++j) {
    for (std::size_t i = 0; i < draws.n_patients(); ++i) {
      const double* x = draws.at(j, i);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x[c] - centers(labels[i], static_cast<Eigen::Index>(c));
        total += diff * diff;
      }
    }
  }
  return draws.n_draws() > 0 ? total / static_cast<double>(draws.n_draws()) : 0.0;
}

Eigen::MatrixXd assignment_probabilities(const ThetaDraws& draws, const Eigen::MatrixXd& centers) {
  if (centers.rows() < 1) throw ValidationError("need at least one center");
  if (static_cast<std::size_t>(centers.cols()) != draws.dim()) throw ValidationError("center dimension mismatch");
  if (!centers.allFinite()) throw NumericalError("centers are not finite");
  const auto n = static_cast<Eigen::Index>(draws.n_patients());
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(n, centers.rows());
  for (std::size_t j = 0; j < draws.n_draws(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      ++counts(i, nearest(centers, draws.at(j, static_cast<std::size_t>(i)), centers.cols()));
    }
  }
  return counts.cast<double>() / static_cast<double>(std::max<std::size_t>(draws.n_draws(), 1));
}

ClusterSolution posterior_mean_kmeans(const ThetaDraws& draws, int k, int restarts, std::uint64_t seed) {
  if (draws.n_draws() == 0) throw ValidationError("no posterior draws");
  check_k(k, draws.n_patients());
  Rng rng = Rng::stream(seed, 0, kMeanTag);
  auto fit = kmeans(draws.mean(), k, restarts, rng);
  return finish(draws, k, std::move(fit.centers), std::move(fit.labels));
}

ClusterSolution concatenated_kmeans(const ThetaDraws& draws, int k, int restarts, std::uint64_t seed, std::size_t cap) {
  if (draws.n_draws() == 0) throw ValidationError("no posterior draws");
  check_k(k, draws.n_patients());
  const std::size_t n = draws.n_patients(), d = draws.dim(), m = draws.n_draws();
  if (n * d * m > cap) {
    throw ValidationError("concatenated K-means needs " + std::to_string(n * d * m) + " values, above the cap of " +
                          std::to_string(cap) + "; thin the draws or raise the cap");
  }
  Eigen::MatrixXd wide(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d * m));
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) wide(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j * d + c)) = draws.at(j, i)[c];
  Rng rng = Rng::stream(seed, 0, kConcatTag);
  auto fit = kmeans(wide, k, restarts, rng);
  Eigen::MatrixXd centers = cluster_means(draws.mean(), fit.labels, k);
  return finish(draws, k, std::move(centers), std::move(fit.labels));
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ValidationError("ARI: labelings differ in length");
  if (a.size() < 2) throw ValidationError("ARI: need at least two items");
  std::map<std::pair<int, int>, long> table;
  std::map<int, long> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++table[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  auto pairs = [](long x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, v] : table) index += pairs(v);
  for (const auto& [key, v] : rows) sum_a += pairs(v);
  for (const auto& [key, v] : cols) sum_b += pairs(v);
  const double expected = sum_a * sum_b / pairs(static_cast<long>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical in structure
  return (index - expected) / (max_index - expected);
}

CoClustering coclustering(const std::vector<std::vector<int>>& partitions, const std::vector<int>* reference) {
  if (partitions.empty()) throw ValidationError("no partitions");
  const std::size_t n = partitions[0].size();
  CoClustering out;
  Eigen::MatrixXi together = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& p : partitions) {
    if (p.size() != n) throw ValidationError("partitions differ in length");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = i; l < n; ++l)
        if (p[i] == p[l]) ++together(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
    if (reference) out.ari_to_reference.push_back(adjusted_rand_index(p, *reference));
  }
  out.matrix = together.cast<double>() / static_cast<double>(partitions.size());
  out.matrix.triangularView<Eigen::StrictlyLower>() = out.matrix.transpose();
  if (!out.ari_to_reference.empty()) {
    double s = 0.0;
    for (double v : out.ari_to_reference) s += v;
    out.mean_ari = s / static_cast<double>(out.ari_to_reference.size());
  }
  return out;
}

CoClustering per_sample_kmeans_coclustering(const ThetaDraws& draws, int k, std::uint64_t seed,
                                            const std::vector<int>* reference, int restarts) {
  if (draws.n_draws() == 0) throw ValidationError("no posterior draws");
  check_k(k, draws.n_patients());
  std::vector<std::vector<int>> partitions;
  partitions.reserve(draws.n_draws());
  for (std::size_t j = 0; j < draws.n_draws(); ++j) {
    Rng rng = Rng::stream(seed, j, kPerDrawTag);
    partitions.push_back(kmeans(draws.draw(j), k, restarts, rng).labels);
  }
  return coclustering(partitions, reference);
}

std::vector<KSweepRow> k_sweep(const ThetaDraws& draws, int k_max, int restarts, std::uint64_t seed) {
  std::vector<KSweepRow> rows;
  const Eigen::MatrixXd means = draws.mean();
  const int top = std::min<int>(k_max, static_cast<int>(draws.n_patients()));
  for (int k = 1; k <= top; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k), kSweepTag);
    const auto fit = kmeans(means, k, restarts, rng);
    rows.push_back({k, fit.loss, expected_kmeans_loss(draws, fit.labels, fit.centers)});
  }
  return rows;
}

nlohmann::ordered_json to_json(const ClusterSolution& s, const std::vector<std::string>& patient_ids,
                               const std::vector<std::string>& column_names) {
  nlohmann::ordered_json j;
  j["K"] = s.k;
  j["columns"] = column_names;
  auto& centers = j["centers"] = nlohmann::ordered_json::array();
  for (Eigen::Index c = 0; c < s.centers.rows(); ++c) {
    std::vector<double> row;
    for (Eigen::Index d = 0; d < s.centers.cols(); ++d) row.push_back(s.centers(c, d));
    centers.push_back(row);
  }
  j["expected_loss"] = s.expected_loss;
  auto& patients = j["patients"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.assignments.size(); ++i) {
    std::vector<double> probs;
    for (Eigen::Index c = 0; c < s.assign_probs.cols(); ++c) probs.push_back(s.assign_probs(static_cast<Eigen::Index>(i), c));
    patients.push_back({{"patient_id", patient_ids.at(i)},
                        {"assignment", s.assignments[i] + 1},
                        {"assign_probs", probs},
                        {"boundary", static_cast<bool>(s.boundary.empty() ? false : s.boundary[i])}});
  }
  return j;
}

ClusterSolution cluster_solution_from_json(const nlohmann::json& j, std::vector<std::string>* patient_ids) {
  try {
    ClusterSolution s;
    s.k = j.at("K").get<int>();
    if (s.k < 1) throw ValidationError("clusters: K must be >= 1");
    const auto& centers = j.at("centers");
    if (centers.size() != static_cast<std::size_t>(s.k)) throw ValidationError("clusters: expected K centers");
    const auto d = centers.at(0).size();
    s.centers.resize(s.k, static_cast<Eigen::Index>(d));
    for (int c = 0; c < s.k; ++c) {
      const auto row = centers.at(static_cast<std::size_t>(c)).get<std::vector<double>>();
      if (row.size() != d) throw ValidationError("clusters: ragged centers");
      for (std::size_t e = 0; e < d; ++e) s.centers(c, static_cast<Eigen::Index>(e)) = row[e];
    }
    s.expected_loss = j.at("expected_loss").get<double>();
    const auto& patients = j.at("patients");
    s.assign_probs.resize(static_cast<Eigen::Index>(patients.size()), s.k);
    if (patient_ids) patient_ids->clear();
    for (std::size_t i = 0; i < patients.size(); ++i) {
      const auto& p = patients[i];
      const int a = p.at("assignment").get<int>();
      if (a < 1 || a > s.k) throw ValidationError("clusters: assignment out of range");
      s.assignments.push_back(a - 1);
      const auto probs = p.at("assign_probs").get<std::vector<double>>();
      if (probs.size() != static_cast<std::size_t>(s.k)) throw ValidationError("clusters: assign_probs needs K entries");
      double sum = 0.0;
      for (int c = 0; c < s.k; ++c) {
        if (probs[static_cast<std::size_t>(c)] < 0.0) throw ValidationError("clusters: negative probability");
        s.assign_probs(static_cast<Eigen::Index>(i), c) = probs[static_cast<std::size_t>(c)];
        sum += probs[static_cast<std::size_t>(c)];
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("clusters: assign_probs rows must sum to 1");
      s.boundary.push_back(p.value("boundary", false));
      if (patient_ids) patient_ids->push_back(p.at("patient_id").get<std::string>());
    }
    return s;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("clusters: ") + ex.what());
  }
}

}  // namespace somnus
