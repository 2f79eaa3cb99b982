#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "somnus/analysis.hpp"
#include "somnus/cluster.hpp"
#include "somnus/diagnostics.hpp"
#include "somnus/draws_io.hpp"
#include "somnus/error.hpp"
#include "somnus/eval.hpp"
#include "somnus/model.hpp"
#include "somnus/nuts.hpp"
#include "somnus/records.hpp"
#include "somnus/simulate.hpp"
#include "somnus/stats.hpp"

namespace somnus::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> theta_columns() { return {kThetaNames.begin(), kThetaNames.end()}; }

// Tracks declared inputs and outputs of one subcommand and writes its manifest.
class Recorder {
 public:
  explicit Recorder(std::string subcommand) : subcommand_(std::move(subcommand)) {}

  void input(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw ValidationError("input file not found: " + p.string());
    inputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  void draws_input(const fs::path& dir) {
    input(dir / "draws.json");
    for (const char* name : {"draws.bin", "draws.csv"})
      if (fs::exists(dir / name)) input(dir / name);
  }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void note(ojson n) { notes_.push_back(std::move(n)); }

  std::ofstream open(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + p.string());
    output(p);
    return out;
  }
  void write_json(const fs::path& p, const ojson& j) {
    auto out = open(p);
    out << j.dump(2) << '\n';
  }

  ojson config = ojson::object();

  void write_manifest(const fs::path& path, const std::vector<std::string>& args, double seconds) const {
    ojson m;
    m["subcommand"] = subcommand_;
    m["version"] = kVersion;
    m["args"] = args;
    m["cwd"] = fs::current_path().string();
    m["config"] = config;
    m["seeds"] = seeds_;
    m["inputs"] = inputs_;
    auto& outs = m["outputs"] = ojson::array();
    for (const auto& p : outputs_) outs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    if (!notes_.empty()) m["notes"] = notes_;
    m["timings"] = {{"wall_seconds", seconds}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << m.dump(2) << '\n';
  }

 private:
  std::string subcommand_;
  ojson inputs_ = ojson::array();
  std::vector<fs::path> outputs_;
  std::map<std::string, std::uint64_t> seeds_;
  ojson notes_ = ojson::array();
};

fs::path manifest_for_file(const std::string& override_path, const fs::path& out) {
  return override_path.empty() ? fs::path(out.string() + ".manifest.json") : fs::path(override_path);
}
fs::path manifest_for_dir(const std::string& override_path, const fs::path& dir, const std::string& sub) {
  return override_path.empty() ? dir / (sub + ".manifest.json") : fs::path(override_path);
}

ParsedRecords load_records(const std::string& epochs, const std::string& events, Recorder& rec) {
  rec.input(epochs);
  rec.input(events);
  std::ifstream ep(epochs), ev(events);
  auto parsed = parse_records(ep, ev);
  for (const auto& e : parsed.excluded) rec.note({{"excluded", e.patient_id}, {"reason", e.reason}});
  return parsed;
}

void warn_exclusions(const ParsedRecords& parsed, std::ostream& err) {
  for (const auto& e : parsed.excluded) {
    err << ojson{{"warning", "patient excluded"}, {"patient_id", e.patient_id}, {"reason", e.reason}}.dump() << '\n';
  }
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& flag, const nlohmann::json& file, const char* what) {
  if (flag) return *flag;
  if (file.is_object() && file.contains("seed")) return file.at("seed").get<std::uint64_t>();
  throw ValidationError(std::string(what) + ": a seed is required (--seed)");
}

// ---- option blocks ----

struct Common {
  std::string manifest;
};

struct SimulateOpts {
  std::string config, scenario, out_dir = ".";
  std::optional<int> n, epochs, factors;
  std::optional<std::uint64_t> seed;
};

struct StatsOpts {
  std::string epochs, events, out = "stats.json";
};

struct SamplerFlags {
  std::string sampler_file;
  std::optional<int> chains, warmup, samples, max_depth;
  std::optional<double> target_accept;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--sampler", sampler_file, "Sampler JSON (n_chains, n_warmup, n_samples, target_accept, max_tree_depth, seed, init_scale)");
    app->add_option("--chains", chains, "Number of chains");
    app->add_option("--warmup", warmup, "Warm-up iterations per chain");
    app->add_option("--samples", samples, "Retained draws per chain");
    app->add_option("--target-accept", target_accept, "Target acceptance statistic for step-size adaptation");
    app->add_option("--max-depth", max_depth, "Maximum tree depth");
    app->add_option("--seed", seed, "Sampler seed");
  }

  SamplerConfig resolve(Recorder& rec, std::size_t threads, const char* what) const {
    SamplerConfig c;
    nlohmann::json file;
    if (!sampler_file.empty()) {
      rec.input(sampler_file);
      file = read_json(sampler_file);
      c = sampler_config_from_json(file);
    }
    if (chains) c.n_chains = *chains;
    if (warmup) c.n_warmup = *warmup;
    if (samples) c.n_samples = *samples;
    if (target_accept) c.target_accept = *target_accept;
    if (max_depth) c.max_tree_depth = *max_depth;
    c.seed = require_seed(seed, file, what);
    c.threads = threads;
    c.validate();
    return c;
  }
};

struct FitOpts {
  std::string epochs, events, stats, priors, format = "binary", out_dir = "fit";
  int factors = 3;
  SamplerFlags sampler;
};

struct DiagnoseOpts {
  std::string draws, out = "diagnostics.json";
  bool all = false;
};

struct ClusterOpts {
  std::string draws, method = "mean", out = "clusters.json", csv, coclustering_csv;
  int k = 4, restarts = 100, k_max = 8;
  std::optional<std::uint64_t> seed;
  bool per_sample = false;
  int per_sample_restarts = 10;
};

struct PpcOpts {
  std::string draws, epochs, events, out = "ppc.json", csv;
  std::size_t sims_per_draw = 1, max_draws = 0;
  std::uint64_t seed = 1;
};

struct ScreeOpts {
  std::string draws, epochs, events, stats, priors, out = "scree.json";
  SamplerFlags sampler;
};

struct AlignOpts {
  std::string draws, out = "align.json", csv;
};

struct AnalyzeOpts {
  std::string clusters, covariates, outcome, adjust, dummies = "hard", draws, out = "analysis.json", csv;
  int reference = 1;
};

struct EvalOpts {
  std::string scenario = "S1", out;
  int replications = 20, n = 150, epochs = 400, factors = 3, k = 4, restarts = 20;
  SamplerFlags sampler;
};

struct ReplayOpts {
  std::string manifest;
};

// ---- subcommands ----

void cmd_simulate(const SimulateOpts& o, Recorder& rec, std::ostream& out) {
  ScenarioConfig cfg;
  nlohmann::json file;
  if (!o.config.empty()) {
    rec.input(o.config);
    file = read_json(o.config);
    cfg = scenario_config_from_json(file);
  }
  if (!o.scenario.empty()) cfg.scenario = scenario_from_name(o.scenario);
  if (o.n) cfg.n_patients = *o.n;
  if (o.epochs) cfg.n_epochs = *o.epochs;
  if (o.factors) cfg.n_factors = *o.factors;
  cfg.seed = require_seed(o.seed, file, "simulate");
  cfg.validate();
  rec.seed("simulate", cfg.seed);
  rec.config = to_json(cfg);

  const auto [records, truth] = generate_scenario(cfg);
  const fs::path dir = o.out_dir;
  {
    auto f = rec.open(dir / "epochs.csv");
    write_epochs_csv(f, records);
  }
  {
    auto f = rec.open(dir / "events.csv");
    write_events_csv(f, records);
  }
  rec.write_json(dir / "truth.json", to_json(truth));
  if (cfg.scenario == Scenario::S3) {
    const auto outcomes = generate_outcomes(truth, cfg);
    auto f = rec.open(dir / "outcomes.csv");
    f << "patient_id,y\n";
    for (const auto& oc : outcomes.outcomes) f << oc.patient_id << ',' << format_double(oc.y) << '\n';
  }
  out << ojson{{"scenario", scenario_name(cfg.scenario)}, {"patients", records.size()}, {"out_dir", dir.string()}}.dump() << '\n';
}

void cmd_stats(const StatsOpts& o, Recorder& rec, std::ostream& out, std::ostream& err) {
  const auto parsed = load_records(o.epochs, o.events, rec);
  warn_exclusions(parsed, err);
  const auto stats = derive_sufficient_stats(parsed.records);
  rec.write_json(o.out, to_json(stats));
  out << ojson{{"patients", stats.size()}, {"excluded", parsed.excluded.size()}}.dump() << '\n';
}

SufficientStats load_stats(const std::string& epochs, const std::string& events, const std::string& stats_file,
                           Recorder& rec, std::ostream& err) {
  if (!stats_file.empty()) {
    if (!epochs.empty() || !events.empty()) throw ValidationError("give either --stats or --epochs/--events, not both");
    rec.input(stats_file);
    return sufficient_stats_from_json(ojson::parse(read_json(stats_file).dump()));
  }
  if (epochs.empty() || events.empty()) throw ValidationError("--epochs and --events (or --stats) are required");
  const auto parsed = load_records(epochs, events, rec);
  warn_exclusions(parsed, err);
  return derive_sufficient_stats(parsed.records);
}

PriorSpec load_priors(const std::string& path, Recorder& rec) {
  if (path.empty()) return PriorSpec::defaults();
  rec.input(path);
  return priors_from_json(read_json(path));
}

void cmd_fit(const FitOpts& o, std::size_t threads, Recorder& rec, std::ostream& out, std::ostream& err) {
  const auto stats = load_stats(o.epochs, o.events, o.stats, rec, err);
  const auto priors = load_priors(o.priors, rec);
  const auto sc = o.sampler.resolve(rec, threads, "fit");
  if (o.factors < 0 || o.factors > 10) throw ValidationError("--factors must be in [0, 10]");
  const auto format = draws_format_from_name(o.format);
  rec.seed("sampler", sc.seed);
  rec.config = {{"factors", o.factors}, {"format", o.format}, {"sampler", to_json(sc)}, {"priors", to_json(priors)}};

  const auto draws = sample(stats, priors, static_cast<std::size_t>(o.factors), sc);
  const fs::path dir = o.out_dir;
  write_draws(dir, draws, format, to_json(priors));
  rec.output(dir / "draws.json");
  rec.output(dir / (format == DrawsFormat::Binary ? "draws.bin" : "draws.csv"));
  for (const auto& w : draws.warnings) err << ojson{{"warning", w}}.dump() << '\n';
  std::size_t divergences = 0;
  for (const auto& c : draws.chains) divergences += c.divergences;
  out << ojson{{"patients", stats.size()}, {"dim", draws.dim()}, {"draws", draws.n_draws()},
               {"divergences", divergences}, {"flagged", draws.flagged}, {"out_dir", dir.string()}}
             .dump()
      << '\n';
}

void cmd_diagnose(const DiagnoseOpts& o, Recorder& rec, std::ostream& out) {
  rec.draws_input(o.draws);
  const auto draws = read_draws(o.draws);
  rec.config = {{"all", o.all}};
  const auto report = diagnose(draws, !o.all);
  rec.write_json(o.out, to_json(report));
  out << ojson{{"min_ess", report.min_ess}, {"max_rhat", std::isfinite(report.max_rhat) ? ojson(report.max_rhat) : ojson("inf")}}.dump()
      << '\n';
}

void cmd_cluster(const ClusterOpts& o, Recorder& rec, std::ostream& out) {
  const std::uint64_t seed = require_seed(o.seed, {}, "cluster");
  rec.draws_input(o.draws);
  const auto posterior = read_draws(o.draws);
  const auto draws = ThetaDraws::from_posterior(posterior);
  rec.seed("cluster", seed);
  rec.config = {{"k", o.k}, {"restarts", o.restarts}, {"method", o.method}, {"k_max", o.k_max},
                {"per_sample", o.per_sample}, {"per_sample_restarts", o.per_sample_restarts}};

  ClusterSolution sol;
  if (o.method == "mean") {
    sol = posterior_mean_kmeans(draws, o.k, o.restarts, seed);
  } else if (o.method == "concatenated") {
    sol = concatenated_kmeans(draws, o.k, o.restarts, seed);
  } else {
    throw ValidationError("--method must be mean or concatenated");
  }
  ojson j = to_json(sol, posterior.patient_ids(), theta_columns());
  j["method"] = o.method;
  auto& sweep = j["k_sweep"] = ojson::array();
  const int k_max = std::min<int>(o.k_max, static_cast<int>(draws.n_patients()));
  if (k_max >= 1) {
    for (const auto& row : k_sweep(draws, k_max, std::max(1, o.restarts / 4), seed)) {
      sweep.push_back({{"k", row.k}, {"within_loss", row.within_loss}, {"expected_loss", row.expected_loss}});
    }
  }
  if (o.per_sample) {
    const auto cc = per_sample_kmeans_coclustering(draws, o.k, seed, &sol.assignments, o.per_sample_restarts);
    const auto& a = cc.ari_to_reference;
    double mean = 0, sq = 0;
    for (double v : a) mean += v;
    mean /= static_cast<double>(a.size());
    for (double v : a) sq += (v - mean) * (v - mean);
    j["per_sample"] = {{"draws", a.size()},
                       {"mean_ari", mean},
                       {"sd_ari", a.size() > 1 ? std::sqrt(sq / static_cast<double>(a.size() - 1)) : 0.0},
                       {"min_ari", *std::min_element(a.begin(), a.end())},
                       {"max_ari", *std::max_element(a.begin(), a.end())}};
    if (!o.coclustering_csv.empty()) {
      auto f = rec.open(o.coclustering_csv);
      f << "patient_a,patient_b,probability\n";
      const auto& ids = posterior.patient_ids();
      for (Eigen::Index x = 0; x < cc.matrix.rows(); ++x)
        for (Eigen::Index y = 0; y < cc.matrix.cols(); ++y)
          f << ids[static_cast<std::size_t>(x)] << ',' << ids[static_cast<std::size_t>(y)] << ',' << format_double(cc.matrix(x, y)) << '\n';
    }
  }
  rec.write_json(o.out, j);
  if (!o.csv.empty()) {
    auto f = rec.open(o.csv);
    f << "patient_id,assignment";
    for (int c = 0; c < sol.k; ++c) f << ",prob_" << c + 1;
    f << ",boundary\n";
    for (std::size_t i = 0; i < sol.assignments.size(); ++i) {
      f << posterior.patient_ids()[i] << ',' << sol.assignments[i] + 1;
      for (int c = 0; c < sol.k; ++c) f << ',' << format_double(sol.assign_probs(static_cast<Eigen::Index>(i), c));
      f << ',' << (sol.boundary[i] ? 1 : 0) << '\n';
    }
  }
  out << ojson{{"k", sol.k}, {"expected_loss", sol.expected_loss}, {"out", o.out}}.dump() << '\n';
}

void cmd_ppc(const PpcOpts& o, std::size_t threads, Recorder& rec, std::ostream& out, std::ostream& err) {
  rec.draws_input(o.draws);
  const auto draws = read_draws(o.draws);
  const auto parsed = load_records(o.epochs, o.events, rec);
  warn_exclusions(parsed, err);
  PpcOptions opt;
  opt.n_sims_per_draw = o.sims_per_draw;
  opt.max_draws = o.max_draws;
  opt.seed = o.seed;
  opt.threads = threads;
  rec.seed("ppc", o.seed);
  rec.config = {{"sims_per_draw", o.sims_per_draw}, {"max_draws", o.max_draws}};
  const auto report = posterior_predictive(draws, parsed.records, opt);
  rec.write_json(o.out, to_json(report));
  if (!o.csv.empty()) {
    auto f = rec.open(o.csv);
    write_ppc_csv(f, report);
  }
  ojson cov;
  for (int q = 0; q < kPpcStats; ++q) cov[kPpcStatNames[static_cast<std::size_t>(q)]] = report.coverage[static_cast<std::size_t>(q)];
  out << ojson{{"coverage", cov}, {"patients", report.patient_ids.size()}}.dump() << '\n';
}

void cmd_scree(const ScreeOpts& o, std::size_t threads, Recorder& rec, std::ostream& out, std::ostream& err) {
  ScreeReport report;
  if (!o.draws.empty()) {
    rec.draws_input(o.draws);
    rec.config = {{"source", "draws"}};
    report = scree_spectrum(read_draws(o.draws).theta_mean());
  } else {
    const auto stats = load_stats(o.epochs, o.events, o.stats, rec, err);
    const auto priors = load_priors(o.priors, rec);
    const auto sc = o.sampler.resolve(rec, threads, "scree");
    rec.seed("sampler", sc.seed);
    rec.config = {{"source", "diagonal prefit"}, {"sampler", to_json(sc)}, {"priors", to_json(priors)}};
    report = diagonal_prefit_scree(stats, priors, sc);
  }
  rec.write_json(o.out, to_json(report));
  out << to_json(report).dump() << '\n';
}

void cmd_align(const AlignOpts& o, Recorder& rec, std::ostream& out) {
  rec.draws_input(o.draws);
  const auto draws = read_draws(o.draws);
  const auto a = align_factors(draws);
  rec.write_json(o.out, to_json(a));
  if (!o.csv.empty()) {
    auto f = rec.open(o.csv);
    f << "parameter,factor,mean,lower,upper,interval_contains_zero\n";
    for (Eigen::Index r = 0; r < a.mean.rows(); ++r)
      for (Eigen::Index c = 0; c < a.mean.cols(); ++c)
        f << kThetaNames[static_cast<std::size_t>(r)] << ',' << c + 1 << ',' << format_double(a.mean(r, c)) << ','
          << format_double(a.lower(r, c)) << ',' << format_double(a.upper(r, c)) << ',' << a.flagged(r, c) << '\n';
  }
  out << ojson{{"factors", a.mean.cols()}, {"flagged", a.flagged.sum()}}.dump() << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void cmd_analyze(const AnalyzeOpts& o, Recorder& rec, std::ostream& out) {
  rec.input(o.clusters);
  rec.input(o.covariates);
  std::vector<std::string> ids;
  const ClusterSolution sol = cluster_solution_from_json(read_json(o.clusters), &ids);
  std::ifstream cin(o.covariates);
  const auto table = parse_covariates(cin);
  const DummyMode mode = o.dummies == "hard" ? DummyMode::Hard
                         : o.dummies == "probability" ? DummyMode::Probability
                                                      : throw ValidationError("--dummies must be hard or probability");
  if (o.reference < 1 || o.reference > sol.k) throw ValidationError("--reference must be a cluster number in 1..K");
  rec.config = {{"outcome", o.outcome}, {"adjust", split_list(o.adjust)}, {"dummies", o.dummies}, {"reference", o.reference}};

  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < table.patient_ids.size(); ++r) row_of[table.patient_ids[r]] = r;
  const std::size_t n = ids.size();
  std::vector<std::optional<std::size_t>> rows(n);
  std::size_t matched = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = row_of.find(ids[i]);
    if (it != row_of.end()) {
      rows[i] = it->second;
      ++matched;
    }
  }
  if (matched == 0) throw ValidationError("no clustered patient appears in the covariates file");

  auto numeric_values = [&](const CovariateColumn& col) {
    std::vector<double> v(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i)
      if (rows[i]) v[i] = col.numeric[*rows[i]];
    return v;
  };
  auto level_values = [&](const CovariateColumn& col, const std::string& level) {
    std::vector<double> v(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
      if (!rows[i] || col.levels[*rows[i]].empty()) continue;
      v[i] = col.levels[*rows[i]] == level ? 1.0 : 0.0;
    }
    return v;
  };
  auto levels_of = [](const CovariateColumn& col) {
    std::set<std::string> s(col.levels.begin(), col.levels.end());
    s.erase("");
    return std::vector<std::string>(s.begin(), s.end());
  };

  ojson j;
  j["clusters"] = sol.k;
  j["patients"] = n;
  j["patients_with_covariates"] = matched;
  j["summary_weights"] = "assign_probs";
  auto& summaries = j["summaries"] = ojson::array();
  std::ostringstream csv;
  csv << "variable,level,cluster,weight,mean,sd\n";
  auto add_summary = [&](const std::string& var, const std::string& level, const std::vector<double>& values) {
    const auto s = cluster_weighted_summary(values, sol.assign_probs);
    ojson entry{{"variable", var}, {"level", level.empty() ? ojson(nullptr) : ojson(level)}};
    auto& per = entry["by_cluster"] = ojson::array();
    for (std::size_t c = 0; c < s.size(); ++c) {
      per.push_back({{"cluster", c + 1}, {"present", s[c].present}, {"weight", s[c].weight},
                     {"mean", s[c].present ? ojson(s[c].mean) : ojson(nullptr)},
                     {"sd", s[c].present && std::isfinite(s[c].sd) ? ojson(s[c].sd) : ojson(nullptr)}});
      csv << var << ',' << level << ',' << c + 1 << ',' << format_double(s[c].weight) << ','
          << (s[c].present ? format_double(s[c].mean) : "NA") << ','
          << (s[c].present && std::isfinite(s[c].sd) ? format_double(s[c].sd) : "NA") << '\n';
    }
    summaries.push_back(entry);
  };
  for (const auto& col : table.columns) {
    if (col.categorical) {
      for (const auto& level : levels_of(col)) add_summary(col.name, level, level_values(col, level));
    } else {
      add_summary(col.name, "", numeric_values(col));
    }
  }

  if (!o.outcome.empty()) {
    const auto& ycol = table.column(o.outcome);
    if (ycol.categorical) throw ValidationError("outcome " + o.outcome + " is not numeric");
    const auto y_all = numeric_values(ycol);
    // Adjusters: numeric columns as-is, categorical ones as indicators against their first level.
    std::vector<std::string> cov_names;
    std::vector<std::vector<double>> cov_values;
    for (const auto& name : split_list(o.adjust)) {
      const auto& col = table.column(name);
      if (col.categorical) {
        const auto levels = levels_of(col);
        for (std::size_t l = 1; l < levels.size(); ++l) {
          cov_names.push_back(name + levels[l]);
          cov_values.push_back(level_values(col, levels[l]));
        }
      } else {
        cov_names.push_back(name);
        cov_values.push_back(numeric_values(col));
      }
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
      bool ok = !std::isnan(y_all[i]);
      for (const auto& v : cov_values) ok = ok && !std::isnan(v[i]);
      if (ok) keep.push_back(i);
    }
    ClusterSolution sub;
    sub.k = sol.k;
    sub.assign_probs.resize(static_cast<Eigen::Index>(keep.size()), sol.k);
    Eigen::VectorXd y(static_cast<Eigen::Index>(keep.size()));
    Eigen::MatrixXd cov(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(cov_values.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
      const auto i = keep[r];
      sub.assignments.push_back(sol.assignments[i]);
      sub.assign_probs.row(static_cast<Eigen::Index>(r)) = sol.assign_probs.row(static_cast<Eigen::Index>(i));
      y(static_cast<Eigen::Index>(r)) = y_all[i];
      for (std::size_t c = 0; c < cov_values.size(); ++c) cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov_values[c][i];
    }
    std::vector<std::string> names;
    const auto x = cluster_design(sub, o.reference - 1, mode, cov, cov_names, &names);
    auto fit = ols_regress(y, x, names);
    fit.weight_mode = o.dummies;
    auto& reg = j["regression"];
    reg = {{"outcome", o.outcome}, {"n", fit.n}, {"df", fit.df}, {"sigma", fit.sigma},
           {"dummies", fit.weight_mode}, {"reference_cluster", o.reference}, {"degenerate", fit.degenerate}};
    auto& coefs = reg["coefficients"] = ojson::array();
    for (std::size_t c = 0; c < fit.names.size(); ++c) {
      auto num = [](double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); };
      coefs.push_back({{"name", fit.names[c]}, {"estimate", fit.estimates[c]}, {"std_error", fit.std_errors[c]},
                       {"t", num(fit.t_values[c])}, {"p", num(fit.p_values[c])}});
    }
  }

  if (!o.draws.empty()) {
    rec.draws_input(o.draws);
    const auto draws = read_draws(o.draws);
    if (draws.patient_ids() != ids) throw ValidationError("draws and clusters list different patients");
    const auto p = pca_projection(draws.theta_mean());
    auto& pj = j["pca"];
    pj["columns"] = std::vector<std::string>(kThetaNames.begin(), kThetaNames.begin() + 8);
    pj["loading"] = std::vector<double>(p.loading.data(), p.loading.data() + p.loading.size());
    pj["explained"] = p.explained;
    auto& scores = pj["scores"] = ojson::array();
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back({{"patient_id", ids[i]}, {"pc1", p.scores(static_cast<Eigen::Index>(i))}, {"cluster", sol.assignments[i] + 1}});
    }
  }

  rec.write_json(o.out, j);
  if (!o.csv.empty()) {
    auto f = rec.open(o.csv);
    f << csv.str();
  }
  out << ojson{{"summaries", summaries.size()}, {"regression", j.contains("regression")}, {"out", o.out}}.dump() << '\n';
}

SamplerConfig eval_sampler(const EvalOpts& o, Recorder& rec, std::size_t threads) {
  SamplerFlags f = o.sampler;
  if (!f.chains && f.sampler_file.empty()) f.chains = 2;
  if (!f.warmup && f.sampler_file.empty()) f.warmup = 500;
  if (!f.samples && f.sampler_file.empty()) f.samples = 500;
  auto sc = f.resolve(rec, threads, "eval");
  return sc;
}

void cmd_eval_table1(const EvalOpts& o, std::size_t threads, Recorder& rec, std::ostream& out, std::ostream& err) {
  Table1Config cfg;
  cfg.sampler = eval_sampler(o, rec, threads);
  cfg.seed = cfg.sampler.seed;
  cfg.scenario.scenario = scenario_from_name(o.scenario);
  cfg.scenario.n_patients = o.n;
  cfg.scenario.n_epochs = o.epochs;
  cfg.scenario.validate();
  cfg.n_factors = static_cast<std::size_t>(o.factors);
  cfg.replications = o.replications;
  rec.seed("eval", cfg.seed);
  rec.config = {{"scenario", o.scenario}, {"replications", o.replications}, {"n", o.n}, {"epochs", o.epochs},
                {"factors", o.factors}, {"sampler", to_json(cfg.sampler)}};
  const auto report = run_table1(cfg, [&](int r, double s) {
    err << ojson{{"replication", r + 1}, {"of", o.replications}, {"seconds", s}}.dump() << '\n';
  });
  const auto j = to_json(report);
  rec.write_json(o.out, j);
  out << j.dump(2) << '\n';
}

void cmd_eval_table2(const EvalOpts& o, std::size_t threads, Recorder& rec, std::ostream& out, std::ostream& err) {
  Table2Config cfg;
  cfg.sampler = eval_sampler(o, rec, threads);
  cfg.seed = cfg.sampler.seed;
  cfg.scenario.scenario = Scenario::S3;
  cfg.scenario.n_patients = o.n;
  cfg.scenario.n_epochs = o.epochs;
  cfg.scenario.validate();
  cfg.n_factors = static_cast<std::size_t>(o.factors);
  cfg.k = o.k;
  cfg.restarts = o.restarts;
  cfg.replications = o.replications;
  rec.seed("eval", cfg.seed);
  rec.config = {{"replications", o.replications}, {"n", o.n}, {"epochs", o.epochs}, {"factors", o.factors},
                {"k", o.k}, {"restarts", o.restarts}, {"sampler", to_json(cfg.sampler)}};
  const auto report = run_table2(cfg, [&](int r, double s) {
    err << ojson{{"replication", r + 1}, {"of", o.replications}, {"seconds", s}}.dump() << '\n';
  });
  const auto j = to_json(report);
  rec.write_json(o.out, j);
  out << j.dump(2) << '\n';
}

int cmd_replay(const ReplayOpts& o, std::ostream& out, std::ostream& err) {
  const auto m = read_json(o.manifest);
  const fs::path cwd = m.at("cwd").get<std::string>();
  const auto args = m.at("args").get<std::vector<std::string>>();
  const fs::path here = fs::current_path();
  fs::current_path(cwd);
  struct Restore {
    fs::path p;
    ~Restore() { fs::current_path(p); }
  } restore{here};

  for (const auto& in : m.at("inputs")) {
    const auto path = in.at("path").get<std::string>();
    if (!fs::exists(path) || sha256_file(path) != in.at("sha256").get<std::string>()) {
      throw ValidationError("replay: input " + path + " differs from the manifest");
    }
  }
  std::ostringstream sink;
  const int code = run(args, sink, err);
  if (code != kOk) return code;
  ojson report = {{"manifest", o.manifest}, {"subcommand", m.at("subcommand")}};
  auto& outs = report["outputs"] = ojson::array();
  bool all_match = true;
  for (const auto& rec_out : m.at("outputs")) {
    const auto path = rec_out.at("path").get<std::string>();
    const auto expected = rec_out.at("sha256").get<std::string>();
    const auto actual = fs::exists(path) ? sha256_file(path) : std::string();
    const bool match = actual == expected;
    all_match = all_match && match;
    outs.push_back({{"path", path}, {"expected", expected}, {"actual", actual}, {"match", match}});
  }
  report["identical"] = all_match;
  out << report.dump(2) << '\n';
  return all_match ? kOk : kFailure;
}

void error_json(std::ostream& err, const std::string& kind, const std::string& message, int code,
                const ParseError* parse = nullptr) {
  ojson e{{"error", kind}, {"message", message}, {"exit_code", code}};
  if (parse) {
    e["file"] = parse->file();
    e["line"] = parse->line();
  }
  err << e.dump() << '\n';
}

std::size_t threads_from_env() {
  if (const char* v = std::getenv("SOMNUS_THREADS")) {
    try {
      const long t = std::stol(v);
      if (t >= 1) return static_cast<std::size_t>(t);
    } catch (...) {
    }
    throw ValidationError(std::string("SOMNUS_THREADS must be a positive integer, got '") + v + "'");
  }
  return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"somnus: sleep-stage and apnea-event modelling, posterior sampling and clustering", "somnus"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  std::optional<std::size_t> threads_flag;
  app.add_option("--threads", threads_flag, "Worker threads (default: SOMNUS_THREADS or 1)")->check(CLI::PositiveNumber);
  Common common;
  auto manifest_opt = [&](CLI::App* sub) {
    sub->add_option("--manifest", common.manifest, "Where to write the run manifest");
    sub->fallthrough();
  };

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic cohort (epochs.csv, events.csv, truth.json, outcomes.csv for S3)");
  c_sim->add_option("--config", sim.config, "Scenario JSON; flags override its values");
  c_sim->add_option("--scenario", sim.scenario, "S1, S2 or S3");
  c_sim->add_option("--n", sim.n, "Number of patients");
  c_sim->add_option("--epochs", sim.epochs, "Epochs per night");
  c_sim->add_option("--factors", sim.factors, "Number of latent factors in the truth");
  c_sim->add_option("--seed", sim.seed, "Random seed (required here or in --config)");
  c_sim->add_option("--out-dir", sim.out_dir, "Output directory");
  manifest_opt(c_sim);

  StatsOpts st;
  auto* c_stats = app.add_subcommand("stats", "Reduce epochs/events CSVs to per-patient sufficient statistics");
  c_stats->add_option("--epochs", st.epochs, "epochs.csv")->required();
  c_stats->add_option("--events", st.events, "events.csv")->required();
  c_stats->add_option("--out", st.out, "Output JSON");
  manifest_opt(c_stats);

  FitOpts fit;
  auto* c_fit = app.add_subcommand("fit", "Sample the posterior with NUTS");
  c_fit->add_option("--epochs", fit.epochs, "epochs.csv");
  c_fit->add_option("--events", fit.events, "events.csv");
  c_fit->add_option("--stats", fit.stats, "Sufficient statistics JSON (instead of --epochs/--events)");
  c_fit->add_option("--priors", fit.priors, "Priors JSON (default priors when omitted)");
  c_fit->add_option("--factors", fit.factors, "Number of latent factors k");
  c_fit->add_option("--format", fit.format, "Draws format: binary or csv");
  c_fit->add_option("--out-dir", fit.out_dir, "Output directory for draws");
  fit.sampler.add(c_fit);
  manifest_opt(c_fit);

  DiagnoseOpts dg;
  auto* c_diag = app.add_subcommand("diagnose", "ESS, split R-hat and divergences of a fit");
  c_diag->add_option("--draws", dg.draws, "Draws directory")->required();
  c_diag->add_flag("--all", dg.all, "Include every parameter, not only the fixed effects");
  c_diag->add_option("--out", dg.out, "Output JSON");
  manifest_opt(c_diag);

  ClusterOpts cl;
  auto* c_cl = app.add_subcommand("cluster", "K-means clustering of the random effects with assignment probabilities");
  c_cl->add_option("--draws", cl.draws, "Draws directory")->required();
  c_cl->add_option("--k", cl.k, "Number of clusters");
  c_cl->add_option("--restarts", cl.restarts, "K-means restarts");
  c_cl->add_option("--seed", cl.seed, "Random seed (required)");
  c_cl->add_option("--method", cl.method, "mean (K-means on posterior means) or concatenated (all draws)");
  c_cl->add_option("--k-max", cl.k_max, "Largest K in the K-sweep table (0 to skip)");
  c_cl->add_flag("--per-sample", cl.per_sample, "Also cluster every draw and report ARI to the point estimate");
  c_cl->add_option("--per-sample-restarts", cl.per_sample_restarts, "Restarts per draw for --per-sample");
  c_cl->add_option("--coclustering-csv", cl.coclustering_csv, "With --per-sample: write the co-clustering matrix");
  c_cl->add_option("--csv", cl.csv, "Also write assignments and probabilities as CSV");
  c_cl->add_option("--out", cl.out, "Output JSON");
  manifest_opt(c_cl);

  PpcOpts pp;
  auto* c_ppc = app.add_subcommand("ppc", "Posterior predictive checks");
  c_ppc->add_option("--draws", pp.draws, "Draws directory")->required();
  c_ppc->add_option("--epochs", pp.epochs, "epochs.csv")->required();
  c_ppc->add_option("--events", pp.events, "events.csv")->required();
  c_ppc->add_option("--sims-per-draw", pp.sims_per_draw, "Replicated nights per draw");
  c_ppc->add_option("--max-draws", pp.max_draws, "Use at most this many evenly spaced draws (0 = all)");
  c_ppc->add_option("--seed", pp.seed, "Random seed");
  c_ppc->add_option("--out", pp.out, "Output JSON");
  c_ppc->add_option("--csv", pp.csv, "Also write a tidy CSV");
  manifest_opt(c_ppc);

  ScreeOpts sc;
  auto* c_scree = app.add_subcommand("scree", "Eigenvalue spectrum of posterior-mean random effects (k = 0 pre-fit unless --draws)");
  c_scree->add_option("--draws", sc.draws, "Use the posterior means of an existing fit");
  c_scree->add_option("--epochs", sc.epochs, "epochs.csv");
  c_scree->add_option("--events", sc.events, "events.csv");
  c_scree->add_option("--stats", sc.stats, "Sufficient statistics JSON");
  c_scree->add_option("--priors", sc.priors, "Priors JSON");
  c_scree->add_option("--out", sc.out, "Output JSON");
  sc.sampler.add(c_scree);
  manifest_opt(c_scree);

  AlignOpts al;
  auto* c_align = app.add_subcommand("align", "Align factor loadings across draws (permutation and sign)");
  c_align->add_option("--draws", al.draws, "Draws directory")->required();
  c_align->add_option("--out", al.out, "Output JSON");
  c_align->add_option("--csv", al.csv, "Also write a tidy CSV");
  manifest_opt(c_align);

  AnalyzeOpts an;
  auto* c_an = app.add_subcommand("analyze", "Cluster summaries, outcome regression and PCA projection");
  c_an->add_option("--clusters", an.clusters, "clusters.json")->required();
  c_an->add_option("--covariates", an.covariates, "covars.csv (patient_id plus numeric or categorical columns)")->required();
  c_an->add_option("--outcome", an.outcome, "Covariate column to regress on the cluster dummies");
  c_an->add_option("--adjust", an.adjust, "Comma-separated covariates added to the regression");
  c_an->add_option("--reference", an.reference, "Reference cluster (1-based)");
  c_an->add_option("--dummies", an.dummies, "hard (0/1 labels) or probability (assignment probabilities)");
  c_an->add_option("--draws", an.draws, "Draws directory, for the first principal component projection");
  c_an->add_option("--out", an.out, "Output JSON");
  c_an->add_option("--csv", an.csv, "Also write the summaries as CSV");
  manifest_opt(c_an);

  EvalOpts e1;
  e1.out = "table1.json";
  auto* c_e1 = app.add_subcommand("eval-table1", "Recovery study: coverage and MSE over simulated replications");
  c_e1->add_option("--scenario", e1.scenario, "S1, S2 or S3");
  c_e1->add_option("--replications", e1.replications, "Replications");
  c_e1->add_option("--n", e1.n, "Patients per replication");
  c_e1->add_option("--epochs", e1.epochs, "Epochs per night");
  c_e1->add_option("--factors", e1.factors, "Factors in the fitted model");
  c_e1->add_option("--out", e1.out, "Output JSON");
  e1.sampler.add(c_e1);
  manifest_opt(c_e1);

  EvalOpts e2;
  e2.n = 200;
  e2.out = "table2.json";
  auto* c_e2 = app.add_subcommand("eval-table2", "Clustering study on Scenario 3: ARI and within-cluster outcome variance");
  c_e2->add_option("--replications", e2.replications, "Replications");
  c_e2->add_option("--n", e2.n, "Patients per replication");
  c_e2->add_option("--epochs", e2.epochs, "Epochs per night");
  c_e2->add_option("--factors", e2.factors, "Factors in the fitted model");
  c_e2->add_option("--k", e2.k, "Number of clusters");
  c_e2->add_option("--restarts", e2.restarts, "K-means restarts");
  c_e2->add_option("--out", e2.out, "Output JSON");
  e2.sampler.add(c_e2);
  manifest_opt(c_e2);

  ReplayOpts rp;
  auto* c_replay = app.add_subcommand("replay", "Re-run a recorded invocation and compare output digests");
  c_replay->add_option("--manifest", rp.manifest, "Manifest written by an earlier run")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (auto* s : app.get_subcommands()) target = s;
    out << target->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    error_json(err, "usage", e.what(), kUsage);
    return kUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const std::size_t threads = threads_flag ? *threads_flag : threads_from_env();
    if (c_replay->parsed()) return cmd_replay(rp, out, err);

    CLI::App* sub = app.get_subcommands().front();
    Recorder rec(sub->get_name());
    fs::path manifest;
    if (sub == c_sim) {
      cmd_simulate(sim, rec, out);
      manifest = manifest_for_dir(common.manifest, sim.out_dir, "simulate");
    } else if (sub == c_stats) {
      cmd_stats(st, rec, out, err);
      manifest = manifest_for_file(common.manifest, st.out);
    } else if (sub == c_fit) {
      cmd_fit(fit, threads, rec, out, err);
      manifest = manifest_for_dir(common.manifest, fit.out_dir, "fit");
    } else if (sub == c_diag) {
      cmd_diagnose(dg, rec, out);
      manifest = manifest_for_file(common.manifest, dg.out);
    } else if (sub == c_cl) {
      cmd_cluster(cl, rec, out);
      manifest = manifest_for_file(common.manifest, cl.out);
    } else if (sub == c_ppc) {
      cmd_ppc(pp, threads, rec, out, err);
      manifest = manifest_for_file(common.manifest, pp.out);
    } else if (sub == c_scree) {
      cmd_scree(sc, threads, rec, out, err);
      manifest = manifest_for_file(common.manifest, sc.out);
    } else if (sub == c_align) {
      cmd_align(al, rec, out);
      manifest = manifest_for_file(common.manifest, al.out);
    } else if (sub == c_an) {
      cmd_analyze(an, rec, out);
      manifest = manifest_for_file(common.manifest, an.out);
    } else if (sub == c_e1) {
      cmd_eval_table1(e1, threads, rec, out, err);
      manifest = manifest_for_file(common.manifest, e1.out);
    } else if (sub == c_e2) {
      cmd_eval_table2(e2, threads, rec, out, err);
      manifest = manifest_for_file(common.manifest, e2.out);
    }
    rec.config["threads"] = threads;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.write_manifest(manifest, args, seconds);
    return kOk;
  } catch (const ParseError& e) {
    error_json(err, "validation", e.what(), kInvalid, &e);
    return kInvalid;
  } catch (const ValidationError& e) {
    error_json(err, "validation", e.what(), kInvalid);
    return kInvalid;
  } catch (const NumericalError& e) {
    error_json(err, "numerical", e.what(), kNumerical);
    return kNumerical;
  } catch (const nlohmann::json::exception& e) {
    error_json(err, "validation", e.what(), kInvalid);
    return kInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    error_json(err, "io", e.what(), kInvalid);
    return kInvalid;
  } catch (const std::exception& e) {
    error_json(err, "internal", e.what(), kFailure);
    return kFailure;
  }
}

}  // namespace somnus::cli
