#include "somnus/draws_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "somnus/error.hpp"
#include "somnus/records.hpp"

namespace somnus {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "draws.bin assumes a little-endian host");

namespace {

constexpr const char* kManifest = "draws.json";
constexpr const char* kBinary = "draws.bin";
constexpr const char* kCsv = "draws.csv";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_value(const std::string& text, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(kCsv, line, "invalid number '" + text + "'");
  }
  return v;
}

}  // namespace

DrawsFormat draws_format_from_name(const std::string& name) {
  if (name == "binary") return DrawsFormat::Binary;
  if (name == "csv") return DrawsFormat::Csv;
  throw ValidationError("unknown draws format '" + name + "' (expected binary or csv)");
}

void write_draws(const fs::path& dir, const PosteriorDraws& draws, DrawsFormat format,
                 const nlohmann::json& priors) {
  fs::create_directories(dir);
  const auto names = draws.layout().names(draws.patient_ids());
  nlohmann::ordered_json m;
  m["format"] = format == DrawsFormat::Binary ? "binary" : "csv";
  m["n_chains"] = draws.n_chains();
  m["n_samples"] = draws.n_samples();
  m["dim"] = draws.dim();
  m["n_patients"] = draws.layout().n_patients();
  m["n_factors"] = draws.layout().n_factors();
  m["patient_ids"] = draws.patient_ids();
  m["parameter_names"] = names;
  m["sampler"] = nlohmann::ordered_json::parse(to_json(draws.config).dump());
  m["priors"] = priors;
  auto& chains = m["chains"] = nlohmann::ordered_json::array();
  for (const auto& c : draws.chains) chains.push_back(nlohmann::ordered_json::parse(to_json(c).dump()));
  m["warnings"] = draws.warnings;
  m["flagged"] = draws.flagged;
  {
    std::ofstream out(dir / kManifest);
    out << m.dump(2) << '\n';
    if (!out) throw ValidationError("cannot write " + (dir / kManifest).string());
  }

  const auto& v = draws.values();
  if (format == DrawsFormat::Binary) {
    std::ofstream out(dir / kBinary, std::ios::binary);
    std::vector<double> column(static_cast<std::size_t>(v.rows()));
    for (Eigen::Index p = 0; p < v.cols(); ++p) {
      for (Eigen::Index r = 0; r < v.rows(); ++r) column[static_cast<std::size_t>(r)] = v(r, p);
      out.write(reinterpret_cast<const char*>(column.data()),
                static_cast<std::streamsize>(column.size() * sizeof(double)));
    }
    if (!out) throw ValidationError("cannot write " + (dir / kBinary).string());
  } else {
    std::ofstream out(dir / kCsv);
    out << "chain,iteration";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const auto c = static_cast<std::size_t>(r) / draws.n_samples();
      const auto s = static_cast<std::size_t>(r) % draws.n_samples();
      out << c << ',' << s;
      for (Eigen::Index p = 0; p < v.cols(); ++p) out << ',' << format_double(v(r, p));
      out << '\n';
    }
    if (!out) throw ValidationError("cannot write " + (dir / kCsv).string());
  }
}

PosteriorDraws read_draws(const fs::path& dir) {
  std::ifstream min(dir / kManifest);
  if (!min) throw ValidationError("missing " + (dir / kManifest).string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string(kManifest) + ": " + ex.what());
  }
  try {
    const auto n_chains = m.at("n_chains").get<std::size_t>();
    const auto n_samples = m.at("n_samples").get<std::size_t>();
    const ParamLayout layout(m.at("n_patients").get<std::size_t>(), m.at("n_factors").get<std::size_t>());
    if (layout.dim() != m.at("dim").get<std::size_t>()) throw ValidationError("draws.json: dim does not match layout");
    auto ids = m.at("patient_ids").get<std::vector<std::string>>();
    const auto rows = static_cast<Eigen::Index>(n_chains * n_samples);
    const auto cols = static_cast<Eigen::Index>(layout.dim());
    RowMatrix values(rows, cols);

    if (m.at("format").get<std::string>() == "binary") {
      std::ifstream in(dir / kBinary, std::ios::binary);
      if (!in) throw ValidationError("missing " + (dir / kBinary).string());
      std::vector<double> column(static_cast<std::size_t>(rows));
      for (Eigen::Index p = 0; p < cols; ++p) {
        in.read(reinterpret_cast<char*>(column.data()), static_cast<std::streamsize>(column.size() * sizeof(double)));
        if (!in) throw ValidationError("draws.bin is shorter than draws.json declares");
        for (Eigen::Index r = 0; r < rows; ++r) values(r, p) = column[static_cast<std::size_t>(r)];
      }
      if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("draws.bin is longer than draws.json declares");
    } else {
      std::ifstream in(dir / kCsv);
      if (!in) throw ValidationError("missing " + (dir / kCsv).string());
      std::string line;
      std::getline(in, line);
      const auto header = split(line);
      if (header.size() != static_cast<std::size_t>(cols) + 2) throw ParseError(kCsv, 1, "column count mismatch");
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw ParseError(kCsv, static_cast<std::size_t>(r) + 2, "missing row");
        const auto f = split(line);
        if (f.size() != header.size()) throw ParseError(kCsv, static_cast<std::size_t>(r) + 2, "column count mismatch");
        for (Eigen::Index p = 0; p < cols; ++p) {
          values(r, p) = parse_value(f[static_cast<std::size_t>(p) + 2], static_cast<std::size_t>(r) + 2);
        }
      }
    }

    PosteriorDraws draws(layout, std::move(ids), n_chains, n_samples, std::move(values));
    draws.config = sampler_config_from_json(m.at("sampler"));
    for (const auto& c : m.at("chains")) draws.chains.push_back(chain_info_from_json(c));
    draws.warnings = m.value("warnings", std::vector<std::string>{});
    draws.flagged = m.value("flagged", false);
    return draws;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string(kManifest) + ": " + ex.what());
  }
}

}  // namespace somnus
