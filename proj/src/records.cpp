#include "somnus/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "somnus/error.hpp"

namespace somnus {

namespace {

constexpr double kBoundaryTol = 1e-6;

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

template <typename T>
T parse_number(std::string_view text, const char* file, std::size_t line, const char* field) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(file, line, std::string("invalid ") + field + " '" + std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ParseError(file, line, std::string("non-finite ") + field);
    }
  }
  return value;
}

// True when `t` is an epoch boundary at which the stage changes, or the end of
// the recording.
bool is_stage_boundary(const SleepRecord& r, double t) {
  const double m = static_cast<double>(r.stages.size());
  double j = std::round(t / kEpochSec);
  if (std::abs(t - j * kEpochSec) > kBoundaryTol) return false;
  if (j >= m) return true;
  if (j <= 0) return false;
  auto idx = static_cast<std::size_t>(j);
  return r.stages[idx] != r.stages[idx - 1];
}

}  // namespace

std::size_t SleepRecord::count(Stage s) const {
  return static_cast<std::size_t>(std::count(stages.begin(), stages.end(), s));
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

double epoch_overlap(double start, double end, std::size_t epoch) {
  const double lo = kEpochSec * static_cast<double>(epoch);
  const double hi = lo + kEpochSec;
  return std::max(0.0, std::min(end, hi) - std::max(start, lo));
}

void validate_record(const SleepRecord& r) {
  const std::string who = "patient " + r.patient_id + ": ";
  if (r.stages.empty()) throw ValidationError(who + "empty stage sequence");
  if (r.count(Stage::REM) == 0) throw ValidationError(who + "never entered REM sleep");
  if (r.count(Stage::NonREM) == 0) throw ValidationError(who + "never entered NonREM sleep");
  const double span = r.span_sec();
  double prev_end = -1.0;
  for (const auto& e : r.events) {
    if (!(e.start_sec >= 0.0) || !(e.duration_sec > 0.0) || e.end_sec() > span + kBoundaryTol) {
      throw ValidationError(who + "event at " + format_double(e.start_sec) +
                            " s lies outside the recording");
    }
    if (e.duration_sec < kMinEventSec && !is_stage_boundary(r, e.end_sec())) {
      throw ValidationError(who + "event at " + format_double(e.start_sec) +
                            " s is shorter than 10 s");
    }
    if (e.start_sec < prev_end) {
      throw ValidationError(who + "overlapping events at " + format_double(e.start_sec) + " s");
    }
    auto epoch = static_cast<std::size_t>(e.start_sec / kEpochSec);
    Stage at_start = r.stages[std::min(epoch, r.stages.size() - 1)];
    if (at_start == Stage::Awake) {
      throw ValidationError(who + "event at " + format_double(e.start_sec) +
                            " s starts in an Awake epoch");
    }
    if (e.stage != at_start) {
      throw ValidationError(who + "event at " + format_double(e.start_sec) +
                            " s is labelled with a stage other than its start epoch's");
    }
    prev_end = e.end_sec();
  }
}

ParsedRecords parse_records(std::istream& epochs, std::istream& events) {
  constexpr const char* kEpochs = "epochs.csv";
  constexpr const char* kEvents = "events.csv";
  std::vector<SleepRecord> records;
  std::unordered_map<std::string, std::size_t> index;

  std::string line;
  std::size_t lineno = 1;
  if (!read_line(epochs, line) || line != "patient_id,epoch,stage") {
    throw ParseError(kEpochs, 1, "expected header 'patient_id,epoch,stage'");
  }
  while (read_line(epochs, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_row(line);
    if (f.size() != 3) throw ParseError(kEpochs, lineno, "expected 3 fields");
    if (f[0].empty()) throw ParseError(kEpochs, lineno, "empty patient_id");
    auto epoch = parse_number<long long>(f[1], kEpochs, lineno, "epoch");
    auto stage = stage_from_code(f[2]);
    if (!stage) throw ParseError(kEpochs, lineno, "unknown stage code '" + std::string(f[2]) + "'");
    std::string id(f[0]);
    if (records.empty() || records.back().patient_id != id) {
      if (index.count(id)) throw ParseError(kEpochs, lineno, "rows for " + id + " are not contiguous");
      index.emplace(id, records.size());
      records.push_back(SleepRecord{id, {}, {}});
    }
    auto& rec = records.back();
    if (epoch != static_cast<long long>(rec.stages.size())) {
      throw ParseError(kEpochs, lineno, "epoch " + std::to_string(epoch) + " out of sequence");
    }
    rec.stages.push_back(*stage);
  }

  lineno = 1;
  if (!read_line(events, line) || line != "patient_id,start_sec,duration_sec,stage") {
    throw ParseError(kEvents, 1, "expected header 'patient_id,start_sec,duration_sec,stage'");
  }
  std::size_t current = 0;
  bool any = false;
  while (read_line(events, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_row(line);
    if (f.size() != 4) throw ParseError(kEvents, lineno, "expected 4 fields");
    auto it = index.find(std::string(f[0]));
    if (it == index.end()) {
      throw ParseError(kEvents, lineno, "patient " + std::string(f[0]) + " has no epochs");
    }
    if (any && it->second < current) {
      throw ParseError(kEvents, lineno, "event rows are not grouped in epochs.csv patient order");
    }
    current = it->second;
    any = true;
    Event e;
    e.start_sec = parse_number<double>(f[1], kEvents, lineno, "start_sec");
    e.duration_sec = parse_number<double>(f[2], kEvents, lineno, "duration_sec");
    auto stage = stage_from_code(f[3]);
    if (!stage) throw ParseError(kEvents, lineno, "unknown stage code '" + std::string(f[3]) + "'");
    if (*stage == Stage::Awake) throw ParseError(kEvents, lineno, "event stage must be R or N");
    e.stage = *stage;
    auto& rec = records[current];
    if (!rec.events.empty() && e.start_sec < rec.events.back().start_sec) {
      throw ParseError(kEvents, lineno, "events for " + rec.patient_id + " are not sorted by start_sec");
    }
    rec.events.push_back(e);
  }

  ParsedRecords out;
  for (auto& rec : records) {
    if (rec.count(Stage::REM) == 0) {
      out.excluded.push_back({rec.patient_id, "never entered REM sleep"});
      continue;
    }
    if (rec.count(Stage::NonREM) == 0) {
      out.excluded.push_back({rec.patient_id, "never entered NonREM sleep"});
      continue;
    }
    validate_record(rec);
    out.records.push_back(std::move(rec));
  }
  return out;
}

void write_epochs_csv(std::ostream& out, std::span<const SleepRecord> records) {
  out << "patient_id,epoch,stage\n";
  for (const auto& r : records) {
    for (std::size_t j = 0; j < r.stages.size(); ++j) {
      out << r.patient_id << ',' << j << ',' << stage_code(r.stages[j]) << '\n';
    }
  }
}

void write_events_csv(std::ostream& out, std::span<const SleepRecord> records) {
  out << "patient_id,start_sec,duration_sec,stage\n";
  for (const auto& r : records) {
    for (const auto& e : r.events) {
      out << r.patient_id << ',' << format_double(e.start_sec) << ','
          << format_double(e.duration_sec) << ',' << stage_code(e.stage) << '\n';
    }
  }
}

std::vector<std::uint8_t> epoch_event_indicator(const SleepRecord& r) {
  std::vector<std::uint8_t> v(r.stages.size(), 0);
  if (v.empty()) return v;
  const std::size_t last = v.size() - 1;
  for (const auto& e : r.events) {
    auto lo = static_cast<std::size_t>(std::floor(e.start_sec / kEpochSec));
    double hi_f = std::ceil(e.end_sec() / kEpochSec) - 1.0;
    if (hi_f < 0) continue;
    auto hi = std::min(static_cast<std::size_t>(hi_f), last);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (is_sleep(r.stages[j]) && epoch_overlap(e.start_sec, e.end_sec(), j) > 0.0) v[j] = 1;
    }
  }
  return v;
}

}  // namespace somnus
