#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "somnus/stage.hpp"

namespace somnus {

struct Event {
  double start_sec = 0.0;
  double duration_sec = 0.0;
  Stage stage = Stage::NonREM;

  double end_sec() const { return start_sec + duration_sec; }
};

/// One patient-night: a 30-second epoch stage sequence plus scored events.
struct SleepRecord {
  std::string patient_id;
  std::vector<Stage> stages;
  std::vector<Event> events;  // sorted by start_sec

  double span_sec() const { return kEpochSec * static_cast<double>(stages.size()); }
  std::size_t count(Stage s) const;
};

inline constexpr double kMinEventSec = 10.0;

/// Throws ValidationError when `record` breaks an invariant. Events shorter than
/// 10 s are only allowed when they end on a stage change or at the end of the
/// recording (events cut short by the stage sequence).
void validate_record(const SleepRecord& record);

struct Exclusion {
  std::string patient_id;
  std::string reason;
};

struct ParsedRecords {
  std::vector<SleepRecord> records;
  std::vector<Exclusion> excluded;
};

/// Reads epochs.csv and events.csv. Patients who never enter REM (or NonREM)
/// are dropped and listed in `excluded`; every other problem throws.
ParsedRecords parse_records(std::istream& epochs, std::istream& events);

void write_epochs_csv(std::ostream& out, std::span<const SleepRecord> records);
void write_events_csv(std::ostream& out, std::span<const SleepRecord> records);

/// v_ij: 1 iff an event intersects the half-open window [30j, 30(j+1)) of a
/// sleep epoch.
std::vector<std::uint8_t> epoch_event_indicator(const SleepRecord& record);

/// Seconds of [start, end) falling inside epoch j.
double epoch_overlap(double start, double end, std::size_t epoch);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace somnus
