#pragma once

#include <array>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "somnus/records.hpp"

namespace somnus {

/// Transition counts c[h][k_o][k_n] (h = event status, k_o in {REM, NonREM},
/// k_n in {Awake, REM, NonREM}) and at-risk totals n[h][k_o].
struct TransitionStats {
  std::array<std::array<std::array<long, 3>, 2>, 2> counts{};
  std::array<std::array<long, 2>, 2> at_risk{};
};

/// Per-stage event counts v[k] and event-free exposure t[k] in seconds.
struct EventStats {
  std::array<long, 2> event_count{};
  std::array<double, 2> exposure_sec{};
};

struct PatientStats {
  std::string patient_id;
  TransitionStats transitions;
  EventStats events;
};

/// Everything the likelihood needs, one entry per patient.
class SufficientStats {
 public:
  SufficientStats() = default;
  explicit SufficientStats(std::vector<PatientStats> patients);

  std::size_t size() const { return patients_.size(); }
  bool empty() const { return patients_.empty(); }
  const PatientStats& operator[](std::size_t i) const { return patients_[i]; }
  const std::vector<PatientStats>& patients() const { return patients_; }
  std::vector<std::string> patient_ids() const;
  /// Throws ValidationError for unknown ids.
  std::size_t index_of(const std::string& patient_id) const;

 private:
  std::vector<PatientStats> patients_;
  std::unordered_map<std::string, std::size_t> index_;
};

PatientStats derive_patient_stats(const SleepRecord& record);
SufficientStats derive_sufficient_stats(std::span<const SleepRecord> records);

nlohmann::ordered_json to_json(const SufficientStats& stats);
SufficientStats sufficient_stats_from_json(const nlohmann::ordered_json& j);

}  // namespace somnus
