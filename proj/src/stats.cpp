#include "somnus/stats.hpp"

#include "somnus/error.hpp"

namespace somnus {

SufficientStats::SufficientStats(std::vector<PatientStats> patients)
    : patients_(std::move(patients)) {
  for (std::size_t i = 0; i < patients_.size(); ++i) {
    if (!index_.emplace(patients_[i].patient_id, i).second) {
      throw ValidationError("duplicate patient id " + patients_[i].patient_id);
    }
  }
}

std::vector<std::string> SufficientStats::patient_ids() const {
  std::vector<std::string> ids;
  ids.reserve(patients_.size());
  for (const auto& p : patients_) ids.push_back(p.patient_id);
  return ids;
}

std::size_t SufficientStats::index_of(const std::string& patient_id) const {
  auto it = index_.find(patient_id);
  if (it == index_.end()) throw ValidationError("unknown patient id " + patient_id);
  return it->second;
}

PatientStats derive_patient_stats(const SleepRecord& r) {
  PatientStats ps;
  ps.patient_id = r.patient_id;
  const auto v = epoch_event_indicator(r);
  const std::size_t m = r.stages.size();
  auto& tr = ps.transitions;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    if (!is_sleep(r.stages[j])) continue;
    int ko = sleep_index(r.stages[j]);
    int kn = stage_index(r.stages[j + 1]);
    ++tr.counts[v[j]][ko][kn];
    ++tr.at_risk[v[j]][ko];
  }

  auto& ev = ps.events;
  for (int k = 0; k < 2; ++k) {
    ev.exposure_sec[k] = kEpochSec * static_cast<double>(r.count(sleep_stage(k)));
  }
  for (const auto& e : r.events) {
    ++ev.event_count[sleep_index(e.stage)];
    // deduct in-stage overlap epoch by epoch; the event may cross stage changes
    auto lo = static_cast<std::size_t>(e.start_sec / kEpochSec);
    for (std::size_t j = lo; j < m && kEpochSec * static_cast<double>(j) < e.end_sec(); ++j) {
      if (!is_sleep(r.stages[j])) continue;
      ev.exposure_sec[sleep_index(r.stages[j])] -= epoch_overlap(e.start_sec, e.end_sec(), j);
    }
  }
  for (auto& t : ev.exposure_sec) t = std::max(t, 0.0);
  return ps;
}

SufficientStats derive_sufficient_stats(std::span<const SleepRecord> records) {
  std::vector<PatientStats> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(derive_patient_stats(r));
  return SufficientStats(std::move(out));
}

nlohmann::ordered_json to_json(const SufficientStats& stats) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& p : stats.patients()) {
    const auto& tr = p.transitions;
    j[p.patient_id] = {{"c", tr.counts},
                       {"n", tr.at_risk},
                       {"v", p.events.event_count},
                       {"t", p.events.exposure_sec}};
  }
  return j;
}

SufficientStats sufficient_stats_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ValidationError("sufficient stats must be a JSON object");
  std::vector<PatientStats> out;
  for (const auto& [id, e] : j.items()) {
    PatientStats ps;
    ps.patient_id = id;
    try {
      e.at("c").get_to(ps.transitions.counts);
      e.at("n").get_to(ps.transitions.at_risk);
      e.at("v").get_to(ps.events.event_count);
      e.at("t").get_to(ps.events.exposure_sec);
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError("patient " + id + ": " + ex.what());
    }
    for (int h = 0; h < 2; ++h) {
      for (int k = 0; k < 2; ++k) {
        long total = 0;
        for (long c : ps.transitions.counts[h][k]) {
          if (c < 0) throw ValidationError("patient " + id + ": negative transition count");
          total += c;
        }
        if (total != ps.transitions.at_risk[h][k]) {
          throw ValidationError("patient " + id + ": counts do not sum to n");
        }
      }
    }
    for (int k = 0; k < 2; ++k) {
      if (ps.events.event_count[k] < 0 || ps.events.exposure_sec[k] < 0) {
        throw ValidationError("patient " + id + ": negative event statistic");
      }
    }
    out.push_back(std::move(ps));
  }
  return SufficientStats(std::move(out));
}

}  // namespace somnus
