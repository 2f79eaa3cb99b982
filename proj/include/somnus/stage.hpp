#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace somnus {

enum class Stage : std::uint8_t { Awake = 0, REM = 1, NonREM = 2 };

inline constexpr double kEpochSec = 30.0;
inline constexpr int kThetaDim = 10;

constexpr bool is_sleep(Stage s) { return s != Stage::Awake; }

/// 0 for REM, 1 for NonREM. Only meaningful for sleep stages.
constexpr int sleep_index(Stage s) { return static_cast<int>(s) - 1; }
constexpr Stage sleep_stage(int idx) { return static_cast<Stage>(idx + 1); }
constexpr int stage_index(Stage s) { return static_cast<int>(s); }

constexpr char stage_code(Stage s) {
  switch (s) {
    case Stage::Awake: return 'A';
    case Stage::REM: return 'R';
    case Stage::NonREM: return 'N';
  }
  return '?';
}

constexpr std::optional<Stage> stage_from_code(std::string_view code) {
  if (code == "A") return Stage::Awake;
  if (code == "R") return Stage::REM;
  if (code == "N") return Stage::NonREM;
  return std::nullopt;
}

// Off-diagonal transitions out of the two sleep stages, in the order used for
// mu, tau, gamma and alpha: RA, RN, NA, NR.
enum Transition : int { kRA = 0, kRN = 1, kNA = 2, kNR = 3 };

inline constexpr std::array<std::string_view, 4> kTransitionNames{"RA", "RN", "NA", "NR"};
inline constexpr std::array<std::string_view, 2> kSleepNames{"REM", "NonREM"};

/// Parameter index for the move from sleep stage `from` to stage `to`, or -1 for
/// a self transition.
constexpr int transition_param(Stage from, Stage to) {
  if (from == to) return -1;
  if (from == Stage::REM) return to == Stage::Awake ? kRA : kRN;
  if (from == Stage::NonREM) return to == Stage::Awake ? kNA : kNR;
  return -1;
}

// Random-effect vector columns.
inline constexpr int kGammaCol = 0;
inline constexpr int kAlphaCol = 4;
inline constexpr int kPhiCol = 8;

inline constexpr std::array<std::string_view, kThetaDim> kThetaNames{
    "gamma_RA", "gamma_RN", "gamma_NA", "gamma_NR", "alpha_RA",
    "alpha_RN", "alpha_NA", "alpha_NR", "phi_R",    "phi_N"};

}  // namespace somnus
