#pragma once

#include <filesystem>
#include <string>

#include "somnus/nuts.hpp"

namespace somnus {

enum class DrawsFormat { Binary, Csv };

DrawsFormat draws_format_from_name(const std::string& name);

/// Writes draws.json (names, shapes, chain diagnostics, sampler config) and
/// either draws.bin (little-endian float64, one contiguous column per
/// parameter, rows in chain-major order) or draws.csv
/// (`chain,iteration,<names>`).
void write_draws(const std::filesystem::path& dir, const PosteriorDraws& draws, DrawsFormat format,
                 const nlohmann::json& priors);

PosteriorDraws read_draws(const std::filesystem::path& dir);

}  // namespace somnus
