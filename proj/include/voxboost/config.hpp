#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "voxboost/pipeline.hpp"

namespace voxboost {

/// Everything a run needs. Text form is flat `section.key = value` lines;
/// '#' starts a comment line and lists are comma separated.
///
/// Section seeds left unset derive from run.seed: the cohort uses run.seed
/// itself, the encoder derive_seed(run.seed, 1), the GBM derive_seed(run.seed, 2).
struct RunConfig {
    std::uint64_t seed = 17;
    int workers = 1;
    PipelineConfig pipeline;
    std::optional<std::uint64_t> cohort_seed;
    std::optional<std::uint64_t> encoder_seed;
    std::optional<std::uint64_t> gbm_seed;
    std::string workdir = "voxboost-work";
    std::string manifest = "cohort/manifest.csv";  // relative paths resolve against workdir
    std::string answers = "cohort/answers.csv";
    std::string outputs = "results";

    /// Pipeline settings with seeds and workers filled in, validated.
    PipelineConfig resolved() const;
    Workspace workspace() const;
};

/// Applies every line of `text` on top of `base`. Unknown keys and bad
/// values are collected and reported together in one ConfigError.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies `key=value` overrides, with the same error collection.
void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments);

/// Every key with its current value; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

} // namespace voxboost
