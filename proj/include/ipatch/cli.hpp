#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipatch/data.hpp"
#include "ipatch/trainer.hpp"

namespace ipatch::cli {

/// Parsed experiment file: dataset source plus the run specification.
/// Parsing is strict; unknown keys anywhere are rejected by name.
struct ExperimentConfig {
    enum class SourceKind { csv, sinusoid, ar };

    std::uint64_t seed = 0;
    std::string out_dir = "out";
    SourceKind kind = SourceKind::sinusoid;
    std::string csv_path;
    SinusoidSpec sinusoid;
    ArSpec ar;
    std::size_t length = 0;    // T for synthetic sources
    std::size_t channels = 1;  // M for synthetic sources
    RunSpec run;
    std::vector<std::size_t> overlap_strides;  // empty selects {S, S/2}

    /// Canonical JSON of the effective config (out_dir excluded), hashed
    /// into every report.
    std::string canonical;
    std::string config_hash() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

/// Materializes the configured dataset source.
MultivariateSeries load_dataset(const ExperimentConfig& cfg);

/// Deterministic horizon line chart: truth solid, prediction dashed.
std::string render_line_chart(const std::string& title, const std::vector<double>& truth,
                              const std::vector<double>& prediction);

/// Entry point behind main(). Exit codes: 0 success, 1 runtime failure,
/// 2 validation failure (bad flags, bad config, bad request).
int run(int argc, char** argv);

}  // namespace ipatch::cli
