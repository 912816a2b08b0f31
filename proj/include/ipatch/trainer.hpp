#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ipatch/data.hpp"
#include "ipatch/model.hpp"
#include "ipatch/tensor.hpp"

namespace ipatch {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch = 32;
    std::size_t max_epochs = 10;
    std::size_t patience = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricsReport {
    std::string split;
    double mse = 0.0;
    double mae = 0.0;
    std::size_t count = 0;       // samples
    double wall_seconds = 0.0;   // the one field excluded from reproducibility
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string metrics_scale;   // "standardized" or "raw"
};

/// Mean over every element; shapes must match.
double mse_metric(const Tensor& y, const Tensor& yhat);
double mae_metric(const Tensor& y, const Tensor& yhat);

struct TrainHistory {
    std::vector<double> train_loss;  // mean batch loss per epoch
    std::vector<double> val_loss;    // empty when no validation samples
    std::size_t best_epoch = 0;
    std::size_t steps = 0;           // optimizer steps taken
    bool early_stopped = false;
};

/// Minimizes batch MSE with the adaptive-moment optimizer. Batch order is a
/// seeded shuffle, so equal seeds give bitwise-equal runs. With validation
/// samples, stops after `patience` epochs without val improvement and
/// restores the best-epoch parameters. Throws on a non-finite loss.
TrainHistory train_model(IPatchModel& model, const std::vector<ForecastSample>& train_samples,
                         const std::vector<ForecastSample>& val_samples, const TrainConfig& cfg);

/// Metrics over all samples. When scaler is given, targets and forecasts
/// are mapped back to raw scale first; the choice is recorded in the
/// report. Throws on an empty sample set.
MetricsReport evaluate(const IPatchModel& model, const std::vector<ForecastSample>& samples,
                       const std::string& split_name, const Standardizer* scaler = nullptr);

/// One dataset-to-metrics run: fit train-split statistics, standardize,
/// window each split, build the model, train, and evaluate.
struct RunSpec {
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
    std::size_t window_stride = 1;
    bool raw_scale_metrics = false;
};

struct RunResult {
    IPatchModel model;
    TrainHistory history;
    MetricsReport val;   // count == 0 when the run had no validation split
    MetricsReport test;
    Standardizer scaler;
};

RunResult run_experiment(const MultivariateSeries& data, const RunSpec& spec,
                         const std::string& config_hash);

/// {full, patch_only, autocorr_only} x {fourier, softmax} with shared seed
/// and splits. Cells are ordered variant-major.
struct AblationCell {
    std::string variant;
    std::string weighting;
    MetricsReport test;
};
std::vector<AblationCell> run_ablation(const MultivariateSeries& data, RunSpec base,
                                       const std::string& config_hash);

/// Same configuration trained once per stride; deltas are signed against
/// the first stride's row.
struct OverlapRow {
    std::size_t stride = 0;
    std::size_t patches = 0;  // N for this stride
    MetricsReport test;
    double delta_mse = 0.0;
    double delta_mae = 0.0;
};
std::vector<OverlapRow> run_overlap_experiment(const MultivariateSeries& data, RunSpec base,
                                               const std::vector<std::size_t>& strides,
                                               const std::string& config_hash);

/// Fixed-width comparison tables; deltas rendered with a direction mark
/// so improvement/regression is visible at a glance.
std::string format_ablation_table(const std::vector<AblationCell>& cells);
std::string format_overlap_table(const std::vector<OverlapRow>& rows);

/// FNV-1a 64-bit hash, hex-encoded; used to stamp reports with the exact
/// configuration they came from.
std::string fnv1a_hex(const std::string& text);

}  // namespace ipatch
