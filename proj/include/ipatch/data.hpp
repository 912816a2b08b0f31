#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ipatch/tensor.hpp"

namespace ipatch {

/// T x M series with channel names. Rows dropped during ingestion (missing
/// or unusable values) are counted, never imputed.
struct MultivariateSeries {
    std::vector<std::string> channels;
    std::vector<std::string> timestamps;  // empty when the source has none
    Tensor values;                        // T x M
    std::size_t rejected_rows = 0;

    std::size_t length() const { return values.rank() == 2 ? values.rows() : 0; }
    std::size_t width() const { return values.rank() == 2 ? values.cols() : 0; }
};

/// Comma-separated, UTF-8, '.' decimal, first row header. A leading column
/// named "date" is kept as timestamps; every other column must be numeric.
/// Rows with empty cells are rejected (counted); ragged rows and
/// non-numeric cells raise DataError naming the row and column.
MultivariateSeries load_csv(const std::string& path);

void save_csv(const MultivariateSeries& series, const std::string& path);

/// value(t, j) = sum_i amplitudes[i] * sin(2*pi*t/periods[i] + phases[i] + j*channel_shift)
///              + trend*t + noise*N(0,1)
struct SinusoidSpec {
    std::vector<double> periods;
    std::vector<double> amplitudes;
    std::vector<double> phases;  // empty means all zero
    double trend = 0.0;
    double noise = 0.0;
    double channel_shift = 0.7;  // phase offset between channels
};
MultivariateSeries synth_sinusoid(const SinusoidSpec& spec, std::uint64_t seed, std::size_t T,
                                  std::size_t M);

/// x_t = sum_i coef[i] * x_{t-1-i} + noise * N(0,1), zero history, one
/// independent noise stream drawn in (t, channel) order.
struct ArSpec {
    std::vector<double> coef;
    double noise = 1.0;
};
MultivariateSeries synth_ar(const ArSpec& spec, std::uint64_t seed, std::size_t T, std::size_t M);

/// Chronological three-way split by fractions; boundaries round down.
struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;

    void validate() const;
    std::size_t train_end(std::size_t T) const;
    std::size_t val_end(std::size_t T) const;
};

enum class Split { train, val, test };
std::string to_string(Split s);

struct ForecastSample {
    Tensor input;   // L x M
    Tensor target;  // H x M
    std::size_t origin = 0;  // index of the first input row in the series
};

/// Samples entirely inside [begin, end): origins begin, begin+stride, ...
/// while origin + L + H <= end. Throws ConfigError when the segment is too
/// short for a single sample.
std::vector<ForecastSample> window_range(const MultivariateSeries& series, std::size_t L,
                                         std::size_t H, std::size_t stride, std::size_t begin,
                                         std::size_t end);

/// Samples from one chronological split segment; windows never straddle a
/// split boundary.
std::vector<ForecastSample> window(const MultivariateSeries& series, std::size_t L,
                                   std::size_t H, std::size_t stride, const SplitSpec& split,
                                   Split which);

/// Per-channel z-score statistics fitted on the train segment only
/// (population std, floored at 1e-5).
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;

    static Standardizer fit(const MultivariateSeries& series, const SplitSpec& split);
    Tensor apply(const Tensor& values) const;
    Tensor invert(const Tensor& values) const;
    MultivariateSeries apply(const MultivariateSeries& series) const;
};

}  // namespace ipatch
