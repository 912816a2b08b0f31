#include "ipatch/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "ipatch/errors.hpp"

namespace ipatch {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    out.push_back(field);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& text, double& out) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

MultivariateSeries load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty CSV file: " + path);

    std::vector<std::string> header = split_fields(line);
    for (auto& h : header) h = trim(h);
    MultivariateSeries series;
    const bool has_date = !header.empty() && header[0] == "date";
    const std::size_t first_value_col = has_date ? 1 : 0;
    for (std::size_t i = first_value_col; i < header.size(); ++i) {
        series.channels.push_back(header[i]);
    }
    if (series.channels.empty()) throw DataError("CSV has no value columns: " + path);

    std::vector<double> data;
    std::vector<std::string> stamps;
    std::size_t rows = 0, line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(path + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        }
        std::vector<double> row(series.channels.size());
        bool missing = false;
        for (std::size_t i = first_value_col; i < fields.size(); ++i) {
            const std::string cell = trim(fields[i]);
            if (cell.empty()) {
                missing = true;
                break;
            }
            if (!parse_number(cell, row[i - first_value_col])) {
                throw DataError(path + ": row " + std::to_string(line_no) + ", column '" +
                                header[i] + "': cannot parse '" + cell + "' as a number");
            }
        }
        if (missing) {
            ++series.rejected_rows;
            continue;
        }
        data.insert(data.end(), row.begin(), row.end());
        if (has_date) stamps.push_back(trim(fields[0]));
        ++rows;
    }
    series.values = Tensor({rows, series.channels.size()}, std::move(data));
    series.timestamps = std::move(stamps);
    return series;
}

void save_csv(const MultivariateSeries& series, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open CSV for writing: " + path);
    const bool has_date = !series.timestamps.empty();
    if (has_date) f << "date";
    for (std::size_t j = 0; j < series.channels.size(); ++j) {
        if (has_date || j > 0) f << ",";
        f << series.channels[j];
    }
    f << "\n";
    for (std::size_t t = 0; t < series.length(); ++t) {
        if (has_date) f << series.timestamps[t];
        for (std::size_t j = 0; j < series.width(); ++j) {
            if (has_date || j > 0) f << ",";
            f << format_number(series.values.at(t, j));
        }
        f << "\n";
    }
    if (!f) throw DataError("failed writing CSV: " + path);
}

namespace {

MultivariateSeries make_series(std::size_t T, std::size_t M) {
    MultivariateSeries s;
    s.values = Tensor({T, M});
    for (std::size_t j = 0; j < M; ++j) s.channels.push_back("ch" + std::to_string(j));
    return s;
}

}  // namespace

MultivariateSeries synth_sinusoid(const SinusoidSpec& spec, std::uint64_t seed, std::size_t T,
                                  std::size_t M) {
    if (T < 1 || M < 1) throw ConfigError("synthetic series needs T >= 1 and M >= 1");
    // A tone-free spec (trend or noise only) is legal; the lengths just
    // have to agree.
    if (spec.periods.size() != spec.amplitudes.size()) {
        throw ConfigError("sinusoid spec needs matching periods and amplitudes");
    }
    if (!spec.phases.empty() && spec.phases.size() != spec.periods.size()) {
        throw ConfigError("sinusoid spec phases must be empty or match periods");
    }
    for (double p : spec.periods) {
        if (p <= 0.0) throw ConfigError("sinusoid periods must be positive");
    }
    if (spec.noise < 0.0) throw ConfigError("noise level must be non-negative");

    MultivariateSeries s = make_series(T, M);
    Rng rng(seed);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < M; ++j) {
            double v = spec.trend * static_cast<double>(t);
            for (std::size_t i = 0; i < spec.periods.size(); ++i) {
                const double phase = spec.phases.empty() ? 0.0 : spec.phases[i];
                v += spec.amplitudes[i] *
                     std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.periods[i] +
                              phase + static_cast<double>(j) * spec.channel_shift);
            }
            if (spec.noise > 0.0) v += spec.noise * rng.normal();
            s.values.at(t, j) = v;
        }
    }
    return s;
}

MultivariateSeries synth_ar(const ArSpec& spec, std::uint64_t seed, std::size_t T,
                            std::size_t M) {
    if (T < 1 || M < 1) throw ConfigError("synthetic series needs T >= 1 and M >= 1");
    if (spec.coef.empty()) throw ConfigError("AR spec needs at least one coefficient");
    if (spec.noise < 0.0) throw ConfigError("noise level must be non-negative");

    MultivariateSeries s = make_series(T, M);
    Rng rng(seed);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < M; ++j) {
            double v = 0.0;
            for (std::size_t i = 0; i < spec.coef.size(); ++i) {
                if (t >= i + 1) v += spec.coef[i] * s.values.at(t - 1 - i, j);
            }
            if (spec.noise > 0.0) v += spec.noise * rng.normal();
            s.values.at(t, j) = v;
        }
    }
    return s;
}

void SplitSpec::validate() const {
    if (train_frac <= 0.0 || train_frac > 1.0) {
        throw ConfigError("train fraction must be in (0, 1]");
    }
    if (val_frac < 0.0 || train_frac + val_frac > 1.0) {
        throw ConfigError("train + val fractions must not exceed 1");
    }
}

std::size_t SplitSpec::train_end(std::size_t T) const {
    return static_cast<std::size_t>(static_cast<double>(T) * train_frac);
}

std::size_t SplitSpec::val_end(std::size_t T) const {
    // Flooring each fraction separately keeps 0.7 + 0.1 of 17420 at 13936
    // instead of losing a row to the inexact sum of the two fractions.
    return train_end(T) + static_cast<std::size_t>(static_cast<double>(T) * val_frac);
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

std::vector<ForecastSample> window_range(const MultivariateSeries& series, std::size_t L,
                                         std::size_t H, std::size_t stride, std::size_t begin,
                                         std::size_t end) {
    if (L < 1 || H < 1 || stride < 1) throw ConfigError("window needs L, H, stride >= 1");
    if (end > series.length()) throw ConfigError("window range exceeds series length");
    if (end < begin || end - begin < L + H) {
        throw ConfigError("segment [" + std::to_string(begin) + ", " + std::to_string(end) +
                          ") is shorter than one window of " + std::to_string(L + H));
    }
    const std::size_t m = series.width();
    std::vector<ForecastSample> out;
    for (std::size_t origin = begin; origin + L + H <= end; origin += stride) {
        ForecastSample sample;
        sample.origin = origin;
        sample.input = Tensor({L, m});
        sample.target = Tensor({H, m});
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t j = 0; j < m; ++j)
                sample.input.at(t, j) = series.values.at(origin + t, j);
        for (std::size_t t = 0; t < H; ++t)
            for (std::size_t j = 0; j < m; ++j)
                sample.target.at(t, j) = series.values.at(origin + L + t, j);
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<ForecastSample> window(const MultivariateSeries& series, std::size_t L,
                                   std::size_t H, std::size_t stride, const SplitSpec& split,
                                   Split which) {
    split.validate();
    const std::size_t T = series.length();
    std::size_t begin = 0, end = T;
    switch (which) {
        case Split::train: end = split.train_end(T); break;
        case Split::val: begin = split.train_end(T); end = split.val_end(T); break;
        case Split::test: begin = split.val_end(T); break;
    }
    return window_range(series, L, H, stride, begin, end);
}

Standardizer Standardizer::fit(const MultivariateSeries& series, const SplitSpec& split) {
    split.validate();
    const std::size_t end = split.train_end(series.length());
    if (end < 1) throw ConfigError("train segment is empty; cannot fit statistics");
    const std::size_t m = series.width();
    Standardizer z;
    z.mean.assign(m, 0.0);
    z.std.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double mu = 0.0;
        for (std::size_t t = 0; t < end; ++t) mu += series.values.at(t, j);
        mu /= static_cast<double>(end);
        double var = 0.0;
        for (std::size_t t = 0; t < end; ++t) {
            const double d = series.values.at(t, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(end);
        z.mean[j] = mu;
        z.std[j] = std::max(std::sqrt(var), 1e-5);
    }
    return z;
}

Tensor Standardizer::apply(const Tensor& values) const {
    if (values.rank() != 2 || values.cols() != mean.size()) {
        throw std::invalid_argument("standardizer fitted for " + std::to_string(mean.size()) +
                                    " channels, got " + values.shape_str());
    }
    Tensor out(values.shape());
    for (std::size_t t = 0; t < values.rows(); ++t)
        for (std::size_t j = 0; j < values.cols(); ++j)
            out.at(t, j) = (values.at(t, j) - mean[j]) / std[j];
    return out;
}

Tensor Standardizer::invert(const Tensor& values) const {
    if (values.rank() != 2 || values.cols() != mean.size()) {
        throw std::invalid_argument("standardizer fitted for " + std::to_string(mean.size()) +
                                    " channels, got " + values.shape_str());
    }
    Tensor out(values.shape());
    for (std::size_t t = 0; t < values.rows(); ++t)
        for (std::size_t j = 0; j < values.cols(); ++j)
            out.at(t, j) = values.at(t, j) * std[j] + mean[j];
    return out;
}

MultivariateSeries Standardizer::apply(const MultivariateSeries& series) const {
    MultivariateSeries out = series;
    out.values = apply(series.values);
    return out;
}

}  // namespace ipatch
