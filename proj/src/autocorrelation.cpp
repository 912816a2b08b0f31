#include "ipatch/autocorrelation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ipatch/errors.hpp"

namespace ipatch {

namespace ag = autograd;

LagWeighting parse_weighting(const std::string& name) {
    if (name == "fourier") return LagWeighting::fourier;
    if (name == "softmax") return LagWeighting::softmax;
    throw ConfigError("unknown lag weighting '" + name + "' (expected fourier or softmax)");
}

std::string to_string(LagWeighting w) {
    return w == LagWeighting::fourier ? "fourier" : "softmax";
}

autograd::Var spectral_autocorr(const autograd::Var& q, const autograd::Var& k) {
    return ag::xcorr_cols(q, k);
}

namespace {

LagColumn top_lags(const std::vector<double>& values, std::size_t J) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return a < b;
    });
    LagColumn out;
    out.reserve(J);
    for (std::size_t l = 0; l < J; ++l) out.push_back({idx[l], values[idx[l]]});
    return out;
}

void check_lag_count(std::size_t J, std::size_t dh) {
    if (J < 1 || J > dh) {
        throw ConfigError("lag count " + std::to_string(J) + " out of range [1, " +
                          std::to_string(dh) + "]");
    }
}

}  // namespace

std::vector<LagColumn> select_lags(const Tensor& corr, std::size_t J) {
    check_lag_count(J, corr.rows());
    std::vector<LagColumn> out(corr.cols());
    std::vector<double> column(corr.rows());
    for (std::size_t c = 0; c < corr.cols(); ++c) {
        for (std::size_t t = 0; t < corr.rows(); ++t) column[t] = corr.at(t, c);
        out[c] = top_lags(column, J);
    }
    return out;
}

std::vector<LagColumn> select_lags_shared(const Tensor& corr, std::size_t J) {
    check_lag_count(J, corr.rows());
    std::vector<double> pooled(corr.rows(), 0.0);
    for (std::size_t t = 0; t < corr.rows(); ++t) {
        for (std::size_t c = 0; c < corr.cols(); ++c) pooled[t] += corr.at(t, c);
        pooled[t] /= static_cast<double>(corr.cols());
    }
    const LagColumn shared = top_lags(pooled, J);
    std::vector<LagColumn> out(corr.cols(), shared);
    for (std::size_t c = 0; c < corr.cols(); ++c) {
        for (auto& lag : out[c]) lag.weight = corr.at(lag.tau, c);
    }
    return out;
}

double fkan(double w, const Tensor& cos_coef, const Tensor& sin_coef) {
    if (cos_coef.numel() != sin_coef.numel() || cos_coef.numel() == 0) {
        throw ConfigError("Fourier coefficient vectors must match and be non-empty");
    }
    double acc = 0.0;
    for (std::size_t m = 1; m <= cos_coef.numel(); ++m) {
        const double mw = static_cast<double>(m) * w;
        acc += cos_coef[m - 1] * std::cos(mw) + sin_coef[m - 1] * std::sin(mw);
    }
    return acc;
}

autograd::Var aggregate(const autograd::Var& v, const autograd::Var& corr,
                        const std::vector<LagColumn>& lags, LagWeighting weighting,
                        const FkanParams& fkan_params, std::vector<Tensor>* weight_trace) {
    const std::size_t n = v.value().cols();
    if (lags.size() != n) {
        throw std::invalid_argument("aggregate: lag sets for " + std::to_string(lags.size()) +
                                    " columns, value stream has " + std::to_string(n));
    }
    const std::size_t J = lags.empty() ? 0 : lags[0].size();
    std::vector<std::vector<std::size_t>> taus(J, std::vector<std::size_t>(n));
    for (std::size_t c = 0; c < n; ++c) {
        if (lags[c].size() != J) throw std::invalid_argument("aggregate: ragged lag sets");
        for (std::size_t l = 0; l < J; ++l) taus[l][c] = lags[c][l].tau;
    }

    // Raw weights re-read from corr so gradients reach the projections.
    ag::Var raw = ag::gather_rows(corr, taus);
    ag::Var applied;
    if (weighting == LagWeighting::fourier) {
        applied = ag::fourier_map(raw, fkan_params.cos_coef, fkan_params.sin_coef);
    } else {
        applied = ag::transpose(ag::softmax_rows(ag::transpose(raw)));
    }
    if (weight_trace) weight_trace->push_back(applied.value());
    return ag::roll_weighted_sum(v, taus, applied);
}

autograd::Var autocorr_block(const autograd::Var& tokens, const AutocorrParams& params,
                             std::vector<Tensor>* weight_trace) {
    if (params.heads.empty()) throw ConfigError("autocorrelation requires at least one head");
    std::vector<ag::Var> outputs;
    outputs.reserve(params.heads.size());
    for (const AutocorrHeadParams& head : params.heads) {
        ag::Var q = ag::matmul(head.W_Q, tokens);
        ag::Var k = ag::matmul(head.W_K, tokens);
        ag::Var v = ag::matmul(head.W_V, tokens);
        ag::Var corr = spectral_autocorr(q, k);
        std::vector<LagColumn> lags = params.shared_lags
                                          ? select_lags_shared(corr.value(), params.lags)
                                          : select_lags(corr.value(), params.lags);
        outputs.push_back(aggregate(v, corr, lags, params.weighting, head.fkan, weight_trace));
    }
    return outputs.size() == 1 ? outputs[0] : ag::concat_rows(outputs);
}

}  // namespace ipatch
