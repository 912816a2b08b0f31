#include "ipatch/patching.hpp"

#include <cmath>
#include <string>

#include "ipatch/errors.hpp"

namespace ipatch {

void PatchConfig::validate() const {
    if (O < 1) throw ConfigError("patch stride must be at least 1, got " + std::to_string(O));
    if (O > S) {
        throw ConfigError("patch stride " + std::to_string(O) + " exceeds patch length " +
                          std::to_string(S));
    }
    if (S >= L) {
        throw ConfigError("patch length " + std::to_string(S) +
                          " must be smaller than look-back length " + std::to_string(L));
    }
    if (D < 1) throw ConfigError("embedding dimension must be at least 1");
}

std::size_t PatchConfig::patch_count() const { return (L - S) / O + 1; }

Tensor segment_channel(const std::vector<double>& channel, const PatchConfig& cfg) {
    cfg.validate();
    if (channel.size() != cfg.L) {
        throw ConfigError("window length " + std::to_string(channel.size()) +
                          " does not match configured look-back " + std::to_string(cfg.L));
    }
    const std::size_t n = cfg.patch_count();
    Tensor patches({cfg.S, n});
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t start = k * cfg.O;
        for (std::size_t i = 0; i < cfg.S; ++i) patches.at(i, k) = channel[start + i];
    }
    return patches;
}

std::vector<Tensor> segment(const Tensor& window, const PatchConfig& cfg) {
    if (window.rank() != 2) throw ConfigError("window must be L x M, got " + window.shape_str());
    const std::size_t m = window.cols();
    std::vector<Tensor> out;
    out.reserve(m);
    std::vector<double> channel(window.rows());
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t t = 0; t < window.rows(); ++t) channel[t] = window.at(t, j);
        out.push_back(segment_channel(channel, cfg));
    }
    return out;
}

autograd::Var embed(const autograd::Var& patches, const autograd::Var& W_proj,
                    const autograd::Var& W_pos) {
    return autograd::add(autograd::matmul(W_proj, patches), W_pos);
}

std::pair<Tensor, InstanceNormState> instance_normalize(const Tensor& window) {
    const std::size_t l = window.rows(), m = window.cols();
    InstanceNormState state;
    state.mean.resize(m);
    state.std.resize(m);
    Tensor out(window.shape());
    for (std::size_t j = 0; j < m; ++j) {
        double mu = 0.0;
        for (std::size_t t = 0; t < l; ++t) mu += window.at(t, j);
        mu /= static_cast<double>(l);
        double var = 0.0;
        for (std::size_t t = 0; t < l; ++t) {
            const double d = window.at(t, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(l);
        double sigma = std::sqrt(var);
        if (sigma < 1e-5) sigma = 1e-5;
        state.mean[j] = mu;
        state.std[j] = sigma;
        for (std::size_t t = 0; t < l; ++t) out.at(t, j) = (window.at(t, j) - mu) / sigma;
    }
    return {out, state};
}

Tensor instance_denormalize(const Tensor& forecast, const InstanceNormState& state) {
    if (forecast.cols() != state.mean.size()) {
        throw ConfigError("forecast has " + std::to_string(forecast.cols()) +
                          " channels but normalization state has " +
                          std::to_string(state.mean.size()));
    }
    Tensor out(forecast.shape());
    for (std::size_t j = 0; j < forecast.cols(); ++j)
        for (std::size_t t = 0; t < forecast.rows(); ++t)
            out.at(t, j) = forecast.at(t, j) * state.std[j] + state.mean[j];
    return out;
}

}  // namespace ipatch
