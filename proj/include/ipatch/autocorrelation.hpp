#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ipatch/autograd.hpp"
#include "ipatch/tensor.hpp"

namespace ipatch {

enum class LagWeighting { fourier, softmax };

LagWeighting parse_weighting(const std::string& name);
std::string to_string(LagWeighting w);

/// Truncated Fourier series coefficients, one pair of length-G vectors per
/// head. Maps a raw correlation weight to a signed aggregation weight.
struct FkanParams {
    autograd::Var cos_coef, sin_coef;  // each length G
};

struct AutocorrHeadParams {
    autograd::Var W_Q, W_K, W_V;  // each d_h x D
    FkanParams fkan;
};

struct AutocorrParams {
    std::vector<AutocorrHeadParams> heads;
    std::size_t lags = 1;  // J, retained per column
    LagWeighting weighting = LagWeighting::fourier;
    bool shared_lags = false;
};

/// One retained lag: circular shift tau with its raw correlation value.
struct Lag {
    std::size_t tau;
    double weight;
};
using LagColumn = std::vector<Lag>;

/// Column-wise circular cross-correlation of Q against K along the
/// embedding axis: corr[tau,c] = sum_t Q[(t+tau) mod d_h, c] * K[t, c].
autograd::Var spectral_autocorr(const autograd::Var& q, const autograd::Var& k);

/// Top-J lags per column by correlation value, descending; equal values
/// break toward the smaller lag. Throws ConfigError when J is out of
/// [1, d_h].
std::vector<LagColumn> select_lags(const Tensor& corr, std::size_t J);

/// Shared variant: one lag set per head, chosen from the correlation values
/// averaged across columns, then re-weighted per column.
std::vector<LagColumn> select_lags_shared(const Tensor& corr, std::size_t J);

/// Scalar reference evaluation: sum_m cos_coef[m-1] cos(m w) + sin_coef[m-1] sin(m w).
double fkan(double w, const Tensor& cos_coef, const Tensor& sin_coef);

/// Rolls each value column by its retained lags and blends them with the
/// mapped weights. Raw weights are re-read differentiably from corr at the
/// selected positions; mapping g is the head's Fourier series in fourier
/// mode, or a per-column softmax over the J raw weights in softmax mode.
/// If weight_trace is non-null, the applied J x N weight matrix is appended.
autograd::Var aggregate(const autograd::Var& v, const autograd::Var& corr,
                        const std::vector<LagColumn>& lags, LagWeighting weighting,
                        const FkanParams& fkan_params,
                        std::vector<Tensor>* weight_trace = nullptr);

/// Full stream: per head project -> correlate -> select lags -> aggregate,
/// heads concatenated along the embedding axis to D x N.
autograd::Var autocorr_block(const autograd::Var& tokens, const AutocorrParams& params,
                             std::vector<Tensor>* weight_trace = nullptr);

}  // namespace ipatch
