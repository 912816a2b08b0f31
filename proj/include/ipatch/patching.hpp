#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ipatch/autograd.hpp"
#include "ipatch/tensor.hpp"

namespace ipatch {

/// Segmentation geometry: a look-back window of length L is cut into
/// patches of length S starting every O steps. Any trailing remainder of
/// the window is dropped.
struct PatchConfig {
    std::size_t L = 0;  // look-back length
    std::size_t S = 0;  // patch length
    std::size_t O = 0;  // stride; O = S means non-overlapping
    std::size_t D = 0;  // embedding dimension

    /// Throws ConfigError unless 1 <= O <= S < L and D >= 1.
    void validate() const;

    /// N = floor((L - S) / O) + 1.
    std::size_t patch_count() const;
};

/// Columns of patches for every variable: window (L x M) becomes M matrices
/// of shape S x N, where column k holds window[k*O .. k*O+S) of that
/// variable.
std::vector<Tensor> segment(const Tensor& window, const PatchConfig& cfg);

/// Single-variable segmentation of a length-L sequence into S x N.
Tensor segment_channel(const std::vector<double>& channel, const PatchConfig& cfg);

/// Token embedding P' = W_proj * P + W_pos, shared across variables.
/// W_proj is D x S, W_pos is D x N.
autograd::Var embed(const autograd::Var& patches, const autograd::Var& W_proj,
                    const autograd::Var& W_pos);

/// Per-channel mean and population standard deviation (floored at 1e-5) of
/// one look-back window, recorded so the forecast can be mapped back.
struct InstanceNormState {
    std::vector<double> mean;
    std::vector<double> std;
};

/// Standardizes each channel of an L x M window in place of a copy;
/// denormalize inverts on the forecast (H x M, same channel order).
std::pair<Tensor, InstanceNormState> instance_normalize(const Tensor& window);
Tensor instance_denormalize(const Tensor& forecast, const InstanceNormState& state);

}  // namespace ipatch
