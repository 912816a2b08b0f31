#pragma once

#include <cstddef>
#include <vector>

#include "ipatch/autograd.hpp"
#include "ipatch/tensor.hpp"

namespace ipatch {

/// One attention head's projections, each d_h x D with d_h = D / head count.
struct HeadParams {
    autograd::Var W_Q, W_K, W_V;
};

struct LayerNormParams {
    autograd::Var gain, bias;  // length D
};

/// Position-wise two-layer feed-forward, hidden width 2D, GELU.
struct FeedForwardParams {
    autograd::Var W1, b1;  // 2D x D, 2D x 1
    autograd::Var W2, b2;  // D x 2D, D x 1
};

/// One encoder layer: multi-head attention, residual, layer norm,
/// feed-forward, residual, layer norm. W_O is applied after head
/// concatenation only when defined (off by default).
struct EncoderLayerParams {
    std::vector<HeadParams> heads;
    autograd::Var W_O;  // D x D when enabled; default-constructed otherwise
    LayerNormParams ln1, ln2;
    FeedForwardParams ffn;
};

struct Qkv {
    autograd::Var q, k, v;  // each d_h x N
};

Qkv project_qkv(const autograd::Var& tokens, const HeadParams& head);

/// A = softmax(Q^T K / sqrt(d_h)), row-wise over keys; N x N, rows sum to 1.
autograd::Var attention_weights(const autograd::Var& q, const autograd::Var& k);

/// Head output V A^T (d_h x N): output token i mixes value tokens with the
/// weights of attention row i.
autograd::Var attend(const autograd::Var& weights, const autograd::Var& v);

/// Concatenated head outputs (D x N), optionally projected by W_O.
/// If attn_trace is non-null, each head's N x N weight matrix is appended.
autograd::Var multi_head(const autograd::Var& tokens, const EncoderLayerParams& layer,
                         std::vector<Tensor>* attn_trace = nullptr);

/// Full encoder sublayer stack around multi_head.
autograd::Var encoder_layer(const autograd::Var& tokens, const EncoderLayerParams& layer,
                            std::vector<Tensor>* attn_trace = nullptr);

}  // namespace ipatch
