#include "ipatch/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "ipatch/errors.hpp"

namespace ipatch {

namespace ag = autograd;

Qkv project_qkv(const autograd::Var& tokens, const HeadParams& head) {
    return {ag::matmul(head.W_Q, tokens), ag::matmul(head.W_K, tokens),
            ag::matmul(head.W_V, tokens)};
}

autograd::Var attention_weights(const autograd::Var& q, const autograd::Var& k) {
    const std::size_t dh = q.value().rows();
    ag::Var logits = ag::scale(ag::matmul(ag::transpose(q), k),
                               1.0 / std::sqrt(static_cast<double>(dh)));
    return ag::softmax_rows(logits);
}

autograd::Var attend(const autograd::Var& weights, const autograd::Var& v) {
    return ag::matmul(v, ag::transpose(weights));
}

autograd::Var multi_head(const autograd::Var& tokens, const EncoderLayerParams& layer,
                         std::vector<Tensor>* attn_trace) {
    if (layer.heads.empty()) throw ConfigError("attention requires at least one head");
    std::vector<ag::Var> outputs;
    outputs.reserve(layer.heads.size());
    for (const HeadParams& head : layer.heads) {
        Qkv qkv = project_qkv(tokens, head);
        ag::Var a = attention_weights(qkv.q, qkv.k);
        if (attn_trace) attn_trace->push_back(a.value());
        outputs.push_back(attend(a, qkv.v));
    }
    ag::Var z = outputs.size() == 1 ? outputs[0] : ag::concat_rows(outputs);
    if (layer.W_O.defined()) z = ag::matmul(layer.W_O, z);
    return z;
}

namespace {

// b is a column vector; broadcast it over the N columns of x via an all-ones
// row so the bias gradient falls out of the matmul rule.
ag::Var add_col_bias(const ag::Var& x, const ag::Var& b) {
    ag::Var ones = ag::constant(Tensor::full({1, x.value().cols()}, 1.0));
    return ag::add(x, ag::matmul(b, ones));
}

}  // namespace

autograd::Var encoder_layer(const autograd::Var& tokens, const EncoderLayerParams& layer,
                            std::vector<Tensor>* attn_trace) {
    ag::Var attn = multi_head(tokens, layer, attn_trace);
    ag::Var h = ag::layer_norm_cols(ag::add(tokens, attn), layer.ln1.gain, layer.ln1.bias);
    ag::Var hidden = ag::gelu(add_col_bias(ag::matmul(layer.ffn.W1, h), layer.ffn.b1));
    ag::Var ff = add_col_bias(ag::matmul(layer.ffn.W2, hidden), layer.ffn.b2);
    return ag::layer_norm_cols(ag::add(h, ff), layer.ln2.gain, layer.ln2.bias);
}

}  // namespace ipatch
