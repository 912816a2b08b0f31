#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "ipatch/tensor.hpp"

namespace ipatch::autograd {

/// Eager reverse-mode engine over small dense tensors. Every op computes its
/// value immediately and records a closure that scatters the output gradient
/// into its parents. backward() walks the recorded graph once, in reverse
/// topological order.
///
/// Ownership points child -> parent only, so graphs are acyclic and free
/// themselves when the last downstream Var goes out of scope. Parameter
/// nodes are kept alive by their owner (the model) and accumulate gradients
/// across backward calls until zero_grad().
class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(const Tensor& out_grad)> backward_fn;

    void accumulate(const Tensor& g);
    void clear_grad() { grad = Tensor(); }
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    /// Gradient accumulated by backward(); zeros if never reached.
    Tensor grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    void clear_grad() { node_->clear_grad(); }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

/// Leaf that never receives a gradient (inputs, targets).
Var constant(Tensor value);
/// Leaf flagged trainable; grad accumulates across backward calls.
Var parameter(Tensor value);

/// Reverse pass from a scalar loss. Throws if loss is not scalar or not
/// finite.
void backward(const Var& loss);

// -- differentiable ops ------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var concat_rows(const std::vector<Var>& parts);
/// Row-wise softmax of a 2-D tensor.
Var softmax_rows(const Var& a);
Var gelu(const Var& a);
/// Per-column layer normalization of a (D x N) matrix with learnable
/// per-row gain and bias (rank-1, length D).
Var layer_norm_cols(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Mean over all elements; returns a scalar (shape {1}).
Var mean(const Var& a);

/// Column-wise circular cross-correlation via FFT:
///   out[tau,c] = sum_t q[(t+tau) mod d, c] * k[t, c].
Var xcorr_cols(const Var& q, const Var& k);

/// out[l,c] = a[indices[l][c], c]. indices are fixed (selection happens
/// outside the graph); gradients scatter back into the gathered entries.
Var gather_rows(const Var& a, const std::vector<std::vector<std::size_t>>& indices);

/// out[i,c] = sum_l v[(i + taus[l][c]) mod d, c] * w[l,c]. Rolled copies of
/// each value column blended with per-lag weights; taus are fixed integers.
Var roll_weighted_sum(const Var& v, const std::vector<std::vector<std::size_t>>& taus,
                      const Var& w);

/// Truncated Fourier series applied elementwise:
///   out[i,j] = sum_{m=1..G} cos_coef[m-1]*cos(m*w[i,j]) + sin_coef[m-1]*sin(m*w[i,j]).
Var fourier_map(const Var& w, const Var& cos_coef, const Var& sin_coef);

/// mean((a-b)^2) over all elements; scalar.
Var mse(const Var& a, const Var& b);

}  // namespace ipatch::autograd
