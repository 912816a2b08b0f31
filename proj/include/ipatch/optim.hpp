#pragma once

#include <functional>
#include <vector>

#include "ipatch/autograd.hpp"
#include "ipatch/tensor.hpp"

namespace ipatch::optim {

/// First/second moment buffers, lazily sized on the first step.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

/// Bias-corrected adaptive-moment update applied in place. grads[i] must
/// match params[i] in shape; mismatch throws.
void adam_step(std::vector<autograd::Var>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

void zero_grad(std::vector<autograd::Var>& params);

/// Central-difference validation of the analytic gradient of a scalar loss.
/// Returns max over every parameter element of
///   |analytic - numeric| / max(1, |numeric|).
/// f is re-evaluated with perturbed parameter values; throws if any
/// evaluation is non-finite.
double grad_check(const std::function<autograd::Var()>& f,
                  std::vector<autograd::Var>& params, double eps = 1e-5);

}  // namespace ipatch::optim
