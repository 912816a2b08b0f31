#include "ipatch/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ipatch::optim {

void adam_step(std::vector<autograd::Var>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Tensor::zeros(p.value().shape()));
            state.v.push_back(Tensor::zeros(p.value().shape()));
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state sized for a different parameter set");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].mutable_value();
        const Tensor& g = grads[i];
        if (!p.same_shape(g) || !p.same_shape(state.m[i])) {
            throw std::invalid_argument("adam_step: shape mismatch at parameter " +
                                        std::to_string(i));
        }
        for (std::size_t j = 0; j < p.numel(); ++j) {
            state.m[i][j] = beta1 * state.m[i][j] + (1.0 - beta1) * g[j];
            state.v[i][j] = beta2 * state.v[i][j] + (1.0 - beta2) * g[j] * g[j];
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void zero_grad(std::vector<autograd::Var>& params) {
    for (auto& p : params) p.clear_grad();
}

double grad_check(const std::function<autograd::Var()>& f,
                  std::vector<autograd::Var>& params, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

    zero_grad(params);
    autograd::Var loss = f();
    autograd::backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad());

    auto eval = [&]() {
        const autograd::Var out = f();
        const double v = out.value()[0];
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite");
        return v;
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].mutable_value();
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double orig = p[j];
            p[j] = orig + eps;
            const double fp = eval();
            p[j] = orig - eps;
            const double fm = eval();
            p[j] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double err = std::abs(analytic[i][j] - numeric) /
                               std::max(1.0, std::abs(numeric));
            if (err > worst) worst = err;
        }
    }
    return worst;
}

}  // namespace ipatch::optim
