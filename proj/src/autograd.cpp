#include "ipatch/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "ipatch/fft.hpp"

namespace ipatch::autograd {

void Node::accumulate(const Tensor& g) {
    if (grad.numel() == 0) grad = Tensor::zeros(value.shape());
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

Tensor Var::grad() const {
    if (node_->grad.numel() == 0) return Tensor::zeros(node_->value.shape());
    return node_->grad;
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

namespace {

// Result node wiring shared by every op: output requires grad iff any input
// does; the closure is only recorded in that case.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(const Tensor&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const Var& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
    if (n->requires_grad) {
        for (const Var& in : inputs) n->parents.push_back(in.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void topo_visit(const NodePtr& node, std::unordered_set<const Node*>& seen,
                std::vector<NodePtr>& order) {
    if (!node->requires_grad || seen.count(node.get())) return;
    seen.insert(node.get());
    for (const NodePtr& p : node->parents) topo_visit(p, seen, order);
    order.push_back(node);
}

}  // namespace

void backward(const Var& loss) {
    if (loss.value().numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss.value().shape_str());
    }
    if (!std::isfinite(loss.value()[0])) {
        throw std::runtime_error("backward: loss is not finite");
    }
    std::unordered_set<const Node*> seen;
    std::vector<NodePtr> order;
    topo_visit(loss.node(), seen, order);

    loss.node()->accumulate(Tensor({1}, {1.0}));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (n.backward_fn && n.grad.numel() > 0) n.backward_fn(n.grad);
    }
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = ipatch::matmul(a.value(), b.value());
    return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
        if (a.requires_grad()) a.node()->accumulate(ipatch::matmul(g, ipatch::transpose(b.value())));
        if (b.requires_grad()) b.node()->accumulate(ipatch::matmul(ipatch::transpose(a.value()), g));
    });
}

Var add(const Var& a, const Var& b) {
    Tensor out = ipatch::add(a.value(), b.value());
    return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
        if (a.requires_grad()) a.node()->accumulate(g);
        if (b.requires_grad()) b.node()->accumulate(g);
    });
}

Var sub(const Var& a, const Var& b) {
    Tensor out = ipatch::sub(a.value(), b.value());
    return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
        if (a.requires_grad()) a.node()->accumulate(g);
        if (b.requires_grad()) b.node()->accumulate(ipatch::scale(g, -1.0));
    });
}

Var mul(const Var& a, const Var& b) {
    Tensor out = ipatch::mul(a.value(), b.value());
    return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
        if (a.requires_grad()) a.node()->accumulate(ipatch::mul(g, b.value()));
        if (b.requires_grad()) b.node()->accumulate(ipatch::mul(g, a.value()));
    });
}

Var scale(const Var& a, double s) {
    Tensor out = ipatch::scale(a.value(), s);
    return make_result(std::move(out), {a}, [a, s](const Tensor& g) {
        a.node()->accumulate(ipatch::scale(g, s));
    });
}

Var transpose(const Var& a) {
    Tensor out = ipatch::transpose(a.value());
    return make_result(std::move(out), {a}, [a](const Tensor& g) {
        a.node()->accumulate(ipatch::transpose(g));
    });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out(shape, a.value().data());
    std::vector<std::size_t> orig = a.value().shape();
    return make_result(std::move(out), {a}, [a, orig](const Tensor& g) {
        a.node()->accumulate(Tensor(orig, g.data()));
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const std::size_t cols = parts[0].value().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 2 || p.value().cols() != cols) {
            throw std::invalid_argument("concat_rows: column count mismatch");
        }
        rows += p.value().rows();
    }
    Tensor out({rows, cols});
    std::size_t r0 = 0;
    for (const Var& p : parts) {
        for (std::size_t r = 0; r < p.value().rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) out.at(r0 + r, c) = p.value().at(r, c);
        r0 += p.value().rows();
    }
    return make_result(std::move(out), parts, [parts, cols](const Tensor& g) {
        std::size_t r0 = 0;
        for (const Var& p : parts) {
            const std::size_t pr = p.value().rows();
            if (p.requires_grad()) {
                Tensor slice({pr, cols});
                for (std::size_t r = 0; r < pr; ++r)
                    for (std::size_t c = 0; c < cols; ++c) slice.at(r, c) = g.at(r0 + r, c);
                p.node()->accumulate(slice);
            }
            r0 += pr;
        }
    });
}

Var softmax_rows(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 tensor required");
    Tensor out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> row(x.cols());
        for (std::size_t c = 0; c < x.cols(); ++c) row[c] = x.at(r, c);
        std::vector<double> s = ipatch::softmax(row);
        for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = s[c];
    }
    Tensor saved = out;
    return make_result(std::move(out), {a}, [a, saved](const Tensor& g) {
        Tensor dx(saved.shape());
        for (std::size_t r = 0; r < saved.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < saved.cols(); ++c) dot += g.at(r, c) * saved.at(r, c);
            for (std::size_t c = 0; c < saved.cols(); ++c)
                dx.at(r, c) = saved.at(r, c) * (g.at(r, c) - dot);
        }
        a.node()->accumulate(dx);
    });
}

Var gelu(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
    Tensor saved = x;
    return make_result(std::move(out), {a}, [a, saved](const Tensor& g) {
        Tensor dx(saved.shape());
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < saved.numel(); ++i) {
            const double v = saved[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dx[i] = g[i] * (cdf + v * pdf);
        }
        a.node()->accumulate(dx);
    });
}

Var layer_norm_cols(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Tensor& v = x.value();
    if (v.rank() != 2) throw std::invalid_argument("layer_norm_cols: rank-2 tensor required");
    const std::size_t d = v.rows(), n = v.cols();
    if (gain.value().numel() != d || bias.value().numel() != d) {
        throw std::invalid_argument("layer_norm_cols: gain/bias length must equal row count");
    }
    Tensor xhat({d, n});
    std::vector<double> inv_sigma(n);
    for (std::size_t c = 0; c < n; ++c) {
        double mu = 0.0;
        for (std::size_t r = 0; r < d; ++r) mu += v.at(r, c);
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            const double dv = v.at(r, c) - mu;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        inv_sigma[c] = 1.0 / std::sqrt(var + eps);
        for (std::size_t r = 0; r < d; ++r) xhat.at(r, c) = (v.at(r, c) - mu) * inv_sigma[c];
    }
    Tensor out({d, n});
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t r = 0; r < d; ++r)
            out.at(r, c) = gain.value()[r] * xhat.at(r, c) + bias.value()[r];

    return make_result(std::move(out), {x, gain, bias},
                       [x, gain, bias, xhat, inv_sigma, d, n](const Tensor& g) {
        if (gain.requires_grad()) {
            Tensor dg({d});
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < n; ++c) dg[r] += g.at(r, c) * xhat.at(r, c);
            gain.node()->accumulate(dg);
        }
        if (bias.requires_grad()) {
            Tensor db({d});
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < n; ++c) db[r] += g.at(r, c);
            bias.node()->accumulate(db);
        }
        if (x.requires_grad()) {
            Tensor dx({d, n});
            for (std::size_t c = 0; c < n; ++c) {
                // dxhat = g * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) / sigma
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (std::size_t r = 0; r < d; ++r) {
                    const double dxh = g.at(r, c) * gain.value()[r];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xhat.at(r, c);
                }
                mean_dxhat /= static_cast<double>(d);
                mean_dxhat_xhat /= static_cast<double>(d);
                for (std::size_t r = 0; r < d; ++r) {
                    const double dxh = g.at(r, c) * gain.value()[r];
                    dx.at(r, c) = (dxh - mean_dxhat - xhat.at(r, c) * mean_dxhat_xhat) * inv_sigma[c];
                }
            }
            x.node()->accumulate(dx);
        }
    });
}

Var mean(const Var& a) {
    const Tensor& x = a.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i];
    const double n = static_cast<double>(x.numel());
    Tensor out({1}, {acc / n});
    std::vector<std::size_t> shape = x.shape();
    return make_result(std::move(out), {a}, [a, shape, n](const Tensor& g) {
        a.node()->accumulate(Tensor::full(shape, g[0] / n));
    });
}

namespace {

std::vector<double> column(const Tensor& t, std::size_t c) {
    std::vector<double> out(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) out[r] = t.at(r, c);
    return out;
}

void add_column(Tensor& t, std::size_t c, const std::vector<double>& v) {
    for (std::size_t r = 0; r < t.rows(); ++r) t.at(r, c) += v[r];
}

}  // namespace

Var xcorr_cols(const Var& q, const Var& k) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    if (!qv.same_shape(kv) || qv.rank() != 2) {
        throw std::invalid_argument("xcorr_cols: shapes must match and be rank-2");
    }
    const std::size_t d = qv.rows(), n = qv.cols();
    Tensor out({d, n});
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> corr = fft::circular_xcorr(column(qv, c), column(kv, c));
        for (std::size_t r = 0; r < d; ++r) out.at(r, c) = corr[r];
    }
    Tensor qsaved = qv, ksaved = kv;
    return make_result(std::move(out), {q, k}, [q, k, qsaved, ksaved, d, n](const Tensor& g) {
        // out[tau] = sum_t q[t+tau] k[t]
        //   dq = conv(g, k)   (dq[u] = sum_tau g[tau] k[(u-tau) mod d])
        //   dk = xcorr(q, g)  (dk[t] = sum_tau q[(t+tau) mod d] g[tau])
        if (q.requires_grad()) {
            Tensor dq({d, n});
            for (std::size_t c = 0; c < n; ++c)
                add_column(dq, c, fft::circular_conv(column(g, c), column(ksaved, c)));
            q.node()->accumulate(dq);
        }
        if (k.requires_grad()) {
            Tensor dk({d, n});
            for (std::size_t c = 0; c < n; ++c)
                add_column(dk, c, fft::circular_xcorr(column(qsaved, c), column(g, c)));
            k.node()->accumulate(dk);
        }
    });
}

Var gather_rows(const Var& a, const std::vector<std::vector<std::size_t>>& indices) {
    const Tensor& x = a.value();
    const std::size_t j = indices.size();
    const std::size_t n = x.cols();
    Tensor out({j, n});
    for (std::size_t l = 0; l < j; ++l) {
        if (indices[l].size() != n) throw std::invalid_argument("gather_rows: index column mismatch");
        for (std::size_t c = 0; c < n; ++c) {
            if (indices[l][c] >= x.rows()) throw std::invalid_argument("gather_rows: index out of range");
            out.at(l, c) = x.at(indices[l][c], c);
        }
    }
    std::vector<std::size_t> shape = x.shape();
    return make_result(std::move(out), {a}, [a, indices, shape, j, n](const Tensor& g) {
        Tensor dx(shape);
        for (std::size_t l = 0; l < j; ++l)
            for (std::size_t c = 0; c < n; ++c) dx.at(indices[l][c], c) += g.at(l, c);
        a.node()->accumulate(dx);
    });
}

Var roll_weighted_sum(const Var& v, const std::vector<std::vector<std::size_t>>& taus,
                      const Var& w) {
    const Tensor& vv = v.value();
    const Tensor& wv = w.value();
    const std::size_t d = vv.rows(), n = vv.cols();
    const std::size_t j = taus.size();
    if (wv.rank() != 2 || wv.rows() != j || wv.cols() != n) {
        throw std::invalid_argument("roll_weighted_sum: weight shape must be (lags x cols)");
    }
    Tensor out({d, n});
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t l = 0; l < j; ++l) {
            const std::size_t tau = taus[l][c] % d;
            const double weight = wv.at(l, c);
            for (std::size_t i = 0; i < d; ++i) out.at(i, c) += vv.at((i + tau) % d, c) * weight;
        }
    }
    Tensor vsaved = vv, wsaved = wv;
    return make_result(std::move(out), {v, w}, [v, w, taus, vsaved, wsaved, d, n, j](const Tensor& g) {
        if (v.requires_grad()) {
            Tensor dv({d, n});
            for (std::size_t c = 0; c < n; ++c)
                for (std::size_t l = 0; l < j; ++l) {
                    const std::size_t tau = taus[l][c] % d;
                    const double weight = wsaved.at(l, c);
                    for (std::size_t i = 0; i < d; ++i)
                        dv.at((i + tau) % d, c) += g.at(i, c) * weight;
                }
            v.node()->accumulate(dv);
        }
        if (w.requires_grad()) {
            Tensor dw({j, n});
            for (std::size_t c = 0; c < n; ++c)
                for (std::size_t l = 0; l < j; ++l) {
                    const std::size_t tau = taus[l][c] % d;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < d; ++i)
                        acc += g.at(i, c) * vsaved.at((i + tau) % d, c);
                    dw.at(l, c) = acc;
                }
            w.node()->accumulate(dw);
        }
    });
}

Var fourier_map(const Var& w, const Var& cos_coef, const Var& sin_coef) {
    const Tensor& x = w.value();
    const Tensor& ac = cos_coef.value();
    const Tensor& bc = sin_coef.value();
    if (ac.numel() != bc.numel() || ac.numel() == 0) {
        throw std::invalid_argument("fourier_map: coefficient vectors must match and be non-empty");
    }
    const std::size_t freq = ac.numel();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double acc = 0.0;
        for (std::size_t m = 1; m <= freq; ++m) {
            const double mw = static_cast<double>(m) * x[i];
            acc += ac[m - 1] * std::cos(mw) + bc[m - 1] * std::sin(mw);
        }
        out[i] = acc;
    }
    Tensor xsaved = x, asaved = ac, bsaved = bc;
    return make_result(std::move(out), {w, cos_coef, sin_coef},
                       [w, cos_coef, sin_coef, xsaved, asaved, bsaved, freq](const Tensor& g) {
        if (w.requires_grad()) {
            Tensor dw(xsaved.shape());
            for (std::size_t i = 0; i < xsaved.numel(); ++i) {
                double acc = 0.0;
                for (std::size_t m = 1; m <= freq; ++m) {
                    const double fm = static_cast<double>(m);
                    const double mw = fm * xsaved[i];
                    acc += fm * (-asaved[m - 1] * std::sin(mw) + bsaved[m - 1] * std::cos(mw));
                }
                dw[i] = g[i] * acc;
            }
            w.node()->accumulate(dw);
        }
        if (cos_coef.requires_grad()) {
            Tensor da({freq});
            for (std::size_t m = 1; m <= freq; ++m)
                for (std::size_t i = 0; i < xsaved.numel(); ++i)
                    da[m - 1] += g[i] * std::cos(static_cast<double>(m) * xsaved[i]);
            cos_coef.node()->accumulate(da);
        }
        if (sin_coef.requires_grad()) {
            Tensor db({freq});
            for (std::size_t m = 1; m <= freq; ++m)
                for (std::size_t i = 0; i < xsaved.numel(); ++i)
                    db[m - 1] += g[i] * std::sin(static_cast<double>(m) * xsaved[i]);
            sin_coef.node()->accumulate(db);
        }
    });
}

Var mse(const Var& a, const Var& b) {
    Var d = sub(a, b);
    return mean(mul(d, d));
}

}  // namespace ipatch::autograd
