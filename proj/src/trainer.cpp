#include "ipatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ipatch/errors.hpp"
#include "ipatch/optim.hpp"

namespace ipatch {

namespace ag = autograd;

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("betas must lie in [0, 1)");
    }
    if (eps <= 0.0) throw ConfigError("optimizer eps must be positive");
    if (batch < 1) throw ConfigError("batch size must be at least 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (patience < 1 || patience > max_epochs) {
        throw ConfigError("patience must lie in [1, max_epochs]");
    }
}

double mse_metric(const Tensor& y, const Tensor& yhat) {
    if (!y.same_shape(yhat)) {
        throw std::invalid_argument("metric shapes differ: " + y.shape_str() + " vs " +
                                    yhat.shape_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double d = y[i] - yhat[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.numel());
}

double mae_metric(const Tensor& y, const Tensor& yhat) {
    if (!y.same_shape(yhat)) {
        throw std::invalid_argument("metric shapes differ: " + y.shape_str() + " vs " +
                                    yhat.shape_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += std::abs(y[i] - yhat[i]);
    return acc / static_cast<double>(y.numel());
}

namespace {

std::vector<double> input_channel(const ForecastSample& sample, std::size_t j) {
    std::vector<double> out(sample.input.rows());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = sample.input.at(t, j);
    return out;
}

Tensor target_channel(const ForecastSample& sample, std::size_t j) {
    Tensor out({sample.target.rows(), 1});
    for (std::size_t t = 0; t < out.rows(); ++t) out.at(t, 0) = sample.target.at(t, j);
    return out;
}

// Mean squared error over every (sample, channel, step) element of the
// batch, built as one graph.
ag::Var batch_loss(const IPatchModel& model, const std::vector<ForecastSample>& samples,
                   const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    ag::Var total;
    std::size_t terms = 0;
    for (std::size_t s = begin; s < end; ++s) {
        const ForecastSample& sample = samples[order[s]];
        for (std::size_t j = 0; j < sample.input.cols(); ++j) {
            ag::Var err = ag::mse(forward_channel(model, input_channel(sample, j)),
                                  ag::constant(target_channel(sample, j)));
            total = total.defined() ? ag::add(total, err) : err;
            ++terms;
        }
    }
    return ag::scale(total, 1.0 / static_cast<double>(terms));
}

double plain_mse(const IPatchModel& model, const std::vector<ForecastSample>& samples) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& sample : samples) {
        const Tensor pred = forward(model, sample.input);
        for (std::size_t i = 0; i < pred.numel(); ++i) {
            const double d = pred[i] - sample.target[i];
            acc += d * d;
        }
        count += pred.numel();
    }
    return acc / static_cast<double>(count);
}

}  // namespace

TrainHistory train_model(IPatchModel& model, const std::vector<ForecastSample>& train_samples,
                         const std::vector<ForecastSample>& val_samples,
                         const TrainConfig& cfg) {
    cfg.validate();
    if (train_samples.empty()) throw ConfigError("training requires at least one sample");

    std::vector<ag::Var> params = model.parameters();
    optim::AdamState state;
    Rng shuffle_rng(cfg.seed);
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_values;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        }
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            const std::size_t end = std::min(begin + cfg.batch, order.size());
            optim::zero_grad(params);
            ag::Var loss = batch_loss(model, train_samples, order, begin, end);
            if (!std::isfinite(loss.value()[0])) {
                throw std::runtime_error("training aborted: non-finite loss at step " +
                                         std::to_string(history.steps));
            }
            ag::backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (const auto& p : params) grads.push_back(p.grad());
            optim::adam_step(params, grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
            loss_sum += loss.value()[0];
            ++batches;
            ++history.steps;
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(batches));

        if (!val_samples.empty()) {
            const double v = plain_mse(model, val_samples);
            history.val_loss.push_back(v);
            if (v < best_val) {
                best_val = v;
                history.best_epoch = epoch;
                best_values.clear();
                for (const auto& p : params) best_values.push_back(p.value());
                epochs_since_best = 0;
            } else if (++epochs_since_best >= cfg.patience) {
                history.early_stopped = true;
                break;
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if (!best_values.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i].mutable_value() = best_values[i];
        }
    }
    return history;
}

MetricsReport evaluate(const IPatchModel& model, const std::vector<ForecastSample>& samples,
                       const std::string& split_name, const Standardizer* scaler) {
    if (samples.empty()) throw ConfigError("evaluate requires at least one sample");
    const auto start = std::chrono::steady_clock::now();
    double sq = 0.0, ab = 0.0;
    std::size_t elements = 0;
    for (const auto& sample : samples) {
        Tensor pred = forward(model, sample.input);
        Tensor truth = sample.target;
        if (scaler) {
            pred = scaler->invert(pred);
            truth = scaler->invert(truth);
        }
        for (std::size_t i = 0; i < pred.numel(); ++i) {
            const double d = truth[i] - pred[i];
            sq += d * d;
            ab += std::abs(d);
        }
        elements += pred.numel();
    }
    MetricsReport report;
    report.split = split_name;
    report.mse = sq / static_cast<double>(elements);
    report.mae = ab / static_cast<double>(elements);
    report.count = samples.size();
    report.metrics_scale = scaler ? "raw" : "standardized";
    report.seed = model.config.seed;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

RunResult run_experiment(const MultivariateSeries& data, const RunSpec& spec,
                         const std::string& config_hash) {
    spec.model.validate();
    spec.train.validate();
    spec.split.validate();

    RunResult result;
    result.scaler = Standardizer::fit(data, spec.split);
    const MultivariateSeries scaled = result.scaler.apply(data);

    const std::size_t L = spec.model.patch.L;
    const std::size_t H = spec.model.horizon;
    const auto train_samples =
        window(scaled, L, H, spec.window_stride, spec.split, Split::train);
    std::vector<ForecastSample> val_samples;
    if (spec.split.val_frac > 0.0) {
        val_samples = window(scaled, L, H, spec.window_stride, spec.split, Split::val);
    }
    const auto test_samples = window(scaled, L, H, spec.window_stride, spec.split, Split::test);

    result.model = build_model(spec.model);
    result.history = train_model(result.model, train_samples, val_samples, spec.train);

    const Standardizer* scaler = spec.raw_scale_metrics ? &result.scaler : nullptr;
    if (!val_samples.empty()) {
        result.val = evaluate(result.model, val_samples, "val", scaler);
        result.val.config_hash = config_hash;
    }
    result.test = evaluate(result.model, test_samples, "test", scaler);
    result.test.config_hash = config_hash;
    return result;
}

std::vector<AblationCell> run_ablation(const MultivariateSeries& data, RunSpec base,
                                       const std::string& config_hash) {
    static const Variant variants[] = {Variant::full, Variant::patch_only,
                                       Variant::autocorr_only};
    static const LagWeighting weightings[] = {LagWeighting::fourier, LagWeighting::softmax};
    std::vector<AblationCell> cells;
    for (Variant v : variants) {
        for (LagWeighting w : weightings) {
            base.model.variant = v;
            base.model.weighting = w;
            RunResult run = run_experiment(data, base, config_hash);
            cells.push_back({to_string(v), to_string(w), run.test});
        }
    }
    return cells;
}

std::vector<OverlapRow> run_overlap_experiment(const MultivariateSeries& data, RunSpec base,
                                               const std::vector<std::size_t>& strides,
                                               const std::string& config_hash) {
    if (strides.empty()) throw ConfigError("overlap experiment requires at least one stride");
    std::vector<OverlapRow> rows;
    for (std::size_t stride : strides) {
        base.model.patch.O = stride;
        base.model.patch.validate();
        OverlapRow row;
        row.stride = stride;
        row.patches = base.model.patch.patch_count();
        row.test = run_experiment(data, base, config_hash).test;
        if (!rows.empty()) {
            row.delta_mse = row.test.mse - rows.front().test.mse;
            row.delta_mae = row.test.mae - rows.front().test.mae;
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string fixed(double v, int prec = 6) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// Positive delta = worse than baseline (marked up), negative = better.
std::string signed_delta(double v) {
    if (v == 0.0) return "  " + fixed(0.0);
    return (v > 0.0 ? "▲ " : "▼ ") + fixed(std::abs(v));
}

}  // namespace

std::string format_ablation_table(const std::vector<AblationCell>& cells) {
    std::ostringstream out;
    out << "variant        weighting  test_mse   test_mae\n";
    for (const auto& cell : cells) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-14s %-10s %-10s %-10s\n", cell.variant.c_str(),
                      cell.weighting.c_str(), fixed(cell.test.mse).c_str(),
                      fixed(cell.test.mae).c_str());
        out << line;
    }
    return out.str();
}

std::string format_overlap_table(const std::vector<OverlapRow>& rows) {
    std::ostringstream out;
    out << "stride  patches  test_mse   test_mae   delta_mse    delta_mae\n";
    for (const auto& row : rows) {
        char line[200];
        std::snprintf(line, sizeof(line), "%-7zu %-8zu %-10s %-10s %-12s %-12s\n", row.stride,
                      row.patches, fixed(row.test.mse).c_str(), fixed(row.test.mae).c_str(),
                      signed_delta(row.delta_mse).c_str(), signed_delta(row.delta_mae).c_str());
        out << line;
    }
    return out.str();
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ipatch
