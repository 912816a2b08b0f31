#include "ipatch/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipatch/errors.hpp"
#include "ipatch/optim.hpp"

namespace ipatch::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

json parse_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path + " is not valid JSON: " + e.what());
    }
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
    if (!f) throw std::runtime_error("failed writing: " + path);
}

double get_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    return v.get<double>();
}

std::vector<double> get_number_list(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& item : v) out.push_back(get_number(item, where));
    return out;
}

void parse_dataset(ExperimentConfig& cfg, const json& j) {
    if (!j.is_object()) throw ConfigError("dataset section must be an object");
    if (!j.contains("kind")) throw ConfigError("dataset section needs a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "csv") cfg.kind = ExperimentConfig::SourceKind::csv;
    else if (kind == "sinusoid") cfg.kind = ExperimentConfig::SourceKind::sinusoid;
    else if (kind == "ar") cfg.kind = ExperimentConfig::SourceKind::ar;
    else throw ConfigError("unknown dataset kind '" + kind + "' (expected csv, sinusoid, or ar)");

    for (const auto& [key, value] : j.items()) {
        if (key == "kind") continue;
        else if (key == "path") cfg.csv_path = value.get<std::string>();
        else if (key == "length") cfg.length = value.get<std::size_t>();
        else if (key == "channels") cfg.channels = value.get<std::size_t>();
        else if (key == "periods") cfg.sinusoid.periods = get_number_list(value, "dataset.periods");
        else if (key == "amplitudes")
            cfg.sinusoid.amplitudes = get_number_list(value, "dataset.amplitudes");
        else if (key == "phases") cfg.sinusoid.phases = get_number_list(value, "dataset.phases");
        else if (key == "trend") cfg.sinusoid.trend = get_number(value, "dataset.trend");
        else if (key == "noise") {
            cfg.sinusoid.noise = get_number(value, "dataset.noise");
            cfg.ar.noise = cfg.sinusoid.noise;
        } else if (key == "channel_shift")
            cfg.sinusoid.channel_shift = get_number(value, "dataset.channel_shift");
        else if (key == "coef") cfg.ar.coef = get_number_list(value, "dataset.coef");
        else throw ConfigError("unknown dataset config key '" + key + "'");
    }
    if (cfg.kind == ExperimentConfig::SourceKind::csv && cfg.csv_path.empty()) {
        throw ConfigError("dataset kind csv needs a 'path'");
    }
}

void parse_train(TrainConfig& cfg, const json& j) {
    if (!j.is_object()) throw ConfigError("train section must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "lr") cfg.lr = value.get<double>();
            else if (key == "beta1") cfg.beta1 = value.get<double>();
            else if (key == "beta2") cfg.beta2 = value.get<double>();
            else if (key == "eps") cfg.eps = value.get<double>();
            else if (key == "batch") cfg.batch = value.get<std::size_t>();
            else if (key == "max_epochs") cfg.max_epochs = value.get<std::size_t>();
            else if (key == "patience") cfg.patience = value.get<std::size_t>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else throw ConfigError("unknown train config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad train config value: ") + e.what());
    }
}

void parse_split(SplitSpec& split, const json& j) {
    if (!j.is_object()) throw ConfigError("split section must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "train") split.train_frac = get_number(value, "split.train");
        else if (key == "val") split.val_frac = get_number(value, "split.val");
        else throw ConfigError("unknown split config key '" + key + "'");
    }
}

json effective_json(const ExperimentConfig& cfg) {
    json dataset;
    switch (cfg.kind) {
        case ExperimentConfig::SourceKind::csv:
            dataset["kind"] = "csv";
            dataset["path"] = cfg.csv_path;
            break;
        case ExperimentConfig::SourceKind::sinusoid:
            dataset["kind"] = "sinusoid";
            dataset["length"] = cfg.length;
            dataset["channels"] = cfg.channels;
            dataset["periods"] = cfg.sinusoid.periods;
            dataset["amplitudes"] = cfg.sinusoid.amplitudes;
            dataset["phases"] = cfg.sinusoid.phases;
            dataset["trend"] = cfg.sinusoid.trend;
            dataset["noise"] = cfg.sinusoid.noise;
            dataset["channel_shift"] = cfg.sinusoid.channel_shift;
            break;
        case ExperimentConfig::SourceKind::ar:
            dataset["kind"] = "ar";
            dataset["length"] = cfg.length;
            dataset["channels"] = cfg.channels;
            dataset["coef"] = cfg.ar.coef;
            dataset["noise"] = cfg.ar.noise;
            break;
    }
    json j;
    j["seed"] = cfg.seed;
    j["dataset"] = dataset;
    j["model"] = json::parse(to_json(cfg.run.model));
    j["train"] = {{"lr", cfg.run.train.lr},
                  {"beta1", cfg.run.train.beta1},
                  {"beta2", cfg.run.train.beta2},
                  {"eps", cfg.run.train.eps},
                  {"batch", cfg.run.train.batch},
                  {"max_epochs", cfg.run.train.max_epochs},
                  {"patience", cfg.run.train.patience},
                  {"seed", cfg.run.train.seed}};
    j["split"] = {{"train", cfg.run.split.train_frac}, {"val", cfg.run.split.val_frac}};
    j["window_stride"] = cfg.run.window_stride;
    j["metrics_scale"] = cfg.run.raw_scale_metrics ? "raw" : "standardized";
    if (!cfg.overlap_strides.empty()) j["overlap_strides"] = cfg.overlap_strides;
    return j;
}

void refresh_canonical(ExperimentConfig& cfg) { cfg.canonical = effective_json(cfg).dump(); }

}  // namespace

std::string ExperimentConfig::config_hash() const { return fnv1a_hex(canonical); }

ExperimentConfig load_experiment_config(const std::string& path) {
    const json j = parse_json_file(path);
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");

    ExperimentConfig cfg;
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    bool model_seed_given = false, train_seed_given = false;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed") continue;
            else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
            else if (key == "dataset") parse_dataset(cfg, value);
            else if (key == "model") {
                if (!value.is_object()) throw ConfigError("model section must be an object");
                model_seed_given = value.contains("seed");
                cfg.run.model = model_config_from_json(value.dump());
            } else if (key == "train") {
                train_seed_given = value.is_object() && value.contains("seed");
                parse_train(cfg.run.train, value);
            } else if (key == "split") parse_split(cfg.run.split, value);
            else if (key == "window_stride") cfg.run.window_stride = value.get<std::size_t>();
            else if (key == "metrics_scale") {
                const std::string scale = value.get<std::string>();
                if (scale == "raw") cfg.run.raw_scale_metrics = true;
                else if (scale == "standardized") cfg.run.raw_scale_metrics = false;
                else
                    throw ConfigError("metrics_scale must be 'standardized' or 'raw', got '" +
                                      scale + "'");
            } else if (key == "overlap_strides") {
                if (!value.is_array() || value.empty()) {
                    throw ConfigError("overlap_strides must be a non-empty array");
                }
                for (const auto& s : value) cfg.overlap_strides.push_back(s.get<std::size_t>());
            } else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    if (!model_seed_given) cfg.run.model.seed = cfg.seed;
    if (!train_seed_given) cfg.run.train.seed = cfg.seed;
    refresh_canonical(cfg);
    return cfg;
}

MultivariateSeries load_dataset(const ExperimentConfig& cfg) {
    switch (cfg.kind) {
        case ExperimentConfig::SourceKind::csv: return load_csv(cfg.csv_path);
        case ExperimentConfig::SourceKind::sinusoid:
            return synth_sinusoid(cfg.sinusoid, cfg.seed, cfg.length, cfg.channels);
        case ExperimentConfig::SourceKind::ar:
            return synth_ar(cfg.ar, cfg.seed, cfg.length, cfg.channels);
    }
    throw ConfigError("unsupported dataset kind");
}

std::string render_line_chart(const std::string& title, const std::vector<double>& truth,
                              const std::vector<double>& prediction) {
    if (truth.empty() || truth.size() != prediction.size()) {
        throw std::invalid_argument("chart needs two equal-length non-empty series");
    }
    const std::size_t n = truth.size();
    double lo = truth[0], hi = truth[0];
    for (double v : truth) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : prediction) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    const double y0 = lo - pad, y1 = hi + pad;

    const double width = 640, height = 360;
    const double left = 56, right = 12, top = 34, bottom = 40;
    const double pw = width - left - right, ph = height - top - bottom;
    auto fx = [&](std::size_t i) {
        return n == 1 ? left + pw / 2
                      : left + pw * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    auto fy = [&](double v) { return top + ph * (y1 - v) / (y1 - y0); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 360\" "
           "width=\"640\" height=\"360\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"360\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << fmt6(left) << "\" y=\"20\" font-family=\"sans-serif\" "
           "font-size=\"14\" fill=\"#333333\">" << title << "</text>\n";

    for (int k = 0; k <= 4; ++k) {
        const double v = y0 + (y1 - y0) * k / 4.0;
        const double y = fy(v);
        svg << "<line x1=\"" << fmt6(left) << "\" y1=\"" << fmt6(y) << "\" x2=\""
            << fmt6(left + pw) << "\" y2=\"" << fmt6(y)
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << fmt6(left - 6) << "\" y=\"" << fmt6(y + 4)
            << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#555555\" "
               "text-anchor=\"end\">" << fmt6(v) << "</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const std::size_t i =
            n == 1 ? 0 : static_cast<std::size_t>(std::llround(k * double(n - 1) / 4.0));
        const double x = fx(i);
        svg << "<text x=\"" << fmt6(x) << "\" y=\"" << fmt6(top + ph + 16)
            << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#555555\" "
               "text-anchor=\"middle\">" << i << "</text>\n";
    }
    svg << "<rect x=\"" << fmt6(left) << "\" y=\"" << fmt6(top) << "\" width=\"" << fmt6(pw)
        << "\" height=\"" << fmt6(ph) << "\" fill=\"none\" stroke=\"#999999\"/>\n";

    auto polyline = [&](const std::vector<double>& series, const char* color,
                        const char* dash) {
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
        if (dash) svg << " stroke-dasharray=\"" << dash << "\"";
        svg << " points=\"";
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (i) svg << " ";
            svg << fmt6(fx(i)) << "," << fmt6(fy(series[i]));
        }
        svg << "\"/>\n";
    };
    polyline(truth, "#1f77b4", nullptr);
    polyline(prediction, "#d62728", "6 3");

    svg << "<line x1=\"430\" y1=\"16\" x2=\"460\" y2=\"16\" stroke=\"#1f77b4\" "
           "stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"465\" y=\"20\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#333333\">truth</text>\n";
    svg << "<line x1=\"520\" y1=\"16\" x2=\"550\" y2=\"16\" stroke=\"#d62728\" "
           "stroke-width=\"1.5\" stroke-dasharray=\"6 3\"/>\n";
    svg << "<text x=\"555\" y=\"20\" font-family=\"sans-serif\" font-size=\"11\" "
           "fill=\"#333333\">prediction</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

namespace {

json metrics_json(const MetricsReport& r) {
    return {{"split", r.split},         {"mse", r.mse},
            {"mae", r.mae},             {"count", r.count},
            {"wall_seconds", r.wall_seconds}, {"config_hash", r.config_hash},
            {"seed", r.seed},           {"metrics_scale", r.metrics_scale}};
}

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    }
    return out.empty() ? "_" : out;
}

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool quiet = false;
};

ExperimentConfig prepare(const CommonArgs& args) {
    ExperimentConfig cfg = load_experiment_config(args.config_path);
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.run.model.seed = args.seed;
        cfg.run.train.seed = args.seed;
    }
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    refresh_canonical(cfg);
    return cfg;
}

void cmd_synth_data(const CommonArgs& args) {
    ExperimentConfig cfg = prepare(args);
    if (cfg.kind == ExperimentConfig::SourceKind::csv) {
        throw ConfigError("synth-data requires a synthetic dataset source, config uses csv");
    }
    const MultivariateSeries series = load_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    const std::string path = cfg.out_dir + "/series.csv";
    save_csv(series, path);
    if (!args.quiet) {
        std::cout << "wrote " << path << " (" << series.length() << " rows, " << series.width()
                  << " channels)\n";
    }
}

// Forecast dump for the first test sample, in the run's metrics scale.
json forecast_dump(const ExperimentConfig& cfg, const RunResult& result,
                   const MultivariateSeries& data) {
    const MultivariateSeries scaled = result.scaler.apply(data);
    const auto test = window(scaled, cfg.run.model.patch.L, cfg.run.model.horizon,
                             cfg.run.window_stride, cfg.run.split, Split::test);
    const ForecastSample& sample = test.front();
    Tensor pred = forward(result.model, sample.input);
    Tensor truth = sample.target;
    if (cfg.run.raw_scale_metrics) {
        pred = result.scaler.invert(pred);
        truth = result.scaler.invert(truth);
    }
    json series_obj = json::object();
    for (std::size_t j = 0; j < data.channels.size(); ++j) {
        std::vector<double> t(truth.rows()), p(pred.rows());
        for (std::size_t i = 0; i < truth.rows(); ++i) {
            t[i] = truth.at(i, j);
            p[i] = pred.at(i, j);
        }
        series_obj[data.channels[j]] = {{"truth", t}, {"prediction", p}};
    }
    return {{"channels", data.channels},
            {"horizon", cfg.run.model.horizon},
            {"origin", sample.origin},
            {"metrics_scale", cfg.run.raw_scale_metrics ? "raw" : "standardized"},
            {"series", series_obj}};
}

void cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = prepare(args);
    const MultivariateSeries data = load_dataset(cfg);
    const RunResult result = run_experiment(data, cfg.run, cfg.config_hash());

    fs::create_directories(cfg.out_dir);
    save_checkpoint(result.model, cfg.out_dir + "/checkpoint.ipc");

    json report;
    report["config_hash"] = cfg.config_hash();
    report["seed"] = cfg.run.model.seed;
    report["history"] = {{"train_loss", result.history.train_loss},
                         {"val_loss", result.history.val_loss},
                         {"best_epoch", result.history.best_epoch},
                         {"steps", result.history.steps},
                         {"early_stopped", result.history.early_stopped}};
    report["val"] = result.val.count > 0 ? metrics_json(result.val) : json();
    report["test"] = metrics_json(result.test);
    write_text(cfg.out_dir + "/report.json", report.dump(2) + "\n");
    write_text(cfg.out_dir + "/forecast.json", forecast_dump(cfg, result, data).dump(2) + "\n");

    if (!args.quiet) {
        std::cout << "test mse " << fmt6(result.test.mse) << ", mae " << fmt6(result.test.mae)
                  << " (" << result.test.metrics_scale << " scale, " << result.history.steps
                  << " steps)\n"
                  << "artifacts in " << cfg.out_dir << "\n";
    }
}

void cmd_eval(const CommonArgs& args, const std::string& checkpoint_path) {
    ExperimentConfig cfg = prepare(args);
    IPatchModel model = load_checkpoint(checkpoint_path);
    const MultivariateSeries data = load_dataset(cfg);
    const Standardizer scaler = Standardizer::fit(data, cfg.run.split);
    const MultivariateSeries scaled = scaler.apply(data);
    const auto samples = window(scaled, model.config.patch.L, model.config.horizon,
                                cfg.run.window_stride, cfg.run.split, Split::test);
    MetricsReport report =
        evaluate(model, samples, "test", cfg.run.raw_scale_metrics ? &scaler : nullptr);
    report.config_hash = cfg.config_hash();

    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/eval_report.json", metrics_json(report).dump(2) + "\n");
    if (!args.quiet) {
        std::cout << "test mse " << fmt6(report.mse) << ", mae " << fmt6(report.mae) << " ("
                  << report.metrics_scale << " scale, " << report.count << " samples)\n";
    }
}

void cmd_ablate(const CommonArgs& args) {
    ExperimentConfig cfg = prepare(args);
    const MultivariateSeries data = load_dataset(cfg);
    const auto cells = run_ablation(data, cfg.run, cfg.config_hash());

    fs::create_directories(cfg.out_dir);
    const std::string table = format_ablation_table(cells);
    write_text(cfg.out_dir + "/ablation.txt", table);

    std::ostringstream csv;
    csv << "variant,weighting,test_mse,test_mae\n";
    json rows = json::array();
    for (const auto& cell : cells) {
        csv << cell.variant << "," << cell.weighting << "," << format_number(cell.test.mse)
            << "," << format_number(cell.test.mae) << "\n";
        rows.push_back(
            {{"variant", cell.variant}, {"weighting", cell.weighting}, {"test", metrics_json(cell.test)}});
    }
    write_text(cfg.out_dir + "/ablation.csv", csv.str());
    write_text(cfg.out_dir + "/ablation.json", rows.dump(2) + "\n");
    if (!args.quiet) std::cout << table;
}

void cmd_compare_overlap(const CommonArgs& args) {
    ExperimentConfig cfg = prepare(args);
    std::vector<std::size_t> strides = cfg.overlap_strides;
    if (strides.empty()) {
        strides.push_back(cfg.run.model.patch.S);
        if (cfg.run.model.patch.S / 2 >= 1) strides.push_back(cfg.run.model.patch.S / 2);
    }
    const MultivariateSeries data = load_dataset(cfg);
    const auto rows = run_overlap_experiment(data, cfg.run, strides, cfg.config_hash());

    fs::create_directories(cfg.out_dir);
    const std::string table = format_overlap_table(rows);
    write_text(cfg.out_dir + "/overlap.txt", table);

    std::ostringstream csv;
    csv << "stride,patches,test_mse,test_mae,delta_mse,delta_mae\n";
    json jrows = json::array();
    for (const auto& row : rows) {
        csv << row.stride << "," << row.patches << "," << format_number(row.test.mse) << ","
            << format_number(row.test.mae) << "," << format_number(row.delta_mse) << ","
            << format_number(row.delta_mae) << "\n";
        jrows.push_back({{"stride", row.stride},
                         {"patches", row.patches},
                         {"test", metrics_json(row.test)},
                         {"delta_mse", row.delta_mse},
                         {"delta_mae", row.delta_mae}});
    }
    write_text(cfg.out_dir + "/overlap.csv", csv.str());
    write_text(cfg.out_dir + "/overlap.json", jrows.dump(2) + "\n");
    if (!args.quiet) std::cout << table;
}

void cmd_plot(const std::string& forecast_path, std::vector<std::string> channels,
              const std::string& out_dir, bool quiet) {
    const json dump = parse_json_file(forecast_path);
    if (!dump.contains("series") || !dump.at("series").is_object()) {
        throw ConfigError(forecast_path + " is not a forecast dump (missing 'series')");
    }
    const json& series = dump.at("series");
    std::vector<std::string> available;
    for (const auto& [name, value] : series.items()) available.push_back(name);
    if (channels.empty()) channels = available;

    for (const auto& name : channels) {
        if (!series.contains(name)) {
            std::string listing;
            for (const auto& a : available) listing += (listing.empty() ? "" : ", ") + a;
            throw ConfigError("channel '" + name + "' not in forecast dump (available: " +
                              listing + ")");
        }
    }
    fs::create_directories(out_dir);
    for (const auto& name : channels) {
        const auto truth = series.at(name).at("truth").get<std::vector<double>>();
        const auto pred = series.at(name).at("prediction").get<std::vector<double>>();
        const std::string path = out_dir + "/plot_" + sanitize_filename(name) + ".svg";
        write_text(path, render_line_chart(name, truth, pred));
        if (!quiet) std::cout << "wrote " << path << "\n";
    }
}

// The gradient suite at toy scale: every trainable parameter of the full
// model checked against central differences.
int cmd_grad_check(std::uint64_t seed, bool quiet) {
    ModelConfig cfg;
    cfg.patch = {16, 4, 4, 8};
    cfg.heads = 2;
    cfg.lags = 2;
    cfg.fourier_terms = 4;
    cfg.horizon = 4;
    cfg.seed = seed;
    IPatchModel model = build_model(cfg);

    Rng rng(seed + 1);
    const std::size_t M = 2;
    std::vector<std::vector<double>> windows(M, std::vector<double>(cfg.patch.L));
    std::vector<Tensor> targets;
    for (std::size_t j = 0; j < M; ++j) {
        for (auto& v : windows[j]) v = rng.uniform(-1.0, 1.0);
        targets.push_back(rng.uniform_tensor({cfg.horizon, 1}, -1.0, 1.0));
    }
    auto loss_fn = [&]() {
        namespace ag = autograd;
        ag::Var total;
        for (std::size_t j = 0; j < M; ++j) {
            ag::Var err = ag::mse(forward_channel(model, windows[j]), ag::constant(targets[j]));
            total = total.defined() ? ag::add(total, err) : err;
        }
        return ag::scale(total, 1.0 / static_cast<double>(M));
    };
    std::vector<autograd::Var> params = model.parameters();
    const double err = optim::grad_check(loss_fn, params);
    const bool pass = err < 1e-4;
    if (!quiet) {
        std::cout << "checked " << model.parameter_count() << " parameters\n";
        std::cout << "max relative gradient error " << fmt6(err) << " (threshold 0.0001): "
                  << (pass ? "pass" : "FAIL") << "\n";
    }
    return pass ? 0 : 1;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Patch-level attention + spectral autocorrelation forecasting experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint_path, forecast_path, plot_out = "out";
    std::vector<std::string> plot_channels;
    int exit_code = 0;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* config_opt =
            cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
        if (needs_config) config_opt->required();
        auto* seed_opt = cmd->add_option("--seed", args.seed, "override every seed in the config");
        cmd->add_option("--out", args.out_override, "override the output directory");
        cmd->add_flag("--quiet", args.quiet, "suppress progress output");
        cmd->parse_complete_callback([&args, seed_opt] { args.seed_set = seed_opt->count() > 0; });
    };

    CLI::App* synth = app.add_subcommand("synth-data", "generate the configured synthetic series");
    add_common(synth, true);
    synth->callback([&] { cmd_synth_data(args); });

    CLI::App* train = app.add_subcommand("train", "train a model and write checkpoint + report");
    add_common(train, true);
    train->callback([&] { cmd_train(args); });

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval_cmd, true);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->callback([&] { cmd_eval(args, checkpoint_path); });

    CLI::App* ablate = app.add_subcommand("ablate", "run the variant x weighting ablation matrix");
    add_common(ablate, true);
    ablate->callback([&] { cmd_ablate(args); });

    CLI::App* overlap =
        app.add_subcommand("compare-overlap", "train under each stride and compare");
    add_common(overlap, true);
    overlap->callback([&] { cmd_compare_overlap(args); });

    CLI::App* plot = app.add_subcommand("plot", "render truth-vs-prediction charts");
    plot->add_option("--forecast", forecast_path, "forecast dump file")->required();
    plot->add_option("--channel", plot_channels, "channel names to plot (default: all)");
    plot->add_option("--out", plot_out, "output directory");
    plot->add_flag("--quiet", args.quiet, "suppress progress output");
    plot->callback([&] { cmd_plot(forecast_path, plot_channels, plot_out, args.quiet); });

    CLI::App* grad = app.add_subcommand("grad-check", "verify analytic gradients at toy scale");
    grad->add_option("--seed", args.seed, "seed for parameters and probe data");
    grad->add_flag("--quiet", args.quiet, "suppress progress output");
    grad->callback([&] { exit_code = cmd_grad_check(args.seed, args.quiet); });

    try {
        app.parse(argc, argv);
        return exit_code;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ipatch::cli
