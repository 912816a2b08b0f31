#include "ipatch/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ipatch/errors.hpp"

namespace ipatch {

namespace ag = autograd;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob layout assumes a little-endian host");

Variant parse_variant(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "patch_only") return Variant::patch_only;
    if (name == "autocorr_only") return Variant::autocorr_only;
    throw ConfigError("unknown variant '" + name +
                      "' (expected full, patch_only, or autocorr_only)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::patch_only: return "patch_only";
        case Variant::autocorr_only: return "autocorr_only";
    }
    return "full";
}

std::size_t ModelConfig::effective_lags() const {
    if (lags > 0) return lags;
    std::size_t j = 0, d = head_dim();
    while (d > 1) {
        d >>= 1;
        ++j;
    }
    return j < 1 ? 1 : j;
}

void ModelConfig::validate() const {
    patch.validate();
    if (heads < 1) throw ConfigError("head count must be at least 1");
    if (patch.D % heads != 0) {
        throw ConfigError("embedding dimension " + std::to_string(patch.D) +
                          " is not divisible by head count " + std::to_string(heads));
    }
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    if (fourier_terms < 1) throw ConfigError("fourier_terms must be at least 1");
    if (uses_attention() && encoder_layers < 1) {
        throw ConfigError("encoder_layers must be at least 1");
    }
    if (uses_autocorr()) {
        const std::size_t j = effective_lags();
        if (j < 1 || j > head_dim()) {
            throw ConfigError("lag count " + std::to_string(j) + " out of range [1, " +
                              std::to_string(head_dim()) + "]");
        }
    }
}

std::string to_json(const ModelConfig& cfg) {
    json j;
    j["look_back"] = cfg.patch.L;
    j["patch_len"] = cfg.patch.S;
    j["stride"] = cfg.patch.O;
    j["embed_dim"] = cfg.patch.D;
    j["heads"] = cfg.heads;
    j["lags"] = cfg.lags;
    j["fourier_terms"] = cfg.fourier_terms;
    j["variant"] = to_string(cfg.variant);
    j["weighting"] = to_string(cfg.weighting);
    j["encoder_layers"] = cfg.encoder_layers;
    j["horizon"] = cfg.horizon;
    j["instance_norm"] = cfg.instance_norm;
    j["attn_output_projection"] = cfg.attn_output_projection;
    j["shared_lags"] = cfg.shared_lags;
    j["seed"] = cfg.seed;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "look_back") cfg.patch.L = value.get<std::size_t>();
            else if (key == "patch_len") cfg.patch.S = value.get<std::size_t>();
            else if (key == "stride") cfg.patch.O = value.get<std::size_t>();
            else if (key == "embed_dim") cfg.patch.D = value.get<std::size_t>();
            else if (key == "heads") cfg.heads = value.get<std::size_t>();
            else if (key == "lags") cfg.lags = value.get<std::size_t>();
            else if (key == "fourier_terms") cfg.fourier_terms = value.get<std::size_t>();
            else if (key == "variant") cfg.variant = parse_variant(value.get<std::string>());
            else if (key == "weighting") cfg.weighting = parse_weighting(value.get<std::string>());
            else if (key == "encoder_layers") cfg.encoder_layers = value.get<std::size_t>();
            else if (key == "horizon") cfg.horizon = value.get<std::size_t>();
            else if (key == "instance_norm") cfg.instance_norm = value.get<bool>();
            else if (key == "attn_output_projection")
                cfg.attn_output_projection = value.get<bool>();
            else if (key == "shared_lags") cfg.shared_lags = value.get<bool>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else throw ConfigError("unknown model config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config value: ") + e.what());
    }
    return cfg;
}

IPatchModel build_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    const std::size_t D = config.patch.D;
    const std::size_t S = config.patch.S;
    const std::size_t N = config.patch.patch_count();
    const std::size_t dh = config.head_dim();
    const std::size_t G = config.fourier_terms;
    const std::size_t H = config.horizon;

    IPatchModel m;
    m.config = config;
    m.W_proj = ag::parameter(rng.glorot({D, S}, S, D));
    m.W_pos = ag::parameter(rng.glorot({D, N}, N, D));

    if (config.uses_attention()) {
        m.encoder.resize(config.encoder_layers);
        for (auto& layer : m.encoder) {
            layer.heads.resize(config.heads);
            for (auto& head : layer.heads) {
                head.W_Q = ag::parameter(rng.glorot({dh, D}, D, dh));
                head.W_K = ag::parameter(rng.glorot({dh, D}, D, dh));
                head.W_V = ag::parameter(rng.glorot({dh, D}, D, dh));
            }
            if (config.attn_output_projection) {
                layer.W_O = ag::parameter(rng.glorot({D, D}, D, D));
            }
            layer.ln1.gain = ag::parameter(Tensor::full({D}, 1.0));
            layer.ln1.bias = ag::parameter(Tensor::zeros({D}));
            layer.ffn.W1 = ag::parameter(rng.glorot({2 * D, D}, D, 2 * D));
            layer.ffn.b1 = ag::parameter(Tensor::zeros({2 * D, 1}));
            layer.ffn.W2 = ag::parameter(rng.glorot({D, 2 * D}, 2 * D, D));
            layer.ffn.b2 = ag::parameter(Tensor::zeros({D, 1}));
            layer.ln2.gain = ag::parameter(Tensor::full({D}, 1.0));
            layer.ln2.bias = ag::parameter(Tensor::zeros({D}));
        }
    }
    if (config.uses_autocorr()) {
        m.autocorr.lags = config.effective_lags();
        m.autocorr.weighting = config.weighting;
        m.autocorr.shared_lags = config.shared_lags;
        m.autocorr.heads.resize(config.heads);
        const double bound = 1.0 / static_cast<double>(G);
        for (auto& head : m.autocorr.heads) {
            head.W_Q = ag::parameter(rng.glorot({dh, D}, D, dh));
            head.W_K = ag::parameter(rng.glorot({dh, D}, D, dh));
            head.W_V = ag::parameter(rng.glorot({dh, D}, D, dh));
            head.fkan.cos_coef = ag::parameter(rng.uniform_tensor({G}, -bound, bound));
            head.fkan.sin_coef = ag::parameter(rng.uniform_tensor({G}, -bound, bound));
        }
    }
    const std::size_t flat = config.stream_count() * D * N;
    m.W_out = ag::parameter(rng.glorot({H, flat}, flat, H));
    m.b_out = ag::parameter(Tensor::zeros({H, 1}));
    return m;
}

IPatchModel build_model(const ModelConfig& config) {
    Rng rng(config.seed);
    return build_model(config, rng);
}

std::vector<autograd::Var> IPatchModel::parameters() const {
    std::vector<ag::Var> out;
    out.push_back(W_proj);
    out.push_back(W_pos);
    for (const auto& layer : encoder) {
        for (const auto& head : layer.heads) {
            out.push_back(head.W_Q);
            out.push_back(head.W_K);
            out.push_back(head.W_V);
        }
        if (layer.W_O.defined()) out.push_back(layer.W_O);
        out.push_back(layer.ln1.gain);
        out.push_back(layer.ln1.bias);
        out.push_back(layer.ffn.W1);
        out.push_back(layer.ffn.b1);
        out.push_back(layer.ffn.W2);
        out.push_back(layer.ffn.b2);
        out.push_back(layer.ln2.gain);
        out.push_back(layer.ln2.bias);
    }
    for (const auto& head : autocorr.heads) {
        out.push_back(head.W_Q);
        out.push_back(head.W_K);
        out.push_back(head.W_V);
        out.push_back(head.fkan.cos_coef);
        out.push_back(head.fkan.sin_coef);
    }
    out.push_back(W_out);
    out.push_back(b_out);
    return out;
}

std::vector<std::string> IPatchModel::parameter_names() const {
    std::vector<std::string> out = {"embed.w_proj", "embed.w_pos"};
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const std::string p = "enc" + std::to_string(l) + ".";
        for (std::size_t h = 0; h < encoder[l].heads.size(); ++h) {
            const std::string hp = p + "h" + std::to_string(h) + ".";
            out.push_back(hp + "wq");
            out.push_back(hp + "wk");
            out.push_back(hp + "wv");
        }
        if (encoder[l].W_O.defined()) out.push_back(p + "wo");
        out.push_back(p + "ln1.gain");
        out.push_back(p + "ln1.bias");
        out.push_back(p + "ffn.w1");
        out.push_back(p + "ffn.b1");
        out.push_back(p + "ffn.w2");
        out.push_back(p + "ffn.b2");
        out.push_back(p + "ln2.gain");
        out.push_back(p + "ln2.bias");
    }
    for (std::size_t h = 0; h < autocorr.heads.size(); ++h) {
        const std::string hp = "ac.h" + std::to_string(h) + ".";
        out.push_back(hp + "wq");
        out.push_back(hp + "wk");
        out.push_back(hp + "wv");
        out.push_back(hp + "fkan.cos");
        out.push_back(hp + "fkan.sin");
    }
    out.push_back("head.w_out");
    out.push_back("head.b_out");
    return out;
}

std::size_t IPatchModel::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters()) total += p.value().numel();
    return total;
}

autograd::Var forward_channel(const IPatchModel& model, const std::vector<double>& channel,
                              ForwardTrace* trace) {
    const ModelConfig& cfg = model.config;
    if (channel.size() != cfg.patch.L) {
        throw std::invalid_argument("window length " + std::to_string(channel.size()) +
                                    " does not match look-back " + std::to_string(cfg.patch.L));
    }
    std::vector<double> x = channel;
    double mu = 0.0, sigma = 1.0;
    if (cfg.instance_norm) {
        for (double v : x) mu += v;
        mu /= static_cast<double>(x.size());
        double var = 0.0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= static_cast<double>(x.size());
        sigma = std::sqrt(var);
        if (sigma < 1e-5) sigma = 1e-5;
        for (double& v : x) v = (v - mu) / sigma;
    }
    ag::Var tokens = embed(ag::constant(segment_channel(x, cfg.patch)), model.W_proj,
                           model.W_pos);
    std::vector<ag::Var> streams;
    if (cfg.uses_attention()) {
        ag::Var z = tokens;
        for (const auto& layer : model.encoder) {
            z = encoder_layer(z, layer, trace ? &trace->attention : nullptr);
        }
        streams.push_back(z);
    }
    if (cfg.uses_autocorr()) {
        streams.push_back(
            autocorr_block(tokens, model.autocorr, trace ? &trace->lag_weights : nullptr));
    }
    ag::Var c = streams.size() == 1 ? streams[0] : ag::concat_rows(streams);
    const std::size_t flat = cfg.stream_count() * cfg.patch.D * cfg.patch.patch_count();
    ag::Var y = ag::add(ag::matmul(model.W_out, ag::reshape(c, {flat, 1})), model.b_out);
    if (cfg.instance_norm) {
        y = ag::add(ag::scale(y, sigma), ag::constant(Tensor::full({cfg.horizon, 1}, mu)));
    }
    return y;
}

Tensor forward(const IPatchModel& model, const Tensor& window, ForwardTrace* trace) {
    if (window.rank() != 2) {
        throw std::invalid_argument("window must be L x M, got " + window.shape_str());
    }
    if (!window.all_finite()) throw std::invalid_argument("window contains non-finite values");
    const std::size_t m = window.cols();
    Tensor out({model.config.horizon, m});
    std::vector<double> channel(window.rows());
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t t = 0; t < window.rows(); ++t) channel[t] = window.at(t, j);
        ag::Var y = forward_channel(model, channel, trace);
        for (std::size_t t = 0; t < model.config.horizon; ++t) out.at(t, j) = y.value().at(t, 0);
    }
    return out;
}

void save_checkpoint(const IPatchModel& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    const auto params = model.parameters();
    const auto names = model.parameter_names();
    f << "ipatch-checkpoint v1\n";
    f << "config " << to_json(model.config) << "\n";
    f << "params " << params.size() << "\n";
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        f << names[i] << " " << params[i].value().numel() << "\n";
        total += params[i].value().numel();
    }
    f << "blob " << total << "\n";
    for (const auto& p : params) {
        const auto& data = p.value().data();
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!f) throw DataError("failed writing checkpoint: " + path);
}

IPatchModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "ipatch-checkpoint v1") {
        throw DataError("unrecognized checkpoint header in " + path);
    }
    if (!std::getline(f, line) || line.rfind("config ", 0) != 0) {
        throw DataError("checkpoint missing config line: " + path);
    }
    IPatchModel model = build_model(model_config_from_json(line.substr(7)));

    if (!std::getline(f, line) || line.rfind("params ", 0) != 0) {
        throw DataError("checkpoint missing params line: " + path);
    }
    const std::size_t count = std::stoul(line.substr(7));
    const auto params = model.parameters();
    const auto names = model.parameter_names();
    if (count != params.size()) {
        throw DataError("checkpoint lists " + std::to_string(count) + " parameters, config implies " +
                        std::to_string(params.size()));
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(f, line)) throw DataError("truncated checkpoint manifest: " + path);
        std::istringstream entry(line);
        std::string name;
        std::size_t numel = 0;
        entry >> name >> numel;
        if (name != names[i] || numel != params[i].value().numel()) {
            throw DataError("checkpoint manifest entry '" + line + "' does not match expected '" +
                            names[i] + " " + std::to_string(params[i].value().numel()) + "'");
        }
        total += numel;
    }
    if (!std::getline(f, line) || line != "blob " + std::to_string(total)) {
        throw DataError("checkpoint missing blob line: " + path);
    }
    for (auto p : params) {
        auto& data = p.mutable_value().data();
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!f) throw DataError("truncated checkpoint blob: " + path);
    }
    return model;
}

}  // namespace ipatch
