#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ipatch/errors.hpp"
#include "ipatch/model.hpp"
#include "ipatch/optim.hpp"

using namespace ipatch;
namespace ag = ipatch::autograd;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.patch = {16, 4, 4, 8};
    cfg.heads = 2;
    cfg.lags = 2;
    cfg.fourier_terms = 4;
    cfg.horizon = 4;
    cfg.seed = 3;
    return cfg;
}

void zero_all(std::vector<ag::Var> params) {
    for (auto& p : params) {
        Tensor& v = p.mutable_value();
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] = 0.0;
    }
}

void copy_values(const ag::Var& from, ag::Var to) {
    Tensor& dst = to.mutable_value();
    REQUIRE(dst.same_shape(from.value()));
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] = from.value()[i];
}

// Copies the column block [first, first+width) of src into dst.
void copy_column_block(const Tensor& src, Tensor& dst, std::size_t first, std::size_t width) {
    REQUIRE(dst.cols() == width);
    for (std::size_t r = 0; r < dst.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) dst.at(r, c) = src.at(r, first + c);
    }
}

void zero_column_block(Tensor& t, std::size_t first, std::size_t width) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) t.at(r, first + c) = 0.0;
    }
}

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("variant labels round trip") {
    for (Variant v : {Variant::full, Variant::patch_only, Variant::autocorr_only}) {
        CHECK(parse_variant(to_string(v)) == v);
    }
    CHECK_THROWS_AS(parse_variant("both"), ConfigError);
}

TEST_CASE("lag count defaults to log2 of head width") {
    ModelConfig cfg = toy_config();
    cfg.lags = 0;
    CHECK(cfg.effective_lags() == 2);  // d_h = 4
    cfg.heads = 1;
    CHECK(cfg.effective_lags() == 3);  // d_h = 8
    cfg.heads = 8;
    CHECK(cfg.effective_lags() == 1);  // d_h = 1, floored
    cfg.heads = 2;
    cfg.lags = 3;
    CHECK(cfg.effective_lags() == 3);
}

TEST_CASE("config validation rejects impossible settings") {
    ModelConfig cfg = toy_config();
    cfg.heads = 3;  // 8 not divisible by 3
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_config();
    cfg.horizon = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_config();
    cfg.lags = 5;  // d_h = 4
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = toy_config();
    cfg.encoder_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.variant = Variant::autocorr_only;  // no encoder stack needed
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config JSON round trips and rejects unknown keys") {
    ModelConfig cfg = toy_config();
    cfg.variant = Variant::autocorr_only;
    cfg.weighting = LagWeighting::softmax;
    cfg.instance_norm = false;
    const std::string text = to_json(cfg);
    ModelConfig back = model_config_from_json(text);
    CHECK(to_json(back) == text);
    CHECK(back.variant == Variant::autocorr_only);
    CHECK(back.weighting == LagWeighting::softmax);
    CHECK(back.patch.L == 16);
    CHECK_FALSE(back.instance_norm);

    try {
        model_config_from_json(R"({"look_back": 16, "bogus_key": 1})");
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
    CHECK_THROWS_AS(model_config_from_json("not json"), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(R"({"variant": "neither"})"), ConfigError);
}

TEST_CASE("bias-only path: zero parameters forecast the output bias") {
    ModelConfig cfg = toy_config();
    cfg.instance_norm = false;
    IPatchModel model = build_model(cfg);
    zero_all(model.parameters());
    Tensor& b = model.b_out.mutable_value();
    for (std::size_t h = 0; h < cfg.horizon; ++h) b.at(h, 0) = 2.5;

    Tensor forecast = forward(model, Tensor::zeros({16, 3}));
    REQUIRE(forecast.rows() == 4);
    REQUIRE(forecast.cols() == 3);
    for (std::size_t i = 0; i < forecast.numel(); ++i) CHECK(forecast[i] == 2.5);
}

TEST_CASE("forecast shapes at the published geometry") {
    ModelConfig cfg;
    cfg.patch = {96, 16, 16, 8};
    cfg.heads = 2;
    cfg.horizon = 96;
    cfg.seed = 11;
    IPatchModel model = build_model(cfg);
    CHECK(cfg.patch.patch_count() == 6);
    CHECK(model.W_out.value().rows() == 96);
    CHECK(model.W_out.value().cols() == 2 * 8 * 6);  // both streams flattened

    Rng rng(13);
    Tensor window = rng.uniform_tensor({96, 7}, -1.0, 1.0);
    Tensor forecast = forward(model, window);
    CHECK(forecast.rows() == 96);
    CHECK(forecast.cols() == 7);
    CHECK(forecast.all_finite());
}

TEST_CASE("forward rejects bad windows") {
    IPatchModel model = build_model(toy_config());
    Rng rng(5);
    CHECK_THROWS_AS(forward(model, rng.uniform_tensor({15, 2}, -1.0, 1.0)),
                    std::invalid_argument);
    Tensor bad = rng.uniform_tensor({16, 2}, -1.0, 1.0);
    bad.at(3, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(forward(model, bad), std::invalid_argument);
}

TEST_CASE("same seed builds identical models, different seeds differ") {
    ModelConfig cfg = toy_config();
    IPatchModel a = build_model(cfg);
    IPatchModel b = build_model(cfg);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].value().same_shape(pb[i].value()));
        for (std::size_t j = 0; j < pa[i].value().numel(); ++j) {
            CHECK(pa[i].value()[j] == pb[i].value()[j]);
        }
    }
    cfg.seed = 4;
    IPatchModel c = build_model(cfg);
    bool any_diff = false;
    auto pc = c.parameters();
    for (std::size_t j = 0; j < pa[0].value().numel(); ++j) {
        any_diff = any_diff || pa[0].value()[j] != pc[0].value()[j];
    }
    CHECK(any_diff);
}

TEST_CASE("full variant has strictly more parameters than either ablation") {
    ModelConfig cfg = toy_config();
    const std::size_t full = build_model(cfg).parameter_count();
    cfg.variant = Variant::patch_only;
    const std::size_t patch_only = build_model(cfg).parameter_count();
    cfg.variant = Variant::autocorr_only;
    const std::size_t autocorr_only = build_model(cfg).parameter_count();
    CHECK(full > patch_only);
    CHECK(full > autocorr_only);
}

TEST_CASE("parameter count matches the documented closed form at toy size") {
    const ModelConfig cfg = toy_config();
    IPatchModel model = build_model(cfg);
    const std::size_t D = 8, S = 4, N = 4, G = 4, Hn = 2, H = 4;
    const std::size_t embed = D * S + D * N;
    const std::size_t layer = 3 * D * D + 4 * D * D + 3 * D + 4 * D;
    const std::size_t ac = 3 * D * D + 2 * G * Hn;
    const std::size_t head = H * 2 * D * N + H;
    CHECK(model.parameter_count() == embed + layer + ac + head);
    CHECK(model.parameter_count() == 1036);

    ModelConfig wide = cfg;
    wide.attn_output_projection = true;
    wide.encoder_layers = 2;
    CHECK(build_model(wide).parameter_count() == embed + 2 * (layer + D * D) + ac + head);

    CHECK(model.parameter_names().size() == model.parameters().size());
}

TEST_CASE("every enumerated parameter is reachable from the loss in fourier mode") {
    ModelConfig cfg = toy_config();
    IPatchModel model = build_model(cfg);
    Rng rng(17);
    Tensor window = rng.uniform_tensor({16, 1}, -1.0, 1.0);
    std::vector<double> channel(16);
    for (std::size_t t = 0; t < 16; ++t) channel[t] = window.at(t, 0);

    auto params = model.parameters();
    optim::zero_grad(params);
    ag::Var y = forward_channel(model, channel);
    ag::backward(ag::mean(ag::mul(y, y)));
    auto names = model.parameter_names();
    for (std::size_t i = 0; i < params.size(); ++i) {
        INFO("parameter ", names[i]);
        CHECK(params[i].node()->grad.numel() > 0);
    }
}

TEST_CASE("unused stream parameters have no effect on a patch_only forecast") {
    ModelConfig cfg = toy_config();
    cfg.variant = Variant::patch_only;
    IPatchModel model = build_model(cfg);
    Rng rng(19);
    Tensor window = rng.uniform_tensor({16, 2}, -1.0, 1.0);
    Tensor before = forward(model, window);

    // Attach a populated (but unused) spectral stream and perturb it.
    Rng noise(23);
    model.autocorr.lags = 2;
    model.autocorr.heads.resize(2);
    for (auto& head : model.autocorr.heads) {
        head.W_Q = ag::parameter(noise.uniform_tensor({4, 8}, -1.0, 1.0));
        head.W_K = ag::parameter(noise.uniform_tensor({4, 8}, -1.0, 1.0));
        head.W_V = ag::parameter(noise.uniform_tensor({4, 8}, -1.0, 1.0));
        head.fkan.cos_coef = ag::parameter(noise.uniform_tensor({4}, -1.0, 1.0));
        head.fkan.sin_coef = ag::parameter(noise.uniform_tensor({4}, -1.0, 1.0));
    }
    Tensor after = forward(model, window);
    for (std::size_t i = 0; i < after.numel(); ++i) CHECK(after[i] == before[i]);
}

TEST_CASE("zeroing one stream reproduces the single-stream variants exactly") {
    ModelConfig cfg = toy_config();
    const std::size_t D = 8, N = 4, DN = D * N;
    Rng rng(29);
    Tensor window = rng.uniform_tensor({16, 2}, -2.0, 2.0);

    SUBCASE("attention stream only") {
        IPatchModel full = build_model(cfg);
        ModelConfig pcfg = cfg;
        pcfg.variant = Variant::patch_only;
        IPatchModel patch = build_model(pcfg);

        copy_values(full.W_proj, patch.W_proj);
        copy_values(full.W_pos, patch.W_pos);
        for (std::size_t l = 0; l < full.encoder.size(); ++l) {
            for (std::size_t h = 0; h < full.encoder[l].heads.size(); ++h) {
                copy_values(full.encoder[l].heads[h].W_Q, patch.encoder[l].heads[h].W_Q);
                copy_values(full.encoder[l].heads[h].W_K, patch.encoder[l].heads[h].W_K);
                copy_values(full.encoder[l].heads[h].W_V, patch.encoder[l].heads[h].W_V);
            }
            copy_values(full.encoder[l].ln1.gain, patch.encoder[l].ln1.gain);
            copy_values(full.encoder[l].ln1.bias, patch.encoder[l].ln1.bias);
            copy_values(full.encoder[l].ffn.W1, patch.encoder[l].ffn.W1);
            copy_values(full.encoder[l].ffn.b1, patch.encoder[l].ffn.b1);
            copy_values(full.encoder[l].ffn.W2, patch.encoder[l].ffn.W2);
            copy_values(full.encoder[l].ffn.b2, patch.encoder[l].ffn.b2);
            copy_values(full.encoder[l].ln2.gain, patch.encoder[l].ln2.gain);
            copy_values(full.encoder[l].ln2.bias, patch.encoder[l].ln2.bias);
        }
        copy_column_block(full.W_out.value(), patch.W_out.mutable_value(), 0, DN);
        copy_values(full.b_out, patch.b_out);

        for (auto& head : full.autocorr.heads) {
            zero_all({head.W_Q, head.W_K, head.W_V, head.fkan.cos_coef, head.fkan.sin_coef});
        }
        zero_column_block(full.W_out.mutable_value(), DN, DN);

        Tensor a = forward(full, window);
        Tensor b = forward(patch, window);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    }

    SUBCASE("spectral stream only") {
        IPatchModel full = build_model(cfg);
        ModelConfig acfg = cfg;
        acfg.variant = Variant::autocorr_only;
        IPatchModel ac = build_model(acfg);

        copy_values(full.W_proj, ac.W_proj);
        copy_values(full.W_pos, ac.W_pos);
        for (std::size_t h = 0; h < full.autocorr.heads.size(); ++h) {
            copy_values(full.autocorr.heads[h].W_Q, ac.autocorr.heads[h].W_Q);
            copy_values(full.autocorr.heads[h].W_K, ac.autocorr.heads[h].W_K);
            copy_values(full.autocorr.heads[h].W_V, ac.autocorr.heads[h].W_V);
            copy_values(full.autocorr.heads[h].fkan.cos_coef, ac.autocorr.heads[h].fkan.cos_coef);
            copy_values(full.autocorr.heads[h].fkan.sin_coef, ac.autocorr.heads[h].fkan.sin_coef);
        }
        copy_column_block(full.W_out.value(), ac.W_out.mutable_value(), DN, DN);
        copy_values(full.b_out, ac.b_out);

        for (auto& layer : full.encoder) {
            for (auto& head : layer.heads) zero_all({head.W_Q, head.W_K, head.W_V});
            zero_all({layer.ln1.gain, layer.ln1.bias, layer.ffn.W1, layer.ffn.b1, layer.ffn.W2,
                      layer.ffn.b2, layer.ln2.gain, layer.ln2.bias});
        }
        zero_column_block(full.W_out.mutable_value(), 0, DN);

        Tensor a = forward(full, window);
        Tensor b = forward(ac, window);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("forecast is affine in the output bias") {
    ModelConfig cfg = toy_config();
    cfg.instance_norm = false;
    IPatchModel model = build_model(cfg);
    Rng rng(31);
    Tensor window = rng.uniform_tensor({16, 2}, -1.0, 1.0);

    Tensor base = forward(model, window);
    Tensor& b = model.b_out.mutable_value();
    std::vector<double> delta = {0.5, -1.5, 2.0, 0.25};
    for (std::size_t h = 0; h < 4; ++h) b.at(h, 0) += delta[h];
    Tensor shifted = forward(model, window);
    for (std::size_t h = 0; h < 4; ++h) {
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(shifted.at(h, c) - base.at(h, c) == doctest::Approx(delta[h]).epsilon(1e-9));
        }
    }
}

TEST_CASE("forward trace exposes stochastic attention and lag weights") {
    ModelConfig cfg = toy_config();
    cfg.weighting = LagWeighting::softmax;
    IPatchModel model = build_model(cfg);
    Rng rng(37);
    Tensor window = rng.uniform_tensor({16, 1}, -1.0, 1.0);

    ForwardTrace trace;
    forward(model, window, &trace);
    REQUIRE(trace.attention.size() == 2);  // one layer, two heads
    for (const Tensor& a : trace.attention) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) row += a.at(i, j);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    REQUIRE(trace.lag_weights.size() == 2);
    for (const Tensor& w : trace.lag_weights) {
        REQUIRE(w.rows() == 2);  // J
        for (std::size_t c = 0; c < w.cols(); ++c) {
            double col = 0.0;
            for (std::size_t l = 0; l < w.rows(); ++l) col += w.at(l, c);
            CHECK(col == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("checkpoints round trip byte for byte") {
    ModelConfig cfg = toy_config();
    cfg.weighting = LagWeighting::softmax;
    cfg.shared_lags = true;
    IPatchModel model = build_model(cfg);
    // Perturb away from the seeded initialization, as training would.
    Rng rng(41);
    for (auto p : model.parameters()) {
        Tensor& v = p.mutable_value();
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] += rng.uniform(-0.01, 0.01);
    }

    const std::string p1 = "/tmp/ipatch_test_ckpt_a.ipc";
    const std::string p2 = "/tmp/ipatch_test_ckpt_b.ipc";
    save_checkpoint(model, p1);
    IPatchModel loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(file_bytes(p1) == file_bytes(p2));

    CHECK(to_json(loaded.config) == to_json(model.config));
    Rng wrng(43);
    Tensor window = wrng.uniform_tensor({16, 2}, -1.0, 1.0);
    Tensor a = forward(model, window);
    Tensor b = forward(loaded, window);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("corrupted checkpoints are rejected") {
    IPatchModel model = build_model(toy_config());
    const std::string path = "/tmp/ipatch_test_ckpt_bad.ipc";
    save_checkpoint(model, path);
    std::string bytes = file_bytes(path);

    // Flip the manifest name of the first parameter.
    const auto pos = bytes.find("embed.w_proj");
    REQUIRE(pos != std::string::npos);
    bytes[pos] = 'x';
    {
        std::ofstream f(path, std::ios::binary);
        f << bytes;
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);

    {
        std::ofstream f(path, std::ios::binary);
        f << "something else\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    CHECK_THROWS_AS(load_checkpoint("/tmp/ipatch_no_such_file.ipc"), DataError);
    std::remove(path.c_str());
}

TEST_CASE("full model gradients pass grad_check at toy size") {
    ModelConfig cfg = toy_config();
    IPatchModel model = build_model(cfg);
    Rng rng(47);
    std::vector<std::vector<double>> channels(2, std::vector<double>(16));
    for (auto& ch : channels) {
        for (auto& v : ch) v = rng.uniform(-1.0, 1.0);
    }
    Tensor targets = rng.uniform_tensor({4, 2}, -1.0, 1.0);

    auto params = model.parameters();
    auto f = [&] {
        ag::Var total;
        for (std::size_t c = 0; c < 2; ++c) {
            Tensor t({4, 1});
            for (std::size_t h = 0; h < 4; ++h) t.at(h, 0) = targets.at(h, c);
            ag::Var loss = ag::mse(forward_channel(model, channels[c]), ag::constant(t));
            total = total.defined() ? ag::add(total, loss) : loss;
        }
        return ag::scale(total, 0.5);
    };
    CHECK(optim::grad_check(f, params, 1e-5) < 1e-4);
}
