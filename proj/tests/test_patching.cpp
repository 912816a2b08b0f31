#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ipatch/errors.hpp"
#include "ipatch/optim.hpp"
#include "ipatch/patching.hpp"

using namespace ipatch;
namespace ag = ipatch::autograd;

namespace {

std::vector<double> ramp(std::size_t n) {
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), 0.0);
    return v;
}

// Counts patch start offsets directly instead of using the closed form.
std::size_t brute_force_patch_count(std::size_t L, std::size_t S, std::size_t O) {
    std::size_t n = 0;
    for (std::size_t start = 0; start + S <= L; start += O) ++n;
    return n;
}

}  // namespace

TEST_CASE("patch counts on pinned geometries") {
    CHECK((PatchConfig{96, 16, 16, 1}.patch_count()) == 6);
    CHECK((PatchConfig{96, 16, 8, 1}.patch_count()) == 11);
    CHECK((PatchConfig{10, 4, 3, 1}.patch_count()) == 3);
}

TEST_CASE("patch count formula matches direct enumeration everywhere") {
    for (std::size_t L = 2; L <= 64; ++L) {
        for (std::size_t S = 1; S < L; ++S) {
            for (std::size_t O = 1; O <= S; ++O) {
                PatchConfig cfg{L, S, O, 1};
                CHECK(cfg.patch_count() == brute_force_patch_count(L, S, O));
            }
        }
    }
}

TEST_CASE("segment_channel lays out strided starts") {
    // L=10, S=4, O=3 gives starts 0, 3, 6; index 9 is dropped.
    Tensor p = segment_channel(ramp(10), PatchConfig{10, 4, 3, 1});
    REQUIRE(p.rows() == 4);
    REQUIRE(p.cols() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        const double start = double(k) * 3.0;
        for (std::size_t t = 0; t < 4; ++t) {
            CHECK(p.at(t, k) == start + double(t));
        }
    }
}

TEST_CASE("non-overlapping patches tile the window exactly") {
    PatchConfig cfg{96, 16, 16, 1};
    auto x = ramp(96);
    Tensor p = segment_channel(x, cfg);
    REQUIRE(p.cols() == 6);
    std::vector<double> rebuilt;
    for (std::size_t k = 0; k < p.cols(); ++k) {
        for (std::size_t t = 0; t < p.rows(); ++t) rebuilt.push_back(p.at(t, k));
    }
    CHECK(rebuilt == x);
}

TEST_CASE("overlapping patches replicate shared samples") {
    PatchConfig cfg{96, 16, 8, 1};
    Tensor p = segment_channel(ramp(96), cfg);
    REQUIRE(p.cols() == 11);
    for (std::size_t k = 0; k + 1 < p.cols(); ++k) {
        for (std::size_t t = 8; t < 16; ++t) {
            CHECK(p.at(t, k) == p.at(t - 8, k + 1));
        }
    }
}

TEST_CASE("segment splits a multivariate window per channel") {
    PatchConfig cfg{6, 2, 2, 1};
    Tensor window({6, 2});
    for (std::size_t t = 0; t < 6; ++t) {
        window.at(t, 0) = double(t);
        window.at(t, 1) = 100.0 + double(t);
    }
    auto per_channel = segment(window, cfg);
    REQUIRE(per_channel.size() == 2);
    CHECK(per_channel[0].at(0, 1) == 2.0);
    CHECK(per_channel[1].at(0, 1) == 102.0);
    CHECK(per_channel[1].at(1, 2) == 105.0);
}

TEST_CASE("geometry validation rejects bad settings") {
    CHECK_THROWS_AS((PatchConfig{10, 4, 0, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((PatchConfig{10, 4, 5, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((PatchConfig{10, 10, 2, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((PatchConfig{10, 12, 2, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((PatchConfig{10, 4, 2, 0}.validate()), ConfigError);
    CHECK_NOTHROW((PatchConfig{10, 4, 4, 3}.validate()));
    CHECK_THROWS_AS(segment_channel(ramp(8), PatchConfig{10, 4, 2, 1}), ConfigError);
}

TEST_CASE("embedding applies shared projection plus positional offsets") {
    Rng rng(5);
    PatchConfig cfg{10, 4, 3, 2};
    Tensor p = segment_channel(ramp(10), cfg);
    Tensor wp = rng.glorot({2, 4}, 4, 2);
    Tensor pos = rng.uniform_tensor({2, 3}, -1.0, 1.0);
    ag::Var out = embed(ag::constant(p), ag::constant(wp), ag::constant(pos));
    REQUIRE(out.value().rows() == 2);
    REQUIRE(out.value().cols() == 3);
    for (std::size_t d = 0; d < 2; ++d) {
        for (std::size_t k = 0; k < 3; ++k) {
            double expect = pos.at(d, k);
            for (std::size_t t = 0; t < 4; ++t) expect += wp.at(d, t) * p.at(t, k);
            CHECK(out.value().at(d, k) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("embedding is linear in the patch content") {
    Rng rng(11);
    PatchConfig cfg{16, 4, 4, 3};
    Tensor wp = rng.glorot({3, 4}, 4, 3);
    Tensor zero_pos = Tensor::zeros({3, 4});
    std::vector<double> a_sig(16), b_sig(16);
    for (auto& v : a_sig) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b_sig) v = rng.uniform(-1.0, 1.0);

    auto embed_sig = [&](const std::vector<double>& sig) {
        return embed(ag::constant(segment_channel(sig, cfg)), ag::constant(wp),
                     ag::constant(zero_pos))
            .value();
    };
    std::vector<double> sum_sig(16);
    for (std::size_t i = 0; i < 16; ++i) sum_sig[i] = 2.0 * a_sig[i] + 3.0 * b_sig[i];

    Tensor ea = embed_sig(a_sig), eb = embed_sig(b_sig), es = embed_sig(sum_sig);
    for (std::size_t i = 0; i < es.numel(); ++i) {
        CHECK(es[i] == doctest::Approx(2.0 * ea[i] + 3.0 * eb[i]).epsilon(1e-9));
    }
}

TEST_CASE("embedding gradients flow to both weight matrices") {
    Rng rng(19);
    PatchConfig cfg{10, 4, 3, 2};
    ag::Var patches = ag::constant(segment_channel(ramp(10), cfg));
    ag::Var wp = ag::parameter(rng.glorot({2, 4}, 4, 2));
    ag::Var pos = ag::parameter(rng.uniform_tensor({2, 3}, -0.1, 0.1));
    std::vector<ag::Var> params = {wp, pos};
    auto f = [&] {
        ag::Var e = embed(patches, wp, pos);
        return ag::mean(ag::mul(e, e));
    };
    CHECK(optim::grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("instance normalization standardizes each channel") {
    Tensor window({4, 2});
    const std::vector<double> c0 = {1, 3, 5, 7};
    const std::vector<double> c1 = {-2, -2, -2, -2};
    for (std::size_t t = 0; t < 4; ++t) {
        window.at(t, 0) = c0[t];
        window.at(t, 1) = c1[t];
    }
    auto [normed, state] = instance_normalize(window);
    CHECK(state.mean[0] == doctest::Approx(4.0));
    CHECK(state.std[0] == doctest::Approx(std::sqrt(5.0)));
    CHECK(state.mean[1] == doctest::Approx(-2.0));
    CHECK(state.std[1] == doctest::Approx(1e-5));

    double mean0 = 0.0, var0 = 0.0;
    for (std::size_t t = 0; t < 4; ++t) mean0 += normed.at(t, 0);
    mean0 /= 4.0;
    for (std::size_t t = 0; t < 4; ++t) {
        var0 += (normed.at(t, 0) - mean0) * (normed.at(t, 0) - mean0);
    }
    CHECK(mean0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var0 / 4.0 == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t t = 0; t < 4; ++t) CHECK(normed.at(t, 1) == doctest::Approx(0.0));
}

TEST_CASE("denormalization inverts normalization on the same channels") {
    Rng rng(23);
    Tensor window = rng.uniform_tensor({8, 3}, -5.0, 5.0);
    auto [normed, state] = instance_normalize(window);
    Tensor back = instance_denormalize(normed, state);
    REQUIRE(back.same_shape(window));
    for (std::size_t i = 0; i < back.numel(); ++i) {
        CHECK(back[i] == doctest::Approx(window[i]).epsilon(1e-9));
    }

    // Forecast with a different horizon still maps through the same state.
    Tensor flat = Tensor::zeros({5, 3});
    Tensor denorm = instance_denormalize(flat, state);
    for (std::size_t h = 0; h < 5; ++h) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(denorm.at(h, c) == doctest::Approx(state.mean[c]));
        }
    }
}
