#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ipatch/attention.hpp"
#include "ipatch/autocorrelation.hpp"
#include "ipatch/autograd.hpp"
#include "ipatch/patching.hpp"
#include "ipatch/tensor.hpp"

namespace ipatch {

enum class Variant { full, patch_only, autocorr_only };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct ModelConfig {
    PatchConfig patch;
    std::size_t heads = 2;          // H_n; D must be divisible by it
    std::size_t lags = 0;           // J; 0 selects max(1, floor(log2(D / heads)))
    std::size_t fourier_terms = 4;  // G
    Variant variant = Variant::full;
    LagWeighting weighting = LagWeighting::fourier;
    std::size_t encoder_layers = 1;
    std::size_t horizon = 1;  // H
    bool instance_norm = true;
    bool attn_output_projection = false;
    bool shared_lags = false;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t head_dim() const { return patch.D / heads; }
    std::size_t effective_lags() const;
    bool uses_attention() const { return variant != Variant::autocorr_only; }
    bool uses_autocorr() const { return variant != Variant::patch_only; }
    /// 2 when both streams feed the head, 1 for single-stream variants.
    std::size_t stream_count() const { return uses_attention() && uses_autocorr() ? 2 : 1; }
};

/// Canonical single-line JSON (sorted keys); rejects unknown keys on parse.
std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

/// Per-channel forecaster: shared embedding, an encoder stack over patch
/// tokens (stream one), a spectral autocorrelation block (stream two), and
/// a linear head over the flattened concatenation.
///
/// Trainable parameter count (k = stream_count, N = patch count, d_h = D/H_n):
///   embedding        D*S + D*N
///   per encoder layer  3*D*D (QKV)  [+ D*D if output projection]
///                      + 4*D*D + 3*D (feed-forward) + 4*D (two layer norms)
///   autocorr stream  3*D*D (QKV) + 2*G*H_n (Fourier coefficients)
///   head             H*k*D*N + H
struct IPatchModel {
    ModelConfig config;
    autograd::Var W_proj;  // D x S
    autograd::Var W_pos;   // D x N
    std::vector<EncoderLayerParams> encoder;  // empty unless attention stream in use
    AutocorrParams autocorr;                  // heads empty unless autocorr stream in use
    autograd::Var W_out;  // H x (k*D*N)
    autograd::Var b_out;  // H x 1

    std::vector<autograd::Var> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const;
};

/// All parameters drawn from rng in enumeration order; equal seeds give
/// identical models. Throws ConfigError on invalid config.
IPatchModel build_model(const ModelConfig& config, Rng& rng);
IPatchModel build_model(const ModelConfig& config);

/// Interior observations from one forward pass, for contract checks:
/// every attention matrix (rows sum to 1) and every applied lag-weight
/// matrix (columns sum to 1 in softmax mode).
struct ForwardTrace {
    std::vector<Tensor> attention;
    std::vector<Tensor> lag_weights;
};

/// Differentiable forecast for one channel (length L), returned in the
/// same scale as the input (instance normalization is undone inside the
/// graph when enabled).
autograd::Var forward_channel(const IPatchModel& model, const std::vector<double>& channel,
                              ForwardTrace* trace = nullptr);

/// Forecast for a full window: (L x M) -> (H x M), channels independent.
/// Throws on non-finite input or window/config length mismatch.
Tensor forward(const IPatchModel& model, const Tensor& window, ForwardTrace* trace = nullptr);

/// Plain-text header (version, config, parameter manifest) followed by the
/// parameter values as a little-endian 64-bit float blob. Byte-identical
/// across save -> load -> save.
void save_checkpoint(const IPatchModel& model, const std::string& path);
IPatchModel load_checkpoint(const std::string& path);

}  // namespace ipatch
