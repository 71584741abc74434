#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brainof/ad.hpp"
#include "brainof/model_config.hpp"
#include "brainof/params.hpp"

namespace brainof {

// Any-resolution resampler: Perceiver-style cross-attention mapping a
// variable-length token sequence onto C latent tokens. Queries come from the
// latents; keys/values from [X; Z] with latent self-keys always unmasked.
struct ArnessLayerParams {
    ad::Var wq, wk, wv, wo;
    ad::Var norm_attn_gain;  // pre-norm on latents and on [X;Z]
    ad::Var norm_ffn_gain;
    ad::Var ffn_w1, ffn_w2;
};

struct ArnessParams {
    ad::Var z0;  // learned initial latents, [C x D]
    std::vector<ArnessLayerParams> layers;
};

ArnessParams make_arness(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                         const std::string& prefix = "arness");

// One full stack of cross-attention layers; key_mask covers the X rows only.
ad::Var resample(const ad::Var& x, const std::vector<std::uint8_t>& key_mask,
                 const ad::Var& z_in, const ArnessParams& params, const ModelConfig& cfg);

// Left fold of resample over an ordered modality list, starting from Z0.
ad::Var fuse(const std::vector<std::pair<ad::Var, std::vector<std::uint8_t>>>& sequences,
             const ArnessParams& params, const ModelConfig& cfg);

// One-layer inverse sampler used as the reconstruction decoder: learned query
// slots (RoPE-rotated by slot index) attend over the latents, then a linear
// head maps each slot back to a patch.
struct DecoderParams {
    ad::Var query_slots;  // [L x D]
    ad::Var wq, wk, wv, wo;
    ad::Var norm_gain;
    ad::Var head_w;  // [D x patch_len]
};

DecoderParams make_decoder(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                           const std::string& prefix = "decoder");

ad::Var decode(const ad::Var& z, const DecoderParams& params,
               const std::vector<std::uint8_t>& valid, const ModelConfig& cfg);

// Shared multi-head scaled-dot-product cross-attention.
// q_in: [R x D], kv_in: [S x D]; key_mask, if given, has S entries.
// rope_q rotates per-head query halves by row index before scoring.
// rope_k_prefix rotates the first rope_k_prefix keys by their row index.
ad::Var multihead_attention(const ad::Var& q_in, const ad::Var& kv_in,
                            const std::vector<std::uint8_t>* key_mask, const ad::Var& wq,
                            const ad::Var& wk, const ad::Var& wv, const ad::Var& wo,
                            std::size_t heads, bool rope_q, std::size_t rope_k_prefix = 0);

}  // namespace brainof
