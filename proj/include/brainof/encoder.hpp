#pragma once

#include <cstdint>
#include <vector>

#include "brainof/ad.hpp"
#include "brainof/model_config.hpp"
#include "brainof/params.hpp"

namespace brainof {

// Per-patch temporal encoder: stacked 1-D convolutions (kernel 3, stride 1,
// padding 1, no bias) followed by RMSNorm, GELU and a linear projection to
// the embedding dimension. Padding rows are forced to zero output.
struct EncoderParams {
    std::vector<ad::Var> conv_w;  // [ch_out x (ch_in*3)] per layer
    ad::Var norm_gain;            // width ch_last * patch_len
    ad::Var proj;                 // [(ch_last*patch_len) x D]
};

EncoderParams make_encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                           const std::string& prefix = "encoder");

ad::Var encode(const ad::Var& patches, const std::vector<std::uint8_t>& valid,
               const EncoderParams& params, const ModelConfig& cfg);

// Standalone single-signal convolution used by unit tests and oracles.
// x: [ch_in x T], w: [ch_out x (ch_in*3)], cross-correlation convention.
Tensor conv1d(const Tensor& x, const Tensor& w);

}  // namespace brainof
