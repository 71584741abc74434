#pragma once

#include <cstdint>
#include <vector>

#include "brainof/arness.hpp"
#include "brainof/dint.hpp"
#include "brainof/encoder.hpp"
#include "brainof/model_config.hpp"
#include "brainof/params.hpp"
#include "brainof/signal.hpp"
#include "brainof/smoe.hpp"

namespace brainof {

// One backbone block: pre-norm DINT attention with layer scale, then a
// pre-norm SMoE whose expert contribution is layer-scaled (its internal
// residual is replaced by the block's own).
struct BackboneBlock {
    ad::Var norm_attn_gain;
    ad::Var norm_moe_gain;
    ad::Var ls_attn;  // [1 x D]
    ad::Var ls_moe;   // [1 x D]
    DintParams dint;
    SmoeParams smoe;
};

class BrainOfModel {
  public:
    BrainOfModel(ModelConfig config, std::uint64_t seed);

    ModelConfig cfg;
    ParamStore store;
    EncoderParams encoder;
    ArnessParams arness;
    DecoderParams decoder;
    std::vector<BackboneBlock> blocks;
    std::vector<RouterState> routers;  // one per block, mutated during forward

    // encode -> resample onto C latents -> backbone stack
    ad::Var latents(const TokenSequence& ts);
    ad::Var backbone(const ad::Var& z0);

    // decoder + differentiable unpatchify back to [N x T]
    ad::Var decode_patches(const ad::Var& z, const TokenSequence& ts);
    ad::Var reconstruct_values(const ad::Var& z, const TokenSequence& ts);

    void reset_router_loads();
};

}  // namespace brainof
