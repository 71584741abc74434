#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brainof/ad.hpp"
#include "brainof/model_config.hpp"
#include "brainof/params.hpp"

namespace brainof {

// Sparse mixture of experts: shared experts always on, top-k routed experts
// picked by sigmoid gates with a selection-only balancing bias.
struct Expert {
    ad::Var w1;  // [D x H]
    ad::Var w2;  // [H x D]
};

struct SmoeParams {
    ad::Var gate;                 // [D x E]
    std::vector<Expert> shared;   // N_s experts
    std::vector<Expert> routed;   // E experts
};

struct RouterState {
    Tensor bias;                        // [E], selection-only
    double gamma = 1e-3;
    std::vector<std::size_t> load_counts;  // per routed expert, current step
    std::size_t k = 2;
    bool zero_p_fallback = false;  // any token hit the uniform fallback this step

    explicit RouterState(std::size_t e, std::size_t k_ = 2, double gamma_ = 1e-3)
        : bias(Tensor::zeros({e})), gamma(gamma_), load_counts(e, 0), k(k_) {}
};

SmoeParams make_smoe(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                     const std::string& prefix);

struct RouteResult {
    std::vector<std::size_t> selected;  // k indices, ascending selection-score order broken low-first
    ad::Var gate_weights;               // [1 x k], sums to 1 (or uniform fallback)
    bool fallback = false;
};

// p: [1 x E] sigmoid gate probabilities for one token. Selection uses p + bias;
// gate weights use raw p only.
RouteResult route(const ad::Var& p, RouterState& state);

// Per-token residual + shared experts + gate-weighted routed experts.
// Increments state.load_counts per selection.
ad::Var smoe_forward(const ad::Var& o, const SmoeParams& params, RouterState& state);

// Sign-rule bias update, applied between optimizer steps, outside the
// gradient path. Resets load_counts.
void update_bias(RouterState& state);

}  // namespace brainof
