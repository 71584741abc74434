#pragma once

#include <string>
#include <vector>

#include "brainof/ad.hpp"
#include "brainof/model_config.hpp"
#include "brainof/params.hpp"

namespace brainof {

// Differential-integral attention over the latent tokens. Per head the Q/K
// projections (width 2d) are split into halves; the difference of the two
// attention maps cancels noise and a row-stochastic column-mean term restores
// global context so combined rows sum to one.
struct DintHeadLambda {
    ad::Var q1, k1, q2, k2;  // vectors of length d
};

struct DintParams {
    ad::Var wq, wk, wv, wo;  // [D x D]
    std::vector<DintHeadLambda> lambdas;
    std::size_t layer_index = 1;  // l >= 1
};

DintParams make_dint(ParamStore& store, const ModelConfig& cfg, std::size_t layer_index,
                     Rng& rng, const std::string& prefix);

// 0.8 - 0.6*exp(-0.3*(l-1))
double lambda_init(std::size_t layer_index);

// exp(<q1,k1>) - exp(<q2,k2>) + lambda_init(l), dot products clamped to [-20, 20]
ad::Var lambda_value(const DintHeadLambda& lam, std::size_t layer_index);

ad::Var dint_attention(const ad::Var& z, const DintParams& params, const ModelConfig& cfg);

}  // namespace brainof
