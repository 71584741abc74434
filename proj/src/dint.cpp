#include "brainof/dint.hpp"

#include <cmath>
#include <numeric>

#include "brainof/errors.hpp"

namespace brainof {

DintParams make_dint(ParamStore& store, const ModelConfig& cfg, std::size_t layer_index,
                     Rng& rng, const std::string& prefix) {
    const std::size_t d = cfg.embed_dim;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    DintParams p;
    p.layer_index = layer_index;
    p.wq = store.gaussian(prefix + ".wq", {d, d}, rng, sd);
    p.wk = store.gaussian(prefix + ".wk", {d, d}, rng, sd);
    p.wv = store.gaussian(prefix + ".wv", {d, d}, rng, sd);
    p.wo = store.gaussian(prefix + ".wo", {d, d}, rng, sd);
    const std::size_t half = cfg.half_head_dim();
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        DintHeadLambda lam;
        lam.q1 = store.gaussian(hp + ".lambda_q1", {half}, rng, 0.1);
        lam.k1 = store.gaussian(hp + ".lambda_k1", {half}, rng, 0.1);
        lam.q2 = store.gaussian(hp + ".lambda_q2", {half}, rng, 0.1);
        lam.k2 = store.gaussian(hp + ".lambda_k2", {half}, rng, 0.1);
        p.lambdas.push_back(std::move(lam));
    }
    return p;
}

double lambda_init(std::size_t layer_index) {
    if (layer_index < 1) throw InputError("lambda_init: layer index must be >= 1");
    return 0.8 - 0.6 * std::exp(-0.3 * static_cast<double>(layer_index - 1));
}

ad::Var lambda_value(const DintHeadLambda& lam, std::size_t layer_index) {
    ad::Var d1 = ad::clamp(ad::vdot(lam.q1, lam.k1), -20.0, 20.0);
    ad::Var d2 = ad::clamp(ad::vdot(lam.q2, lam.k2), -20.0, 20.0);
    return ad::add_const(ad::sub(ad::vexp(d1), ad::vexp(d2)), lambda_init(layer_index));
}

ad::Var dint_attention(const ad::Var& z, const DintParams& params, const ModelConfig& cfg) {
    const std::size_t c = z->value.shape[0];
    const std::size_t two_d = cfg.head_dim();
    const std::size_t d = cfg.half_head_dim();
    if (d % 2 != 0) throw ConfigError("dint: half head dim must be even for RoPE");
    ad::Var q = ad::matmul(z, params.wq);
    ad::Var k = ad::matmul(z, params.wk);
    ad::Var v = ad::matmul(z, params.wv);

    std::vector<std::size_t> pos(c);
    std::iota(pos.begin(), pos.end(), 0);
    ad::Var col_mean = ad::constant(Tensor::full({c, c}, 1.0 / static_cast<double>(c)));

    ad::Var out;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::size_t base = h * two_d;
        ad::Var q1 = ad::rope_rows(ad::slice_cols(q, base, base + d), pos);
        ad::Var q2 = ad::rope_rows(ad::slice_cols(q, base + d, base + two_d), pos);
        ad::Var k1 = ad::rope_rows(ad::slice_cols(k, base, base + d), pos);
        ad::Var k2 = ad::rope_rows(ad::slice_cols(k, base + d, base + two_d), pos);
        ad::Var vh = ad::slice_cols(v, base, base + two_d);

        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        ad::Var a1 = ad::softmax_rows(ad::scale(ad::matmul(q1, ad::transpose(k1)), inv_sqrt_d));
        ad::Var a2 = ad::softmax_rows(ad::scale(ad::matmul(q2, ad::transpose(k2)), inv_sqrt_d));
        ad::Var lam = lambda_value(params.lambdas[h], params.layer_index);

        ad::Var a_diff = ad::sub(a1, ad::scale_var(a2, lam));
        ad::Var g_expanded = ad::matmul(col_mean, a1);  // rows all equal to the column mean of A1
        ad::Var combined = ad::add(a_diff, ad::scale_var(g_expanded, lam));
        ad::Var oh = ad::matmul(combined, vh);
        out = h == 0 ? oh : ad::concat_cols(out, oh);
    }
    return ad::matmul(out, params.wo);
}

}  // namespace brainof
