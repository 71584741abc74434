#include "brainof/smoe.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>

#include "brainof/errors.hpp"

namespace brainof {

SmoeParams make_smoe(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                     const std::string& prefix) {
    const std::size_t d = cfg.embed_dim, h = cfg.expert_hidden_dim();
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sh = 1.0 / std::sqrt(static_cast<double>(h));
    SmoeParams p;
    p.gate = store.gaussian(prefix + ".gate", {d, cfg.routed_experts}, rng, sd);
    for (std::size_t i = 0; i < cfg.shared_experts; ++i) {
        const std::string ep = prefix + ".shared" + std::to_string(i);
        p.shared.push_back({store.gaussian(ep + ".w1", {d, h}, rng, sd),
                            store.gaussian(ep + ".w2", {h, d}, rng, sh)});
    }
    for (std::size_t i = 0; i < cfg.routed_experts; ++i) {
        const std::string ep = prefix + ".routed" + std::to_string(i);
        p.routed.push_back({store.gaussian(ep + ".w1", {d, h}, rng, sd),
                            store.gaussian(ep + ".w2", {h, d}, rng, sh)});
    }
    return p;
}

RouteResult route(const ad::Var& p, RouterState& state) {
    const std::size_t e = p->value.numel();
    if (state.k < 1 || state.k > e) throw ConfigError("route: need 1 <= k <= E");
    if (state.bias.numel() != e) throw DimensionError("route: bias size != E");

    std::vector<std::size_t> order(e);
    std::iota(order.begin(), order.end(), 0);
    // descending by p + b; stable sort keeps lower index first on ties
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return p->value.data[a] + state.bias.data[a] > p->value.data[b] + state.bias.data[b];
    });

    RouteResult r;
    r.selected.assign(order.begin(), order.begin() + static_cast<long>(state.k));
    double psum = 0.0;
    for (std::size_t i : r.selected) psum += p->value.data[i];
    if (psum == 0.0) {
        r.fallback = true;
        state.zero_p_fallback = true;
        r.gate_weights = ad::constant(Tensor::full({1, state.k}, 1.0 / static_cast<double>(state.k)));
    } else {
        ad::Var sel = ad::gather_cols(p, r.selected);
        r.gate_weights = ad::div_var(sel, ad::sum(sel));
    }
    return r;
}

ad::Var smoe_forward(const ad::Var& o, const SmoeParams& params, RouterState& state) {
    const std::size_t c = o->value.shape[0];
    ad::Var probs = ad::sigmoid(ad::matmul(o, params.gate));  // [C x E]
    ad::Var out;
    for (std::size_t n = 0; n < c; ++n) {
        ad::Var row = ad::slice_rows(o, n, n + 1);
        ad::Var acc = row;
        for (const auto& ex : params.shared)
            acc = ad::add(acc, ad::matmul(ad::gelu(ad::matmul(row, ex.w1)), ex.w2));
        RouteResult rr = route(ad::slice_rows(probs, n, n + 1), state);
        for (std::size_t j = 0; j < rr.selected.size(); ++j) {
            const auto& ex = params.routed[rr.selected[j]];
            state.load_counts[rr.selected[j]] += 1;
            ad::Var g = ad::gather_cols(rr.gate_weights, {j});
            acc = ad::add(acc, ad::scale_var(ad::matmul(ad::gelu(ad::matmul(row, ex.w1)), ex.w2), g));
        }
        out = n == 0 ? acc : ad::concat_rows(out, acc);
    }
    return out;
}

void update_bias(RouterState& state) {
    const std::size_t e = state.load_counts.size();
    double total = 0.0;
    for (std::size_t l : state.load_counts) total += static_cast<double>(l);
    const double mean = total / static_cast<double>(e);
    for (std::size_t i = 0; i < e; ++i) {
        const double diff = static_cast<double>(state.load_counts[i]) - mean;
        if (diff > 0.0) state.bias.data[i] -= state.gamma;
        else if (diff < 0.0) state.bias.data[i] += state.gamma;
        state.load_counts[i] = 0;
    }
    state.zero_p_fallback = false;
}

}  // namespace brainof
