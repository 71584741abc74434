#include "brainof/gradsuite.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>

#include "brainof/arness.hpp"
#include "brainof/dint.hpp"
#include "brainof/encoder.hpp"
#include "brainof/gradcheck.hpp"
#include "brainof/model.hpp"
#include "brainof/mtfm.hpp"
#include "brainof/rng.hpp"
#include "brainof/signal.hpp"
#include "brainof/smoe.hpp"

namespace brainof {

namespace {

Tensor randn(Rng& rng, std::vector<std::size_t> shape, double stddev = 0.5) {
    Tensor t(std::move(shape));
    for (double& e : t.data) e = rng.normal(0.0, stddev);
    return t;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.latents = 4;
    cfg.heads = 2;       // head_dim 4, RoPE half 2
    cfg.patch_len = 4;
    cfg.max_seq_len = 8;
    cfg.backbone_layers = 1;
    cfg.arness_layers = 1;
    cfg.routed_experts = 3;
    cfg.active_experts = 2;
    cfg.shared_experts = 1;
    cfg.expert_hidden = 4;
    cfg.conv_channels = {2};
    return cfg;
}

double check_elementwise(Rng& rng) {
    auto fn = [](const std::vector<ad::Var>& v) {
        ad::Var a = v[0], b = v[1];
        ad::Var x = ad::add(ad::mul(a, b), ad::scale(ad::sub(a, b), 0.7));
        x = ad::add(ad::gelu(x), ad::sigmoid(ad::add_const(x, 0.3)));
        x = ad::add(x, ad::sqrt_elem(ad::add_const(ad::mul(a, a), 0.5)));
        return ad::mean(x);
    };
    return grad_check(fn, {randn(rng, {3, 4}), randn(rng, {3, 4})}).max_rel_err;
}

double check_structural(Rng& rng) {
    auto fn = [](const std::vector<ad::Var>& v) {
        ad::Var a = v[0], b = v[1], row = v[2];
        ad::Var m = ad::matmul(a, ad::transpose(b));      // [3 x 3]
        m = ad::concat_rows(m, ad::slice_rows(m, 0, 1));  // [4 x 3]
        m = ad::concat_cols(m, ad::slice_cols(m, 1, 3));  // [4 x 5]
        m = ad::slice_cols(m, 0, 3);
        m = ad::add_rowvec(ad::mul_rowvec(m, row), row);
        m = ad::mul_rowmask(m, {1.0, 0.5, 1.0, 0.0});
        m = ad::reindex(m, {2, 4}, {0, 3, -1, 5, 2, 2, 7, -1});
        return ad::sum(ad::mean_rows(m));
    };
    return grad_check(fn, {randn(rng, {3, 4}), randn(rng, {3, 4}), randn(rng, {1, 3})})
        .max_rel_err;
}

double check_norm_attn_prims(Rng& rng) {
    std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    auto fn = [&mask](const std::vector<ad::Var>& v) {
        ad::Var x = v[0], gain = v[1], w = v[2];
        ad::Var s = ad::softmax_rows(ad::matmul(x, w), &mask);
        ad::Var r = ad::rms_norm_rows(ad::matmul(s, ad::transpose(w)), gain);
        ad::Var ro = ad::rope_rows(r, {0, 2, 5});
        return ad::mean(ro);
    };
    return grad_check(fn, {randn(rng, {3, 4}), randn(rng, {4}), randn(rng, {4, 4})}).max_rel_err;
}

double check_scalar_prims(Rng& rng) {
    auto fn = [](const std::vector<ad::Var>& v) {
        ad::Var a = v[0], b = v[1], p = v[2];
        ad::Var d = ad::clamp(ad::vdot(a, b), -20.0, 20.0);
        ad::Var lam = ad::vexp(d);
        ad::Var sel = ad::gather_cols(p, {2, 0});
        ad::Var g = ad::div_var(sel, ad::sum(sel));
        return ad::add(ad::sum(ad::scale_var(g, lam)), ad::mean(ad::scale_var(v[0], lam)));
    };
    return grad_check(fn, {randn(rng, {4}, 0.2), randn(rng, {4}, 0.2),
                           Tensor({1, 4}, {0.6, 0.2, 0.9, 0.4})})
        .max_rel_err;
}

double check_losses(Rng& rng) {
    Tensor target = randn(rng, {3, 4});
    auto fn = [&target](const std::vector<ad::Var>& v) {
        ad::Var l1 = ad::smooth_l1(v[0], ad::constant(target));
        ad::Var ce = ad::cross_entropy_logits(v[1], {1, 0, 1});
        return ad::add(l1, ce);
    };
    return grad_check(fn, {randn(rng, {3, 4}), randn(rng, {3, 2})}).max_rel_err;
}

double check_conv(Rng& rng) {
    auto fn = [](const std::vector<ad::Var>& v) {
        ad::Var h = ad::conv1d_patches(v[0], v[1], 1, 5);
        h = ad::conv1d_patches(h, v[2], 2, 5);
        return ad::mean(h);
    };
    return grad_check(fn, {randn(rng, {3, 5}), randn(rng, {2, 3}), randn(rng, {2, 6})})
        .max_rel_err;
}

double check_spectral(Rng& rng) {
    auto fn = [](const std::vector<ad::Var>& v) {
        ad::Var t = spectral_magnitude_var(v[0], Modality::EEG);
        ad::Var s = spectral_magnitude_var(ad::transpose(v[0]), Modality::fMRI);
        return ad::add(ad::mean(t), ad::mean(s));
    };
    return grad_check(fn, {randn(rng, {3, 6})}).max_rel_err;
}

double check_dint(Rng& rng) {
    ModelConfig cfg = tiny_config();
    auto fn = [&cfg](const std::vector<ad::Var>& v) {
        DintParams p;
        p.wq = v[0];
        p.wk = v[1];
        p.wv = v[2];
        p.wo = v[3];
        p.layer_index = 1;
        std::size_t i = 4;
        for (std::size_t h = 0; h < cfg.heads; ++h)
            p.lambdas.push_back({v[i++], v[i++], v[i++], v[i++]});
        return ad::mean(dint_attention(v[i], p, cfg));
    };
    std::vector<Tensor> in;
    const std::size_t d = cfg.embed_dim, half = cfg.half_head_dim();
    for (int k = 0; k < 4; ++k) in.push_back(randn(rng, {d, d}, 0.3));
    for (std::size_t h = 0; h < cfg.heads; ++h)
        for (int k = 0; k < 4; ++k) in.push_back(randn(rng, {half}, 0.1));
    in.push_back(randn(rng, {cfg.latents, d}));
    return grad_check(fn, in).max_rel_err;
}

double check_arness(Rng& rng) {
    ModelConfig cfg = tiny_config();
    const std::size_t d = cfg.embed_dim;
    std::vector<std::uint8_t> key_mask = {1, 1, 1, 1, 1, 0};
    auto fn = [&cfg, &key_mask](const std::vector<ad::Var>& v) {
        ArnessParams p;
        p.z0 = v[0];
        ArnessLayerParams lay;
        lay.wq = v[1];
        lay.wk = v[2];
        lay.wv = v[3];
        lay.wo = v[4];
        lay.norm_attn_gain = v[5];
        lay.norm_ffn_gain = v[6];
        lay.ffn_w1 = v[7];
        lay.ffn_w2 = v[8];
        p.layers.push_back(lay);
        ad::Var z = resample(v[9], key_mask, p.z0, p, cfg);

        DecoderParams dec;
        dec.query_slots = v[10];
        dec.wq = v[11];
        dec.wk = v[12];
        dec.wv = v[13];
        dec.wo = v[14];
        dec.norm_gain = v[15];
        dec.head_w = v[16];
        std::vector<std::uint8_t> valid = {1, 1, 1, 0, 1};
        return ad::mean(decode(z, dec, valid, cfg));
    };
    std::vector<Tensor> in;
    in.push_back(randn(rng, {cfg.latents, d}, 0.3));                    // z0
    for (int k = 0; k < 4; ++k) in.push_back(randn(rng, {d, d}, 0.3));  // attn
    in.push_back(randn(rng, {d}, 0.3));
    in.push_back(randn(rng, {d}, 0.3));
    in.push_back(randn(rng, {d, 2 * d}, 0.3));
    in.push_back(randn(rng, {2 * d, d}, 0.3));
    in.push_back(randn(rng, {6, d}));  // x tokens
    in.push_back(randn(rng, {5, d}, 0.3));  // query slots
    for (int k = 0; k < 4; ++k) in.push_back(randn(rng, {d, d}, 0.3));
    in.push_back(randn(rng, {d}, 0.3));
    in.push_back(randn(rng, {d, cfg.patch_len}, 0.3));
    return grad_check(fn, in).max_rel_err;
}

// Smallest gap between the k-th and (k+1)-th selection score over all tokens;
// finite differences need this to exceed the probe step or selection flips.
double smoe_margin(const Tensor& o, const Tensor& gate, std::size_t k) {
    double margin = 1e300;
    Tensor p = matmul(o, gate);
    for (double& e : p.data) e = 1.0 / (1.0 + std::exp(-e));
    for (std::size_t n = 0; n < p.rows(); ++n) {
        std::vector<double> row(p.cols());
        for (std::size_t j = 0; j < p.cols(); ++j) row[j] = p.at(n, j);
        std::sort(row.begin(), row.end(), std::greater<>());
        margin = std::min(margin, row[k - 1] - row[k]);
    }
    return margin;
}

double check_smoe(Rng& rng) {
    ModelConfig cfg = tiny_config();
    const std::size_t d = cfg.embed_dim, hh = cfg.expert_hidden_dim();
    Tensor o, gate;
    do {
        o = randn(rng, {cfg.latents, d});
        gate = randn(rng, {d, cfg.routed_experts}, 0.4);
    } while (smoe_margin(o, gate, cfg.active_experts) < 1e-3);

    auto fn = [&cfg](const std::vector<ad::Var>& v) {
        SmoeParams p;
        p.gate = v[0];
        p.shared.push_back({v[1], v[2]});
        std::size_t i = 3;
        for (std::size_t e = 0; e < cfg.routed_experts; ++e) {
            p.routed.push_back({v[i], v[i + 1]});
            i += 2;
        }
        RouterState state(cfg.routed_experts, cfg.active_experts);
        return ad::mean(smoe_forward(v[i], p, state));
    };
    std::vector<Tensor> in;
    in.push_back(gate);
    for (std::size_t e = 0; e < cfg.shared_experts + cfg.routed_experts; ++e) {
        in.push_back(randn(rng, {d, hh}, 0.3));
        in.push_back(randn(rng, {hh, d}, 0.3));
    }
    in.push_back(o);
    return grad_check(fn, in).max_rel_err;
}

// Bespoke FD loop over every model parameter: encode -> resample -> DINT ->
// SMoE -> decode -> L_MTFM. grad_check's functional interface does not fit a
// stateful parameter store, so the same central-difference formula is applied
// directly to the store.
double check_pipeline(std::uint64_t seed) {
    ModelConfig cfg = tiny_config();
    for (std::uint64_t attempt = 0;; ++attempt) {
        const std::uint64_t s = seed + 1000 * attempt;
        BrainOfModel model(cfg, s);
        SyntheticOptions so;
        so.modality = Modality::EEG;
        so.n_samples = 1;
        so.seed = s;
        Signal sig = generate_synthetic(so).front().signal;
        // shrink to the tiny geometry: 2 channels x 16 timepoints
        Tensor small({2, 16});
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t t = 0; t < 16; ++t) small.at(c, t) = sig.values.at(c, t);
        sig.values = small;

        TokenSequence ts = patchify(sig, cfg.patch_len, cfg.max_seq_len);

        // selection-margin guard (see smoe_margin): re-seed on near-ties
        bool ok = true;
        {
            ad::Var tokens = encode(ad::constant(ts.patches), ts.valid, model.encoder, cfg);
            ad::Var z = fuse({{tokens, attention_mask(ts)}}, model.arness, cfg);
            ad::Var attn = dint_attention(
                ad::rms_norm_rows(z, model.blocks[0].norm_attn_gain), model.blocks[0].dint, cfg);
            ad::Var z1 = ad::add(z, ad::mul_rowvec(attn, model.blocks[0].ls_attn));
            ad::Var n = ad::rms_norm_rows(z1, model.blocks[0].norm_moe_gain);
            if (smoe_margin(n->value, model.blocks[0].smoe.gate->value, cfg.active_experts) < 1e-3)
                ok = false;
        }
        model.reset_router_loads();
        if (!ok) continue;

        auto loss_of = [&]() {
            model.reset_router_loads();
            ad::Var z = model.latents(ts);
            ad::Var s_hat = model.reconstruct_values(z, ts);
            return mtfm_loss(s_hat, sig, 0.8).total;
        };

        model.store.zero_grad();
        ad::Var loss = loss_of();
        ad::backward(loss);

        const double step = 1e-5;
        double worst = 0.0;
        for (const auto& [name, p] : model.store.all()) {
            for (std::size_t i = 0; i < p->value.numel(); ++i) {
                const double orig = p->value.data[i];
                p->value.data[i] = orig + step;
                const double fp = loss_of()->value.data[0];
                p->value.data[i] = orig - step;
                const double fm = loss_of()->value.data[0];
                p->value.data[i] = orig;
                const double numeric = (fp - fm) / (2.0 * step);
                const double analytic = p->grad.data[i];
                // The objective is O(1), so the central difference carries
                // ~1e-16/(2*step) of rounding noise. Gradients below 1e-6
                // cannot be resolved to 1e-4 relative accuracy by any FD step;
                // they are compared absolutely instead (trivially within noise).
                if (std::abs(analytic) < 1e-6 && std::abs(numeric) < 1e-6) continue;
                const double rel = std::abs(analytic - numeric) /
                                   (std::abs(analytic) + std::abs(numeric) + 1e-12);
                if (std::getenv("BRAINOF_GRAD_DEBUG") && rel > 1e-4)
                    std::fprintf(stderr, "pipeline fd: %s[%zu] analytic %.12g numeric %.12g rel %.3g\n",
                                 name.c_str(), i, analytic, numeric, rel);
                worst = std::max(worst, rel);
            }
        }
        return worst;
    }
}

}  // namespace

std::map<std::string, double> run_grad_suite(std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "gradsuite");
    std::map<std::string, double> out;
    out["elementwise"] = check_elementwise(rng);
    out["structural"] = check_structural(rng);
    out["norm_softmax_rope"] = check_norm_attn_prims(rng);
    out["scalar_prims"] = check_scalar_prims(rng);
    out["losses"] = check_losses(rng);
    out["conv"] = check_conv(rng);
    out["spectral"] = check_spectral(rng);
    out["dint"] = check_dint(rng);
    out["arness"] = check_arness(rng);
    out["smoe"] = check_smoe(rng);
    out["pipeline"] = check_pipeline(seed);
    return out;
}

}  // namespace brainof
