#include "brainof/model.hpp"

#include "brainof/errors.hpp"

namespace brainof {

void ModelConfig::validate() const {
    if (embed_dim == 0 || latents == 0 || heads == 0 || patch_len == 0 || max_seq_len == 0)
        throw ConfigError("config: embed_dim, latents, heads, patch_len, max_seq_len must be positive");
    if (embed_dim % heads != 0) throw ConfigError("config: embed_dim must be divisible by heads");
    if (head_dim() % 4 != 0)
        throw ConfigError("config: per-head dim must be a multiple of 4 (even RoPE halves)");
    if (routed_experts == 0 || active_experts == 0 || active_experts > routed_experts)
        throw ConfigError("config: need 1 <= active_experts <= routed_experts");
    if (conv_channels.empty()) throw ConfigError("config: conv_channels must be non-empty");
    if (arness_layers == 0) throw ConfigError("config: arness_layers must be >= 1");
    if (layer_scale_init < 0.0) throw ConfigError("config: layer_scale_init must be >= 0");
}

BrainOfModel::BrainOfModel(ModelConfig config, std::uint64_t seed) : cfg(std::move(config)) {
    cfg.validate();
    Rng rng = Rng::substream(seed, "init");
    encoder = make_encoder(store, cfg, rng, "encoder");
    arness = make_arness(store, cfg, rng, "arness");
    for (std::size_t l = 0; l < cfg.backbone_layers; ++l) {
        const std::string bp = "backbone" + std::to_string(l);
        BackboneBlock b;
        b.norm_attn_gain = store.create(bp + ".norm_attn.gain", Tensor::full({cfg.embed_dim}, 1.0));
        b.norm_moe_gain = store.create(bp + ".norm_moe.gain", Tensor::full({cfg.embed_dim}, 1.0));
        b.ls_attn = store.create(bp + ".ls_attn", Tensor::full({1, cfg.embed_dim}, cfg.layer_scale_init));
        b.ls_moe = store.create(bp + ".ls_moe", Tensor::full({1, cfg.embed_dim}, cfg.layer_scale_init));
        b.dint = make_dint(store, cfg, l + 1, rng, bp + ".dint");
        b.smoe = make_smoe(store, cfg, rng, bp + ".smoe");
        blocks.push_back(std::move(b));
        routers.emplace_back(cfg.routed_experts, cfg.active_experts);
    }
    decoder = make_decoder(store, cfg, rng, "decoder");
}

ad::Var BrainOfModel::backbone(const ad::Var& z0) {
    ad::Var z = z0;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        auto& b = blocks[l];
        ad::Var attn = dint_attention(ad::rms_norm_rows(z, b.norm_attn_gain), b.dint, cfg);
        z = ad::add(z, ad::mul_rowvec(attn, b.ls_attn));
        ad::Var n = ad::rms_norm_rows(z, b.norm_moe_gain);
        ad::Var experts = ad::sub(smoe_forward(n, b.smoe, routers[l]), n);
        z = ad::add(z, ad::mul_rowvec(experts, b.ls_moe));
    }
    return z;
}

ad::Var BrainOfModel::latents(const TokenSequence& ts) {
    ad::Var tokens = encode(ad::constant(ts.patches), ts.valid, encoder, cfg);
    ad::Var z = fuse({{tokens, attention_mask(ts)}}, arness, cfg);
    return backbone(z);
}

ad::Var BrainOfModel::decode_patches(const ad::Var& z, const TokenSequence& ts) {
    return decode(z, decoder, ts.valid, cfg);
}

ad::Var BrainOfModel::reconstruct_values(const ad::Var& z, const TokenSequence& ts) {
    ad::Var patches = decode_patches(z, ts);
    return ad::reindex(patches, {ts.layout.n_channels, ts.layout.t_len},
                       unpatchify_map(ts.layout));
}

void BrainOfModel::reset_router_loads() {
    for (auto& r : routers) {
        std::fill(r.load_counts.begin(), r.load_counts.end(), 0);
        r.zero_p_fallback = false;
    }
}

}  // namespace brainof
