#include "brainof/arness.hpp"

#include <cmath>
#include <numeric>

#include "brainof/errors.hpp"

namespace brainof {

ArnessParams make_arness(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                         const std::string& prefix) {
    const std::size_t d = cfg.embed_dim;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    ArnessParams p;
    p.z0 = store.gaussian(prefix + ".z0", {cfg.latents, d}, rng, 1.0);
    for (std::size_t l = 0; l < cfg.arness_layers; ++l) {
        const std::string lp = prefix + ".layer" + std::to_string(l);
        ArnessLayerParams lay;
        lay.wq = store.gaussian(lp + ".wq", {d, d}, rng, sd);
        lay.wk = store.gaussian(lp + ".wk", {d, d}, rng, sd);
        lay.wv = store.gaussian(lp + ".wv", {d, d}, rng, sd);
        lay.wo = store.gaussian(lp + ".wo", {d, d}, rng, sd);
        lay.norm_attn_gain = store.create(lp + ".norm_attn.gain", Tensor::full({d}, 1.0));
        lay.norm_ffn_gain = store.create(lp + ".norm_ffn.gain", Tensor::full({d}, 1.0));
        lay.ffn_w1 = store.gaussian(lp + ".ffn.w1", {d, 2 * d}, rng, sd);
        lay.ffn_w2 = store.gaussian(lp + ".ffn.w2", {2 * d, d}, rng, sd / std::sqrt(2.0));
        p.layers.push_back(std::move(lay));
    }
    return p;
}

ad::Var multihead_attention(const ad::Var& q_in, const ad::Var& kv_in,
                            const std::vector<std::uint8_t>* key_mask, const ad::Var& wq,
                            const ad::Var& wk, const ad::Var& wv, const ad::Var& wo,
                            std::size_t heads, bool rope_q, std::size_t rope_k_prefix) {
    const std::size_t d = q_in->value.shape[1];
    if (d % heads != 0) throw ConfigError("attention: embed_dim not divisible by heads");
    if (rope_k_prefix > kv_in->value.shape[0])
        throw DimensionError("attention: rope_k_prefix exceeds key count");
    const std::size_t hd = d / heads;
    ad::Var q = ad::matmul(q_in, wq);
    ad::Var k = ad::matmul(kv_in, wk);
    ad::Var v = ad::matmul(kv_in, wv);

    std::vector<std::size_t> q_pos(q_in->value.shape[0]);
    std::iota(q_pos.begin(), q_pos.end(), 0);
    std::vector<std::size_t> k_pos(rope_k_prefix);
    std::iota(k_pos.begin(), k_pos.end(), 0);

    ad::Var out;
    for (std::size_t h = 0; h < heads; ++h) {
        ad::Var qh = ad::slice_cols(q, h * hd, (h + 1) * hd);
        ad::Var kh = ad::slice_cols(k, h * hd, (h + 1) * hd);
        ad::Var vh = ad::slice_cols(v, h * hd, (h + 1) * hd);
        if (rope_q) qh = ad::rope_rows(qh, q_pos);
        if (rope_k_prefix > 0 && rope_k_prefix < kv_in->value.shape[0]) {
            // rotate the X-derived keys by token index so patch identity
            // survives resampling; latent self-keys stay unrotated
            ad::Var kx = ad::rope_rows(ad::slice_rows(kh, 0, rope_k_prefix), k_pos);
            kh = ad::concat_rows(kx, ad::slice_rows(kh, rope_k_prefix, kh->value.shape[0]));
        } else if (rope_k_prefix > 0) {
            kh = ad::rope_rows(kh, k_pos);
        }
        ad::Var scores =
            ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(hd)));
        ad::Var attn = ad::softmax_rows(scores, key_mask);
        ad::Var oh = ad::matmul(attn, vh);
        out = h == 0 ? oh : ad::concat_cols(out, oh);
    }
    return ad::matmul(out, wo);
}

namespace {
ad::Var resample_layer(const ad::Var& x, const std::vector<std::uint8_t>& key_mask,
                       const ad::Var& z, const ArnessLayerParams& lay, const ModelConfig& cfg) {
    const std::size_t l = x->value.shape[0];
    if (key_mask.size() != l) throw DimensionError("resample: key mask size mismatch");
    ad::Var zn = ad::rms_norm_rows(z, lay.norm_attn_gain);
    ad::Var kv = l > 0 ? ad::concat_rows(ad::rms_norm_rows(x, lay.norm_attn_gain), zn) : zn;
    std::vector<std::uint8_t> mask(key_mask);
    mask.insert(mask.end(), cfg.latents, 1);  // latent self-keys always visible
    ad::Var attn = multihead_attention(zn, kv, &mask, lay.wq, lay.wk, lay.wv, lay.wo,
                                       cfg.heads, false, l);
    ad::Var z1 = ad::add(z, attn);
    ad::Var h = ad::rms_norm_rows(z1, lay.norm_ffn_gain);
    h = ad::matmul(ad::gelu(ad::matmul(h, lay.ffn_w1)), lay.ffn_w2);
    return ad::add(z1, h);
}
}  // namespace

ad::Var resample(const ad::Var& x, const std::vector<std::uint8_t>& key_mask,
                 const ad::Var& z_in, const ArnessParams& params, const ModelConfig& cfg) {
    ad::Var z = z_in;
    for (const auto& lay : params.layers) z = resample_layer(x, key_mask, z, lay, cfg);
    return z;
}

ad::Var fuse(const std::vector<std::pair<ad::Var, std::vector<std::uint8_t>>>& sequences,
             const ArnessParams& params, const ModelConfig& cfg) {
    if (sequences.empty()) throw InputError("fuse: sequence list must be non-empty");
    ad::Var z = params.z0;
    for (const auto& [x, mask] : sequences) z = resample(x, mask, z, params, cfg);
    return z;
}

DecoderParams make_decoder(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                           const std::string& prefix) {
    const std::size_t d = cfg.embed_dim;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    DecoderParams p;
    p.query_slots = store.gaussian(prefix + ".query_slots", {cfg.max_seq_len, d}, rng, 1.0);
    p.wq = store.gaussian(prefix + ".wq", {d, d}, rng, sd);
    p.wk = store.gaussian(prefix + ".wk", {d, d}, rng, sd);
    p.wv = store.gaussian(prefix + ".wv", {d, d}, rng, sd);
    p.wo = store.gaussian(prefix + ".wo", {d, d}, rng, sd);
    p.norm_gain = store.create(prefix + ".norm.gain", Tensor::full({d}, 1.0));
    p.head_w = store.gaussian(prefix + ".head.w", {d, cfg.patch_len}, rng, sd);
    return p;
}

ad::Var decode(const ad::Var& z, const DecoderParams& params,
               const std::vector<std::uint8_t>& valid, const ModelConfig& cfg) {
    const std::size_t l = valid.size();
    if (l > params.query_slots->value.shape[0])
        throw DimensionError("decode: more slots requested than configured");
    ad::Var q = l == params.query_slots->value.shape[0]
                    ? params.query_slots
                    : ad::slice_rows(params.query_slots, 0, l);
    ad::Var kv = ad::rms_norm_rows(z, params.norm_gain);
    // all latents valid; RoPE on queries distinguishes slot positions
    ad::Var attn =
        multihead_attention(q, kv, nullptr, params.wq, params.wk, params.wv, params.wo,
                            cfg.heads, true);
    ad::Var patches = ad::matmul(attn, params.head_w);
    std::vector<double> mask(l);
    for (std::size_t i = 0; i < l; ++i) mask[i] = valid[i] ? 1.0 : 0.0;
    return ad::mul_rowmask(patches, mask);
}

}  // namespace brainof
