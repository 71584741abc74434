#include "brainof/encoder.hpp"

#include <cmath>

#include "brainof/errors.hpp"

namespace brainof {

EncoderParams make_encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                           const std::string& prefix) {
    EncoderParams p;
    std::size_t ch_in = 1;
    for (std::size_t l = 0; l < cfg.conv_channels.size(); ++l) {
        const std::size_t ch_out = cfg.conv_channels[l];
        p.conv_w.push_back(store.gaussian(prefix + ".conv" + std::to_string(l) + ".w",
                                          {ch_out, ch_in * 3}, rng,
                                          1.0 / std::sqrt(3.0 * static_cast<double>(ch_in))));
        ch_in = ch_out;
    }
    const std::size_t flat = ch_in * cfg.patch_len;
    p.norm_gain = store.create(prefix + ".norm.gain", Tensor::full({flat}, 1.0));
    p.proj = store.gaussian(prefix + ".proj.w", {flat, cfg.embed_dim}, rng,
                            1.0 / std::sqrt(static_cast<double>(flat)));
    return p;
}

ad::Var encode(const ad::Var& patches, const std::vector<std::uint8_t>& valid,
               const EncoderParams& params, const ModelConfig& cfg) {
    if (patches->value.shape[1] != cfg.patch_len)
        throw DimensionError("encode: patch length mismatch");
    if (valid.size() != patches->value.shape[0])
        throw DimensionError("encode: valid mask size mismatch");
    ad::Var h = patches;
    std::size_t ch_in = 1;
    for (const auto& w : params.conv_w) {
        h = ad::conv1d_patches(h, w, ch_in, cfg.patch_len);
        ch_in = w->value.shape[0];
    }
    h = ad::rms_norm_rows(h, params.norm_gain);
    h = ad::gelu(h);
    h = ad::matmul(h, params.proj);
    std::vector<double> mask(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i) mask[i] = valid[i] ? 1.0 : 0.0;
    return ad::mul_rowmask(h, mask);
}

Tensor conv1d(const Tensor& x, const Tensor& w) {
    const std::size_t ch_in = x.shape[0], t_len = x.shape[1];
    const std::size_t ch_out = w.shape[0];
    if (w.shape[1] != ch_in * 3) throw DimensionError("conv1d: weight width != ch_in*3");
    Tensor out({ch_out, t_len});
    for (std::size_t o = 0; o < ch_out; ++o)
        for (std::size_t t = 0; t < t_len; ++t) {
            double acc = 0.0;
            for (std::size_t c = 0; c < ch_in; ++c)
                for (std::size_t j = 0; j < 3; ++j) {
                    const long ti = static_cast<long>(t) + static_cast<long>(j) - 1;
                    if (ti < 0 || ti >= static_cast<long>(t_len)) continue;
                    acc += w.at(o, c * 3 + j) * x.at(c, static_cast<std::size_t>(ti));
                }
            out.at(o, t) = acc;
        }
    return out;
}

}  // namespace brainof
