#include "brainof/mtfm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "brainof/errors.hpp"

namespace brainof {

namespace {
std::vector<std::size_t> draw_without_replacement(std::size_t count, std::size_t pool, Rng& rng) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < count && i + 1 < pool; ++i) {
        const std::size_t j = static_cast<std::size_t>(rng.integer(i, pool - 1));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double clipped_ratio(Rng& rng, double mean, double stddev) {
    return std::clamp(rng.normal(mean, stddev), 0.0, 1.0);
}
}  // namespace

MaskPlan sample_mask_plan(const Signal& s, const PatchLayout& layout, Rng& rng, double mean,
                          double stddev) {
    MaskPlan plan;
    plan.freq_ratio = clipped_ratio(rng, mean, stddev);
    plan.temporal_ratio = clipped_ratio(rng, mean, stddev);

    const bool spatial = s.modality == Modality::fMRI;
    const std::size_t n_rows = spatial ? s.timepoints() : s.channels();
    const std::size_t axis_len = spatial ? s.channels() : s.timepoints();
    const std::size_t bins = axis_len / 2 + 1;
    const auto n_bins =
        static_cast<std::size_t>(std::llround(plan.freq_ratio * static_cast<double>(bins)));
    for (std::size_t r = 0; r < n_rows; ++r)
        plan.masked_bins.push_back(draw_without_replacement(n_bins, bins, rng));

    const std::size_t valid = layout.valid_tokens();
    const auto n_patches =
        static_cast<std::size_t>(std::llround(plan.temporal_ratio * static_cast<double>(valid)));
    plan.masked_patches = draw_without_replacement(n_patches, valid, rng);
    return plan;
}

std::vector<Spectrum> freq_transform(const Signal& s) {
    const bool spatial = s.modality == Modality::fMRI;
    const std::size_t axis_len = spatial ? s.channels() : s.timepoints();
    if (axis_len < 2) throw InputError("freq_transform: transformed axis shorter than 2");
    std::vector<Spectrum> out;
    if (spatial) {
        for (std::size_t t = 0; t < s.timepoints(); ++t) {
            std::vector<double> col(s.channels());
            for (std::size_t c = 0; c < s.channels(); ++c) col[c] = s.values.at(c, t);
            out.push_back(rfft(col, 0));
        }
    } else {
        for (std::size_t c = 0; c < s.channels(); ++c) {
            std::vector<double> row(s.timepoints());
            for (std::size_t t = 0; t < s.timepoints(); ++t) row[t] = s.values.at(c, t);
            out.push_back(rfft(row, 1));
        }
    }
    return out;
}

Tensor inverse_freq_transform(Modality m, const std::vector<Spectrum>& spectra,
                              std::size_t n_channels, std::size_t t_len) {
    Tensor out({n_channels, t_len});
    if (m == Modality::fMRI) {
        if (spectra.size() != t_len) throw DimensionError("inverse_freq_transform: column count");
        for (std::size_t t = 0; t < t_len; ++t) {
            const auto col = irfft(spectra[t]);
            for (std::size_t c = 0; c < n_channels; ++c) out.at(c, t) = col[c];
        }
    } else {
        if (spectra.size() != n_channels) throw DimensionError("inverse_freq_transform: row count");
        for (std::size_t c = 0; c < n_channels; ++c) {
            const auto row = irfft(spectra[c]);
            for (std::size_t t = 0; t < t_len; ++t) out.at(c, t) = row[t];
        }
    }
    return out;
}

Signal apply_freq_mask(const Signal& s, const MaskPlan& plan) {
    auto spectra = freq_transform(s);
    if (plan.masked_bins.size() != spectra.size())
        throw DimensionError("apply_freq_mask: plan row count mismatch");
    for (std::size_t r = 0; r < spectra.size(); ++r)
        for (std::size_t k : plan.masked_bins[r]) {
            spectra[r].re[k] = 0.0;
            spectra[r].im[k] = 0.0;
        }
    Signal out = s;
    out.values = inverse_freq_transform(s.modality, spectra, s.channels(), s.timepoints());
    return out;
}

Signal apply_temporal_mask(const Signal& s, const MaskPlan& plan, std::size_t patch_len) {
    Signal out = s;
    const std::size_t per_ch = (s.timepoints() + patch_len - 1) / patch_len;
    for (std::size_t p : plan.masked_patches) {
        const std::size_t c = p / per_ch;
        const std::size_t t0 = (p % per_ch) * patch_len;
        const std::size_t t1 = std::min(s.timepoints(), t0 + patch_len);
        if (c >= s.channels()) throw InputError("apply_temporal_mask: patch index out of range");
        for (std::size_t t = t0; t < t1; ++t) out.values.at(c, t) = 0.0;
    }
    return out;
}

Tensor spectral_magnitude(const Signal& s) {
    const auto spectra = freq_transform(s);
    const std::size_t bins = spectra.front().bins();
    if (s.modality == Modality::fMRI) {
        Tensor out({bins, s.timepoints()});
        for (std::size_t t = 0; t < s.timepoints(); ++t)
            for (std::size_t k = 0; k < bins; ++k)
                out.at(k, t) = std::hypot(spectra[t].re[k], spectra[t].im[k]);
        return out;
    }
    Tensor out({s.channels(), bins});
    for (std::size_t c = 0; c < s.channels(); ++c)
        for (std::size_t k = 0; k < bins; ++k)
            out.at(c, k) = std::hypot(spectra[c].re[k], spectra[c].im[k]);
    return out;
}

namespace {
// DFT matrices for the differentiable route: cosr/sinr are [bins x n].
void dft_matrices(std::size_t n, Tensor& cosr, Tensor& sinr) {
    const std::size_t bins = n / 2 + 1;
    cosr = Tensor({bins, n});
    sinr = Tensor({bins, n});
    for (std::size_t k = 0; k < bins; ++k)
        for (std::size_t t = 0; t < n; ++t) {
            const double a = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(t) /
                             static_cast<double>(n);
            cosr.at(k, t) = std::cos(a);
            sinr.at(k, t) = std::sin(a);
        }
}
}  // namespace

ad::Var spectral_magnitude_var(const ad::Var& values, Modality m) {
    const std::size_t n_ch = values->value.shape[0];
    const std::size_t t_len = values->value.shape[1];
    Tensor cosr, sinr;
    ad::Var re, im;
    if (m == Modality::fMRI) {
        dft_matrices(n_ch, cosr, sinr);
        re = ad::matmul(ad::constant(cosr), values);  // [bins x T]
        im = ad::matmul(ad::constant(sinr), values);
    } else {
        dft_matrices(t_len, cosr, sinr);
        re = ad::matmul(values, ad::transpose(ad::constant(cosr)));  // [N x bins]
        im = ad::matmul(values, ad::transpose(ad::constant(sinr)));
    }
    return ad::sqrt_elem(ad::add(ad::mul(re, re), ad::mul(im, im)));
}

MtfmLoss mtfm_loss(const ad::Var& s_hat, const Signal& original, double alpha) {
    MtfmLoss out;
    out.time = ad::smooth_l1(s_hat, ad::constant(original.values));
    out.freq = ad::smooth_l1(spectral_magnitude_var(s_hat, original.modality),
                             ad::constant(spectral_magnitude(original)));
    out.total = ad::add(ad::scale(out.time, 1.0 - alpha), ad::scale(out.freq, alpha));
    return out;
}

std::vector<StepMetrics> pretrain(BrainOfModel& model, const std::vector<Signal>& data,
                                  const PretrainOptions& opts, OptimizerState* opt_state_out,
                                  std::string* rng_state_out, const StepCallback& on_step) {
    if (data.empty()) throw InputError("pretrain: empty dataset");
    Rng mask_rng = Rng::substream(opts.seed, "masks");
    Rng order_rng = Rng::substream(opts.seed, "data");
    OptimizerState opt_state;
    for (auto& r : model.routers) r.gamma = opts.gamma;

    const std::size_t warmup = std::max<std::size_t>(
        1, static_cast<std::size_t>(opts.warmup_frac * static_cast<double>(opts.steps)));

    std::vector<StepMetrics> metrics;
    for (std::size_t step = 1; step <= opts.steps; ++step) {
        model.store.zero_grad();
        model.reset_router_loads();
        ad::Var total, time_l, freq_l;
        for (std::size_t b = 0; b < opts.batch; ++b) {
            const auto& s = data[order_rng.integer(0, data.size() - 1)];
            TokenSequence layout_ref = patchify(s, model.cfg.patch_len, model.cfg.max_seq_len);
            MaskPlan plan =
                sample_mask_plan(s, layout_ref.layout, mask_rng, opts.mask_mean, opts.mask_std);
            Signal perturbed =
                apply_temporal_mask(apply_freq_mask(s, plan), plan, model.cfg.patch_len);
            TokenSequence ts = patchify(perturbed, model.cfg.patch_len, model.cfg.max_seq_len);
            ad::Var z = model.latents(ts);
            ad::Var s_hat = model.reconstruct_values(z, ts);
            MtfmLoss l = mtfm_loss(s_hat, s, opts.alpha);
            total = b == 0 ? l.total : ad::add(total, l.total);
            time_l = b == 0 ? l.time : ad::add(time_l, l.time);
            freq_l = b == 0 ? l.freq : ad::add(freq_l, l.freq);
        }
        const double inv_b = 1.0 / static_cast<double>(opts.batch);
        total = ad::scale(total, inv_b);

        StepMetrics sm;
        sm.step = step;
        sm.loss_total = total->value.data[0];
        sm.loss_time = time_l->value.data[0] * inv_b;
        sm.loss_freq = freq_l->value.data[0] * inv_b;
        if (!std::isfinite(sm.loss_total))
            throw NumericError("pretrain: non-finite loss at step " + std::to_string(step));

        ad::backward(total);
        sm.grad_norm = clip_gradients(model.store, opts.opt.clip);
        sm.lr = lr_schedule(step, warmup, opts.steps, opts.lr_peak, opts.lr_warmup_start);
        adamw_step(model.store, opt_state, opts.opt, sm.lr);

        std::size_t max_load = 0, min_load = SIZE_MAX;
        for (const auto& r : model.routers)
            for (std::size_t l : r.load_counts) {
                max_load = std::max(max_load, l);
                min_load = std::min(min_load, l);
            }
        sm.max_expert_load = max_load;
        sm.min_expert_load = min_load == SIZE_MAX ? 0 : min_load;
        if (on_step) on_step(sm, model.routers);
        for (auto& r : model.routers) update_bias(r);
        metrics.push_back(sm);
    }
    if (opt_state_out) *opt_state_out = std::move(opt_state);
    if (rng_state_out) *rng_state_out = mask_rng.state();
    return metrics;
}

ReconstructOut reconstruct_sample(BrainOfModel& model, const Signal& s, const MaskPlan& plan) {
    ReconstructOut out;
    out.original = s.values;
    Signal perturbed = apply_temporal_mask(apply_freq_mask(s, plan), plan, model.cfg.patch_len);
    out.perturbed = perturbed.values;
    TokenSequence ts = patchify(perturbed, model.cfg.patch_len, model.cfg.max_seq_len);
    ad::Var z = model.latents(ts);
    out.reconstructed = model.reconstruct_values(z, ts)->value;
    model.reset_router_loads();
    return out;
}

}  // namespace brainof
