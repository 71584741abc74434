#pragma once

#include <cstdint>
#include <vector>

#include "brainof/fft.hpp"
#include "brainof/model.hpp"
#include "brainof/rng.hpp"
#include "brainof/signal.hpp"
#include "brainof/train.hpp"

namespace brainof {

// Masked temporal-frequency modeling: spectral-bin masking (modality-dispatched
// transform axis), temporal patch masking, dual-domain smooth-L1 loss.
struct MaskPlan {
    double freq_ratio = 0.0;
    double temporal_ratio = 0.0;
    std::vector<std::vector<std::size_t>> masked_bins;  // per transformed row
    std::vector<std::size_t> masked_patches;            // flat token indices
};

// Ratios ~ N(mean, stddev^2) clipped to [0,1]; bins and patches drawn without
// replacement. Deterministic given the rng state.
MaskPlan sample_mask_plan(const Signal& s, const PatchLayout& layout, Rng& rng,
                          double mean = 0.7, double stddev = 0.05);

// fMRI: rfft along the ROI axis, one spectrum per timepoint column.
// EEG/MEG: rfft along the time axis, one spectrum per channel row.
std::vector<Spectrum> freq_transform(const Signal& s);
Tensor inverse_freq_transform(Modality m, const std::vector<Spectrum>& spectra,
                              std::size_t n_channels, std::size_t t_len);

Signal apply_freq_mask(const Signal& s, const MaskPlan& plan);
Signal apply_temporal_mask(const Signal& s, const MaskPlan& plan, std::size_t patch_len);

// Half-spectrum magnitudes: fMRI -> [bins x T], EEG/MEG -> [N x bins].
Tensor spectral_magnitude(const Signal& s);  // via rfft (oracle route)
ad::Var spectral_magnitude_var(const ad::Var& values, Modality m);  // via DFT matrices

struct MtfmLoss {
    ad::Var time, freq, total;  // total = (1-alpha)*time + alpha*freq
};

MtfmLoss mtfm_loss(const ad::Var& s_hat, const Signal& original, double alpha = 0.8);

struct PretrainOptions {
    std::size_t steps = 300;
    std::size_t batch = 8;
    double lr_peak = 3e-3;
    double lr_warmup_start = 3e-5;
    double warmup_frac = 8.0 / 150.0;
    double alpha = 0.8;
    double mask_mean = 0.7;
    double mask_std = 0.05;
    double gamma = 1e-3;
    std::uint64_t seed = 0;
    OptimizerConfig opt{0.9, 0.95, 1e-8, 0.05, 5.0};
};

struct StepMetrics {
    std::size_t step = 0;
    double loss_total = 0.0, loss_time = 0.0, loss_freq = 0.0;
    double grad_norm = 0.0, lr = 0.0;
    std::size_t max_expert_load = 0, min_expert_load = 0;
};

// Called once per step before the router bias update, with the step's
// accumulated expert loads still in place.
using StepCallback = std::function<void(const StepMetrics&, const std::vector<RouterState>&)>;

// Full pretraining loop over a cyclic pass of `data`. Throws NumericError
// carrying the step number on divergence.
std::vector<StepMetrics> pretrain(BrainOfModel& model, const std::vector<Signal>& data,
                                  const PretrainOptions& opts,
                                  OptimizerState* opt_state_out = nullptr,
                                  std::string* rng_state_out = nullptr,
                                  const StepCallback& on_step = {});

struct ReconstructOut {
    Tensor original, perturbed, reconstructed;  // all [N x T]
};

ReconstructOut reconstruct_sample(BrainOfModel& model, const Signal& s, const MaskPlan& plan);

}  // namespace brainof
