#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "brainof/model.hpp"
#include "brainof/signal.hpp"

namespace brainof {

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;  // 0.99 for finetune
    double eps = 1e-8;
    double weight_decay = 0.05;
    double clip = 5.0;
};

struct OptimizerState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::size_t step = 0;
};

// Linear warmup lr_warmup_start -> lr_peak, then cosine to 0 at total_steps.
double lr_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double lr_peak, double lr_warmup_start);

// Global-norm clip over every gradient in the store; returns the pre-clip norm.
double clip_gradients(ParamStore& store, double max_norm);

// Bias-corrected Adam with decoupled weight decay. `trainable` empty means all.
void adamw_step(ParamStore& store, OptimizerState& state, const OptimizerConfig& oc, double lr,
                const std::vector<std::string>& trainable = {});

// ---- checkpointing ----
// Directory layout: config.json + weights/<name>.npy + opt/<name>.{m,v}.npy + meta.json.
void save_checkpoint(const std::filesystem::path& dir, const BrainOfModel& model,
                     const OptimizerState& opt, const std::string& rng_state, std::size_t step);

struct LoadedCheckpoint {
    ModelConfig config;
    OptimizerState opt;
    std::string rng_state;
    std::size_t step = 0;
};

// Restores parameter values and router biases into `model` (shapes validated).
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, BrainOfModel& model);

// Reads only the config block, for constructing the model before loading.
ModelConfig load_checkpoint_config(const std::filesystem::path& dir);

// ---- finetuning ----
struct FinetuneOptions {
    std::size_t epochs = 20;
    std::size_t batch = 8;
    double lr_peak = 1e-3;
    double lr_warmup_start = 1e-5;
    double warmup_frac = 8.0 / 150.0;
    bool full = true;  // false = linear probe (head only)
    OptimizerConfig opt{0.9, 0.99, 1e-8, 0.05, 5.0};
    std::uint64_t seed = 0;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_bac = 0.0;
    double test_bac = 0.0;
};

struct FinetuneReport {
    std::vector<EpochMetrics> epochs;
    double final_train_bac = 0.0;
    double final_test_bac = 0.0;
};

double balanced_accuracy(const std::vector<int>& pred, const std::vector<int>& label);

// Linear head over the mean-pooled latent tokens. Creates (or reuses) the
// "head.w" parameter [D x 2] in the model's store.
ad::Var make_head(BrainOfModel& model, std::uint64_t seed);

int classify(BrainOfModel& model, const ad::Var& head, const Signal& s);

FinetuneReport finetune(BrainOfModel& model, const ad::Var& head,
                        const std::vector<LabeledSignal>& train_set,
                        const std::vector<LabeledSignal>& test_set, const FinetuneOptions& opts);

// score_c = bac(full) - bac(channel c zeroed), averaged over the dataset.
std::vector<double> occlusion_importance(BrainOfModel& model, const ad::Var& head,
                                         const std::vector<LabeledSignal>& data);

// I = (P_all - P_ablated)/P_all * 100%, sign-flipped for lower-is-better metrics.
double modality_importance(double perf_all, double perf_ablated, bool lower_is_better);

}  // namespace brainof
