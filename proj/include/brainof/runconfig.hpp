#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brainof/model_config.hpp"

namespace brainof {

struct TrainBlock {
    std::size_t steps = 300;
    std::size_t batch = 8;
    std::size_t epochs = 20;
    double lr_peak = 3e-3;
    double lr_warmup_start = 3e-5;
    double warmup_frac = 8.0 / 150.0;
    double clip = 5.0;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double alpha = 0.8;
    double mask_mean = 0.7;
    double mask_std = 0.05;
    double gamma = 1e-3;
    std::uint64_t seed = 0;
    std::string mode = "full";  // finetune: full | probe
};

struct DataBlock {
    std::string modality = "EEG";
    std::size_t n_train = 200;
    std::size_t n_test = 100;
    double class_balance = 0.5;
    bool single_informative_channel = false;
    std::string path;
};

struct RunConfig {
    ModelConfig model;
    TrainBlock train;
    DataBlock data;

    void validate() const;
};

// Parse config JSON (empty path = defaults), then apply "--set block.key=value"
// overrides. Unknown keys are rejected with ConfigError.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides);

std::string run_config_to_json(const RunConfig& rc);

}  // namespace brainof
