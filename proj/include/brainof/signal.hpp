#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brainof/tensor.hpp"

namespace brainof {

enum class Modality { fMRI, EEG, MEG };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

// A multichannel timecourse: values is [N x T] with N channels (EEG/MEG) or
// ROIs (fMRI) and T timepoints.
struct Signal {
    Modality modality = Modality::EEG;
    Tensor values;
    std::string sample_id;

    std::size_t channels() const { return values.shape[0]; }
    std::size_t timepoints() const { return values.shape[1]; }
};

// Bookkeeping to invert the channel-major patch flattening.
struct PatchLayout {
    std::size_t n_channels = 0;
    std::size_t t_len = 0;
    std::size_t patch_len = 0;
    std::size_t patches_per_channel = 0;
    std::size_t max_seq_len = 0;

    std::size_t valid_tokens() const { return n_channels * patches_per_channel; }
};

struct TokenSequence {
    Tensor patches;                    // [max_seq_len x patch_len], padding rows zero
    std::vector<std::uint8_t> valid;   // exactly valid_tokens() leading true entries
    PatchLayout layout;
};

// Per-channel z-score (population variance); constant channels map to zeros.
Signal normalize(const Signal& raw);

TokenSequence patchify(const Signal& s, std::size_t patch_len, std::size_t max_seq_len);
Tensor unpatchify(const TokenSequence& ts);

// Flat source index into the [L x patch_len] patch matrix for each (n, t)
// destination; used to make unpatchify differentiable.
std::vector<long> unpatchify_map(const PatchLayout& layout);

std::vector<std::uint8_t> attention_mask(const TokenSequence& ts);

// ---- synthetic corpus ----
struct SyntheticOptions {
    Modality modality = Modality::EEG;
    std::size_t n_samples = 1;
    std::uint64_t seed = 0;
    double class_balance = 0.5;
    // When set, the marker tone appears only in channel 0 of positive samples;
    // all other channels are label-independent (used by occlusion tests).
    bool single_informative_channel = false;
};

struct LabeledSignal {
    Signal signal;
    int label = 0;  // 1 iff the marker frequency is present per the task rule
};

// Deterministic given the seed. Binary label: marker tone present in at least
// half the channels (or in channel 0 under single_informative_channel).
std::vector<LabeledSignal> generate_synthetic(const SyntheticOptions& opts);

// Geometry of each modality's synthetic signals.
std::size_t synthetic_channels(Modality m);
std::size_t synthetic_timepoints(Modality m);
std::size_t marker_bin(Modality m);  // DFT bin index carrying the marker tone

// Dataset directory: manifest.json + one NPY per signal.
void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledSignal>& data);
std::vector<LabeledSignal> load_dataset(const std::filesystem::path& dir);

}  // namespace brainof
