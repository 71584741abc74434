#include "brainof/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "brainof/errors.hpp"
#include "brainof/npy.hpp"
#include "brainof/rng.hpp"

namespace brainof {

std::string to_string(Modality m) {
    switch (m) {
        case Modality::fMRI: return "fMRI";
        case Modality::EEG: return "EEG";
        case Modality::MEG: return "MEG";
    }
    return "?";
}

Modality modality_from_string(const std::string& s) {
    if (s == "fMRI" || s == "fmri") return Modality::fMRI;
    if (s == "EEG" || s == "eeg") return Modality::EEG;
    if (s == "MEG" || s == "meg") return Modality::MEG;
    throw InputError("unknown modality: " + s);
}

Signal normalize(const Signal& raw) {
    const std::size_t n = raw.channels(), t = raw.timepoints();
    if (t < 2) throw InputError("normalize: need at least 2 timepoints");
    Signal out = raw;
    for (std::size_t c = 0; c < n; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < t; ++i) mean += raw.values.at(c, i);
        mean /= static_cast<double>(t);
        double var = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            const double d = raw.values.at(c, i) - mean;
            var += d * d;
        }
        var /= static_cast<double>(t);
        if (var <= 0.0) {
            for (std::size_t i = 0; i < t; ++i) out.values.at(c, i) = 0.0;
        } else {
            const double inv = 1.0 / std::sqrt(var);
            for (std::size_t i = 0; i < t; ++i)
                out.values.at(c, i) = (raw.values.at(c, i) - mean) * inv;
        }
    }
    return out;
}

TokenSequence patchify(const Signal& s, std::size_t patch_len, std::size_t max_seq_len) {
    const std::size_t n = s.channels(), t = s.timepoints();
    const std::size_t ppc = (t + patch_len - 1) / patch_len;
    const std::size_t valid = n * ppc;
    if (valid > max_seq_len)
        throw CapacityError("patchify: sequence needs " + std::to_string(valid) +
                            " tokens, max_seq_len is " + std::to_string(max_seq_len));
    TokenSequence ts;
    ts.layout = {n, t, patch_len, ppc, max_seq_len};
    ts.patches = Tensor::zeros({max_seq_len, patch_len});
    ts.valid.assign(max_seq_len, 0);
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t p = 0; p < ppc; ++p) {
            const std::size_t tok = c * ppc + p;
            ts.valid[tok] = 1;
            for (std::size_t j = 0; j < patch_len; ++j) {
                const std::size_t ti = p * patch_len + j;
                if (ti < t) ts.patches.at(tok, j) = s.values.at(c, ti);
                // trailing partial patch stays zero-filled
            }
        }
    return ts;
}

Tensor unpatchify(const TokenSequence& ts) {
    const auto& lo = ts.layout;
    Tensor out({lo.n_channels, lo.t_len});
    for (std::size_t c = 0; c < lo.n_channels; ++c)
        for (std::size_t ti = 0; ti < lo.t_len; ++ti) {
            const std::size_t p = ti / lo.patch_len;
            out.at(c, ti) = ts.patches.at(c * lo.patches_per_channel + p, ti % lo.patch_len);
        }
    return out;
}

std::vector<long> unpatchify_map(const PatchLayout& lo) {
    std::vector<long> map(lo.n_channels * lo.t_len);
    for (std::size_t c = 0; c < lo.n_channels; ++c)
        for (std::size_t ti = 0; ti < lo.t_len; ++ti) {
            const std::size_t tok = c * lo.patches_per_channel + ti / lo.patch_len;
            map[c * lo.t_len + ti] = static_cast<long>(tok * lo.patch_len + ti % lo.patch_len);
        }
    return map;
}

std::vector<std::uint8_t> attention_mask(const TokenSequence& ts) { return ts.valid; }

std::size_t synthetic_channels(Modality m) {
    switch (m) {
        case Modality::fMRI: return 16;
        case Modality::EEG: return 8;
        case Modality::MEG: return 12;
    }
    return 0;
}

std::size_t synthetic_timepoints(Modality m) {
    switch (m) {
        case Modality::fMRI: return 64;
        case Modality::EEG: return 256;
        case Modality::MEG: return 128;
    }
    return 0;
}

std::size_t marker_bin(Modality m) {
    switch (m) {
        case Modality::fMRI: return 2;   // period 32 of T=64
        case Modality::EEG: return 16;   // period 16 of T=256
        case Modality::MEG: return 8;    // period 16 of T=128
    }
    return 0;
}

namespace {
// background tone bins per modality, excluding the marker bin and neighbours
std::vector<std::size_t> background_bins(Modality m) {
    std::size_t lo = 0, hi = 0;
    switch (m) {
        case Modality::fMRI: lo = 1; hi = 4; break;    // periods 16..64 of T=64
        case Modality::EEG: lo = 8; hi = 64; break;    // periods 4..32 of T=256
        case Modality::MEG: lo = 4; hi = 32; break;    // periods 4..32 of T=128
    }
    const std::size_t mk = marker_bin(m);
    std::vector<std::size_t> bins;
    for (std::size_t b = lo; b <= hi; ++b)
        if (b + 1 < mk || b > mk + 1) bins.push_back(b);
    return bins;
}
}  // namespace

std::vector<LabeledSignal> generate_synthetic(const SyntheticOptions& opts) {
    if (opts.n_samples < 1) throw InputError("generate_synthetic: n_samples must be >= 1");
    const std::size_t n_ch = synthetic_channels(opts.modality);
    const std::size_t t_len = synthetic_timepoints(opts.modality);
    const std::size_t mk = marker_bin(opts.modality);
    const auto bg_bins = background_bins(opts.modality);
    const double marker_amp = 2.0;
    const double noise_sigma = 0.3;

    const std::size_t n_pos =
        static_cast<std::size_t>(std::llround(opts.class_balance * static_cast<double>(opts.n_samples)));

    Rng rng = Rng::substream(opts.seed, "data." + to_string(opts.modality));
    std::vector<LabeledSignal> out;
    out.reserve(opts.n_samples);
    for (std::size_t s = 0; s < opts.n_samples; ++s) {
        const int label = s < n_pos ? 1 : 0;
        Signal sig;
        sig.modality = opts.modality;
        sig.sample_id = to_string(opts.modality) + "_" + std::to_string(s);
        sig.values = Tensor::zeros({n_ch, t_len});

        // which channels carry the marker
        std::vector<std::uint8_t> has_marker(n_ch, 0);
        if (opts.single_informative_channel) {
            if (label) has_marker[0] = 1;
        } else {
            const std::size_t half = (n_ch + 1) / 2;
            const std::size_t m_count =
                label ? half + rng.integer(0, n_ch - half) : rng.integer(0, half - 1);
            std::vector<std::size_t> ch(n_ch);
            std::iota(ch.begin(), ch.end(), 0);
            for (std::size_t i = n_ch - 1; i > 0; --i)
                std::swap(ch[i], ch[rng.integer(0, i)]);
            for (std::size_t i = 0; i < m_count; ++i) has_marker[ch[i]] = 1;
        }

        // per-sample palette: channels share a small set of background bins
        // (a subject-specific rhythm profile); the palette itself varies
        // freely across samples
        std::array<std::size_t, 3> palette;
        for (auto& b : palette) b = bg_bins[rng.integer(0, bg_bins.size() - 1)];

        for (std::size_t c = 0; c < n_ch; ++c) {
            const std::size_t n_tones = rng.integer(1, 3);
            for (std::size_t k = 0; k < n_tones; ++k) {
                const std::size_t bin = palette[rng.integer(0, palette.size() - 1)];
                const double amp = rng.uniform(1.0, 2.0);
                const double phase = rng.uniform(0.0, 2.0 * M_PI);
                for (std::size_t t = 0; t < t_len; ++t)
                    sig.values.at(c, t) +=
                        amp * std::cos(2.0 * M_PI * static_cast<double>(bin * t) /
                                           static_cast<double>(t_len) +
                                       phase);
            }
            if (has_marker[c]) {
                const double phase = rng.uniform(0.0, 2.0 * M_PI);
                for (std::size_t t = 0; t < t_len; ++t)
                    sig.values.at(c, t) +=
                        marker_amp * std::cos(2.0 * M_PI * static_cast<double>(mk * t) /
                                                  static_cast<double>(t_len) +
                                              phase);
            }
            for (std::size_t t = 0; t < t_len; ++t)
                sig.values.at(c, t) += rng.normal(0.0, noise_sigma);
        }
        out.push_back({normalize(sig), label});
    }
    return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledSignal>& data) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [sig, label] : data) {
        manifest.push_back({{"id", sig.sample_id},
                            {"modality", to_string(sig.modality)},
                            {"label", label},
                            {"shape", sig.values.shape}});
        npy::save(dir / (sig.sample_id + ".npy"), sig.values);
    }
    std::ofstream f(dir / "manifest.json");
    if (!f) throw IoError("save_dataset: cannot write manifest in " + dir.string());
    f << manifest.dump(2) << "\n";
}

std::vector<LabeledSignal> load_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw IoError("load_dataset: missing manifest in " + dir.string());
    nlohmann::json manifest;
    f >> manifest;
    std::vector<LabeledSignal> out;
    for (const auto& entry : manifest) {
        LabeledSignal ls;
        ls.signal.sample_id = entry.at("id").get<std::string>();
        ls.signal.modality = modality_from_string(entry.at("modality").get<std::string>());
        ls.label = entry.at("label").get<int>();
        ls.signal.values = npy::load(dir / (ls.signal.sample_id + ".npy"));
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (ls.signal.values.shape != shape)
            throw IoError("load_dataset: shape mismatch for " + ls.signal.sample_id);
        out.push_back(std::move(ls));
    }
    return out;
}

}  // namespace brainof
