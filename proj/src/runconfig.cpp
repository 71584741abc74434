#include "brainof/runconfig.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "brainof/errors.hpp"
#include "brainof/signal.hpp"

namespace brainof {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("unknown config key \"" + where + "." + key + "\"");
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("bad value type for config key \"") + key + "\"");
        }
    }
}

void parse_model(const json& j, ModelConfig& m) {
    reject_unknown(j,
                   {"embed_dim", "latents", "heads", "patch_len", "max_seq_len", "backbone_layers",
                    "arness_layers", "routed_experts", "active_experts", "shared_experts",
                    "expert_hidden", "conv_channels", "layer_scale_init"},
                   "model");
    take(j, "embed_dim", m.embed_dim);
    take(j, "latents", m.latents);
    take(j, "heads", m.heads);
    take(j, "patch_len", m.patch_len);
    take(j, "max_seq_len", m.max_seq_len);
    take(j, "backbone_layers", m.backbone_layers);
    take(j, "arness_layers", m.arness_layers);
    take(j, "routed_experts", m.routed_experts);
    take(j, "active_experts", m.active_experts);
    take(j, "shared_experts", m.shared_experts);
    take(j, "expert_hidden", m.expert_hidden);
    take(j, "conv_channels", m.conv_channels);
    take(j, "layer_scale_init", m.layer_scale_init);
}

void parse_train(const json& j, TrainBlock& t) {
    reject_unknown(j,
                   {"steps", "batch", "epochs", "lr_peak", "lr_warmup_start", "warmup_frac",
                    "clip", "weight_decay", "beta1", "beta2", "alpha", "mask_mean", "mask_std",
                    "gamma", "seed", "mode"},
                   "train");
    take(j, "steps", t.steps);
    take(j, "batch", t.batch);
    take(j, "epochs", t.epochs);
    take(j, "lr_peak", t.lr_peak);
    take(j, "lr_warmup_start", t.lr_warmup_start);
    take(j, "warmup_frac", t.warmup_frac);
    take(j, "clip", t.clip);
    take(j, "weight_decay", t.weight_decay);
    take(j, "beta1", t.beta1);
    take(j, "beta2", t.beta2);
    take(j, "alpha", t.alpha);
    take(j, "mask_mean", t.mask_mean);
    take(j, "mask_std", t.mask_std);
    take(j, "gamma", t.gamma);
    take(j, "seed", t.seed);
    take(j, "mode", t.mode);
}

void parse_data(const json& j, DataBlock& d) {
    reject_unknown(j,
                   {"modality", "n_train", "n_test", "class_balance",
                    "single_informative_channel", "path"},
                   "data");
    take(j, "modality", d.modality);
    take(j, "n_train", d.n_train);
    take(j, "n_test", d.n_test);
    take(j, "class_balance", d.class_balance);
    take(j, "single_informative_channel", d.single_informative_channel);
    take(j, "path", d.path);
}

void parse_root(const json& j, RunConfig& rc) {
    reject_unknown(j, {"model", "train", "data"}, "config");
    if (j.contains("model")) parse_model(j.at("model"), rc.model);
    if (j.contains("train")) parse_train(j.at("train"), rc.train);
    if (j.contains("data")) parse_data(j.at("data"), rc.data);
}

json leaf_from_string(const std::string& s) {
    try {
        return json::parse(s);  // numbers, booleans, arrays
    } catch (const json::exception&) {
        return json(s);  // bare string
    }
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    if (train.batch == 0) throw ConfigError("train.batch must be positive");
    if (train.alpha < 0.0 || train.alpha > 1.0) throw ConfigError("train.alpha must be in [0,1]");
    if (train.mask_mean < 0.0 || train.mask_mean > 1.0)
        throw ConfigError("train.mask_mean must be in [0,1]");
    if (train.mask_std < 0.0) throw ConfigError("train.mask_std must be >= 0");
    if (train.clip <= 0.0) throw ConfigError("train.clip must be > 0");
    if (train.lr_peak <= 0.0) throw ConfigError("train.lr_peak must be > 0");
    if (train.warmup_frac < 0.0 || train.warmup_frac >= 1.0)
        throw ConfigError("train.warmup_frac must be in [0,1)");
    if (train.gamma < 0.0) throw ConfigError("train.gamma must be >= 0");
    if (train.mode != "full" && train.mode != "probe")
        throw ConfigError("train.mode must be \"full\" or \"probe\"");
    if (data.class_balance < 0.0 || data.class_balance > 1.0)
        throw ConfigError("data.class_balance must be in [0,1]");
    modality_from_string(data.modality);  // throws on bad name
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
    RunConfig rc;
    json j = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot read config " + path.string());
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw ConfigError("bad config JSON: " + std::string(e.what()));
        }
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        const auto dot = kv.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("--set expects block.key=value, got \"" + kv + "\"");
        const std::string block = kv.substr(0, dot);
        const std::string key = kv.substr(dot + 1, eq - dot - 1);
        j[block][key] = leaf_from_string(kv.substr(eq + 1));
    }
    parse_root(j, rc);
    rc.validate();
    return rc;
}

std::string run_config_to_json(const RunConfig& rc) {
    json j;
    j["model"] = {{"embed_dim", rc.model.embed_dim},
                  {"latents", rc.model.latents},
                  {"heads", rc.model.heads},
                  {"patch_len", rc.model.patch_len},
                  {"max_seq_len", rc.model.max_seq_len},
                  {"backbone_layers", rc.model.backbone_layers},
                  {"arness_layers", rc.model.arness_layers},
                  {"routed_experts", rc.model.routed_experts},
                  {"active_experts", rc.model.active_experts},
                  {"shared_experts", rc.model.shared_experts},
                  {"expert_hidden", rc.model.expert_hidden},
                  {"conv_channels", rc.model.conv_channels},
                  {"layer_scale_init", rc.model.layer_scale_init}};
    j["train"] = {{"steps", rc.train.steps},
                  {"batch", rc.train.batch},
                  {"epochs", rc.train.epochs},
                  {"lr_peak", rc.train.lr_peak},
                  {"lr_warmup_start", rc.train.lr_warmup_start},
                  {"warmup_frac", rc.train.warmup_frac},
                  {"clip", rc.train.clip},
                  {"weight_decay", rc.train.weight_decay},
                  {"beta1", rc.train.beta1},
                  {"beta2", rc.train.beta2},
                  {"alpha", rc.train.alpha},
                  {"mask_mean", rc.train.mask_mean},
                  {"mask_std", rc.train.mask_std},
                  {"gamma", rc.train.gamma},
                  {"seed", rc.train.seed},
                  {"mode", rc.train.mode}};
    j["data"] = {{"modality", rc.data.modality},
                 {"n_train", rc.data.n_train},
                 {"n_test", rc.data.n_test},
                 {"class_balance", rc.data.class_balance},
                 {"single_informative_channel", rc.data.single_informative_channel},
                 {"path", rc.data.path}};
    return j.dump(2) + "\n";
}

}  // namespace brainof
