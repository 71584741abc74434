#include "brainof/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "brainof/errors.hpp"
#include "brainof/npy.hpp"

namespace brainof {

using nlohmann::json;

double lr_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double lr_peak, double lr_warmup_start) {
    if (warmup_steps >= total_steps) throw ConfigError("lr_schedule: warmup must be < total");
    if (step > total_steps) throw ConfigError("lr_schedule: step past total");
    if (step <= warmup_steps) {
        if (warmup_steps == 0) return lr_peak;
        const double t = static_cast<double>(step) / static_cast<double>(warmup_steps);
        return lr_warmup_start + (lr_peak - lr_warmup_start) * t;
    }
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return lr_peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double clip_gradients(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : store.all())
        for (double g : p->grad.data) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& [name, p] : store.all())
            for (double& g : p->grad.data) g *= s;
    }
    return norm;
}

void adamw_step(ParamStore& store, OptimizerState& state, const OptimizerConfig& oc, double lr,
                const std::vector<std::string>& trainable) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(state.step));
    for (const auto& [name, p] : store.all()) {
        if (!trainable.empty() &&
            std::find(trainable.begin(), trainable.end(), name) == trainable.end())
            continue;
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(p->value.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(p->value.shape)).first->second;
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            if (!std::isfinite(g))
                throw NumericError("adamw: non-finite gradient in " + name + " at step " +
                                   std::to_string(state.step));
            m.data[i] = oc.beta1 * m.data[i] + (1.0 - oc.beta1) * g;
            v.data[i] = oc.beta2 * v.data[i] + (1.0 - oc.beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p->value.data[i] -= lr * (mhat / (std::sqrt(vhat) + oc.eps) +
                                      oc.weight_decay * p->value.data[i]);
        }
    }
}

// ---- checkpointing ----

namespace {
json config_to_json(const ModelConfig& c) {
    return json{{"embed_dim", c.embed_dim},
                {"latents", c.latents},
                {"heads", c.heads},
                {"patch_len", c.patch_len},
                {"max_seq_len", c.max_seq_len},
                {"backbone_layers", c.backbone_layers},
                {"arness_layers", c.arness_layers},
                {"routed_experts", c.routed_experts},
                {"active_experts", c.active_experts},
                {"shared_experts", c.shared_experts},
                {"expert_hidden", c.expert_hidden},
                {"conv_channels", c.conv_channels},
                {"layer_scale_init", c.layer_scale_init}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.latents = j.at("latents").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.patch_len = j.at("patch_len").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.backbone_layers = j.at("backbone_layers").get<std::size_t>();
    c.arness_layers = j.at("arness_layers").get<std::size_t>();
    c.routed_experts = j.at("routed_experts").get<std::size_t>();
    c.active_experts = j.at("active_experts").get<std::size_t>();
    c.shared_experts = j.at("shared_experts").get<std::size_t>();
    c.expert_hidden = j.at("expert_hidden").get<std::size_t>();
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.layer_scale_init = j.at("layer_scale_init").get<double>();
    return c;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f << s;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw IoError("bad JSON in " + p.string() + ": " + e.what());
    }
}
}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const BrainOfModel& model,
                     const OptimizerState& opt, const std::string& rng_state, std::size_t step) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "weights");
    fs::create_directories(dir / "opt");
    write_text(dir / "config.json", config_to_json(model.cfg).dump(2) + "\n");
    for (const auto& [name, p] : model.store.all())
        npy::save(dir / "weights" / (name + ".npy"), p->value);
    for (const auto& [name, t] : opt.m) npy::save(dir / "opt" / (name + ".m.npy"), t);
    for (const auto& [name, t] : opt.v) npy::save(dir / "opt" / (name + ".v.npy"), t);
    json meta;
    meta["step"] = step;
    meta["opt_step"] = opt.step;
    meta["rng_state"] = rng_state;
    json biases = json::array();
    for (const auto& r : model.routers) biases.push_back(r.bias.data);
    meta["router_bias"] = biases;
    write_text(dir / "meta.json", meta.dump(2) + "\n");
}

ModelConfig load_checkpoint_config(const std::filesystem::path& dir) {
    return config_from_json(read_json(dir / "config.json"));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, BrainOfModel& model) {
    LoadedCheckpoint out;
    out.config = load_checkpoint_config(dir);
    for (const auto& [name, p] : model.store.all()) {
        Tensor t = npy::load(dir / "weights" / (name + ".npy"));
        if (!t.same_shape(p->value))
            throw IoError("checkpoint: shape mismatch for " + name + ": stored " + t.shape_str() +
                          " vs model " + p->value.shape_str());
        p->value = std::move(t);
    }
    json meta = read_json(dir / "meta.json");
    out.step = meta.at("step").get<std::size_t>();
    out.opt.step = meta.at("opt_step").get<std::size_t>();
    out.rng_state = meta.at("rng_state").get<std::string>();
    const auto biases = meta.at("router_bias");
    if (biases.size() != model.routers.size())
        throw IoError("checkpoint: router bias count mismatch");
    for (std::size_t i = 0; i < model.routers.size(); ++i) {
        auto b = biases[i].get<std::vector<double>>();
        if (b.size() != model.routers[i].bias.numel())
            throw IoError("checkpoint: router bias size mismatch");
        model.routers[i].bias.data = std::move(b);
    }
    for (const auto& [name, p] : model.store.all()) {
        const auto mp = dir / "opt" / (name + ".m.npy");
        if (std::filesystem::exists(mp)) {
            out.opt.m[name] = npy::load(mp);
            out.opt.v[name] = npy::load(dir / "opt" / (name + ".v.npy"));
        }
    }
    return out;
}

// ---- finetuning ----

double balanced_accuracy(const std::vector<int>& pred, const std::vector<int>& label) {
    if (pred.size() != label.size() || pred.empty())
        throw InputError("balanced_accuracy: size mismatch or empty");
    double tp = 0, tn = 0, np = 0, nn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (label[i] == 1) {
            np += 1;
            if (pred[i] == 1) tp += 1;
        } else {
            nn += 1;
            if (pred[i] == 0) tn += 1;
        }
    }
    if (np == 0 || nn == 0) throw InputError("balanced_accuracy: need both classes");
    return 0.5 * (tp / np + tn / nn);
}

ad::Var make_head(BrainOfModel& model, std::uint64_t seed) {
    if (model.store.has("head.w")) return model.store.get("head.w");
    Rng rng = Rng::substream(seed, "head");
    return model.store.gaussian("head.w", {model.cfg.embed_dim, 2}, rng);
}

namespace {
ad::Var logits_for(BrainOfModel& model, const ad::Var& head, const Signal& s) {
    TokenSequence ts = patchify(s, model.cfg.patch_len, model.cfg.max_seq_len);
    ad::Var z = model.latents(ts);
    return ad::matmul(ad::mean_rows(z), head);  // [1 x 2]
}
}  // namespace

int classify(BrainOfModel& model, const ad::Var& head, const Signal& s) {
    ad::Var lg = logits_for(model, head, s);
    return lg->value.data[1] > lg->value.data[0] ? 1 : 0;
}

FinetuneReport finetune(BrainOfModel& model, const ad::Var& head,
                        const std::vector<LabeledSignal>& train_set,
                        const std::vector<LabeledSignal>& test_set, const FinetuneOptions& opts) {
    if (train_set.empty()) throw InputError("finetune: empty training set");
    (void)head;
    std::vector<std::string> trainable;
    if (!opts.full) trainable = {"head.w"};

    const std::size_t steps_per_epoch =
        (train_set.size() + opts.batch - 1) / opts.batch;
    const std::size_t total_steps = opts.epochs * steps_per_epoch;
    const std::size_t warmup_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(opts.warmup_frac *
                                                          static_cast<double>(total_steps)));

    OptimizerState opt_state;
    Rng order_rng = Rng::substream(opts.seed, "finetune-order");
    ad::Var head_w = model.store.get("head.w");

    FinetuneReport report;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += opts.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + opts.batch);
            model.store.zero_grad();
            ad::Var batch_loss;
            for (std::size_t i = b0; i < b1; ++i) {
                const auto& ex = train_set[order[i]];
                ad::Var lg = logits_for(model, head_w, ex.signal);
                ad::Var l = ad::cross_entropy_logits(
                    lg, {static_cast<std::size_t>(ex.label)});
                batch_loss = i == b0 ? l : ad::add(batch_loss, l);
            }
            batch_loss = ad::scale(batch_loss, 1.0 / static_cast<double>(b1 - b0));
            ad::backward(batch_loss);
            epoch_loss += batch_loss->value.data[0];
            clip_gradients(model.store, opts.opt.clip);
            const double lr = lr_schedule(std::min(step + 1, total_steps), warmup_steps,
                                          total_steps, opts.lr_peak, opts.lr_warmup_start);
            adamw_step(model.store, opt_state, opts.opt, lr, trainable);
            for (auto& r : model.routers) update_bias(r);
            ++step;
        }

        EpochMetrics em;
        em.epoch = epoch + 1;
        em.train_loss = epoch_loss / static_cast<double>(steps_per_epoch);
        std::vector<int> pred, label;
        for (const auto& ex : train_set) {
            pred.push_back(classify(model, head_w, ex.signal));
            label.push_back(ex.label);
        }
        em.train_bac = balanced_accuracy(pred, label);
        if (!test_set.empty()) {
            pred.clear();
            label.clear();
            for (const auto& ex : test_set) {
                pred.push_back(classify(model, head_w, ex.signal));
                label.push_back(ex.label);
            }
            em.test_bac = balanced_accuracy(pred, label);
        }
        model.reset_router_loads();
        report.epochs.push_back(em);
    }
    if (!report.epochs.empty()) {
        report.final_train_bac = report.epochs.back().train_bac;
        report.final_test_bac = report.epochs.back().test_bac;
    }
    return report;
}

std::vector<double> occlusion_importance(BrainOfModel& model, const ad::Var& head,
                                         const std::vector<LabeledSignal>& data) {
    if (data.empty()) throw InputError("occlusion: empty dataset");
    const std::size_t n_ch = data.front().signal.channels();
    std::vector<int> label;
    for (const auto& ex : data) label.push_back(ex.label);

    std::vector<int> pred;
    for (const auto& ex : data) pred.push_back(classify(model, head, ex.signal));
    const double full = balanced_accuracy(pred, label);

    std::vector<double> scores(n_ch, 0.0);
    for (std::size_t c = 0; c < n_ch; ++c) {
        pred.clear();
        for (const auto& ex : data) {
            Signal s = ex.signal;
            for (std::size_t t = 0; t < s.timepoints(); ++t) s.values.at(c, t) = 0.0;
            pred.push_back(classify(model, head, s));
        }
        scores[c] = full - balanced_accuracy(pred, label);
    }
    model.reset_router_loads();
    return scores;
}

double modality_importance(double perf_all, double perf_ablated, bool lower_is_better) {
    if (perf_all == 0.0) throw InputError("modality_importance: perf_all must be nonzero");
    const double i = (perf_all - perf_ablated) / perf_all * 100.0;
    return lower_is_better ? -i : i;
}

}  // namespace brainof
