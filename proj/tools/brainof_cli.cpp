#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "brainof/errors.hpp"
#include "brainof/gradsuite.hpp"
#include "brainof/model.hpp"
#include "brainof/mtfm.hpp"
#include "brainof/npy.hpp"
#include "brainof/runconfig.hpp"
#include "brainof/signal.hpp"
#include "brainof/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace brainof;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    std::string checkpoint;
    long long seed = -1;  // -1 = take from config
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_checkpoint) {
    cmd->add_option("--config", a.config_path, "JSON run config (defaults used when omitted)");
    cmd->add_option("--set", a.overrides, "Override, repeatable: block.key=value")->take_all();
    cmd->add_option("--out", a.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Root seed (wins over config)");
    if (with_checkpoint) cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint directory");
}

RunConfig resolve(const CommonArgs& a) {
    RunConfig rc = load_run_config(a.config_path.empty() ? fs::path{} : fs::path(a.config_path),
                                   a.overrides);
    if (a.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(a.seed);
    return rc;
}

std::vector<LabeledSignal> dataset_for(const RunConfig& rc, std::size_t count,
                                       std::uint64_t seed_offset) {
    if (!rc.data.path.empty()) return load_dataset(rc.data.path);
    SyntheticOptions so;
    so.modality = modality_from_string(rc.data.modality);
    so.n_samples = count;
    so.seed = rc.train.seed + seed_offset;
    so.class_balance = rc.data.class_balance;
    so.single_informative_channel = rc.data.single_informative_channel;
    return generate_synthetic(so);
}

std::vector<Signal> unlabeled(const std::vector<LabeledSignal>& d) {
    std::vector<Signal> out;
    for (const auto& x : d) out.push_back(x.signal);
    return out;
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f << s;
}

void write_metrics_csv(const fs::path& p, const std::vector<StepMetrics>& ms) {
    std::string body = "step,loss_total,loss_time,loss_freq,grad_norm,lr,max_expert_load,min_expert_load\n";
    char buf[256];
    for (const auto& m : ms) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%zu,%zu\n", m.step,
                      m.loss_total, m.loss_time, m.loss_freq, m.grad_norm, m.lr,
                      m.max_expert_load, m.min_expert_load);
        body += buf;
    }
    write_file(p, body);
}

BrainOfModel model_from(const RunConfig& rc, const CommonArgs& a) {
    if (!a.checkpoint.empty()) {
        ModelConfig cfg = load_checkpoint_config(a.checkpoint);
        BrainOfModel model(cfg, rc.train.seed);
        load_checkpoint(a.checkpoint, model);
        return model;
    }
    return BrainOfModel(rc.model, rc.train.seed);
}

int cmd_gen_data(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    auto train = dataset_for(rc, rc.data.n_train, 0);
    auto test = dataset_for(rc, rc.data.n_test, 7919);
    save_dataset(fs::path(a.out_dir) / "train", train);
    save_dataset(fs::path(a.out_dir) / "test", test);
    std::cout << "wrote " << train.size() << " train / " << test.size() << " test samples to "
              << a.out_dir << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    BrainOfModel model = model_from(rc, a);
    auto data = unlabeled(dataset_for(rc, rc.data.n_train, 0));

    PretrainOptions po;
    po.steps = rc.train.steps;
    po.batch = rc.train.batch;
    po.lr_peak = rc.train.lr_peak;
    po.lr_warmup_start = rc.train.lr_warmup_start;
    po.warmup_frac = rc.train.warmup_frac;
    po.alpha = rc.train.alpha;
    po.mask_mean = rc.train.mask_mean;
    po.mask_std = rc.train.mask_std;
    po.gamma = rc.train.gamma;
    po.seed = rc.train.seed;
    po.opt = {rc.train.beta1, rc.train.beta2, 1e-8, rc.train.weight_decay, rc.train.clip};

    OptimizerState opt;
    std::string rng_state = Rng::substream(po.seed, "masks").state();
    auto metrics = pretrain(model, data, po, &opt, &rng_state);

    fs::create_directories(a.out_dir);
    write_metrics_csv(fs::path(a.out_dir) / "metrics.csv", metrics);
    save_checkpoint(fs::path(a.out_dir) / "checkpoint", model, opt, rng_state, po.steps);
    std::cout << "pretrained " << po.steps << " steps";
    if (!metrics.empty()) std::cout << ", final loss_total " << metrics.back().loss_total;
    std::cout << "\n";
    return 0;
}

int cmd_reconstruct(const CommonArgs& a, std::size_t n_samples) {
    RunConfig rc = resolve(a);
    BrainOfModel model = model_from(rc, a);
    auto data = unlabeled(dataset_for(rc, std::max<std::size_t>(n_samples, 1), 0));

    Rng mask_rng = Rng::substream(rc.train.seed, "masks");
    fs::create_directories(a.out_dir);
    for (std::size_t i = 0; i < n_samples && i < data.size(); ++i) {
        TokenSequence ts = patchify(data[i], model.cfg.patch_len, model.cfg.max_seq_len);
        MaskPlan plan = sample_mask_plan(data[i], ts.layout, mask_rng, rc.train.mask_mean,
                                         rc.train.mask_std);
        ReconstructOut ro = reconstruct_sample(model, data[i], plan);
        const std::string stem = "sample" + std::to_string(i);
        npy::save(fs::path(a.out_dir) / (stem + ".original.npy"), ro.original);
        npy::save(fs::path(a.out_dir) / (stem + ".perturbed.npy"), ro.perturbed);
        npy::save(fs::path(a.out_dir) / (stem + ".reconstructed.npy"), ro.reconstructed);
    }
    std::cout << "wrote reconstruction triplets to " << a.out_dir << "\n";
    return 0;
}

int cmd_finetune(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    BrainOfModel model = model_from(rc, a);
    auto train_set = dataset_for(rc, rc.data.n_train, 0);
    auto test_set = dataset_for(rc, rc.data.n_test, 7919);

    ad::Var head = make_head(model, rc.train.seed);
    FinetuneOptions fo;
    fo.epochs = rc.train.epochs;
    fo.batch = rc.train.batch;
    fo.lr_peak = rc.train.lr_peak;
    fo.lr_warmup_start = rc.train.lr_warmup_start;
    fo.warmup_frac = rc.train.warmup_frac;
    fo.full = rc.train.mode == "full";
    fo.opt = {rc.train.beta1, rc.train.beta2, 1e-8, rc.train.weight_decay, rc.train.clip};
    fo.seed = rc.train.seed;
    FinetuneReport rep = finetune(model, head, train_set, test_set, fo);

    fs::create_directories(a.out_dir);
    std::string csv = "epoch,train_loss,train_bac,test_bac\n";
    char buf[160];
    for (const auto& e : rep.epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", e.epoch, e.train_loss,
                      e.train_bac, e.test_bac);
        csv += buf;
    }
    write_file(fs::path(a.out_dir) / "metrics.csv", csv);
    json report{{"mode", rc.train.mode},
                {"epochs", rep.epochs.size()},
                {"final_train_bac", rep.final_train_bac},
                {"final_test_bac", rep.final_test_bac}};
    write_file(fs::path(a.out_dir) / "report.json", report.dump(2) + "\n");
    std::cout << "finetune done: train BAC " << rep.final_train_bac << ", test BAC "
              << rep.final_test_bac << "\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    auto results = run_grad_suite(rc.train.seed);
    double worst = 0.0;
    for (const auto& [name, err] : results) {
        std::cout << name << ": " << err << "\n";
        worst = std::max(worst, err);
    }
    const bool pass = worst < 1e-4;
    std::cout << (pass ? "PASS" : "FAIL") << " worst rel err " << worst << "\n";
    if (!pass) throw NumericError("gradcheck failed: worst rel err " + std::to_string(worst));
    return 0;
}

int cmd_route_stats(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    BrainOfModel model = model_from(rc, a);
    auto data = unlabeled(dataset_for(rc, rc.data.n_train, 0));

    PretrainOptions po;
    po.steps = rc.train.steps;
    po.batch = rc.train.batch;
    po.lr_peak = rc.train.lr_peak;
    po.lr_warmup_start = rc.train.lr_warmup_start;
    po.warmup_frac = rc.train.warmup_frac;
    po.alpha = rc.train.alpha;
    po.mask_mean = rc.train.mask_mean;
    po.mask_std = rc.train.mask_std;
    po.gamma = rc.train.gamma;
    po.seed = rc.train.seed;
    po.opt = {rc.train.beta1, rc.train.beta2, 1e-8, rc.train.weight_decay, rc.train.clip};

    std::string csv = "step,expert_id,load,bias\n";
    pretrain(model, data, po, nullptr, nullptr,
             [&csv](const StepMetrics& sm, const std::vector<RouterState>& routers) {
                 // experts numbered block-major across the backbone stack
                 std::size_t eid = 0;
                 char buf[128];
                 for (const auto& r : routers)
                     for (std::size_t i = 0; i < r.load_counts.size(); ++i, ++eid) {
                         std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.10g\n", sm.step, eid,
                                       r.load_counts[i], r.bias.data[i]);
                         csv += buf;
                     }
             });
    fs::create_directories(a.out_dir);
    write_file(fs::path(a.out_dir) / "route_stats.csv", csv);
    std::cout << "wrote route stats for " << po.steps << " steps to " << a.out_dir << "\n";
    return 0;
}

int cmd_occlude(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    if (a.checkpoint.empty()) throw InputError("occlude requires --checkpoint");
    BrainOfModel model = model_from(rc, a);
    if (!model.store.has("head.w")) throw InputError("occlude: checkpoint has no finetune head");
    ad::Var head = model.store.get("head.w");
    auto data = dataset_for(rc, rc.data.n_test, 7919);
    auto scores = occlusion_importance(model, head, data);

    fs::create_directories(a.out_dir);
    std::string csv = "channel,score\n";
    char buf[64];
    for (std::size_t c = 0; c < scores.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g\n", c, scores[c]);
        csv += buf;
    }
    write_file(fs::path(a.out_dir) / "occlusion.csv", csv);
    std::cout << "wrote per-channel occlusion scores to " << a.out_dir << "\n";
    return 0;
}

int error_out(const std::string& kind, const std::string& msg, int code) {
    json e{{"error", kind}, {"message", msg}};
    std::cerr << e.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Brain-OF desk-scale toolkit: synthetic neural-signal pretraining and probes"};
    app.require_subcommand(1);

    CommonArgs gen_a, pre_a, rec_a, fin_a, grad_a, route_a, occ_a;
    std::size_t rec_n = 4;

    add_common(app.add_subcommand("gen-data", "Generate a labeled synthetic dataset"), gen_a, false);
    add_common(app.add_subcommand("pretrain", "Masked temporal-frequency pretraining"), pre_a, true);
    auto* rec = app.add_subcommand("reconstruct", "Dump original/perturbed/reconstructed triplets");
    add_common(rec, rec_a, true);
    rec->add_option("--samples", rec_n, "Number of samples to dump")->capture_default_str();
    add_common(app.add_subcommand("finetune", "Train a linear head (probe or full)"), fin_a, true);
    add_common(app.add_subcommand("gradcheck", "Finite-difference gradient verification"), grad_a,
               false);
    add_common(app.add_subcommand("route-stats", "Per-step expert load/bias CSV"), route_a, true);
    add_common(app.add_subcommand("occlude", "Per-channel occlusion importance"), occ_a, true);

    try {
        app.parse(argc, argv);
        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "gen-data") return cmd_gen_data(gen_a);
        if (sub == "pretrain") return cmd_pretrain(pre_a);
        if (sub == "reconstruct") return cmd_reconstruct(rec_a, rec_n);
        if (sub == "finetune") return cmd_finetune(fin_a);
        if (sub == "gradcheck") return cmd_gradcheck(grad_a);
        if (sub == "route-stats") return cmd_route_stats(route_a);
        if (sub == "occlude") return cmd_occlude(occ_a);
        return error_out("validation", "unknown subcommand", 1);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const NumericError& e) {
        return error_out("divergence", e.what(), 2);
    } catch (const IoError& e) {
        return error_out("io", e.what(), 3);
    } catch (const std::exception& e) {
        return error_out("validation", e.what(), 1);
    }
}
