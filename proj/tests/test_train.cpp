#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "brainof/errors.hpp"
#include "brainof/mtfm.hpp"
#include "brainof/npy.hpp"
#include "brainof/rng.hpp"
#include "brainof/train.hpp"

using namespace brainof;

namespace {
ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.latents = 4;
    cfg.heads = 2;
    cfg.patch_len = 8;
    cfg.max_seq_len = 8;
    cfg.backbone_layers = 1;
    cfg.arness_layers = 1;
    cfg.routed_experts = 3;
    cfg.active_experts = 2;
    cfg.conv_channels = {2};
    return cfg;
}

Signal tiny_signal(std::uint64_t seed) {
    Rng rng(seed);
    Signal s;
    s.modality = Modality::EEG;
    s.values = Tensor({2, 16});
    for (auto& v : s.values.data) v = rng.normal(0, 1);
    return s;
}
}  // namespace

TEST_CASE("lr schedule endpoints and midpoint") {
    const double peak = 3e-3, start = 3e-5;
    CHECK(lr_schedule(16, 16, 300, peak, start) == doctest::Approx(peak).epsilon(1e-12));
    CHECK(std::abs(lr_schedule(300, 16, 300, peak, start)) < 1e-12);
    // midpoint of the cosine phase
    CHECK(lr_schedule(158, 16, 300, peak, start) == doctest::Approx(peak / 2).epsilon(1e-12));
    // warmup ramp starts at the warmup lr
    CHECK(lr_schedule(0, 16, 300, peak, start) == doctest::Approx(start).epsilon(1e-9));
    // continuity just after the junction
    CHECK(lr_schedule(17, 16, 300, peak, start) < peak);
    CHECK(lr_schedule(17, 16, 300, peak, start) > 0.9 * peak);
}

TEST_CASE("gradient clipping examples") {
    ParamStore store;
    ad::Var p = store.create("p", Tensor({2}, {0.0, 0.0}));

    p->grad = Tensor({2}, {3.0, 4.0});  // norm 5: at the threshold, unchanged
    CHECK(clip_gradients(store, 5.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(p->grad.data == std::vector<double>{3.0, 4.0});

    p->grad = Tensor({2}, {6.0, 8.0});  // norm 10 -> rescaled to 5
    CHECK(clip_gradients(store, 5.0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(l2_norm(p->grad) == doctest::Approx(5.0).epsilon(1e-9));
    // direction preserved
    CHECK(p->grad.data[1] / p->grad.data[0] == doctest::Approx(8.0 / 6.0).epsilon(1e-12));

    p->grad = Tensor({2}, {1.0, 2.0});  // norm < max, untouched
    clip_gradients(store, 5.0);
    CHECK(p->grad.data == std::vector<double>{1.0, 2.0});
}

TEST_CASE("adamw first step and zero gradient") {
    OptimizerConfig oc;
    oc.weight_decay = 0.0;
    {
        ParamStore store;
        ad::Var p = store.create("p", Tensor({1}, {0.7}));
        p->grad = Tensor({1}, {1.0});
        OptimizerState st;
        adamw_step(store, st, oc, 0.01);
        CHECK(p->value.data[0] == doctest::Approx(0.7 - 0.01).epsilon(1e-6));
    }
    {
        ParamStore store;
        ad::Var p = store.create("p", Tensor({1}, {0.7}));
        OptimizerState st;
        adamw_step(store, st, oc, 0.01);  // zero grad, zero decay
        CHECK(p->value.data[0] == 0.7);
    }
}

TEST_CASE("adamw converges on a quadratic") {
    OptimizerConfig oc;
    oc.weight_decay = 0.0;
    ParamStore store;
    ad::Var x = store.create("x", Tensor({1}, {5.0}));
    OptimizerState st;
    const double target = 1.25;
    for (int step = 0; step < 500; ++step) {
        store.zero_grad();
        x->grad.data[0] = 2.0 * (x->value.data[0] - target);
        adamw_step(store, st, oc, 0.05);
    }
    CHECK(std::abs(x->value.data[0] - target) < 1e-3);
}

TEST_CASE("adamw rejects non finite gradients") {
    ParamStore store;
    ad::Var p = store.create("p", Tensor({1}, {0.0}));
    p->grad.data[0] = std::nan("");
    OptimizerState st;
    OptimizerConfig oc;
    CHECK_THROWS_AS(adamw_step(store, st, oc, 0.01), NumericError);
}

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
    const auto dir = std::filesystem::temp_directory_path() / "brainof_ckpt_test";
    std::filesystem::remove_all(dir);

    BrainOfModel model(tiny_model_config(), 7);
    Signal s = tiny_signal(70);
    TokenSequence ts = patchify(s, 8, 8);
    model.reset_router_loads();
    Tensor before = model.latents(ts)->value;
    model.reset_router_loads();

    OptimizerState opt;
    opt.m["arness.z0"] = Tensor::full({4, 8}, 0.25);
    opt.v["arness.z0"] = Tensor::full({4, 8}, 0.5);
    opt.step = 11;
    save_checkpoint(dir, model, opt, "rng-state-blob", 42);

    ModelConfig cfg2 = load_checkpoint_config(dir);
    BrainOfModel restored(cfg2, 999);  // different init seed; weights overwritten by load
    LoadedCheckpoint lc = load_checkpoint(dir, restored);
    CHECK(lc.step == 42);
    CHECK(lc.rng_state == "rng-state-blob");
    CHECK(lc.opt.step == 11);
    CHECK(lc.opt.m.at("arness.z0").data == opt.m.at("arness.z0").data);

    Tensor after = restored.latents(ts)->value;
    restored.reset_router_loads();
    CHECK(after.data == before.data);

    // save -> load -> save produces identical weight bytes
    const auto dir2 = std::filesystem::temp_directory_path() / "brainof_ckpt_test2";
    std::filesystem::remove_all(dir2);
    save_checkpoint(dir2, restored, lc.opt, lc.rng_state, lc.step);
    for (const auto& entry : std::filesystem::directory_iterator(dir / "weights")) {
        Tensor a = npy::load(entry.path());
        Tensor b = npy::load(dir2 / "weights" / entry.path().filename());
        CHECK(a.data == b.data);
    }
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("pretrain trajectory is deterministic") {
    PretrainOptions opts;
    opts.steps = 3;
    opts.batch = 2;
    std::vector<Signal> data = {tiny_signal(80), tiny_signal(81)};
    BrainOfModel a(tiny_model_config(), 5);
    BrainOfModel b(tiny_model_config(), 5);
    auto ma = pretrain(a, data, opts);
    auto mb = pretrain(b, data, opts);
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
        CHECK(ma[i].loss_total == mb[i].loss_total);
        CHECK(ma[i].grad_norm == mb[i].grad_norm);
    }
}

TEST_CASE("balanced accuracy examples") {
    CHECK(balanced_accuracy({1, 1, 0, 0}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(balanced_accuracy({1, 1, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(0.5));
    // 2/3 on positives, 1/1 on negatives -> (2/3 + 1)/2
    CHECK(balanced_accuracy({1, 1, 0, 0}, {1, 1, 1, 0}) ==
          doctest::Approx((2.0 / 3.0 + 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("modality importance sign conventions") {
    CHECK(modality_importance(80.0, 80.0, false) == doctest::Approx(0.0));
    CHECK(modality_importance(80.0, 72.0, false) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(modality_importance(9.0, 9.9, true) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK_THROWS_AS(modality_importance(0.0, 1.0, false), InputError);
}

TEST_CASE("classify produces a binary label") {
    BrainOfModel model(tiny_model_config(), 13);
    ad::Var head = make_head(model, 13);
    CHECK(head->value.shape == std::vector<std::size_t>{8, 2});
    const int pred = classify(model, head, tiny_signal(90));
    model.reset_router_loads();
    CHECK((pred == 0 || pred == 1));
}
