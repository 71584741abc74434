#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "brainof/errors.hpp"
#include "brainof/runconfig.hpp"

using namespace brainof;

namespace {
std::filesystem::path write_config(const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / "brainof_cfg_test.json";
    std::ofstream f(path);
    f << body;
    return path;
}
}  // namespace

TEST_CASE("defaults load without a config file") {
    RunConfig rc = load_run_config("", {});
    CHECK(rc.model.embed_dim == 32);
    CHECK(rc.model.latents == 16);
    CHECK(rc.train.steps == 300);
    CHECK(rc.train.alpha == doctest::Approx(0.8));
    CHECK(rc.data.modality == "EEG");
}

TEST_CASE("config file values override defaults") {
    auto path = write_config(R"({"model": {"embed_dim": 16, "heads": 2},
                                 "train": {"steps": 50},
                                 "data": {"n_train": 12}})");
    RunConfig rc = load_run_config(path, {});
    CHECK(rc.model.embed_dim == 16);
    CHECK(rc.model.heads == 2);
    CHECK(rc.train.steps == 50);
    CHECK(rc.data.n_train == 12);
    CHECK(rc.model.latents == 16);  // untouched default
    std::filesystem::remove(path);
}

TEST_CASE("unknown keys are rejected") {
    auto path = write_config(R"({"model": {"embed_dims": 16}})");
    CHECK_THROWS_AS(load_run_config(path, {}), ConfigError);
    std::filesystem::remove(path);

    auto path2 = write_config(R"({"models": {}})");
    CHECK_THROWS_AS(load_run_config(path2, {}), ConfigError);
    std::filesystem::remove(path2);

    CHECK_THROWS_AS(load_run_config("", {"train.step=5"}), ConfigError);
}

TEST_CASE("set overrides win over file values") {
    auto path = write_config(R"({"train": {"steps": 50}})");
    RunConfig rc = load_run_config(path, {"train.steps=75", "model.heads=8",
                                          "train.lr_peak=0.01", "data.modality=MEG",
                                          "data.single_informative_channel=true"});
    CHECK(rc.train.steps == 75);
    CHECK(rc.model.heads == 8);
    CHECK(rc.train.lr_peak == doctest::Approx(0.01));
    CHECK(rc.data.modality == "MEG");
    CHECK(rc.data.single_informative_channel);
    std::filesystem::remove(path);
}

TEST_CASE("malformed override is rejected") {
    CHECK_THROWS_AS(load_run_config("", {"no_equals_sign"}), ConfigError);
    CHECK_THROWS_AS(load_run_config("", {"train=5"}), ConfigError);
}

TEST_CASE("validation catches bad combinations") {
    CHECK_THROWS_AS(load_run_config("", {"model.active_experts=9"}), ConfigError);
    CHECK_THROWS_AS(load_run_config("", {"model.embed_dim=30"}), ConfigError);
    CHECK_THROWS_AS(load_run_config("", {"model.heads=0"}), ConfigError);
}

TEST_CASE("config json round trip") {
    RunConfig rc = load_run_config("", {"train.steps=77", "model.embed_dim=16",
                                        "model.heads=2"});
    auto path = write_config(run_config_to_json(rc));
    RunConfig back = load_run_config(path, {});
    CHECK(back.train.steps == 77);
    CHECK(back.model.embed_dim == 16);
    CHECK(back.model.heads == 2);
    CHECK(back.train.alpha == rc.train.alpha);
    std::filesystem::remove(path);
}

TEST_CASE("model config validation rules") {
    ModelConfig cfg;
    cfg.heads = 5;  // embed_dim 32 not divisible
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    ModelConfig cfg2;
    cfg2.active_experts = 0;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);

    ModelConfig cfg3;
    cfg3.conv_channels.clear();
    CHECK_THROWS_AS(cfg3.validate(), ConfigError);

    ModelConfig ok;
    CHECK_NOTHROW(ok.validate());
}
