#include <doctest.h>

#include <cmath>

#include "brainof/encoder.hpp"
#include "brainof/errors.hpp"
#include "brainof/rng.hpp"
#include "brainof/signal.hpp"

using namespace brainof;

TEST_CASE("conv1d kernel 0 1 0 is identity") {
    Tensor x = Tensor::matrix({{1, -2, 3, 4, -5}});
    Tensor w = Tensor::matrix({{0, 1, 0}});
    Tensor y = conv1d(x, w);
    CHECK(y.shape == x.shape);
    CHECK(y.data == x.data);
}

TEST_CASE("conv1d box kernel hand computation") {
    Tensor x = Tensor::matrix({{1, 1, 1, 1}});
    Tensor w = Tensor::matrix({{1, 1, 1}});
    Tensor y = conv1d(x, w);
    CHECK(y.data == std::vector<double>{2, 3, 3, 2});
}

TEST_CASE("conv1d random case matches sliding window oracle") {
    Rng rng(31);
    const std::size_t ch_in = 3, ch_out = 2, t = 7;
    Tensor x({ch_in, t}), w({ch_out, ch_in * 3});
    for (auto& v : x.data) v = rng.normal(0, 1);
    for (auto& v : w.data) v = rng.normal(0, 1);
    Tensor y = conv1d(x, w);
    REQUIRE(y.shape == std::vector<std::size_t>{ch_out, t});
    for (std::size_t o = 0; o < ch_out; ++o)
        for (std::size_t ti = 0; ti < t; ++ti) {
            double acc = 0;
            for (std::size_t i = 0; i < ch_in; ++i)
                for (std::size_t k = 0; k < 3; ++k) {
                    const long src = static_cast<long>(ti) + static_cast<long>(k) - 1;
                    if (src >= 0 && src < static_cast<long>(t))
                        acc += x.at(i, static_cast<std::size_t>(src)) * w.at(o, i * 3 + k);
                }
            CHECK(y.at(o, ti) == doctest::Approx(acc).epsilon(1e-12));
        }
}

namespace {
ModelConfig encoder_config() {
    ModelConfig cfg;
    cfg.embed_dim = 32;
    cfg.patch_len = 16;
    cfg.max_seq_len = 16;
    return cfg;
}
}  // namespace

TEST_CASE("encode zeroes padding rows and maps zero patches to zero") {
    ModelConfig cfg = encoder_config();
    ParamStore store;
    Rng rng(3);
    EncoderParams params = make_encoder(store, cfg, rng);

    Rng data_rng(4);
    Tensor patches({16, 16});
    for (auto& v : patches.data) v = data_rng.normal(0, 1);
    // row 2 is a valid all-zero patch
    for (std::size_t j = 0; j < 16; ++j) patches.at(2, j) = 0.0;
    std::vector<std::uint8_t> valid(16, 0);
    for (std::size_t i = 0; i < 9; ++i) valid[i] = 1;

    ad::Var out = encode(ad::constant(patches), valid, params, cfg);
    REQUIRE(out->value.shape == std::vector<std::size_t>{16, 32});
    for (std::size_t j = 0; j < 32; ++j) {
        CHECK(out->value.at(2, j) == 0.0);  // zero patch -> zero embedding
        for (std::size_t i = 9; i < 16; ++i) CHECK(out->value.at(i, j) == 0.0);
    }
}

TEST_CASE("encode output depends only on sequence length") {
    ModelConfig cfg = encoder_config();
    ParamStore store;
    Rng rng(8);
    EncoderParams params = make_encoder(store, cfg, rng);
    for (std::size_t n_valid : {1ul, 5ul, 16ul}) {
        Rng data_rng(9);
        Tensor patches({16, 16});
        for (auto& v : patches.data) v = data_rng.normal(0, 1);
        std::vector<std::uint8_t> valid(16, 0);
        for (std::size_t i = 0; i < n_valid; ++i) valid[i] = 1;
        ad::Var out = encode(ad::constant(patches), valid, params, cfg);
        CHECK(out->value.shape == std::vector<std::size_t>{16, 32});
    }
}

TEST_CASE("encode rejects patch length mismatch") {
    ModelConfig cfg = encoder_config();
    ParamStore store;
    Rng rng(3);
    EncoderParams params = make_encoder(store, cfg, rng);
    std::vector<std::uint8_t> valid(16, 1);
    CHECK_THROWS_AS(encode(ad::constant(Tensor::zeros({16, 8})), valid, params, cfg),
                    DimensionError);
}
