#include <doctest.h>

#include <cmath>

#include "brainof/dint.hpp"
#include "brainof/errors.hpp"
#include "brainof/rng.hpp"

using namespace brainof;

namespace {
ModelConfig dint_config() {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.latents = 6;
    cfg.heads = 2;
    return cfg;
}

// Random projections but identity V/O so the output of dint_attention on an
// all-ones Z reads out the row sums of the combined attention matrix.
DintParams row_sum_probe(const ModelConfig& cfg, Rng& rng, std::size_t layer) {
    const std::size_t d = cfg.embed_dim;
    DintParams p;
    p.layer_index = layer;
    Tensor wq({d, d}), wk({d, d});
    for (auto& v : wq.data) v = rng.normal(0, 0.5);
    for (auto& v : wk.data) v = rng.normal(0, 0.5);
    p.wq = ad::constant(wq);
    p.wk = ad::constant(wk);
    Tensor eye = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    p.wv = ad::constant(eye);
    p.wo = ad::constant(eye);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        DintHeadLambda lam;
        Tensor t({cfg.half_head_dim()});
        auto draw = [&] {
            for (auto& v : t.data) v = rng.normal(0, 0.4);
            return ad::constant(t);
        };
        lam.q1 = draw();
        lam.k1 = draw();
        lam.q2 = draw();
        lam.k2 = draw();
        p.lambdas.push_back(lam);
    }
    return p;
}
}  // namespace

TEST_CASE("lambda init schedule") {
    CHECK(lambda_init(1) == doctest::Approx(0.2).epsilon(1e-15));
    double prev = lambda_init(1);
    for (std::size_t l = 2; l <= 12; ++l) {
        const double v = lambda_init(l);
        CHECK(v > prev);
        CHECK(v < 0.8);
        prev = v;
    }
    CHECK(lambda_init(100) == doctest::Approx(0.8).epsilon(1e-9));
    CHECK_THROWS_AS(lambda_init(0), InputError);
}

TEST_CASE("lambda value examples") {
    const std::size_t d = 4;
    DintHeadLambda lam;
    lam.q1 = ad::constant(Tensor::zeros({d}));
    lam.k1 = ad::constant(Tensor::zeros({d}));
    lam.q2 = ad::constant(Tensor::zeros({d}));
    lam.k2 = ad::constant(Tensor::zeros({d}));
    // all-zero vectors at l=1: 1 - 1 + 0.2
    CHECK(lambda_value(lam, 1)->value.data[0] == doctest::Approx(0.2).epsilon(1e-15));

    // <q1,k1> = ln 2, rest zero: 2 - 1 + 0.2 = 1.2
    Tensor q1 = Tensor::zeros({d});
    q1.data[0] = std::log(2.0);
    Tensor k1 = Tensor::zeros({d});
    k1.data[0] = 1.0;
    lam.q1 = ad::constant(q1);
    lam.k1 = ad::constant(k1);
    CHECK(lambda_value(lam, 1)->value.data[0] == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("lambda value clamps dot products") {
    const std::size_t d = 2;
    DintHeadLambda lam;
    lam.q1 = ad::constant(Tensor::full({d}, 100.0));
    lam.k1 = ad::constant(Tensor::full({d}, 100.0));
    lam.q2 = ad::constant(Tensor::zeros({d}));
    lam.k2 = ad::constant(Tensor::zeros({d}));
    const double v = lambda_value(lam, 1)->value.data[0];
    CHECK(v == doctest::Approx(std::exp(20.0) - 1.0 + 0.2).epsilon(1e-9));
}

TEST_CASE("combined attention rows sum to one over random draws") {
    ModelConfig cfg = dint_config();
    Rng rng(123);
    ad::Var ones = ad::constant(Tensor::full({cfg.latents, cfg.embed_dim}, 1.0));
    for (int draw = 0; draw < 100; ++draw) {
        DintParams p = row_sum_probe(cfg, rng, 1 + draw % 4);
        ad::Var out = dint_attention(ones, p, cfg);
        for (double v : out->value.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("single latent token collapses to V") {
    ModelConfig cfg = dint_config();
    cfg.latents = 1;
    Rng rng(7);
    DintParams p = row_sum_probe(cfg, rng, 2);
    Rng data(8);
    Tensor z({1, cfg.embed_dim});
    for (auto& v : z.data) v = data.normal(0, 1);
    // wv = wo = I, C = 1: combined = [[1]] so the output equals V = z
    ad::Var out = dint_attention(ad::constant(z), p, cfg);
    for (std::size_t j = 0; j < cfg.embed_dim; ++j)
        CHECK(out->value.data[j] == doctest::Approx(z.data[j]).epsilon(1e-9));
}

TEST_CASE("make_dint wires shapes and layer index") {
    ModelConfig cfg = dint_config();
    ParamStore store;
    Rng rng(11);
    DintParams p = make_dint(store, cfg, 3, rng, "dint");
    CHECK(p.layer_index == 3);
    CHECK(p.wq->value.shape == std::vector<std::size_t>{16, 16});
    REQUIRE(p.lambdas.size() == cfg.heads);
    CHECK(p.lambdas[0].q1->value.shape == std::vector<std::size_t>{cfg.half_head_dim()});

    Rng data(12);
    Tensor z({cfg.latents, cfg.embed_dim});
    for (auto& v : z.data) v = data.normal(0, 1);
    ad::Var out = dint_attention(ad::constant(z), p, cfg);
    CHECK(out->value.shape == std::vector<std::size_t>{cfg.latents, cfg.embed_dim});
}

TEST_CASE("rope position zero is identity") {
    Rng rng(21);
    Tensor x({3, 8});
    for (auto& v : x.data) v = rng.normal(0, 1);
    ad::Var y = ad::rope_rows(ad::constant(x), {0, 0, 0});
    CHECK(y->value.data == x.data);
}

TEST_CASE("rope preserves norms") {
    Rng rng(22);
    for (int draw = 0; draw < 20; ++draw) {
        Tensor x({1, 8});
        for (auto& v : x.data) v = rng.normal(0, 1);
        ad::Var y = ad::rope_rows(ad::constant(x), {static_cast<std::size_t>(1 + draw * 3)});
        CHECK(l2_norm(y->value) == doctest::Approx(l2_norm(x)).epsilon(1e-9));
    }
}

TEST_CASE("rope relative position invariance") {
    Rng rng(23);
    for (int draw = 0; draw < 100; ++draw) {
        Tensor q({1, 8}), k({1, 8});
        for (auto& v : q.data) v = rng.normal(0, 1);
        for (auto& v : k.data) v = rng.normal(0, 1);
        const std::size_t p = rng.integer(0, 40), pp = rng.integer(0, 40);
        const std::size_t s = rng.integer(0, 30);
        const double base = dot(ad::rope_rows(ad::constant(q), {p})->value,
                                ad::rope_rows(ad::constant(k), {pp})->value);
        const double shifted = dot(ad::rope_rows(ad::constant(q), {p + s})->value,
                                   ad::rope_rows(ad::constant(k), {pp + s})->value);
        CHECK(shifted == doctest::Approx(base).epsilon(1e-5));
    }
}
