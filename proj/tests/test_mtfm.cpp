#include <doctest.h>

#include <cmath>

#include "brainof/errors.hpp"
#include "brainof/mtfm.hpp"
#include "brainof/rng.hpp"
#include "brainof/signal.hpp"

using namespace brainof;

namespace {
Signal random_signal(Modality m, std::size_t n, std::size_t t, std::uint64_t seed) {
    Rng rng(seed);
    Signal s;
    s.modality = m;
    s.values = Tensor({n, t});
    for (auto& v : s.values.data) v = rng.normal(0, 1);
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

double energy(const Tensor& t) {
    double e = 0;
    for (double v : t.data) e += v * v;
    return e;
}

MaskPlan empty_plan(const Signal& s) {
    MaskPlan plan;
    const bool spatial = s.modality == Modality::fMRI;
    plan.masked_bins.assign(spatial ? s.timepoints() : s.channels(), {});
    return plan;
}
}  // namespace

TEST_CASE("freq transform round trip on both dispatch branches") {
    for (auto m : {Modality::fMRI, Modality::EEG}) {
        Signal s = random_signal(m, 6, 16, 61);
        Tensor back = inverse_freq_transform(m, freq_transform(s), 6, 16);
        CHECK(max_abs_diff(back, s.values) < 1e-6);
    }
}

TEST_CASE("freq transform dispatches on modality") {
    Signal eeg = random_signal(Modality::EEG, 3, 12, 62);
    auto spectra = freq_transform(eeg);
    CHECK(spectra.size() == 3);       // one per channel row
    CHECK(spectra[0].n == 12);        // temporal axis

    Signal fmri = random_signal(Modality::fMRI, 5, 7, 63);
    auto sp2 = freq_transform(fmri);
    CHECK(sp2.size() == 7);           // one per timepoint column
    CHECK(sp2[0].n == 5);             // spatial axis
}

TEST_CASE("constant EEG channel has only a DC bin") {
    Signal s = random_signal(Modality::EEG, 2, 8, 64);
    for (std::size_t t = 0; t < 8; ++t) s.values.at(0, t) = 3.0;
    auto spectra = freq_transform(s);
    CHECK(spectra[0].re[0] == doctest::Approx(24.0).epsilon(1e-9));
    for (std::size_t k = 1; k < spectra[0].bins(); ++k)
        CHECK(std::hypot(spectra[0].re[k], spectra[0].im[k]) < 1e-9);
}

TEST_CASE("freq mask ratio 0 is identity and ratio 1 zeroes the signal") {
    Signal s = random_signal(Modality::EEG, 4, 16, 65);
    Signal same = apply_freq_mask(s, empty_plan(s));
    CHECK(max_abs_diff(same.values, s.values) < 1e-6);

    MaskPlan full = empty_plan(s);
    for (auto& row : full.masked_bins) {
        row.resize(16 / 2 + 1);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = k;
    }
    Signal zeroed = apply_freq_mask(s, full);
    CHECK(energy(zeroed.values) < 1e-12);
}

TEST_CASE("masking one tone of a two tone signal removes exactly that tone") {
    const std::size_t t_len = 32;
    Signal s;
    s.modality = Modality::EEG;
    s.values = Tensor({1, t_len});
    for (std::size_t t = 0; t < t_len; ++t)
        s.values.at(0, t) = std::cos(2.0 * M_PI * 3.0 * t / t_len) +
                            0.5 * std::sin(2.0 * M_PI * 7.0 * t / t_len);
    MaskPlan plan = empty_plan(s);
    plan.masked_bins[0] = {3};
    Signal out = apply_freq_mask(s, plan);
    for (std::size_t t = 0; t < t_len; ++t)
        CHECK(out.values.at(0, t) ==
              doctest::Approx(0.5 * std::sin(2.0 * M_PI * 7.0 * t / t_len)).epsilon(1e-9));
}

TEST_CASE("temporal mask examples") {
    Signal s = random_signal(Modality::EEG, 3, 12, 66);
    MaskPlan plan;
    Signal same = apply_temporal_mask(s, plan, 4);
    CHECK(max_abs_diff(same.values, s.values) == 0.0);

    // patches 3,4,5 cover channel 1 entirely (3 patches per channel)
    plan.masked_patches = {3, 4, 5};
    Signal out = apply_temporal_mask(s, plan, 4);
    for (std::size_t t = 0; t < 12; ++t) CHECK(out.values.at(1, t) == 0.0);
    CHECK(energy(out.values) <= energy(s.values));
    // untouched channels survive bitwise
    for (std::size_t t = 0; t < 12; ++t) {
        CHECK(out.values.at(0, t) == s.values.at(0, t));
        CHECK(out.values.at(2, t) == s.values.at(2, t));
    }
}

TEST_CASE("mask plan counts follow the sampled ratios") {
    Signal s = random_signal(Modality::EEG, 4, 32, 67);
    TokenSequence ts = patchify(s, 8, 32);
    Rng rng(99);
    MaskPlan plan = sample_mask_plan(s, ts.layout, rng, 0.7, 0.05);
    CHECK(plan.freq_ratio >= 0.0);
    CHECK(plan.freq_ratio <= 1.0);
    const std::size_t bins = 32 / 2 + 1;
    const auto want_bins =
        static_cast<std::size_t>(std::llround(plan.freq_ratio * static_cast<double>(bins)));
    REQUIRE(plan.masked_bins.size() == 4);
    for (const auto& row : plan.masked_bins) {
        CHECK(row.size() == want_bins);
        for (std::size_t i = 1; i < row.size(); ++i) CHECK(row[i] > row[i - 1]);  // no repeats
    }
    const auto want_patches = static_cast<std::size_t>(
        std::llround(plan.temporal_ratio * static_cast<double>(ts.layout.valid_tokens())));
    CHECK(plan.masked_patches.size() == want_patches);
}

TEST_CASE("mask plans are reproducible from the rng state") {
    Signal s = random_signal(Modality::EEG, 4, 32, 68);
    TokenSequence ts = patchify(s, 8, 32);
    Rng a(5), b(5);
    MaskPlan pa = sample_mask_plan(s, ts.layout, a);
    MaskPlan pb = sample_mask_plan(s, ts.layout, b);
    CHECK(pa.freq_ratio == pb.freq_ratio);
    CHECK(pa.masked_bins == pb.masked_bins);
    CHECK(pa.masked_patches == pb.masked_patches);
}

TEST_CASE("mtfm loss zero when prediction equals target") {
    Signal s = random_signal(Modality::EEG, 2, 16, 69);
    MtfmLoss l = mtfm_loss(ad::constant(s.values), s, 0.8);
    CHECK(l.time->value.data[0] == 0.0);
    CHECK(l.freq->value.data[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(l.total->value.data[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("mtfm loss alpha combination recomputed independently") {
    Signal s = random_signal(Modality::EEG, 2, 16, 70);
    Tensor pred = random_signal(Modality::EEG, 2, 16, 71).values;
    for (double alpha : {0.0, 0.35, 0.8, 1.0}) {
        MtfmLoss l = mtfm_loss(ad::constant(pred), s, alpha);
        const double want =
            (1.0 - alpha) * l.time->value.data[0] + alpha * l.freq->value.data[0];
        CHECK(l.total->value.data[0] == doctest::Approx(want).epsilon(1e-15));
    }
    MtfmLoss l0 = mtfm_loss(ad::constant(pred), s, 0.0);
    CHECK(l0.total->value.data[0] == l0.time->value.data[0]);
    MtfmLoss l1 = mtfm_loss(ad::constant(pred), s, 1.0);
    CHECK(l1.total->value.data[0] == l1.freq->value.data[0]);
}

TEST_CASE("differentiable spectral magnitude matches the rfft oracle") {
    for (auto m : {Modality::fMRI, Modality::EEG}) {
        Signal s = random_signal(m, 5, 12, 72);
        Tensor oracle = spectral_magnitude(s);
        ad::Var var = spectral_magnitude_var(ad::constant(s.values), m);
        REQUIRE(var->value.shape == oracle.shape);
        CHECK(max_abs_diff(var->value, oracle) < 1e-9);
    }
}

TEST_CASE("freq loss invariant to circular time shift of a tone") {
    const std::size_t t_len = 16;
    auto tone = [&](std::size_t shift) {
        Signal s;
        s.modality = Modality::EEG;
        s.values = Tensor({1, t_len});
        for (std::size_t t = 0; t < t_len; ++t)
            s.values.at(0, t) = std::cos(2.0 * M_PI * 2.0 * (t + shift) / t_len);
        return s;
    };
    Tensor a = spectral_magnitude(tone(0));
    Tensor b = spectral_magnitude(tone(5));
    CHECK(max_abs_diff(a, b) < 1e-9);
}

TEST_CASE("reconstruction target is the original signal") {
    // perturbed input differs from the target passed to the loss: masking the
    // signal must not change the loss target
    Signal s = random_signal(Modality::EEG, 2, 16, 73);
    MaskPlan plan = empty_plan(s);
    plan.masked_patches = {0};
    Signal perturbed = apply_temporal_mask(s, plan, 8);
    MtfmLoss l = mtfm_loss(ad::constant(perturbed.values), s, 0.8);
    CHECK(l.time->value.data[0] > 0.0);  // zeroed patch counted against the original
}
