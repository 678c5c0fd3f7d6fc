#include <catch2/catch_amalgamated.hpp>

#include "fmpn/maskgen.hpp"
#include "fmpn/synthdata.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using fmpn::FacePair;
using fmpn::Tensor;
using testutil::TempDir;

namespace {

Tensor image_from(const std::vector<double>& v, int h, int w) {
    Tensor t({h, w});
    for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<std::int64_t>(i)] = v[i];
    return t;
}

std::vector<FacePair> random_pairs(int count, int h, int w, fmpn::Rng& rng) {
    std::vector<FacePair> pairs;
    for (int i = 0; i < count; ++i) {
        FacePair p;
        p.key = "pair" + std::to_string(i);
        p.expressive = testutil::random_tensor({h, w}, rng);
        p.neutral = testutil::random_tensor({h, w}, rng);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

/// Pairs quantized to the 8-bit grid, as faces loaded from PNG would be.
std::vector<FacePair> random_pairs_8bit(int count, int h, int w, fmpn::Rng& rng) {
    auto pairs = random_pairs(count, h, w, rng);
    for (auto& p : pairs) {
        for (std::int64_t i = 0; i < p.expressive.size(); ++i) {
            p.expressive[i] = fmpn::to_u8(p.expressive[i]) / 255.0;
            p.neutral[i] = fmpn::to_u8(p.neutral[i]) / 255.0;
        }
    }
    return pairs;
}

} // namespace

TEST_CASE("mean_abs_diff: identical pair yields zeros") {
    fmpn::Rng rng(1);
    FacePair p;
    p.expressive = testutil::random_tensor({4, 4}, rng);
    p.neutral = p.expressive;
    const Tensor d = fmpn::mean_abs_diff({p});
    for (std::int64_t i = 0; i < d.size(); ++i) REQUIRE(d[i] == 0.0);
}

TEST_CASE("mean_abs_diff: forced two-pair arithmetic") {
    FacePair a, b;
    a.expressive = image_from({0.0, 0.2, 0.4, 0.6}, 2, 2);
    a.neutral = image_from({0.0, 0.0, 0.0, 0.0}, 2, 2);
    b.expressive = image_from({0.2, 0.2, 0.4, 0.2}, 2, 2);
    b.neutral = image_from({0.0, 0.0, 0.0, 0.0}, 2, 2);
    const Tensor d = fmpn::mean_abs_diff({a, b});
    CHECK(d[0] == Catch::Approx(0.1).margin(1e-12));
    CHECK(d[1] == Catch::Approx(0.2).margin(1e-12));
    CHECK(d[2] == Catch::Approx(0.4).margin(1e-12));
    CHECK(d[3] == Catch::Approx(0.4).margin(1e-12));
}

TEST_CASE("mean_abs_diff: matches the scalar-loop oracle") {
    fmpn::Rng rng(77);
    const auto pairs = random_pairs(50, 6, 5, rng);
    const Tensor mine = fmpn::mean_abs_diff(pairs);
    const Tensor ref = oracle::naive_mean_abs_diff(pairs);
    CHECK(fmpn::max_abs_diff(mine, ref) < 1e-7);
}

TEST_CASE("mean_abs_diff: argument errors") {
    CHECK_THROWS_AS(fmpn::mean_abs_diff({}), fmpn::ArgumentError);
    fmpn::Rng rng(2);
    FacePair p;
    p.expressive = testutil::random_tensor({4, 4}, rng);
    p.neutral = testutil::random_tensor({4, 5}, rng);
    CHECK_THROWS_AS(fmpn::mean_abs_diff({p}), fmpn::ShapeError);
}

TEST_CASE("equalize: constant image maps to zeros") {
    const Tensor img = Tensor::full({8, 8}, 0.4);
    const Tensor out = fmpn::equalize_histogram(img);
    for (std::int64_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == 0.0);
}

TEST_CASE("equalize: full 256-level ramp is a fixed point within 1/255") {
    Tensor img({16, 16});
    for (int i = 0; i < 256; ++i) img[i] = i / 255.0;
    const Tensor out = fmpn::equalize_histogram(img);
    for (std::int64_t i = 0; i < out.size(); ++i) REQUIRE(std::fabs(out[i] - img[i]) <= 1.0 / 255.0);
}

TEST_CASE("equalize: textbook case {0,0,1,3} is bit-exact") {
    const Tensor img = image_from({0.0, 0.0, 1.0 / 255.0, 3.0 / 255.0}, 2, 2);
    const Tensor out = fmpn::equalize_histogram(img);
    const Tensor ref = oracle::textbook_equalize(img);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.5);
    CHECK(out[3] == 1.0);
    CHECK(fmpn::bit_equal(out, ref));
}

TEST_CASE("equalize: rank preservation across all 256 levels") {
    Tensor img({16, 16});
    fmpn::Rng rng(9);
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = rng.below(256) / 255.0;
    const Tensor out = fmpn::equalize_histogram(img);
    std::vector<double> by_level(256, -1.0);
    for (std::int64_t i = 0; i < img.size(); ++i) {
        by_level[static_cast<std::size_t>(fmpn::to_u8(img[i]))] = out[i];
    }
    double prev = -1.0;
    for (int l = 0; l < 256; ++l) {
        if (by_level[static_cast<std::size_t>(l)] < 0) continue;
        REQUIRE(by_level[static_cast<std::size_t>(l)] >= prev);
        prev = by_level[static_cast<std::size_t>(l)];
    }
}

TEST_CASE("equalize: out-of-range input is rejected") {
    Tensor img = Tensor::full({2, 2}, 1.2);
    CHECK_THROWS_AS(fmpn::equalize_histogram(img), fmpn::ArgumentError);
}

TEST_CASE("compute_class_mask: zero law and composition oracle") {
    fmpn::Rng rng(123);
    // identical pairs -> zero mask
    FacePair same;
    same.key = "x";
    same.expressive = testutil::random_tensor({8, 8}, rng);
    same.neutral = same.expressive;
    const auto zero_mask = fmpn::compute_class_mask({same}, 2);
    CHECK(zero_mask.class_index == 2);
    CHECK(zero_mask.source_count == 1);
    for (std::int64_t i = 0; i < zero_mask.values.size(); ++i) REQUIRE(zero_mask.values[i] == 0.0);

    const auto pairs = random_pairs_8bit(12, 8, 8, rng);
    const auto mask = fmpn::compute_class_mask(pairs, 0);
    CHECK(fmpn::bit_equal(mask.values, oracle::naive_class_mask(pairs)));
    for (std::int64_t i = 0; i < mask.values.size(); ++i) {
        REQUIRE(mask.values[i] >= 0.0);
        REQUIRE(mask.values[i] <= 1.0);
    }
}

TEST_CASE("compute_class_mask: localized difference dominates the mask") {
    fmpn::Rng rng(55);
    std::vector<FacePair> pairs;
    for (int i = 0; i < 6; ++i) {
        FacePair p;
        p.key = "p" + std::to_string(i);
        p.neutral = testutil::random_tensor({16, 16}, rng, 0.3, 0.5);
        p.expressive = p.neutral;
        // "mouth" block rows 10..13, cols 4..11 moves; everything else is identical
        for (int y = 10; y < 14; ++y) {
            for (int x = 4; x < 12; ++x) p.expressive.at(y, x) += rng.uniform(0.2, 0.4);
        }
        pairs.push_back(std::move(p));
    }
    const auto mask = fmpn::compute_class_mask(pairs, 0);
    double inside = 0.0, outside = 0.0;
    int n_in = 0, n_out = 0;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const bool in_block = y >= 10 && y < 14 && x >= 4 && x < 12;
            (in_block ? inside : outside) += mask.values.at(y, x);
            (in_block ? n_in : n_out) += 1;
        }
    }
    CHECK(inside / n_in > outside / n_out);
}

TEST_CASE("mask order invariance") {
    fmpn::Rng rng(31);
    CHECK(fmpn::mask_order_invariance_check(random_pairs(1, 6, 6, rng)));
    auto two = random_pairs(2, 6, 6, rng);
    std::swap(two[0], two[1]);
    CHECK(fmpn::mask_order_invariance_check(two));
    CHECK(fmpn::mask_order_invariance_check(random_pairs_8bit(100, 6, 6, rng), 10));
}

TEST_CASE("generate_mask_bank: missing class coverage is fatal and named") {
    TempDir dir("bank_coverage");
    fmpn::SynthSpec spec = fmpn::default_synth_spec(48);
    spec.subjects = 2;
    spec.samples_per_subject_per_class = 1;
    spec.noise_sigma = 0.0;
    fmpn::DatasetManifest manifest = fmpn::generate(spec, dir.str());
    // drop every "fear" pair
    fmpn::DatasetManifest broken = manifest;
    broken.samples.clear();
    for (const auto& s : manifest.samples) {
        if (manifest.class_names[static_cast<std::size_t>(s.label)] != "fear") broken.samples.push_back(s);
    }
    try {
        fmpn::generate_mask_bank(broken, fmpn::reference_landmarks(48));
        FAIL("expected CoverageError");
    } catch (const fmpn::CoverageError& e) {
        CHECK(std::string(e.what()).find("fear") != std::string::npos);
    }
}

TEST_CASE("generate_mask_bank: zero-difference corpus gives zero masks") {
    TempDir dir("bank_zero");
    fmpn::SynthSpec spec = fmpn::default_synth_spec(48);
    spec.subjects = 2;
    spec.samples_per_subject_per_class = 1;
    spec.noise_sigma = 0.0;
    spec.deform_amplitude = 0.0;
    const auto manifest = fmpn::generate(spec, dir.str());
    const auto bank = fmpn::generate_mask_bank(manifest, fmpn::reference_landmarks(48));
    REQUIRE(bank.masks.size() == 7);
    for (const auto& m : bank.masks) {
        for (std::int64_t i = 0; i < m.values.size(); ++i) REQUIRE(m.values[i] == 0.0);
    }
}

TEST_CASE("mask bank: save/load round trip and completeness check") {
    TempDir corpus("bank_roundtrip_corpus");
    TempDir bank_dir("bank_roundtrip_bank");
    fmpn::SynthSpec spec = fmpn::default_synth_spec(48);
    spec.subjects = 2;
    spec.samples_per_subject_per_class = 1;
    const auto manifest = fmpn::generate(spec, corpus.str());
    const auto bank = fmpn::generate_mask_bank(manifest, fmpn::reference_landmarks(48), "unit-test");
    fmpn::save_mask_bank(bank, bank_dir.str());

    const auto loaded = fmpn::load_mask_bank(bank_dir.str());
    REQUIRE(loaded.class_names == bank.class_names);
    REQUIRE(loaded.provenance == "unit-test");
    REQUIRE(loaded.masks.size() == bank.masks.size());
    for (std::size_t k = 0; k < bank.masks.size(); ++k) {
        CHECK(loaded.masks[k].source_count == bank.masks[k].source_count);
        // 8-bit quantization on disk
        CHECK(fmpn::max_abs_diff(loaded.masks[k].values, bank.masks[k].values) <= 0.5 / 255.0 + 1e-12);
    }

    std::filesystem::remove(std::filesystem::path(bank_dir.str()) / "fear.png");
    CHECK_THROWS_AS(fmpn::load_mask_bank(bank_dir.str()), fmpn::CoverageError);
}
