#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "fmpn/align.hpp"
#include "fmpn/augment.hpp"
#include "fmpn/folds.hpp"
#include "fmpn/image_io.hpp"
#include "fmpn/manifest.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using fmpn::Tensor;
using testutil::TempDir;

namespace {

void write_sidecar(const std::string& csv_path, const std::vector<std::string>& classes, int size) {
    std::filesystem::path p(csv_path);
    p.replace_extension(".json");
    std::ofstream out(p);
    out << "{\"class_names\":[";
    for (std::size_t i = 0; i < classes.size(); ++i) out << (i ? "," : "") << "\"" << classes[i] << "\"";
    out << "],\"image_size\":" << size << "}";
}

std::string lm_fields() { return "10,20,30,20,20,28,12,36,28,36"; }

Tensor ramp_rgb(int h, int w) {
    Tensor rgb({3, h, w});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                rgb.at(c, y, x) = ((c + 1) * 0.09 + 0.7 * y / h + 0.2 * x / w) / 1.6;
            }
        }
    }
    return rgb;
}

} // namespace

TEST_CASE("manifest: header-only file parses to zero samples") {
    TempDir dir("manifest_empty");
    const std::string csv = dir.file("m.csv");
    std::ofstream(csv) << fmpn::kManifestHeader << "\n";
    write_sidecar(csv, {"anger", "contempt", "disgust", "fear", "happiness", "sadness", "surprise"}, 64);
    const auto m = fmpn::load_manifest(csv);
    CHECK(m.samples.empty());
    CHECK(m.num_classes() == 7);
    CHECK(m.image_size == 64);
}

TEST_CASE("manifest: rows keep file order and map labels") {
    TempDir dir("manifest_rows");
    const std::string csv = dir.file("m.csv");
    {
        std::ofstream out(csv);
        out << fmpn::kManifestHeader << "\n";
        out << "a.png,happy,s1," << lm_fields() << ",\n";
        out << "b.png,sad,s1," << lm_fields() << ",\n";
        out << "c.png,happy,s2," << lm_fields() << ",\n";
    }
    write_sidecar(csv, {"happy", "sad"}, 64);
    const auto m = fmpn::load_manifest(csv);
    REQUIRE(m.samples.size() == 3);
    CHECK(m.samples[0].image_path == "a.png");
    CHECK(m.samples[0].label == 0);
    CHECK(m.samples[1].label == 1);
    CHECK(m.samples[2].subject_id == "s2");
    CHECK_FALSE(m.samples[0].neutral_path.has_value());
}

TEST_CASE("manifest: unknown class names the offending row") {
    TempDir dir("manifest_badlabel");
    const std::string csv = dir.file("m.csv");
    {
        std::ofstream out(csv);
        out << fmpn::kManifestHeader << "\n";
        out << "a.png,happy,s1," << lm_fields() << ",\n";
        out << "b.png,joy,s1," << lm_fields() << ",\n";
    }
    write_sidecar(csv, {"happy", "sad"}, 64);
    try {
        fmpn::load_manifest(csv);
        FAIL("expected ValidationError");
    } catch (const fmpn::ValidationError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        CHECK(std::string(e.what()).find("joy") != std::string::npos);
    }
}

TEST_CASE("manifest: malformed coordinate reports row number") {
    TempDir dir("manifest_badnum");
    const std::string csv = dir.file("m.csv");
    {
        std::ofstream out(csv);
        out << fmpn::kManifestHeader << "\n";
        out << "a.png,happy,s1,10,xx,30,20,20,28,12,36,28,36,\n";
    }
    write_sidecar(csv, {"happy", "sad"}, 64);
    try {
        fmpn::load_manifest(csv);
        FAIL("expected ParseError");
    } catch (const fmpn::ParseError& e) {
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("manifest: dangling neutral_path is rejected") {
    TempDir dir("manifest_dangling");
    const std::string csv = dir.file("m.csv");
    {
        std::ofstream out(csv);
        out << fmpn::kManifestHeader << "\n";
        out << "a.png,happy,s1," << lm_fields() << ",missing_neutral.png\n";
    }
    write_sidecar(csv, {"happy", "sad"}, 64);
    CHECK_THROWS_AS(fmpn::load_manifest(csv), fmpn::ValidationError);
}

TEST_CASE("to_grayscale: fixed weights") {
    Tensor white = Tensor::full({3, 2, 2}, 1.0);
    Tensor gray = fmpn::to_grayscale(white);
    for (std::int64_t i = 0; i < gray.size(); ++i) CHECK(gray[i] == Catch::Approx(1.0).margin(1e-12));

    Tensor red({3, 2, 2});
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) red.at(0, y, x) = 1.0;
    }
    gray = fmpn::to_grayscale(red);
    for (std::int64_t i = 0; i < gray.size(); ++i) CHECK(gray[i] == Catch::Approx(0.299).margin(1e-12));
}

TEST_CASE("to_grayscale: matches a scalar loop") {
    fmpn::Rng rng(5);
    Tensor rgb = testutil::random_tensor({3, 2, 2}, rng);
    Tensor gray = fmpn::to_grayscale(rgb);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            const double expected =
                0.299 * rgb.at(0, y, x) + 0.587 * rgb.at(1, y, x) + 0.114 * rgb.at(2, y, x);
            REQUIRE(std::fabs(gray.at(y, x) - expected) < 1e-7);
        }
    }
}

TEST_CASE("align_face: identity landmarks reproduce the input") {
    const int s = 64;
    const fmpn::LandmarkSet ref = fmpn::reference_landmarks(s);
    Tensor rgb = ramp_rgb(s, s);
    const fmpn::AlignedFace face = fmpn::align_face(rgb, ref, ref, s);
    CHECK(fmpn::max_abs_diff(face.rgb, rgb) < 1e-12);
    CHECK(fmpn::max_abs_diff(face.gray, fmpn::to_grayscale(rgb)) < 1e-12);
}

TEST_CASE("align_face: translated input is recovered") {
    const int s = 64;
    const fmpn::LandmarkSet ref = fmpn::reference_landmarks(s);
    Tensor base = ramp_rgb(s, s);
    // shift the content and the landmarks by (7, 4)
    Tensor shifted({3, s, s});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const int sy = std::clamp(y - 4, 0, s - 1);
                const int sx = std::clamp(x - 7, 0, s - 1);
                shifted.at(c, y, x) = base.at(c, sy, sx);
            }
        }
    }
    fmpn::LandmarkSet moved = ref;
    for (std::size_t i = 0; i < 5; ++i) {
        moved[i].x += 7.0;
        moved[i].y += 4.0;
    }
    const fmpn::SimilarityTransform t = fmpn::estimate_similarity(moved, ref);
    CHECK(fmpn::landmark_rms(t.apply(moved), ref) < 0.5);

    const fmpn::AlignedFace face = fmpn::align_face(shifted, moved, ref, s);
    // interior pixels must match the unshifted base
    double max_diff = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 8; y < s - 8; ++y) {
            for (int x = 8; x < s - 8; ++x) {
                max_diff = std::max(max_diff, std::fabs(face.rgb.at(c, y, x) - base.at(c, y, x)));
            }
        }
    }
    CHECK(max_diff < 1e-9);
}

TEST_CASE("align_face: output shape follows out_size") {
    const fmpn::LandmarkSet ref48 = fmpn::reference_landmarks(48);
    const fmpn::AlignedFace face = fmpn::align_face(ramp_rgb(64, 64), fmpn::reference_landmarks(64), ref48, 48);
    CHECK(face.gray.dims() == std::vector<int>{48, 48});
    CHECK(face.rgb.dims() == std::vector<int>{3, 48, 48});
}

TEST_CASE("alignment idempotence on the reference frame") {
    const int s = 64;
    const fmpn::LandmarkSet ref = fmpn::reference_landmarks(s);
    const fmpn::SimilarityTransform t = fmpn::estimate_similarity(ref, ref);
    CHECK(fmpn::landmark_rms(t.apply(ref), ref) < 0.5);
}

TEST_CASE("unreadable image raises IoError") {
    CHECK_THROWS_AS(fmpn::load_rgb("does_not_exist_anywhere.png"), fmpn::IoError);
}

TEST_CASE("augment: full-canvas crop without flip is the identity") {
    fmpn::Rng rng(3);
    fmpn::AlignedFace face;
    face.rgb = ramp_rgb(32, 32);
    face.gray = fmpn::to_grayscale(face.rgb);
    face.label = 1;
    face.subject_id = "s0";
    const fmpn::AlignedFace out = fmpn::augment(face, rng, {32, 0.0});
    CHECK(fmpn::bit_equal(out.gray, face.gray));
    CHECK(fmpn::bit_equal(out.rgb, face.rgb));
    CHECK(out.label == 1);
    CHECK(out.subject_id == "s0");
}

TEST_CASE("augment: equal seeds replay identically") {
    fmpn::AlignedFace face;
    face.rgb = ramp_rgb(32, 32);
    face.gray = fmpn::to_grayscale(face.rgb);
    fmpn::Rng rng_a(99), rng_b(99);
    for (int rep = 0; rep < 10; ++rep) {
        const auto a = fmpn::augment(face, rng_a, {24, 0.5});
        const auto b = fmpn::augment(face, rng_b, {24, 0.5});
        REQUIRE(fmpn::bit_equal(a.gray, b.gray));
        REQUIRE(fmpn::bit_equal(a.rgb, b.rgb));
    }
}

TEST_CASE("augment: flip reverses columns exactly") {
    fmpn::AlignedFace face;
    face.rgb = ramp_rgb(16, 16);
    face.gray = fmpn::to_grayscale(face.rgb);
    fmpn::Rng rng(1);
    const fmpn::AlignedFace out = fmpn::augment(face, rng, {16, 1.0});
    const int w = 16;
    for (int y = 0; y < w; ++y) {
        for (int x = 0; x < w; ++x) {
            REQUIRE(out.gray.at(y, x) == face.gray.at(y, w - 1 - x));
        }
    }
}

TEST_CASE("augment: oversized crop is a config error") {
    fmpn::AlignedFace face;
    face.rgb = ramp_rgb(16, 16);
    face.gray = fmpn::to_grayscale(face.rgb);
    fmpn::Rng rng(1);
    CHECK_THROWS_AS(fmpn::augment(face, rng, {20, 0.5}), fmpn::ConfigError);
}

TEST_CASE("augment keeps gray consistent with rgb") {
    fmpn::Rng rng(12);
    fmpn::AlignedFace face;
    face.rgb = testutil::random_tensor({3, 32, 32}, rng);
    face.gray = fmpn::to_grayscale(face.rgb);
    fmpn::Rng aug_rng(5);
    for (int rep = 0; rep < 8; ++rep) {
        const auto out = fmpn::augment(face, aug_rng, {24, 0.5});
        REQUIRE(fmpn::max_abs_diff(out.gray, fmpn::to_grayscale(out.rgb)) < 1e-6);
    }
}

namespace {

fmpn::DatasetManifest manifest_with_subjects(const std::vector<std::pair<std::string, int>>& rows) {
    fmpn::DatasetManifest m;
    m.class_names = {"a", "b"};
    m.image_size = 64;
    for (const auto& [subject, label] : rows) {
        fmpn::FaceSample s;
        s.image_path = subject + ".png";
        s.subject_id = subject;
        s.label = label;
        m.samples.push_back(s);
    }
    return m;
}

} // namespace

TEST_CASE("plan_folds: one subject per fold when counts match") {
    std::vector<std::pair<std::string, int>> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({"s" + std::to_string(i), i % 2});
    const auto plan = fmpn::plan_folds(manifest_with_subjects(rows), 10);
    for (const auto& fold : plan.folds) REQUIRE(fold.size() == 1);
}

TEST_CASE("plan_folds: two subjects two folds") {
    const auto m = manifest_with_subjects({{"s0", 0}, {"s0", 1}, {"s1", 0}, {"s1", 1}});
    const auto plan = fmpn::plan_folds(m, 2);
    REQUIRE(plan.folds[0] == std::vector<std::string>{"s0"});
    REQUIRE(plan.folds[1] == std::vector<std::string>{"s1"});
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        REQUIRE(plan.assignment[i] == (m.samples[i].subject_id == "s0" ? 0 : 1));
    }
}

TEST_CASE("plan_folds: 25 subjects over 10 folds gives five 3s then five 2s") {
    std::vector<std::pair<std::string, int>> rows;
    for (int i = 0; i < 25; ++i) rows.push_back({"s" + std::to_string(100 + i), 0});
    const auto plan = fmpn::plan_folds(manifest_with_subjects(rows), 10);
    std::vector<std::size_t> sizes;
    for (const auto& fold : plan.folds) sizes.push_back(fold.size());
    CHECK(sizes == std::vector<std::size_t>{3, 3, 3, 3, 3, 2, 2, 2, 2, 2});
    // contiguity in ascending subject order
    std::vector<std::string> flattened;
    for (const auto& fold : plan.folds) flattened.insert(flattened.end(), fold.begin(), fold.end());
    CHECK(std::is_sorted(flattened.begin(), flattened.end()));
}

TEST_CASE("plan_folds: too few subjects fails") {
    const auto m = manifest_with_subjects({{"s0", 0}, {"s1", 1}});
    CHECK_THROWS_AS(fmpn::plan_folds(m, 3), fmpn::PlanError);
}

TEST_CASE("plan_folds: disjointness/partition over random manifests") {
    fmpn::Rng rng(2024);
    for (int rep = 0; rep < 100; ++rep) {
        const int subjects = 2 + static_cast<int>(rng.below(30));
        const int k = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(subjects - 1)));
        std::vector<std::pair<std::string, int>> rows;
        for (int s = 0; s < subjects; ++s) {
            const int samples = 1 + static_cast<int>(rng.below(4));
            for (int i = 0; i < samples; ++i) {
                rows.push_back({"subj" + std::to_string(s), static_cast<int>(rng.below(2))});
            }
        }
        const auto m = manifest_with_subjects(rows);
        const auto plan = fmpn::plan_folds(m, k);
        std::set<std::string> seen;
        std::size_t total = 0;
        std::size_t max_size = 0, min_size = SIZE_MAX;
        for (const auto& fold : plan.folds) {
            max_size = std::max(max_size, fold.size());
            min_size = std::min(min_size, fold.size());
            for (const auto& s : fold) REQUIRE(seen.insert(s).second); // no duplicates anywhere
            total += fold.size();
        }
        REQUIRE(total == static_cast<std::size_t>(subjects));
        REQUIRE(max_size - min_size <= 1);
        for (std::size_t i = 0; i < m.samples.size(); ++i) {
            const auto& fold = plan.folds[static_cast<std::size_t>(plan.assignment[i])];
            REQUIRE(std::find(fold.begin(), fold.end(), m.samples[i].subject_id) != fold.end());
        }
    }
}
