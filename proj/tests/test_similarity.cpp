#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fmpn/random.hpp"
#include "fmpn/similarity.hpp"
#include "support/oracles.hpp"

using fmpn::LandmarkSet;
using fmpn::Rng;
using fmpn::SimilarityTransform;

namespace {

LandmarkSet sample_landmarks() {
    LandmarkSet lms;
    lms[0] = {19.2, 25.6};
    lms[1] = {44.8, 25.6};
    lms[2] = {32.0, 37.1};
    lms[3] = {21.8, 48.6};
    lms[4] = {42.2, 48.6};
    return lms;
}

LandmarkSet random_landmarks(Rng& rng) {
    LandmarkSet lms;
    for (std::size_t i = 0; i < 5; ++i) lms[i] = {rng.uniform(-40, 60), rng.uniform(-40, 60)};
    return lms;
}

} // namespace

TEST_CASE("identity fit is exact") {
    const LandmarkSet lms = sample_landmarks();
    const SimilarityTransform t = fmpn::estimate_similarity(lms, lms);
    CHECK(t.scale == 1.0);
    CHECK(t.rotation == 0.0);
    CHECK(t.translation.x == 0.0);
    CHECK(t.translation.y == 0.0);
}

TEST_CASE("pure translation is exact") {
    const LandmarkSet src = sample_landmarks();
    LandmarkSet dst = src;
    for (std::size_t i = 0; i < 5; ++i) {
        dst[i].x += 5.0;
        dst[i].y += -3.0;
    }
    const SimilarityTransform t = fmpn::estimate_similarity(src, dst);
    CHECK(t.scale == 1.0);
    CHECK(t.rotation == 0.0);
    CHECK(t.translation.x == Catch::Approx(5.0).margin(1e-12));
    CHECK(t.translation.y == Catch::Approx(-3.0).margin(1e-12));
}

TEST_CASE("noisy rotated fit matches the closed-form oracle") {
    Rng rng(42);
    const LandmarkSet src = sample_landmarks();
    double cx = 0, cy = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        cx += src[i].x / 5.0;
        cy += src[i].y / 5.0;
    }
    const double angle = 30.0 * M_PI / 180.0;
    LandmarkSet dst;
    for (std::size_t i = 0; i < 5; ++i) {
        const double x = src[i].x - cx, y = src[i].y - cy;
        dst[i] = {cx + std::cos(angle) * x - std::sin(angle) * y + 0.1 * rng.normal(),
                  cy + std::sin(angle) * x + std::cos(angle) * y + 0.1 * rng.normal()};
    }
    const SimilarityTransform t = fmpn::estimate_similarity(src, dst);
    const oracle::SimilarityFit fit = oracle::similarity_normal_equations(src, dst);
    CHECK(std::fabs(t.scale - fit.scale()) < 1e-6);
    CHECK(std::fabs(t.rotation - fit.rotation()) < 1e-6);
    CHECK(std::fabs(t.translation.x - fit.tx) < 1e-6);
    CHECK(std::fabs(t.translation.y - fit.ty) < 1e-6);
}

TEST_CASE("degenerate source landmarks are rejected") {
    LandmarkSet src;
    for (std::size_t i = 0; i < 5; ++i) src[i] = {10.0, 12.0};
    CHECK_THROWS_AS(fmpn::estimate_similarity(src, sample_landmarks()), fmpn::SingularError);
}

TEST_CASE("noise-free parameter recovery over random transforms") {
    Rng rng(1234);
    for (int rep = 0; rep < 100; ++rep) {
        const LandmarkSet src = random_landmarks(rng);
        SimilarityTransform truth;
        truth.scale = rng.uniform(0.5, 2.0);
        truth.rotation = rng.uniform(-M_PI, M_PI);
        truth.translation = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const LandmarkSet dst = truth.apply(src);
        const SimilarityTransform t = fmpn::estimate_similarity(src, dst);
        REQUIRE(std::fabs(t.scale - truth.scale) < 1e-6);
        REQUIRE(std::fabs(std::remainder(t.rotation - truth.rotation, 2.0 * M_PI)) < 1e-6);
        REQUIRE(std::fabs(t.translation.x - truth.translation.x) < 1e-6);
        REQUIRE(std::fabs(t.translation.y - truth.translation.y) < 1e-6);
    }
}

TEST_CASE("apply then invert recovers points") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        SimilarityTransform t;
        t.scale = rng.uniform(0.5, 2.0);
        t.rotation = rng.uniform(-M_PI, M_PI);
        t.translation = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const fmpn::Point2 p{rng.uniform(-30, 30), rng.uniform(-30, 30)};
        const fmpn::Point2 q = t.inverse().apply(t.apply(p));
        REQUIRE(std::fabs(q.x - p.x) < 1e-6);
        REQUIRE(std::fabs(q.y - p.y) < 1e-6);
    }
}
