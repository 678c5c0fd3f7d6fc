#pragma once

#include <cmath>

#include "fmpn/errors.hpp"
#include "fmpn/landmarks.hpp"

namespace fmpn {

/// 2D similarity transform p -> scale * R(rotation) * p + translation.
struct SimilarityTransform {
    double scale = 1.0;
    double rotation = 0.0; // radians
    Point2 translation;

    Point2 apply(const Point2& p) const {
        const double c = scale * std::cos(rotation);
        const double s = scale * std::sin(rotation);
        return {c * p.x - s * p.y + translation.x, s * p.x + c * p.y + translation.y};
    }

    LandmarkSet apply(const LandmarkSet& lms) const {
        LandmarkSet out;
        for (std::size_t i = 0; i < 5; ++i) out[i] = apply(lms[i]);
        return out;
    }

    SimilarityTransform inverse() const {
        SimilarityTransform inv;
        inv.scale = 1.0 / scale;
        inv.rotation = -rotation;
        const double c = inv.scale * std::cos(inv.rotation);
        const double s = inv.scale * std::sin(inv.rotation);
        inv.translation = {-(c * translation.x - s * translation.y),
                           -(s * translation.x + c * translation.y)};
        return inv;
    }
};

/// Least-squares similarity fit: minimizes sum_i ||T(src_i) - dst_i||^2.
///
/// With a = s*cos(theta), b = s*sin(theta) the problem is linear and the
/// minimizer has a closed form in centered coordinates. Reflections are
/// excluded by the parameterization.
inline SimilarityTransform estimate_similarity(const LandmarkSet& src, const LandmarkSet& dst) {
    double sx = 0, sy = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        sx += src[i].x;
        sy += src[i].y;
        dx += dst[i].x;
        dy += dst[i].y;
    }
    const double src_cx = sx / 5.0, src_cy = sy / 5.0;
    const double dst_cx = dx / 5.0, dst_cy = dy / 5.0;

    double denom = 0.0;   // sum of squared centered src coordinates
    double dot = 0.0;     // <src~, dst~>
    double cross = 0.0;   // cross(src~, dst~)
    double norm_ref = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        const double px = src[i].x - src_cx;
        const double py = src[i].y - src_cy;
        const double qx = dst[i].x - dst_cx;
        const double qy = dst[i].y - dst_cy;
        denom += px * px + py * py;
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
        norm_ref += src[i].x * src[i].x + src[i].y * src[i].y;
    }
    if (denom <= 1e-12 * (1.0 + norm_ref)) {
        throw SingularError("estimate_similarity: source landmarks are degenerate (no spatial spread)");
    }
    const double a = dot / denom;
    const double b = cross / denom;

    SimilarityTransform t;
    t.scale = std::hypot(a, b);
    t.rotation = std::atan2(b, a);
    t.translation = {dst_cx - (a * src_cx - b * src_cy), dst_cy - (b * src_cx + a * src_cy)};
    return t;
}

} // namespace fmpn
