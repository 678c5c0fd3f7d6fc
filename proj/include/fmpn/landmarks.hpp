#pragma once

#include <array>
#include <cmath>

#include "fmpn/errors.hpp"

namespace fmpn {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Five facial landmarks in pixel coordinates, in fixed order:
/// left eye center, right eye center, nose tip, left mouth corner,
/// right mouth corner.
struct LandmarkSet {
    std::array<Point2, 5> points{};

    Point2& operator[](std::size_t i) { return points[i]; }
    const Point2& operator[](std::size_t i) const { return points[i]; }

    void validate() const {
        for (const auto& p : points) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                throw ValidationError("landmark coordinates must be finite");
            }
        }
    }
};

/// Canonical five-point template as fractions of the output square:
/// eyes at (0.30, 0.40) / (0.70, 0.40), nose (0.50, 0.58),
/// mouth corners (0.34, 0.76) / (0.66, 0.76).
inline LandmarkSet reference_landmarks(int out_size) {
    const double s = static_cast<double>(out_size);
    LandmarkSet ref;
    ref[0] = {0.30 * s, 0.40 * s};
    ref[1] = {0.70 * s, 0.40 * s};
    ref[2] = {0.50 * s, 0.58 * s};
    ref[3] = {0.34 * s, 0.76 * s};
    ref[4] = {0.66 * s, 0.76 * s};
    return ref;
}

/// Root-mean-square distance between corresponding points.
inline double landmark_rms(const LandmarkSet& a, const LandmarkSet& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        double dx = a[i].x - b[i].x;
        double dy = a[i].y - b[i].y;
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / 5.0);
}

} // namespace fmpn
