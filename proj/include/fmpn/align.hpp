#pragma once

#include <string>

#include "fmpn/errors.hpp"
#include "fmpn/landmarks.hpp"
#include "fmpn/parallel.hpp"
#include "fmpn/similarity.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn {

/// A face normalized to the canonical landmark frame. `gray` is always the
/// luminance conversion of `rgb`.
struct AlignedFace {
    Tensor gray;            // (H, W) in [0,1]
    Tensor rgb;             // (3, H, W) in [0,1]
    int label = -1;
    std::string subject_id;
};

/// Fixed-weight luminance conversion (0.299, 0.587, 0.114) of a planar RGB
/// image (3, H, W) with values in [0,1].
inline Tensor to_grayscale(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw ShapeError("to_grayscale: expected (3,H,W), got " + rgb.shape_str());
    }
    const int h = rgb.dim(1), w = rgb.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double* r = rgb.data();
    const double* g = r + plane;
    const double* b = g + plane;
    Tensor out({h, w});
    double* o = out.data();
    for (std::size_t i = 0; i < plane; ++i) {
        o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    }
    return out;
}

namespace detail {

inline double sample_bilinear_clamp(const double* img, int h, int w, double fy, double fx) {
    if (fx < 0) fx = 0;
    if (fy < 0) fy = 0;
    if (fx > w - 1) fx = w - 1;
    if (fy > h - 1) fy = h - 1;
    int x0 = static_cast<int>(fx);
    int y0 = static_cast<int>(fy);
    if (x0 > w - 2) x0 = w >= 2 ? w - 2 : 0;
    if (y0 > h - 2) y0 = h >= 2 ? h - 2 : 0;
    const int x1 = w >= 2 ? x0 + 1 : x0;
    const int y1 = h >= 2 ? y0 + 1 : y0;
    const double wx = fx - x0;
    const double wy = fy - y0;
    const double* r0 = img + static_cast<std::size_t>(y0) * w;
    const double* r1 = img + static_cast<std::size_t>(y1) * w;
    return (1 - wy) * ((1 - wx) * r0[x0] + wx * r0[x1]) + wy * ((1 - wx) * r1[x0] + wx * r1[x1]);
}

} // namespace detail

/// Warps a single-channel image with the given similarity transform
/// (source -> destination frame). Output pixel (x,y) samples the source at
/// T^-1(x,y) with bilinear interpolation and edge clamping.
inline Tensor warp_similarity(const Tensor& img, const SimilarityTransform& t, int out_h, int out_w) {
    if (img.rank() != 2) throw ShapeError("warp_similarity: expected rank-2 image");
    const SimilarityTransform inv = t.inverse();
    const double c = inv.scale * std::cos(inv.rotation);
    const double s = inv.scale * std::sin(inv.rotation);
    const int h = img.dim(0), w = img.dim(1);
    const double* src = img.data();
    Tensor out({out_h, out_w});
    for (int y = 0; y < out_h; ++y) {
        double* row = out.data() + static_cast<std::size_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x) {
            const double fx = c * x - s * y + inv.translation.x;
            const double fy = s * x + c * y + inv.translation.y;
            row[x] = detail::sample_bilinear_clamp(src, h, w, fy, fx);
        }
    }
    return out;
}

/// Aligns a raw RGB face to the canonical frame: fits the similarity
/// transform from the face landmarks to the reference landmarks, warps the
/// RGB image onto an out_size x out_size canvas, and derives the grayscale
/// channel from the warped RGB.
inline AlignedFace align_face(const Tensor& rgb, const LandmarkSet& landmarks,
                              const LandmarkSet& reference, int out_size) {
    if (out_size < 32) throw ArgumentError("align_face: out_size must be >= 32");
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw ShapeError("align_face: expected (3,H,W) image, got " + rgb.shape_str());
    }
    const SimilarityTransform t = estimate_similarity(landmarks, reference);
    AlignedFace face;
    face.rgb = Tensor({3, out_size, out_size});
    const std::size_t plane = static_cast<std::size_t>(out_size) * out_size;
    for (int ch = 0; ch < 3; ++ch) {
        Tensor channel({rgb.dim(1), rgb.dim(2)});
        const double* src = rgb.data() + static_cast<std::size_t>(ch) * rgb.dim(1) * rgb.dim(2);
        std::copy(src, src + channel.size(), channel.data());
        Tensor warped = warp_similarity(channel, t, out_size, out_size);
        std::copy(warped.data(), warped.data() + warped.size(), face.rgb.data() + ch * plane);
    }
    face.gray = to_grayscale(face.rgb);
    return face;
}

} // namespace fmpn
