#pragma once

#include "fmpn/align.hpp"
#include "fmpn/errors.hpp"
#include "fmpn/random.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn {

/// Training-time augmentation: crop from one of four corners or the center,
/// plus an optional horizontal flip.
struct AugmentPolicy {
    int crop_size = 0;       // 0 means "use the full canvas"
    double flip_prob = 0.5;
};

/// One concrete crop/flip choice. Applying the same view to the face and to
/// its mask target keeps them spatially registered.
struct CropFlipView {
    int x0 = 0;
    int y0 = 0;
    int crop = 0;
    bool flip = false;
};

/// Draws a view. RNG order is fixed: crop position first, then flip.
inline CropFlipView sample_view(Rng& rng, int canvas, const AugmentPolicy& policy) {
    int crop = policy.crop_size > 0 ? policy.crop_size : canvas;
    if (crop > canvas) {
        throw ConfigError("augment: crop size " + std::to_string(crop) + " exceeds canvas " +
                          std::to_string(canvas));
    }
    const int m = canvas - crop;
    const int offsets[5][2] = {{0, 0}, {m, 0}, {0, m}, {m, m}, {m / 2, m / 2}};
    const std::size_t pos = rng.below(5);
    CropFlipView v;
    v.x0 = offsets[pos][0];
    v.y0 = offsets[pos][1];
    v.crop = crop;
    v.flip = policy.flip_prob > 0.0 && rng.uniform() < policy.flip_prob;
    return v;
}

/// Center crop without flip; the evaluation-time view.
inline CropFlipView center_view(int canvas, int crop) {
    if (crop > canvas) {
        throw ConfigError("center_view: crop size " + std::to_string(crop) + " exceeds canvas " +
                          std::to_string(canvas));
    }
    return CropFlipView{(canvas - crop) / 2, (canvas - crop) / 2, crop, false};
}

/// Applies a view to a (H, W) or (C, H, W) tensor.
inline Tensor apply_view(const Tensor& img, const CropFlipView& v) {
    const bool planar = img.rank() == 3;
    if (!planar && img.rank() != 2) throw ShapeError("apply_view: expected rank 2 or 3 image");
    const int channels = planar ? img.dim(0) : 1;
    const int h = planar ? img.dim(1) : img.dim(0);
    const int w = planar ? img.dim(2) : img.dim(1);
    if (v.y0 + v.crop > h || v.x0 + v.crop > w) throw ShapeError("apply_view: view exceeds image bounds");

    Tensor out(planar ? Tensor({channels, v.crop, v.crop}) : Tensor({v.crop, v.crop}));
    for (int c = 0; c < channels; ++c) {
        const double* src = img.data() + static_cast<std::size_t>(c) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(c) * v.crop * v.crop;
        for (int y = 0; y < v.crop; ++y) {
            const double* srow = src + static_cast<std::size_t>(v.y0 + y) * w + v.x0;
            double* drow = dst + static_cast<std::size_t>(y) * v.crop;
            if (v.flip) {
                for (int x = 0; x < v.crop; ++x) drow[x] = srow[v.crop - 1 - x];
            } else {
                for (int x = 0; x < v.crop; ++x) drow[x] = srow[x];
            }
        }
    }
    return out;
}

/// Random crop/flip of an aligned face. Gray and RGB receive the identical
/// view; label and subject are untouched.
inline AlignedFace augment(const AlignedFace& face, Rng& rng, const AugmentPolicy& policy) {
    const CropFlipView v = sample_view(rng, face.gray.dim(0), policy);
    AlignedFace out;
    out.gray = apply_view(face.gray, v);
    out.rgb = apply_view(face.rgb, v);
    out.label = face.label;
    out.subject_id = face.subject_id;
    return out;
}

} // namespace fmpn
