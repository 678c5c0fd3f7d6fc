#pragma once

// Independent reference implementations used to cross-check the library.
// These deliberately take the most literal route (scalar loops, textbook
// formulas, direct linear solves) and must not call the code paths they
// verify.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fmpn/landmarks.hpp"
#include "fmpn/maskgen.hpp"
#include "fmpn/tensor.hpp"

namespace oracle {

/// Similarity fit via the full 4x4 normal equations of the linearized
/// problem (a, b, tx, ty), solved with Gaussian elimination.
struct SimilarityFit {
    double a = 0, b = 0, tx = 0, ty = 0;

    double scale() const { return std::hypot(a, b); }
    double rotation() const { return std::atan2(b, a); }
};

inline SimilarityFit similarity_normal_equations(const fmpn::LandmarkSet& src,
                                                 const fmpn::LandmarkSet& dst) {
    // Unknown u = (a, b, tx, ty); rows per point:
    //   [x, -y, 1, 0] u = u_i
    //   [y,  x, 0, 1] u = v_i
    double ata[4][4] = {};
    double atb[4] = {};
    for (std::size_t i = 0; i < 5; ++i) {
        const double x = src[i].x, y = src[i].y;
        const double rows[2][4] = {{x, -y, 1, 0}, {y, x, 0, 1}};
        const double rhs[2] = {dst[i].x, dst[i].y};
        for (int r = 0; r < 2; ++r) {
            for (int m = 0; m < 4; ++m) {
                for (int n = 0; n < 4; ++n) ata[m][n] += rows[r][m] * rows[r][n];
                atb[m] += rows[r][m] * rhs[r];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    double aug[4][5];
    for (int m = 0; m < 4; ++m) {
        for (int n = 0; n < 4; ++n) aug[m][n] = ata[m][n];
        aug[m][4] = atb[m];
    }
    for (int col = 0; col < 4; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 4; ++r) {
            if (std::fabs(aug[r][col]) > std::fabs(aug[pivot][col])) pivot = r;
        }
        for (int n = 0; n < 5; ++n) std::swap(aug[col][n], aug[pivot][n]);
        if (std::fabs(aug[col][col]) < 1e-14) throw std::runtime_error("oracle: singular system");
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double f = aug[r][col] / aug[col][col];
            for (int n = col; n < 5; ++n) aug[r][n] -= f * aug[col][n];
        }
    }
    SimilarityFit fit;
    fit.a = aug[0][4] / aug[0][0];
    fit.b = aug[1][4] / aug[1][1];
    fit.tx = aug[2][4] / aug[2][2];
    fit.ty = aug[3][4] / aug[3][3];
    return fit;
}

/// Naive per-pixel / per-pair mean absolute difference.
inline fmpn::Tensor naive_mean_abs_diff(const std::vector<fmpn::FacePair>& pairs) {
    const int h = pairs.front().expressive.dim(0);
    const int w = pairs.front().expressive.dim(1);
    fmpn::Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (const auto& p : pairs) {
                acc += std::fabs(p.expressive.at(y, x) - p.neutral.at(y, x));
            }
            out.at(y, x) = acc / static_cast<double>(pairs.size());
        }
    }
    return out;
}

/// Textbook histogram equalization on the 8-bit grid:
/// h(v) = (cdf(v) - cdf_min) / (N - cdf_min).
inline fmpn::Tensor textbook_equalize(const fmpn::Tensor& img) {
    const std::int64_t n = img.size();
    std::array<std::int64_t, 256> hist{};
    for (std::int64_t i = 0; i < n; ++i) {
        const int level = static_cast<int>(std::lround(img[i] * 255.0));
        ++hist[static_cast<std::size_t>(level)];
    }
    std::array<std::int64_t, 256> cdf{};
    std::int64_t running = 0;
    for (int l = 0; l < 256; ++l) {
        running += hist[static_cast<std::size_t>(l)];
        cdf[static_cast<std::size_t>(l)] = running;
    }
    std::int64_t cdf_min = 0;
    for (int l = 0; l < 256; ++l) {
        if (hist[static_cast<std::size_t>(l)] > 0) {
            cdf_min = cdf[static_cast<std::size_t>(l)];
            break;
        }
    }
    fmpn::Tensor out({img.dim(0), img.dim(1)});
    if (n - cdf_min <= 0) return out;
    for (std::int64_t i = 0; i < n; ++i) {
        const int level = static_cast<int>(std::lround(img[i] * 255.0));
        out[i] = static_cast<double>(cdf[static_cast<std::size_t>(level)] - cdf_min) /
                 static_cast<double>(n - cdf_min);
    }
    return out;
}

/// Oracle for the full per-class mask: sort by key, average, equalize.
inline fmpn::Tensor naive_class_mask(std::vector<fmpn::FacePair> pairs) {
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const fmpn::FacePair& a, const fmpn::FacePair& b) { return a.key < b.key; });
    return textbook_equalize(naive_mean_abs_diff(pairs));
}

/// Scalar-loop 1x1 convolution oracle: out[b][oc] = sum_ic w[oc][ic]*in[b][ic] + bias[oc].
inline fmpn::Tensor naive_conv1x1(const fmpn::Tensor& in, const fmpn::Tensor& w, const fmpn::Tensor& bias) {
    const int B = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int OC = w.dim(0);
    fmpn::Tensor out({B, OC, H, W});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < OC; ++oc) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < IC; ++ic) acc += w.at(oc, ic, 0, 0) * in.at(b, ic, y, x);
                    out.at(b, oc, y, x) = acc;
                }
            }
        }
    }
    return out;
}

/// Cross entropy of one row evaluated in extended precision.
inline double ce_long_double(const std::vector<double>& logits, int label) {
    long double m = logits[0];
    for (double v : logits) m = std::max<long double>(m, v);
    long double sum = 0.0L;
    for (double v : logits) sum += std::exp(static_cast<long double>(v) - m);
    const long double lse = m + std::log(sum);
    return static_cast<double>(lse - static_cast<long double>(logits[static_cast<std::size_t>(label)]));
}

/// Counting-loop confusion matrix.
inline std::vector<long long> naive_confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                                              int num_classes) {
    std::vector<long long> m(static_cast<std::size_t>(num_classes) * num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        m[static_cast<std::size_t>(labels[i]) * num_classes + preds[i]] += 1;
    }
    return m;
}

} // namespace oracle
