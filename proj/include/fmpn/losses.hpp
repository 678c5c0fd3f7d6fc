#pragma once

#include <cmath>
#include <vector>

#include "fmpn/errors.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn {

/// Mask regression objective: mean over all elements of the squared
/// prediction error.
inline double mask_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mask_loss");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

/// d(mask_loss)/d(pred) = 2 (pred - target) / N.
inline Tensor mask_loss_grad(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mask_loss");
    Tensor g = pred;
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

/// Cross entropy: mean over the batch of -log softmax(logits)[label].
/// Stable log-sum-exp evaluation.
inline double classification_loss(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("classification_loss: logits must be (B,K)");
    const int B = logits.dim(0), K = logits.dim(1);
    if (static_cast<int>(labels.size()) != B) {
        throw ArgumentError("classification_loss: batch size mismatch");
    }
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= K) {
            throw ArgumentError("classification_loss: label " + std::to_string(y) + " out of range [0," +
                                std::to_string(K) + ")");
        }
        const double* row = logits.data() + static_cast<std::size_t>(b) * K;
        double m = row[0];
        for (int k = 1; k < K; ++k) m = std::max(m, row[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(row[k] - m);
        acc += m + std::log(sum) - row[y];
    }
    return acc / static_cast<double>(B);
}

/// d(classification_loss)/d(logits) = (softmax - onehot) / B.
inline Tensor classification_loss_grad(const Tensor& logits, const std::vector<int>& labels) {
    const int B = logits.dim(0), K = logits.dim(1);
    Tensor g({B, K});
    for (int b = 0; b < B; ++b) {
        const double* row = logits.data() + static_cast<std::size_t>(b) * K;
        double* grow = g.data() + static_cast<std::size_t>(b) * K;
        double m = row[0];
        for (int k = 1; k < K; ++k) m = std::max(m, row[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(row[k] - m);
        for (int k = 0; k < K; ++k) grow[k] = std::exp(row[k] - m) / sum;
        grow[labels[static_cast<std::size_t>(b)]] -= 1.0;
        for (int k = 0; k < K; ++k) grow[k] /= static_cast<double>(B);
    }
    return g;
}

/// Weighted total objective: lambda1 * l_G + lambda2 * l_C, evaluated
/// exactly in double precision.
inline double total_loss(double l_g, double l_c, double lambda1, double lambda2) {
    return lambda1 * l_g + lambda2 * l_c;
}

} // namespace fmpn
