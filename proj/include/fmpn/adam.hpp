#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fmpn/tensor.hpp"

namespace fmpn {

/// Adaptive-moment descent hyperparameters (conventional defaults).
struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over one parameter group. Parameters are attached by reference
/// through the visitor protocol; moment buffers are kept per tensor.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void attach(Tensor& value, Tensor& grad) {
        params_.push_back(&value);
        grads_.push_back(&grad);
        m_.emplace_back(value.dims());
        v_.emplace_back(value.dims());
    }

    /// One update with the given learning rate. Optional global-norm
    /// gradient clipping (0 disables it; the default).
    void step(double lr, double clip_norm = 0.0) {
        ++t_;
        double clip_scale = 1.0;
        if (clip_norm > 0.0) {
            double sq = 0.0;
            for (const Tensor* g : grads_) {
                for (std::int64_t i = 0; i < g->size(); ++i) sq += (*g)[i] * (*g)[i];
            }
            const double norm = std::sqrt(sq);
            if (norm > clip_norm) clip_scale = clip_norm / norm;
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor& w = *params_[p];
            const Tensor& g = *grads_[p];
            Tensor& m = m_[p];
            Tensor& v = v_[p];
            for (std::int64_t i = 0; i < w.size(); ++i) {
                const double gi = g[i] * clip_scale;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            }
        }
    }

    std::size_t tensor_count() const { return params_.size(); }

private:
    AdamConfig cfg_;
    std::vector<Tensor*> params_;
    std::vector<Tensor*> grads_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

} // namespace fmpn
