#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fmpn/errors.hpp"
#include "fmpn/parallel.hpp"
#include "fmpn/random.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn::nn {

using ParamVisitor = std::function<void(const std::string&, Tensor&, Tensor&)>;
using BufferVisitor = std::function<void(const std::string&, Tensor&)>;

/// Fan-in scaled uniform init: U(-sqrt(3/fan_in), +sqrt(3/fan_in)), i.e.
/// variance 1/fan_in. Draw order is the tensor's flat order.
inline void fill_fan_in_uniform(Tensor& w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
}

namespace detail {
inline int div_ceil(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
inline int div_floor(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
} // namespace detail

/// 2D convolution, square kernel, symmetric zero padding.
/// Weights are laid out [out_ch][in_ch][k][k].
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool bias)
        : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride), pad_(pad), has_bias_(bias),
          w_({out_ch, in_ch, ksize, ksize}), gw_({out_ch, in_ch, ksize, ksize}) {
        if (bias) {
            b_ = Tensor({out_ch});
            gb_ = Tensor({out_ch});
        }
    }

    void init(Rng& rng) {
        fill_fan_in_uniform(w_, in_ch_ * k_ * k_, rng);
        if (has_bias_) b_.fill(0.0);
    }

    Tensor forward(const Tensor& x) {
        check_input(x);
        x_cache_ = x;
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = (H + 2 * pad_ - k_) / stride_ + 1;
        const int OW = (W + 2 * pad_ - k_) / stride_ + 1;
        Tensor y({B, out_ch_, OH, OW});
        const std::size_t jobs = static_cast<std::size_t>(B) * out_ch_;
        parallel_for(jobs, [&](std::size_t job) {
            const int b = static_cast<int>(job) / out_ch_;
            const int oc = static_cast<int>(job) % out_ch_;
            double* out = y.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
            const double bias = has_bias_ ? b_[oc] : 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) out[i] = bias;
            for (int ic = 0; ic < in_ch_; ++ic) {
                const double* in = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                const double* wk = w_.data() + ((static_cast<std::size_t>(oc) * in_ch_ + ic) * k_) * k_;
                for (int ky = 0; ky < k_; ++ky) {
                    for (int kx = 0; kx < k_; ++kx) {
                        const double wv = wk[ky * k_ + kx];
                        const int ox_lo = std::max(0, detail::div_ceil(pad_ - kx, stride_));
                        const int ox_hi = std::min(OW - 1, detail::div_floor(W - 1 + pad_ - kx, stride_));
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= H) continue;
                            const double* in_row = in + static_cast<std::size_t>(iy) * W + (kx - pad_);
                            double* out_row = out + static_cast<std::size_t>(oy) * OW;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                out_row[ox] += wv * in_row[ox * stride_];
                            }
                        }
                    }
                }
            }
        });
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const Tensor& x = x_cache_;
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = dy.dim(2), OW = dy.dim(3);
        Tensor dx({B, in_ch_, H, W});

        parallel_for(static_cast<std::size_t>(B) * in_ch_, [&](std::size_t job) {
            const int b = static_cast<int>(job) / in_ch_;
            const int ic = static_cast<int>(job) % in_ch_;
            double* dxp = dx.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
            for (int oc = 0; oc < out_ch_; ++oc) {
                const double* dyp = dy.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
                const double* wk = w_.data() + ((static_cast<std::size_t>(oc) * in_ch_ + ic) * k_) * k_;
                for (int ky = 0; ky < k_; ++ky) {
                    for (int kx = 0; kx < k_; ++kx) {
                        const double wv = wk[ky * k_ + kx];
                        const int ox_lo = std::max(0, detail::div_ceil(pad_ - kx, stride_));
                        const int ox_hi = std::min(OW - 1, detail::div_floor(W - 1 + pad_ - kx, stride_));
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= H) continue;
                            double* dx_row = dxp + static_cast<std::size_t>(iy) * W + (kx - pad_);
                            const double* dy_row = dyp + static_cast<std::size_t>(oy) * OW;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                dx_row[ox * stride_] += wv * dy_row[ox];
                            }
                        }
                    }
                }
            }
        });

        // Weight gradients: one (oc, ic) plane per job, batch accumulated in
        // ascending order so the result is scheduling-independent.
        parallel_for(static_cast<std::size_t>(out_ch_) * in_ch_, [&](std::size_t job) {
            const int oc = static_cast<int>(job) / in_ch_;
            const int ic = static_cast<int>(job) % in_ch_;
            double* gwk = gw_.data() + ((static_cast<std::size_t>(oc) * in_ch_ + ic) * k_) * k_;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    double acc = 0.0;
                    const int ox_lo = std::max(0, detail::div_ceil(pad_ - kx, stride_));
                    const int ox_hi = std::min(OW - 1, detail::div_floor(W - 1 + pad_ - kx, stride_));
                    for (int b = 0; b < B; ++b) {
                        const double* in = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                        const double* dyp = dy.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= H) continue;
                            const double* in_row = in + static_cast<std::size_t>(iy) * W + (kx - pad_);
                            const double* dy_row = dyp + static_cast<std::size_t>(oy) * OW;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                acc += in_row[ox * stride_] * dy_row[ox];
                            }
                        }
                    }
                    gwk[ky * k_ + kx] += acc;
                }
            }
        });

        if (has_bias_) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                double acc = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double* dyp = dy.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
                    for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) acc += dyp[i];
                }
                gb_[oc] += acc;
            }
        }
        return dx;
    }

    void visit_params(const std::string& prefix, const ParamVisitor& v) {
        v(prefix + ".w", w_, gw_);
        if (has_bias_) v(prefix + ".b", b_, gb_);
    }

    Tensor& weight() { return w_; }
    Tensor& bias() { return b_; }
    int out_channels() const { return out_ch_; }

private:
    void check_input(const Tensor& x) const {
        if (x.rank() != 4 || x.dim(1) != in_ch_) {
            throw ShapeError("Conv2d: expected (B," + std::to_string(in_ch_) + ",H,W), got " + x.shape_str());
        }
    }

    int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    bool has_bias_ = false;
    Tensor w_, b_, gw_, gb_;
    Tensor x_cache_;
};

/// Transposed convolution for 2x upsampling. Weights [in_ch][out_ch][k][k];
/// with k=4, s=2, p=1 the output is exactly twice the input size.
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool bias)
        : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride), pad_(pad), has_bias_(bias),
          w_({in_ch, out_ch, ksize, ksize}), gw_({in_ch, out_ch, ksize, ksize}) {
        if (bias) {
            b_ = Tensor({out_ch});
            gb_ = Tensor({out_ch});
        }
    }

    void init(Rng& rng) {
        fill_fan_in_uniform(w_, in_ch_ * k_ * k_, rng);
        if (has_bias_) b_.fill(0.0);
    }

    Tensor forward(const Tensor& x) {
        if (x.rank() != 4 || x.dim(1) != in_ch_) {
            throw ShapeError("ConvTranspose2d: expected (B," + std::to_string(in_ch_) + ",H,W), got " +
                             x.shape_str());
        }
        x_cache_ = x;
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = (H - 1) * stride_ - 2 * pad_ + k_;
        const int OW = (W - 1) * stride_ - 2 * pad_ + k_;
        Tensor y({B, out_ch_, OH, OW});
        parallel_for(static_cast<std::size_t>(B) * out_ch_, [&](std::size_t job) {
            const int b = static_cast<int>(job) / out_ch_;
            const int oc = static_cast<int>(job) % out_ch_;
            double* out = y.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
            const double bias = has_bias_ ? b_[oc] : 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) out[i] = bias;
            for (int ic = 0; ic < in_ch_; ++ic) {
                const double* in = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                const double* wk = w_.data() + ((static_cast<std::size_t>(ic) * out_ch_ + oc) * k_) * k_;
                for (int ky = 0; ky < k_; ++ky) {
                    for (int kx = 0; kx < k_; ++kx) {
                        const double wv = wk[ky * k_ + kx];
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy * stride_ - pad_ + ky;
                            if (oy < 0 || oy >= OH) continue;
                            const double* in_row = in + static_cast<std::size_t>(iy) * W;
                            double* out_row = out + static_cast<std::size_t>(oy) * OW + (kx - pad_);
                            for (int ix = 0; ix < W; ++ix) {
                                const int ox = ix * stride_ + kx - pad_;
                                if (ox < 0 || ox >= OW) continue;
                                out_row[ix * stride_] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        });
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const Tensor& x = x_cache_;
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = dy.dim(2), OW = dy.dim(3);
        Tensor dx({B, in_ch_, H, W});

        parallel_for(static_cast<std::size_t>(B) * in_ch_, [&](std::size_t job) {
            const int b = static_cast<int>(job) / in_ch_;
            const int ic = static_cast<int>(job) % in_ch_;
            double* dxp = dx.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
            for (int oc = 0; oc < out_ch_; ++oc) {
                const double* dyp = dy.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
                const double* wk = w_.data() + ((static_cast<std::size_t>(ic) * out_ch_ + oc) * k_) * k_;
                for (int ky = 0; ky < k_; ++ky) {
                    for (int kx = 0; kx < k_; ++kx) {
                        const double wv = wk[ky * k_ + kx];
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy * stride_ - pad_ + ky;
                            if (oy < 0 || oy >= OH) continue;
                            const double* dy_row = dyp + static_cast<std::size_t>(oy) * OW;
                            double* dx_row = dxp + static_cast<std::size_t>(iy) * W;
                            for (int ix = 0; ix < W; ++ix) {
                                const int ox = ix * stride_ + kx - pad_;
                                if (ox < 0 || ox >= OW) continue;
                                dx_row[ix] += wv * dy_row[ox];
                            }
                        }
                    }
                }
            }
        });

        parallel_for(static_cast<std::size_t>(in_ch_) * out_ch_, [&](std::size_t job) {
            const int ic = static_cast<int>(job) / out_ch_;
            const int oc = static_cast<int>(job) % out_ch_;
            double* gwk = gw_.data() + ((static_cast<std::size_t>(ic) * out_ch_ + oc) * k_) * k_;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const double* in = x.data() + (static_cast<std::size_t>(b) * in_ch_ + ic) * H * W;
                        const double* dyp = dy.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy * stride_ - pad_ + ky;
                            if (oy < 0 || oy >= OH) continue;
                            const double* in_row = in + static_cast<std::size_t>(iy) * W;
                            const double* dy_row = dyp + static_cast<std::size_t>(oy) * OW;
                            for (int ix = 0; ix < W; ++ix) {
                                const int ox = ix * stride_ + kx - pad_;
                                if (ox < 0 || ox >= OW) continue;
                                acc += in_row[ix] * dy_row[ox];
                            }
                        }
                    }
                    gwk[ky * k_ + kx] += acc;
                }
            }
        });

        if (has_bias_) {
            for (int oc = 0; oc < out_ch_; ++oc) {
                double acc = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double* dyp = dy.data() + (static_cast<std::size_t>(b) * out_ch_ + oc) * OH * OW;
                    for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) acc += dyp[i];
                }
                gb_[oc] += acc;
            }
        }
        return dx;
    }

    void visit_params(const std::string& prefix, const ParamVisitor& v) {
        v(prefix + ".w", w_, gw_);
        if (has_bias_) v(prefix + ".b", b_, gb_);
    }

    Tensor& weight() { return w_; }
    Tensor& bias() { return b_; }

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 2, pad_ = 1;
    bool has_bias_ = false;
    Tensor w_, b_, gw_, gb_;
    Tensor x_cache_;
};

/// Batch normalization over (B, H, W) per channel. Training uses batch
/// statistics (biased variance) and updates running statistics with
/// momentum 0.1; evaluation uses the running statistics.
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
        : ch_(channels), eps_(eps), momentum_(momentum),
          gamma_(Tensor::full({channels}, 1.0)), beta_({channels}),
          g_gamma_({channels}), g_beta_({channels}),
          running_mean_({channels}), running_var_(Tensor::full({channels}, 1.0)) {}

    Tensor forward(const Tensor& x, bool training) {
        if (x.rank() != 4 || x.dim(1) != ch_) {
            throw ShapeError("BatchNorm2d: expected (B," + std::to_string(ch_) + ",H,W), got " + x.shape_str());
        }
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        Tensor y({B, ch_, H, W});
        if (training) {
            training_ = true;
            mean_ = Tensor({ch_});
            inv_std_ = Tensor({ch_});
            x_hat_ = Tensor({B, ch_, H, W});
            const double n = static_cast<double>(B) * H * W;
            parallel_for(static_cast<std::size_t>(ch_), [&](std::size_t c) {
                double sum = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double* in = x.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) sum += in[i];
                }
                const double mean = sum / n;
                double sq = 0.0;
                for (int b = 0; b < B; ++b) {
                    const double* in = x.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = in[i] - mean;
                        sq += d * d;
                    }
                }
                const double var = sq / n;
                const double inv_std = 1.0 / std::sqrt(var + eps_);
                mean_[static_cast<std::int64_t>(c)] = mean;
                inv_std_[static_cast<std::int64_t>(c)] = inv_std;
                running_mean_[static_cast<std::int64_t>(c)] =
                    (1.0 - momentum_) * running_mean_[static_cast<std::int64_t>(c)] + momentum_ * mean;
                running_var_[static_cast<std::int64_t>(c)] =
                    (1.0 - momentum_) * running_var_[static_cast<std::int64_t>(c)] + momentum_ * var;
                const double g = gamma_[static_cast<std::int64_t>(c)];
                const double bt = beta_[static_cast<std::int64_t>(c)];
                for (int b = 0; b < B; ++b) {
                    const double* in = x.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    double* xh = x_hat_.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    double* out = y.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double v = (in[i] - mean) * inv_std;
                        xh[i] = v;
                        out[i] = g * v + bt;
                    }
                }
            });
        } else {
            training_ = false;
            parallel_for(static_cast<std::size_t>(ch_), [&](std::size_t c) {
                const double mean = running_mean_[static_cast<std::int64_t>(c)];
                const double inv_std = 1.0 / std::sqrt(running_var_[static_cast<std::int64_t>(c)] + eps_);
                const double g = gamma_[static_cast<std::int64_t>(c)];
                const double bt = beta_[static_cast<std::int64_t>(c)];
                for (int b = 0; b < B; ++b) {
                    const double* in = x.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    double* out = y.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) out[i] = g * (in[i] - mean) * inv_std + bt;
                }
            });
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        if (!training_) throw Error("BatchNorm2d: backward requires a training-mode forward");
        const int B = dy.dim(0), H = dy.dim(2), W = dy.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const double n = static_cast<double>(B) * H * W;
        Tensor dx({B, ch_, H, W});
        parallel_for(static_cast<std::size_t>(ch_), [&](std::size_t c) {
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* dyp = dy.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                const double* xh = x_hat_.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += dyp[i];
                    sum_dy_xhat += dyp[i] * xh[i];
                }
            }
            g_beta_[static_cast<std::int64_t>(c)] += sum_dy;
            g_gamma_[static_cast<std::int64_t>(c)] += sum_dy_xhat;
            const double g = gamma_[static_cast<std::int64_t>(c)];
            const double inv_std = inv_std_[static_cast<std::int64_t>(c)];
            const double mean_dy = sum_dy / n;
            const double mean_dy_xhat = sum_dy_xhat / n;
            for (int b = 0; b < B; ++b) {
                const double* dyp = dy.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                const double* xh = x_hat_.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                double* dxp = dx.data() + (static_cast<std::size_t>(b) * ch_ + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    dxp[i] = g * inv_std * (dyp[i] - mean_dy - xh[i] * mean_dy_xhat);
                }
            }
        });
        return dx;
    }

    void visit_params(const std::string& prefix, const ParamVisitor& v) {
        v(prefix + ".gamma", gamma_, g_gamma_);
        v(prefix + ".beta", beta_, g_beta_);
    }

    void visit_buffers(const std::string& prefix, const BufferVisitor& v) {
        v(prefix + ".running_mean", running_mean_);
        v(prefix + ".running_var", running_var_);
    }

private:
    int ch_ = 0;
    double eps_ = 1e-5, momentum_ = 0.1;
    Tensor gamma_, beta_, g_gamma_, g_beta_;
    Tensor running_mean_, running_var_;
    Tensor mean_, inv_std_, x_hat_;
    bool training_ = false;
};

class ReLU {
public:
    Tensor forward(const Tensor& x) {
        Tensor y = x;
        for (std::int64_t i = 0; i < y.size(); ++i) {
            if (y[i] < 0.0) y[i] = 0.0;
        }
        y_cache_ = y;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        Tensor dx = dy;
        for (std::int64_t i = 0; i < dx.size(); ++i) {
            if (y_cache_[i] <= 0.0) dx[i] = 0.0;
        }
        return dx;
    }

private:
    Tensor y_cache_;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x) {
        Tensor y = x;
        for (std::int64_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
        y_cache_ = y;
        return y;
    }

    Tensor backward(const Tensor& dy) {
        Tensor dx = dy;
        for (std::int64_t i = 0; i < dx.size(); ++i) {
            const double y = y_cache_[i];
            dx[i] = dy[i] * y * (1.0 - y);
        }
        return dx;
    }

private:
    Tensor y_cache_;
};

/// Fully connected layer, weights [out, in].
class Linear {
public:
    Linear() = default;
    Linear(int in_features, int out_features)
        : in_(in_features), out_(out_features), w_({out_features, in_features}),
          b_({out_features}), gw_({out_features, in_features}), gb_({out_features}) {}

    void init(Rng& rng) {
        fill_fan_in_uniform(w_, in_, rng);
        b_.fill(0.0);
    }

    Tensor forward(const Tensor& x) {
        if (x.rank() != 2 || x.dim(1) != in_) {
            throw ShapeError("Linear: expected (B," + std::to_string(in_) + "), got " + x.shape_str());
        }
        x_cache_ = x;
        const int B = x.dim(0);
        Tensor y({B, out_});
        for (int b = 0; b < B; ++b) {
            const double* xin = x.data() + static_cast<std::size_t>(b) * in_;
            double* out = y.data() + static_cast<std::size_t>(b) * out_;
            for (int o = 0; o < out_; ++o) {
                const double* wr = w_.data() + static_cast<std::size_t>(o) * in_;
                double acc = b_[o];
                for (int i = 0; i < in_; ++i) acc += wr[i] * xin[i];
                out[o] = acc;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const int B = x_cache_.dim(0);
        Tensor dx({B, in_});
        for (int b = 0; b < B; ++b) {
            const double* dyr = dy.data() + static_cast<std::size_t>(b) * out_;
            const double* xin = x_cache_.data() + static_cast<std::size_t>(b) * in_;
            double* dxr = dx.data() + static_cast<std::size_t>(b) * in_;
            for (int o = 0; o < out_; ++o) {
                const double g = dyr[o];
                const double* wr = w_.data() + static_cast<std::size_t>(o) * in_;
                double* gwr = gw_.data() + static_cast<std::size_t>(o) * in_;
                for (int i = 0; i < in_; ++i) {
                    dxr[i] += g * wr[i];
                    gwr[i] += g * xin[i];
                }
                gb_[o] += g;
            }
        }
        return dx;
    }

    void visit_params(const std::string& prefix, const ParamVisitor& v) {
        v(prefix + ".w", w_, gw_);
        v(prefix + ".b", b_, gb_);
    }

    Tensor& weight() { return w_; }
    Tensor& bias() { return b_; }

private:
    int in_ = 0, out_ = 0;
    Tensor w_, b_, gw_, gb_;
    Tensor x_cache_;
};

/// Global average pooling (B, C, H, W) -> (B, C).
class GlobalAvgPool {
public:
    Tensor forward(const Tensor& x) {
        const int B = x.dim(0), C = x.dim(1);
        h_ = x.dim(2);
        w_ = x.dim(3);
        const std::size_t plane = static_cast<std::size_t>(h_) * w_;
        Tensor y({B, C});
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < C; ++c) {
                const double* in = x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += in[i];
                y.at(b, c) = acc / static_cast<double>(plane);
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const int B = dy.dim(0), C = dy.dim(1);
        const std::size_t plane = static_cast<std::size_t>(h_) * w_;
        Tensor dx({B, C, h_, w_});
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < C; ++c) {
                const double g = dy.at(b, c) / static_cast<double>(plane);
                double* out = dx.data() + (static_cast<std::size_t>(b) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) out[i] = g;
            }
        }
        return dx;
    }

private:
    int h_ = 0, w_ = 0;
};

} // namespace fmpn::nn
