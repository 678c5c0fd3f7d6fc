#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fmpn/errors.hpp"

namespace fmpn {

/// Dense row-major tensor of doubles. Rank 1-4 covers everything here:
/// rank 2 = grayscale image (H, W), rank 3 = planar RGB (3, H, W),
/// rank 4 = batch (B, C, H, W).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        data_.assign(static_cast<std::size_t>(count(dims_)), 0.0);
    }

    Tensor(std::initializer_list<int> dims) : Tensor(std::vector<int>(dims)) {}

    static Tensor full(std::vector<int> dims, double value) {
        Tensor t(std::move(dims));
        for (auto& v : t.data_) v = value;
        return t;
    }

    int rank() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& dims() const { return dims_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Indexed access; hot loops use raw pointers instead.
    double& at(int y, int x) { return data_[idx2(y, x)]; }
    double at(int y, int x) const { return data_[idx2(y, x)]; }
    double& at(int c, int y, int x) { return data_[idx3(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[idx3(c, y, x)]; }
    double& at(int b, int c, int y, int x) { return data_[idx4(b, c, y, x)]; }
    double at(int b, int c, int y, int x) const { return data_[idx4(b, c, y, x)]; }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    void fill(double v) {
        for (auto& e : data_) e = v;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
        os << ")";
        return os.str();
    }

private:
    static std::int64_t count(const std::vector<int>& dims) {
        std::int64_t n = 1;
        for (int d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }

    std::size_t idx2(int y, int x) const {
        return static_cast<std::size_t>(y) * dims_[1] + static_cast<std::size_t>(x);
    }
    std::size_t idx3(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x;
    }
    std::size_t idx4(int b, int c, int y, int x) const {
        return ((static_cast<std::size_t>(b) * dims_[1] + c) * dims_[2] + y) * dims_[3] + x;
    }

    std::vector<int> dims_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        double d = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
        if (d > m) m = d;
    }
    return m;
}

} // namespace fmpn
