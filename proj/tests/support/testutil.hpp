#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fmpn/networks.hpp"
#include "fmpn/random.hpp"
#include "fmpn/tensor.hpp"

namespace testutil {

/// Scratch directory under the build tree, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& name) {
        static std::atomic<int> counter{0};
        path = std::filesystem::path("fmpn_test_tmp") /
               (name + "_" + std::to_string(counter.fetch_add(1)));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline fmpn::Tensor random_tensor(std::vector<int> dims, fmpn::Rng& rng, double lo = 0.0, double hi = 1.0) {
    fmpn::Tensor t(std::move(dims));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Collects (name, value, grad) triples from a model.
struct ParamRef {
    std::string name;
    fmpn::Tensor* value;
    fmpn::Tensor* grad;
};

inline std::vector<ParamRef> collect_params(fmpn::FmpnModel& model) {
    std::vector<ParamRef> out;
    model.visit_params([&](const std::string& name, fmpn::Tensor& v, fmpn::Tensor& g) {
        out.push_back({name, &v, &g});
    });
    return out;
}

/// Central finite difference of a scalar loss with respect to one parameter
/// element.
template <typename LossFn>
double central_difference(LossFn&& loss, double& param, double h = 1e-3) {
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    return (up - down) / (2.0 * h);
}

inline double rel_error(double a, double b, double floor = 1e-6) {
    const double denom = std::max({std::fabs(a), std::fabs(b), floor});
    return std::fabs(a - b) / denom;
}

} // namespace testutil
