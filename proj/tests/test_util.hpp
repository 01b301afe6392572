#pragma once

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "mixscale/core/tensor.hpp"

namespace testutil {

template <typename T>
mixscale::TensorT<T> random_tensor(int n, int c, int h, int w, uint64_t seed, T lo = T(-1),
                                   T hi = T(1)) {
    mixscale::TensorT<T> t(n, c, h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                static_cast<double>(hi));
    for (auto& e : t.v) e = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
double max_abs_diff(const mixscale::TensorT<T>& a, const mixscale::TensorT<T>& b) {
    REQUIRE(a.same_shape(b));
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

// Scratch directory unique to a test, cleaned up on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("mixscale_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
