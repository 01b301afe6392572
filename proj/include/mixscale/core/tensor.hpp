#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixscale {

// Dense NCHW tensor. Scalars and per-channel vectors are stored as
// (1,1,1,1) and (1,C,1,1) respectively.
template <typename T>
struct TensorT {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    TensorT() = default;
    TensorT(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw std::invalid_argument("TensorT: negative dimension");
    }

    static TensorT zeros_like(const TensorT& o) { return TensorT(o.n, o.c, o.h, o.w); }

    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    size_t idx(int i, int j, int y, int x) const {
        return ((static_cast<size_t>(i) * c + j) * h + y) * w + x;
    }
    T& at(int i, int j, int y, int x) { return v[idx(i, j, y, x)]; }
    const T& at(int i, int j, int y, int x) const { return v[idx(i, j, y, x)]; }

    // Pointer to the start of channel j of sample i (a contiguous h*w plane).
    T* plane(int i, int j) { return v.data() + idx(i, j, 0, 0); }
    const T* plane(int i, int j) const { return v.data() + idx(i, j, 0, 0); }

    bool same_shape(const TensorT& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }

    void fill(T val) { std::fill(v.begin(), v.end(), val); }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> r(n, c, h, w);
        for (size_t i = 0; i < v.size(); ++i) r.v[i] = static_cast<U>(v[i]);
        return r;
    }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

}  // namespace mixscale
