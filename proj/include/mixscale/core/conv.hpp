#pragma once

#include <Eigen/Core>

#include "mixscale/core/ops.hpp"

namespace mixscale {

// Running multiply-accumulate counter for conv/linear work. Used by tests
// to cross-check the analytic cost model against what actually executed.
inline long long& conv_mac_counter() {
    thread_local long long count = 0;
    return count;
}

inline int conv_out_size(int in, int k, int stride, int pad, int dilation) {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void im2col(const T* src, int c, int h, int w, int kh, int kw, int stride, int pad,
            int dilation, int oh, int ow, T* col) {
    // col is (c*kh*kw) x (oh*ow), row-major
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = src + static_cast<size_t>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                T* row = col + (static_cast<size_t>(ch) * kh * kw + ky * kw + kx) *
                                   (static_cast<size_t>(oh) * ow);
                for (int r = 0; r < oh; ++r) {
                    int y = r * stride - pad + ky * dilation;
                    if (y < 0 || y >= h) {
                        std::fill_n(row + static_cast<size_t>(r) * ow, ow, T(0));
                        continue;
                    }
                    const T* srow = plane + static_cast<size_t>(y) * w;
                    T* drow = row + static_cast<size_t>(r) * ow;
                    for (int s = 0; s < ow; ++s) {
                        int x = s * stride - pad + kx * dilation;
                        drow[s] = (x >= 0 && x < w) ? srow[x] : T(0);
                    }
                }
            }
    }
}

template <typename T>
void col2im_accum(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad,
                  int dilation, int oh, int ow, T* dst) {
    for (int ch = 0; ch < c; ++ch) {
        T* plane = dst + static_cast<size_t>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const T* row = col + (static_cast<size_t>(ch) * kh * kw + ky * kw + kx) *
                                         (static_cast<size_t>(oh) * ow);
                for (int r = 0; r < oh; ++r) {
                    int y = r * stride - pad + ky * dilation;
                    if (y < 0 || y >= h) continue;
                    T* drow = plane + static_cast<size_t>(y) * w;
                    const T* srow = row + static_cast<size_t>(r) * ow;
                    for (int s = 0; s < ow; ++s) {
                        int x = s * stride - pad + kx * dilation;
                        if (x >= 0 && x < w) drow[x] += srow[s];
                    }
                }
            }
    }
}

}  // namespace detail

// 2-D convolution, NCHW. weight is (co, ci, kh, kw); bias, when present,
// is (1, co, 1, 1).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int pad, int dilation = 1) {
    const auto& xv = x->value;
    const auto& wv = weight->value;
    check(xv.c == wv.c, "conv2d: channel mismatch " + xv.shape_str() + " w " + wv.shape_str());
    const int co = wv.n, ci = wv.c, kh = wv.h, kw = wv.w;
    const int oh = conv_out_size(xv.h, kh, stride, pad, dilation);
    const int ow = conv_out_size(xv.w, kw, stride, pad, dilation);
    check(oh > 0 && ow > 0, "conv2d: empty output");
    const size_t K = static_cast<size_t>(ci) * kh * kw;
    const size_t P = static_cast<size_t>(oh) * ow;

    conv_mac_counter() += static_cast<long long>(xv.n) * co * K * P;

    const bool need_grad =
        grad_enabled() && (x->requires_grad || weight->requires_grad ||
                           (bias && bias->requires_grad));

    TensorT<T> out(xv.n, co, oh, ow);
    // cols are kept for the backward pass only when gradients are needed.
    auto saved_cols = std::make_shared<std::vector<std::vector<T>>>();
    std::vector<T> scratch;
    if (!need_grad) scratch.resize(K * P);
    if (need_grad) saved_cols->resize(xv.n);

    Eigen::Map<const detail::MatRM<T>> W(wv.data(), co, static_cast<Eigen::Index>(K));
    for (int i = 0; i < xv.n; ++i) {
        T* colptr;
        if (need_grad) {
            (*saved_cols)[i].resize(K * P);
            colptr = (*saved_cols)[i].data();
        } else {
            colptr = scratch.data();
        }
        detail::im2col(xv.plane(i, 0), ci, xv.h, xv.w, kh, kw, stride, pad, dilation, oh,
                       ow, colptr);
        Eigen::Map<const detail::MatRM<T>> col(colptr, static_cast<Eigen::Index>(K),
                                               static_cast<Eigen::Index>(P));
        Eigen::Map<detail::MatRM<T>> y(out.plane(i, 0), co, static_cast<Eigen::Index>(P));
        y.noalias() = W * col;
    }
    if (bias) {
        for (int i = 0; i < xv.n; ++i)
            for (int j = 0; j < co; ++j) {
                T b = bias->value.v[j];
                T* dst = out.plane(i, j);
                for (size_t p = 0; p < P; ++p) dst[p] += b;
            }
    }

    std::vector<Var<T>> parents = {x, weight};
    if (bias) parents.push_back(bias);
    return make_op<T>(
        std::move(out), std::move(parents),
        [x, weight, bias, stride, pad, dilation, saved_cols, K, P](Node<T>& node) {
            const auto& xv = x->value;
            const auto& wv = weight->value;
            const int co = wv.n, ci = wv.c, kh = wv.h, kw = wv.w;
            const int oh = node.value.h, ow = node.value.w;
            Eigen::Map<const detail::MatRM<T>> W(wv.data(), co,
                                                 static_cast<Eigen::Index>(K));
            std::vector<T> colgrad;
            if (x->requires_grad) colgrad.resize(K * P);
            for (int i = 0; i < xv.n; ++i) {
                Eigen::Map<const detail::MatRM<T>> dY(node.grad.plane(i, 0), co,
                                                      static_cast<Eigen::Index>(P));
                Eigen::Map<const detail::MatRM<T>> col((*saved_cols)[i].data(),
                                                       static_cast<Eigen::Index>(K),
                                                       static_cast<Eigen::Index>(P));
                if (weight->requires_grad) {
                    Eigen::Map<detail::MatRM<T>> dW(weight->grad.data(), co,
                                                    static_cast<Eigen::Index>(K));
                    dW.noalias() += dY * col.transpose();
                }
                if (x->requires_grad) {
                    Eigen::Map<detail::MatRM<T>> dcol(colgrad.data(),
                                                      static_cast<Eigen::Index>(K),
                                                      static_cast<Eigen::Index>(P));
                    dcol.noalias() = W.transpose() * dY;
                    detail::col2im_accum(colgrad.data(), ci, xv.h, xv.w, kh, kw, stride,
                                         pad, dilation, oh, ow, x->grad.plane(i, 0));
                }
            }
            if (bias && bias->requires_grad) {
                for (int i = 0; i < xv.n; ++i)
                    for (int j = 0; j < co; ++j) {
                        const T* g = node.grad.plane(i, j);
                        T acc = T(0);
                        for (size_t p = 0; p < P; ++p) acc += g[p];
                        bias->grad.v[j] += acc;
                    }
            }
        });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int k, int stride, int pad) {
    const auto& xv = x->value;
    const int oh = conv_out_size(xv.h, k, stride, pad, 1);
    const int ow = conv_out_size(xv.w, k, stride, pad, 1);
    TensorT<T> out(xv.n, xv.c, oh, ow);
    auto argmax = std::make_shared<std::vector<int>>(out.size(), -1);
    size_t q = 0;
    for (int i = 0; i < xv.n; ++i)
        for (int j = 0; j < xv.c; ++j) {
            const T* src = xv.plane(i, j);
            T* dst = out.plane(i, j);
            for (int r = 0; r < oh; ++r)
                for (int s = 0; s < ow; ++s, ++q) {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_at = -1;
                    for (int ky = 0; ky < k; ++ky) {
                        int y = r * stride - pad + ky;
                        if (y < 0 || y >= xv.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int z = s * stride - pad + kx;
                            if (z < 0 || z >= xv.w) continue;
                            if (src[y * xv.w + z] > best) {
                                best = src[y * xv.w + z];
                                best_at = y * xv.w + z;
                            }
                        }
                    }
                    dst[r * ow + s] = best;
                    (*argmax)[q] = best_at;
                }
        }
    return make_op<T>(std::move(out), {x}, [x, argmax](Node<T>& node) {
        if (!x->requires_grad) return;
        const auto& yv = node.value;
        size_t plane = static_cast<size_t>(yv.h) * yv.w;
        size_t q = 0;
        for (int i = 0; i < yv.n; ++i)
            for (int j = 0; j < yv.c; ++j) {
                T* gx = x->grad.plane(i, j);
                const T* gy = node.grad.plane(i, j);
                for (size_t p = 0; p < plane; ++p, ++q)
                    if ((*argmax)[q] >= 0) gx[(*argmax)[q]] += gy[p];
            }
    });
}

}  // namespace mixscale
