#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixscale/core/autograd.hpp"

namespace mixscale {

template <typename T>
Var<T> relu(const Var<T>& x) {
    TensorT<T> out = x->value;
    for (auto& e : out.v) e = e > T(0) ? e : T(0);
    return make_op<T>(std::move(out), {x}, [x](Node<T>& node) {
        if (!x->requires_grad) return;
        const auto& xv = x->value.v;
        for (size_t i = 0; i < xv.size(); ++i)
            if (xv[i] > T(0)) x->grad.v[i] += node.grad.v[i];
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    TensorT<T> out = x->value;
    for (auto& e : out.v) e = T(1) / (T(1) + std::exp(-e));
    return make_op<T>(std::move(out), {x}, [x](Node<T>& node) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < node.value.v.size(); ++i) {
            T s = node.value.v[i];
            x->grad.v[i] += node.grad.v[i] * s * (T(1) - s);
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check(a->value.same_shape(b->value),
          "add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    TensorT<T> out = a->value;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
    return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& node) {
        if (a->requires_grad)
            for (size_t i = 0; i < node.grad.v.size(); ++i) a->grad.v[i] += node.grad.v[i];
        if (b->requires_grad)
            for (size_t i = 0; i < node.grad.v.size(); ++i) b->grad.v[i] += node.grad.v[i];
    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T k) {
    TensorT<T> out = x->value;
    for (auto& e : out.v) e *= k;
    return make_op<T>(std::move(out), {x}, [x, k](Node<T>& node) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < node.grad.v.size(); ++i) x->grad.v[i] += k * node.grad.v[i];
    });
}

// Elementwise product where each dim of `y` either matches `x` or is 1.
// Covers attention maps (N,1,H,W) and channel gates (N,C,1,1).
template <typename T>
Var<T> mul_bcast(const Var<T>& x, const Var<T>& y) {
    const auto& xv = x->value;
    const auto& yv = y->value;
    check((yv.n == xv.n || yv.n == 1) && (yv.c == xv.c || yv.c == 1) &&
              (yv.h == xv.h || yv.h == 1) && (yv.w == xv.w || yv.w == 1),
          "mul_bcast: incompatible shapes " + xv.shape_str() + " vs " + yv.shape_str());
    auto yindex = [&yv](int i, int j, int r, int s) {
        return yv.idx(yv.n == 1 ? 0 : i, yv.c == 1 ? 0 : j, yv.h == 1 ? 0 : r,
                      yv.w == 1 ? 0 : s);
    };
    TensorT<T> out(xv.n, xv.c, xv.h, xv.w);
    for (int i = 0; i < xv.n; ++i)
        for (int j = 0; j < xv.c; ++j)
            for (int r = 0; r < xv.h; ++r)
                for (int s = 0; s < xv.w; ++s)
                    out.at(i, j, r, s) = xv.at(i, j, r, s) * yv.v[yindex(i, j, r, s)];
    return make_op<T>(std::move(out), {x, y}, [x, y, yindex](Node<T>& node) {
        const auto& xv = x->value;
        const auto& yv = y->value;
        for (int i = 0; i < xv.n; ++i)
            for (int j = 0; j < xv.c; ++j)
                for (int r = 0; r < xv.h; ++r)
                    for (int s = 0; s < xv.w; ++s) {
                        size_t xi = xv.idx(i, j, r, s);
                        size_t yi = yindex(i, j, r, s);
                        T g = node.grad.v[xi];
                        if (x->requires_grad) x->grad.v[xi] += g * yv.v[yi];
                        if (y->requires_grad) y->grad.v[yi] += g * xv.v[xi];
                    }
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    check(!parts.empty(), "concat_channels: empty input");
    int n = parts[0]->value.n, h = parts[0]->value.h, w = parts[0]->value.w;
    int c_total = 0;
    for (const auto& p : parts) {
        check(p->value.n == n && p->value.h == h && p->value.w == w,
              "concat_channels: mismatched spatial/batch shape");
        c_total += p->value.c;
    }
    TensorT<T> out(n, c_total, h, w);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        int co = 0;
        for (const auto& p : parts) {
            std::copy_n(p->value.plane(i, 0), static_cast<size_t>(p->value.c) * plane,
                        out.plane(i, co));
            co += p->value.c;
        }
    }
    return make_op<T>(std::move(out), parts, [parts, plane](Node<T>& node) {
        int n = node.value.n;
        for (int i = 0; i < n; ++i) {
            int co = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    const T* src = node.grad.plane(i, co);
                    T* dst = p->grad.plane(i, 0);
                    size_t len = static_cast<size_t>(p->value.c) * plane;
                    for (size_t k = 0; k < len; ++k) dst[k] += src[k];
                }
                co += p->value.c;
            }
        }
    });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int c0, int len) {
    const auto& xv = x->value;
    check(c0 >= 0 && len > 0 && c0 + len <= xv.c, "slice_channels: out of range");
    TensorT<T> out(xv.n, len, xv.h, xv.w);
    const size_t plane = static_cast<size_t>(xv.h) * xv.w;
    for (int i = 0; i < xv.n; ++i)
        std::copy_n(xv.plane(i, c0), static_cast<size_t>(len) * plane, out.plane(i, 0));
    return make_op<T>(std::move(out), {x}, [x, c0, len, plane](Node<T>& node) {
        if (!x->requires_grad) return;
        for (int i = 0; i < node.value.n; ++i) {
            const T* src = node.grad.plane(i, 0);
            T* dst = x->grad.plane(i, c0);
            size_t count = static_cast<size_t>(len) * plane;
            for (size_t k = 0; k < count; ++k) dst[k] += src[k];
        }
    });
}

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
    const auto& xv = x->value;
    TensorT<T> out(xv.n, xv.c, xv.h, xv.w);
    for (int i = 0; i < xv.n; ++i)
        for (int r = 0; r < xv.h; ++r)
            for (int s = 0; s < xv.w; ++s) {
                T mx = -std::numeric_limits<T>::infinity();
                for (int j = 0; j < xv.c; ++j) mx = std::max(mx, xv.at(i, j, r, s));
                T denom = T(0);
                for (int j = 0; j < xv.c; ++j) {
                    T e = std::exp(xv.at(i, j, r, s) - mx);
                    out.at(i, j, r, s) = e;
                    denom += e;
                }
                for (int j = 0; j < xv.c; ++j) out.at(i, j, r, s) /= denom;
            }
    return make_op<T>(std::move(out), {x}, [x](Node<T>& node) {
        if (!x->requires_grad) return;
        const auto& yv = node.value;
        for (int i = 0; i < yv.n; ++i)
            for (int r = 0; r < yv.h; ++r)
                for (int s = 0; s < yv.w; ++s) {
                    T dot = T(0);
                    for (int j = 0; j < yv.c; ++j)
                        dot += yv.at(i, j, r, s) * node.grad.at(i, j, r, s);
                    for (int j = 0; j < yv.c; ++j)
                        x->grad.at(i, j, r, s) +=
                            yv.at(i, j, r, s) * (node.grad.at(i, j, r, s) - dot);
                }
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    TensorT<T> out(1, 1, 1, 1);
    T acc = T(0);
    for (const auto& e : x->value.v) acc += e;
    out.v[0] = acc / static_cast<T>(x->value.size());
    return make_op<T>(std::move(out), {x}, [x](Node<T>& node) {
        if (!x->requires_grad) return;
        T g = node.grad.v[0] / static_cast<T>(x->value.size());
        for (auto& e : x->grad.v) e += g;
    });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    TensorT<T> out(1, 1, 1, 1);
    T acc = T(0);
    for (const auto& e : x->value.v) acc += e;
    out.v[0] = acc;
    return make_op<T>(std::move(out), {x}, [x](Node<T>& node) {
        if (!x->requires_grad) return;
        T g = node.grad.v[0];
        for (auto& e : x->grad.v) e += g;
    });
}

// Bilinear interpolation with the half-pixel (non-corner-aligned) convention.
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int oh, int ow) {
    const auto& xv = x->value;
    check(oh > 0 && ow > 0, "bilinear_resize: bad target size");
    if (oh == xv.h && ow == xv.w) return x;

    struct Tap {
        int lo, hi;
        T w_hi;
    };
    auto make_taps = [](int in, int out) {
        std::vector<Tap> taps(out);
        double s = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * s - 0.5;
            if (src < 0) src = 0;
            int lo = static_cast<int>(src);
            if (lo > in - 1) lo = in - 1;
            int hi = std::min(lo + 1, in - 1);
            taps[o] = {lo, hi, static_cast<T>(src - lo)};
        }
        return taps;
    };
    auto ytaps = make_taps(xv.h, oh);
    auto xtaps = make_taps(xv.w, ow);

    TensorT<T> out(xv.n, xv.c, oh, ow);
    for (int i = 0; i < xv.n; ++i)
        for (int j = 0; j < xv.c; ++j) {
            const T* src = xv.plane(i, j);
            T* dst = out.plane(i, j);
            for (int r = 0; r < oh; ++r) {
                const Tap& ty = ytaps[r];
                const T* row_lo = src + static_cast<size_t>(ty.lo) * xv.w;
                const T* row_hi = src + static_cast<size_t>(ty.hi) * xv.w;
                for (int s = 0; s < ow; ++s) {
                    const Tap& tx = xtaps[s];
                    T top = row_lo[tx.lo] * (T(1) - tx.w_hi) + row_lo[tx.hi] * tx.w_hi;
                    T bot = row_hi[tx.lo] * (T(1) - tx.w_hi) + row_hi[tx.hi] * tx.w_hi;
                    dst[r * ow + s] = top * (T(1) - ty.w_hi) + bot * ty.w_hi;
                }
            }
        }
    return make_op<T>(std::move(out), {x}, [x, ytaps, xtaps, oh, ow](Node<T>& node) {
        if (!x->requires_grad) return;
        const auto& xv = x->value;
        for (int i = 0; i < xv.n; ++i)
            for (int j = 0; j < xv.c; ++j) {
                T* gx = x->grad.plane(i, j);
                const T* gy = node.grad.plane(i, j);
                for (int r = 0; r < oh; ++r) {
                    const auto& ty = ytaps[r];
                    for (int s = 0; s < ow; ++s) {
                        const auto& tx = xtaps[s];
                        T g = gy[r * ow + s];
                        gx[ty.lo * xv.w + tx.lo] += g * (T(1) - ty.w_hi) * (T(1) - tx.w_hi);
                        gx[ty.lo * xv.w + tx.hi] += g * (T(1) - ty.w_hi) * tx.w_hi;
                        gx[ty.hi * xv.w + tx.lo] += g * ty.w_hi * (T(1) - tx.w_hi);
                        gx[ty.hi * xv.w + tx.hi] += g * ty.w_hi * tx.w_hi;
                    }
                }
            }
    });
}

namespace detail {
inline std::pair<int, int> adaptive_span(int o, int in, int out) {
    int start = (o * in) / out;
    int end = ((o + 1) * in + out - 1) / out;
    return {start, end};
}
}  // namespace detail

template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, int oh, int ow) {
    const auto& xv = x->value;
    if (oh == xv.h && ow == xv.w) return x;
    TensorT<T> out(xv.n, xv.c, oh, ow);
    for (int i = 0; i < xv.n; ++i)
        for (int j = 0; j < xv.c; ++j) {
            const T* src = xv.plane(i, j);
            T* dst = out.plane(i, j);
            for (int r = 0; r < oh; ++r) {
                auto [y0, y1] = detail::adaptive_span(r, xv.h, oh);
                for (int s = 0; s < ow; ++s) {
                    auto [x0, x1] = detail::adaptive_span(s, xv.w, ow);
                    T acc = T(0);
                    for (int y = y0; y < y1; ++y)
                        for (int z = x0; z < x1; ++z) acc += src[y * xv.w + z];
                    dst[r * ow + s] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
                }
            }
        }
    return make_op<T>(std::move(out), {x}, [x, oh, ow](Node<T>& node) {
        if (!x->requires_grad) return;
        const auto& xv = x->value;
        for (int i = 0; i < xv.n; ++i)
            for (int j = 0; j < xv.c; ++j) {
                T* gx = x->grad.plane(i, j);
                const T* gy = node.grad.plane(i, j);
                for (int r = 0; r < oh; ++r) {
                    auto [y0, y1] = detail::adaptive_span(r, xv.h, oh);
                    for (int s = 0; s < ow; ++s) {
                        auto [x0, x1] = detail::adaptive_span(s, xv.w, ow);
                        T g = gy[r * ow + s] / static_cast<T>((y1 - y0) * (x1 - x0));
                        for (int y = y0; y < y1; ++y)
                            for (int z = x0; z < x1; ++z) gx[y * xv.w + z] += g;
                    }
                }
            }
    });
}

template <typename T>
Var<T> adaptive_max_pool(const Var<T>& x, int oh, int ow) {
    const auto& xv = x->value;
    if (oh == xv.h && ow == xv.w) return x;
    TensorT<T> out(xv.n, xv.c, oh, ow);
    auto argmax = std::make_shared<std::vector<int>>(out.size());
    size_t k = 0;
    for (int i = 0; i < xv.n; ++i)
        for (int j = 0; j < xv.c; ++j) {
            const T* src = xv.plane(i, j);
            T* dst = out.plane(i, j);
            for (int r = 0; r < oh; ++r) {
                auto [y0, y1] = detail::adaptive_span(r, xv.h, oh);
                for (int s = 0; s < ow; ++s, ++k) {
                    auto [x0, x1] = detail::adaptive_span(s, xv.w, ow);
                    T best = src[y0 * xv.w + x0];
                    int best_at = y0 * xv.w + x0;
                    for (int y = y0; y < y1; ++y)
                        for (int z = x0; z < x1; ++z)
                            if (src[y * xv.w + z] > best) {
                                best = src[y * xv.w + z];
                                best_at = y * xv.w + z;
                            }
                    dst[r * ow + s] = best;
                    (*argmax)[k] = best_at;
                }
            }
        }
    return make_op<T>(std::move(out), {x}, [x, argmax](Node<T>& node) {
        if (!x->requires_grad) return;
        const auto& yv = node.value;
        size_t plane = static_cast<size_t>(yv.h) * yv.w;
        size_t k = 0;
        for (int i = 0; i < yv.n; ++i)
            for (int j = 0; j < yv.c; ++j) {
                T* gx = x->grad.plane(i, j);
                const T* gy = node.grad.plane(i, j);
                for (size_t p = 0; p < plane; ++p, ++k) gx[(*argmax)[k]] += gy[p];
            }
    });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    return adaptive_avg_pool(x, 1, 1);
}

// Element-wise mean of adaptive max- and average-pooling; used for the
// 1.5x -> 1.0x feature downsampling where the ratio is non-integer.
template <typename T>
Var<T> hybrid_downsample(const Var<T>& x, int oh, int ow) {
    check(oh <= x->value.h && ow <= x->value.w,
          "hybrid_downsample: target larger than source");
    if (oh == x->value.h && ow == x->value.w) return x;
    return scale(add(adaptive_max_pool(x, oh, ow), adaptive_avg_pool(x, oh, ow)), T(0.5));
}

template <typename T>
Var<T> zeros_like_var(const Var<T>& x) {
    return make_leaf<T>(TensorT<T>::zeros_like(x->value), false);
}

}  // namespace mixscale
