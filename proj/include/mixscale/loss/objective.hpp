#pragma once

#include <cmath>

#include "mixscale/config/config.hpp"
#include "mixscale/core/ops.hpp"

namespace mixscale {

inline constexpr double kProbEps = 1e-7;

// Mean binary cross entropy against a {0,1} target; predictions are clamped
// to [eps, 1-eps] before the logarithms.
template <typename T>
Var<T> bcel(const Var<T>& p, const TensorT<T>& g) {
    check(p->value.same_shape(g), "bcel: shape mismatch " + p->value.shape_str() +
                                      " vs " + g.shape_str());
    const T eps = static_cast<T>(kProbEps);
    const size_t N = p->value.size();
    T acc = T(0);
    for (size_t i = 0; i < N; ++i) {
        T pc = std::clamp(p->value.v[i], eps, T(1) - eps);
        acc += -g.v[i] * std::log(pc) - (T(1) - g.v[i]) * std::log(T(1) - pc);
    }
    TensorT<T> out(1, 1, 1, 1);
    out.v[0] = acc / static_cast<T>(N);
    auto gt = std::make_shared<TensorT<T>>(g);
    return make_op<T>(std::move(out), {p}, [p, gt, eps, N](Node<T>& node) {
        if (!p->requires_grad) return;
        T scale = node.grad.v[0] / static_cast<T>(N);
        for (size_t i = 0; i < N; ++i) {
            T pv = p->value.v[i];
            if (pv <= eps || pv >= T(1) - eps) continue;  // clamped: zero slope
            p->grad.v[i] += scale * (pv - gt->v[i]) / (pv * (T(1) - pv));
        }
    });
}

// Ground-truth-free penalty on ambiguous predictions, mean over pixels.
//   pow: 1 - |2p-1|^alpha          (zero at p in {0,1}, maximal at 0.5)
//   exp: exp(-(alpha*(p-0.5))^2)   (maximal at 0.5)
template <typename T>
Var<T> ual_penalty(const Var<T>& p, const UalSpec& spec) {
    check(spec.form == UalForm::Pow || spec.form == UalForm::Exp,
          "ual_penalty: expected pow or exp form");
    const T alpha = static_cast<T>(spec.alpha);
    const size_t N = p->value.size();
    T acc = T(0);
    if (spec.form == UalForm::Pow) {
        for (size_t i = 0; i < N; ++i)
            acc += T(1) - std::pow(std::abs(T(2) * p->value.v[i] - T(1)), alpha);
    } else {
        for (size_t i = 0; i < N; ++i) {
            T d = alpha * (p->value.v[i] - T(0.5));
            acc += std::exp(-d * d);
        }
    }
    TensorT<T> out(1, 1, 1, 1);
    out.v[0] = acc / static_cast<T>(N);
    UalForm form = spec.form;
    return make_op<T>(std::move(out), {p}, [p, alpha, form, N](Node<T>& node) {
        if (!p->requires_grad) return;
        T scale = node.grad.v[0] / static_cast<T>(N);
        if (form == UalForm::Pow) {
            for (size_t i = 0; i < N; ++i) {
                T u = T(2) * p->value.v[i] - T(1);
                T au = std::abs(u);
                T d = au > T(0) ? -T(2) * alpha * std::pow(au, alpha - T(1)) *
                                      (u > T(0) ? T(1) : T(-1))
                                : T(0);
                p->grad.v[i] += scale * d;
            }
        } else {
            for (size_t i = 0; i < N; ++i) {
                T d = alpha * (p->value.v[i] - T(0.5));
                p->grad.v[i] += scale * (-T(2) * alpha * d * std::exp(-d * d));
            }
        }
    });
}

// BCE with the per-pixel weight w(p) = 1 + (1 - |2p-1|^alpha). The weight
// depends on the prediction, and gradients flow through it.
template <typename T>
Var<T> weighted_bcel(const Var<T>& p, const TensorT<T>& g, double alpha_in) {
    check(p->value.same_shape(g), "weighted_bcel: shape mismatch");
    const T eps = static_cast<T>(kProbEps);
    const T alpha = static_cast<T>(alpha_in);
    const size_t N = p->value.size();
    T acc = T(0);
    for (size_t i = 0; i < N; ++i) {
        T pc = std::clamp(p->value.v[i], eps, T(1) - eps);
        T l = -g.v[i] * std::log(pc) - (T(1) - g.v[i]) * std::log(T(1) - pc);
        T wgt = T(2) - std::pow(std::abs(T(2) * p->value.v[i] - T(1)), alpha);
        acc += wgt * l;
    }
    TensorT<T> out(1, 1, 1, 1);
    out.v[0] = acc / static_cast<T>(N);
    auto gt = std::make_shared<TensorT<T>>(g);
    return make_op<T>(std::move(out), {p}, [p, gt, eps, alpha, N](Node<T>& node) {
        if (!p->requires_grad) return;
        T scale = node.grad.v[0] / static_cast<T>(N);
        for (size_t i = 0; i < N; ++i) {
            T pv = p->value.v[i];
            T pc = std::clamp(pv, eps, T(1) - eps);
            T l = -gt->v[i] * std::log(pc) - (T(1) - gt->v[i]) * std::log(T(1) - pc);
            T u = T(2) * pv - T(1);
            T au = std::abs(u);
            T wgt = T(2) - std::pow(au, alpha);
            T dw = au > T(0)
                       ? -T(2) * alpha * std::pow(au, alpha - T(1)) * (u > T(0) ? T(1) : T(-1))
                       : T(0);
            T dl = (pv > eps && pv < T(1) - eps)
                       ? (pv - gt->v[i]) / (pv * (T(1) - pv))
                       : T(0);
            p->grad.v[i] += scale * (dw * l + wgt * dl);
        }
    });
}

// Balance coefficient at iteration t of T total, per the configured ramp.
inline double lambda_value(const ScheduleSpec& spec, double t, double total) {
    check(total > 0 && t >= 0 && t <= total, "lambda_value: need 0 <= t <= T");
    switch (spec.kind) {
        case ScheduleKind::Cosine:
            return spec.lambda_min +
                   0.5 * (1.0 - std::cos(t / total * M_PI)) *
                       (spec.lambda_max - spec.lambda_min);
        case ScheduleKind::Linear: {
            check(spec.t_end > spec.t_start, "lambda_value: t_end must exceed t_start");
            double v = spec.lambda_min + (t - spec.t_start * total) /
                                             ((spec.t_end - spec.t_start) * total) *
                                             (spec.lambda_max - spec.lambda_min);
            return std::clamp(v, spec.lambda_min, spec.lambda_max);
        }
        default:
            return spec.constant_value;
    }
}

template <typename T>
struct LossBreakdown {
    Var<T> total;
    double bcel_value = 0;
    double ual_value = 0;
    double lambda = 0;
};

// total = BCE + lambda(t)*UAL; the weighted-BCE form replaces BCE entirely
// and reports a zero UAL term.
template <typename T>
LossBreakdown<T> total_loss(const Var<T>& p, const TensorT<T>& g, const UalSpec& ual,
                            const ScheduleSpec& schedule, double t, double total_iters) {
    LossBreakdown<T> out;
    out.lambda = lambda_value(schedule, t, total_iters);
    if (ual.form == UalForm::WeightedBce) {
        out.total = weighted_bcel(p, g, ual.alpha);
        out.bcel_value = out.total->value.v[0];
        out.ual_value = 0;
        return out;
    }
    Var<T> bce = bcel(p, g);
    out.bcel_value = bce->value.v[0];
    if (ual.form == UalForm::None) {
        out.total = bce;
        out.ual_value = 0;
        return out;
    }
    Var<T> pen = ual_penalty(p, ual);
    out.ual_value = pen->value.v[0];
    out.total = add(bce, scale(pen, static_cast<T>(out.lambda)));
    return out;
}

}  // namespace mixscale
