#pragma once

#include <random>
#include <string>
#include <unordered_map>

#include "mixscale/core/conv.hpp"

namespace mixscale {

enum class EntryKind { Param, Buffer };

template <typename T>
struct RegistryEntry {
    std::string name;
    Var<T> var;
    EntryKind kind = EntryKind::Param;
};

// Owns every named parameter and buffer of a model. Registration order is
// the construction order, which makes initialization and checkpoint layout
// deterministic for a given config+seed.
template <typename T>
class ParamRegistry {
  public:
    explicit ParamRegistry(uint64_t seed) : rng_(seed) {}

    Var<T> parameter(const std::string& name, int n, int c, int h, int w,
                     const std::function<void(TensorT<T>&, std::mt19937_64&)>& init) {
        TensorT<T> t(n, c, h, w);
        init(t, rng_);
        return insert(name, std::move(t), EntryKind::Param);
    }

    Var<T> kaiming_conv(const std::string& name, int co, int ci, int kh, int kw) {
        return parameter(name, co, ci, kh, kw, [](TensorT<T>& t, std::mt19937_64& rng) {
            double fan_in = static_cast<double>(t.c) * t.h * t.w;
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (auto& e : t.v) e = static_cast<T>(dist(rng));
        });
    }

    Var<T> constant_param(const std::string& name, int n, int c, int h, int w, T val) {
        TensorT<T> t(n, c, h, w, val);
        return insert(name, std::move(t), EntryKind::Param);
    }

    Var<T> buffer(const std::string& name, int n, int c, int h, int w, T val) {
        TensorT<T> t(n, c, h, w, val);
        auto var = insert(name, std::move(t), EntryKind::Buffer);
        var->requires_grad = false;
        return var;
    }

    const std::vector<RegistryEntry<T>>& entries() const { return entries_; }

    const RegistryEntry<T>* find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : &entries_[it->second];
    }

    size_t trainable_count() const {
        size_t total = 0;
        for (const auto& e : entries_)
            if (e.kind == EntryKind::Param) total += e.var->value.size();
        return total;
    }

    void zero_grad() {
        for (auto& e : entries_)
            if (e.kind == EntryKind::Param && !e.var->grad.v.empty()) e.var->grad.fill(T(0));
    }

  private:
    Var<T> insert(const std::string& name, TensorT<T> t, EntryKind kind) {
        if (by_name_.count(name))
            throw std::logic_error("ParamRegistry: duplicate name " + name);
        auto var = make_leaf<T>(std::move(t), kind == EntryKind::Param);
        by_name_[name] = entries_.size();
        entries_.push_back({name, var, kind});
        return var;
    }

    std::vector<RegistryEntry<T>> entries_;
    std::unordered_map<std::string, size_t> by_name_;
    std::mt19937_64 rng_;
};

template <typename T>
class Conv2dLayer {
  public:
    Conv2dLayer() = default;
    Conv2dLayer(ParamRegistry<T>& reg, const std::string& name, int ci, int co, int k,
                int stride = 1, int dilation = 1, bool with_bias = true)
        : stride_(stride), dilation_(dilation), pad_(dilation * (k / 2)) {
        weight_ = reg.kaiming_conv(name + ".weight", co, ci, k, k);
        if (with_bias) bias_ = reg.constant_param(name + ".bias", 1, co, 1, 1, T(0));
    }

    Var<T> forward(const Var<T>& x) const {
        return conv2d(x, weight_, bias_, stride_, pad_, dilation_);
    }

    int out_size(int in) const {
        return conv_out_size(in, weight_->value.h, stride_, pad_, dilation_);
    }
    long long macs(int h, int w) const {
        const auto& wv = weight_->value;
        return static_cast<long long>(wv.n) * wv.c * wv.h * wv.w * out_size(h) *
               out_size(w);
    }
    const Var<T>& weight() const { return weight_; }
    const Var<T>& bias() const { return bias_; }

  private:
    Var<T> weight_, bias_;
    int stride_ = 1, dilation_ = 1, pad_ = 0;
};

template <typename T>
class BatchNorm2dLayer {
  public:
    BatchNorm2dLayer() = default;
    BatchNorm2dLayer(ParamRegistry<T>& reg, const std::string& name, int channels) {
        gamma_ = reg.constant_param(name + ".weight", 1, channels, 1, 1, T(1));
        beta_ = reg.constant_param(name + ".bias", 1, channels, 1, 1, T(0));
        running_mean_ = reg.buffer(name + ".running_mean", 1, channels, 1, 1, T(0));
        running_var_ = reg.buffer(name + ".running_var", 1, channels, 1, 1, T(1));
    }

    Var<T> forward(const Var<T>& x, bool training) const {
        const auto& xv = x->value;
        const int C = xv.c;
        check(C == gamma_->value.c, "batchnorm: channel mismatch");
        const size_t plane = static_cast<size_t>(xv.h) * xv.w;
        const T m_count = static_cast<T>(xv.n * plane);

        std::vector<T> mean(C), var(C);
        if (training) {
            for (int j = 0; j < C; ++j) {
                T acc = T(0);
                for (int i = 0; i < xv.n; ++i) {
                    const T* p = xv.plane(i, j);
                    for (size_t q = 0; q < plane; ++q) acc += p[q];
                }
                mean[j] = acc / m_count;
            }
            for (int j = 0; j < C; ++j) {
                T acc = T(0);
                for (int i = 0; i < xv.n; ++i) {
                    const T* p = xv.plane(i, j);
                    for (size_t q = 0; q < plane; ++q) {
                        T d = p[q] - mean[j];
                        acc += d * d;
                    }
                }
                var[j] = acc / m_count;  // biased, used for normalization
            }
            // running stats keep the unbiased variance
            T unbias = m_count > 1 ? m_count / (m_count - 1) : T(1);
            for (int j = 0; j < C; ++j) {
                running_mean_->value.v[j] =
                    (T(1) - momentum_) * running_mean_->value.v[j] + momentum_ * mean[j];
                running_var_->value.v[j] = (T(1) - momentum_) * running_var_->value.v[j] +
                                           momentum_ * var[j] * unbias;
            }
        } else {
            for (int j = 0; j < C; ++j) {
                mean[j] = running_mean_->value.v[j];
                var[j] = running_var_->value.v[j];
            }
        }

        std::vector<T> inv_std(C);
        for (int j = 0; j < C; ++j) inv_std[j] = T(1) / std::sqrt(var[j] + eps_);

        TensorT<T> out(xv.n, xv.c, xv.h, xv.w);
        TensorT<T> xhat(xv.n, xv.c, xv.h, xv.w);
        for (int i = 0; i < xv.n; ++i)
            for (int j = 0; j < C; ++j) {
                const T* p = xv.plane(i, j);
                T* xh = xhat.plane(i, j);
                T* o = out.plane(i, j);
                T g = gamma_->value.v[j], b = beta_->value.v[j];
                for (size_t q = 0; q < plane; ++q) {
                    xh[q] = (p[q] - mean[j]) * inv_std[j];
                    o[q] = g * xh[q] + b;
                }
            }

        auto xhat_saved = std::make_shared<TensorT<T>>(std::move(xhat));
        auto inv_std_saved = std::make_shared<std::vector<T>>(std::move(inv_std));
        Var<T> gamma = gamma_, beta = beta_;
        return make_op<T>(
            std::move(out), {x, gamma, beta},
            [x, gamma, beta, xhat_saved, inv_std_saved, training](Node<T>& node) {
                const auto& xv = x->value;
                const int C = xv.c;
                const size_t plane = static_cast<size_t>(xv.h) * xv.w;
                const T m_count = static_cast<T>(xv.n * plane);
                for (int j = 0; j < C; ++j) {
                    T g = gamma->value.v[j];
                    T istd = (*inv_std_saved)[j];
                    T sum_dy = T(0), sum_dy_xhat = T(0);
                    for (int i = 0; i < xv.n; ++i) {
                        const T* gy = node.grad.plane(i, j);
                        const T* xh = xhat_saved->plane(i, j);
                        for (size_t q = 0; q < plane; ++q) {
                            sum_dy += gy[q];
                            sum_dy_xhat += gy[q] * xh[q];
                        }
                    }
                    if (gamma->requires_grad) gamma->grad.v[j] += sum_dy_xhat;
                    if (beta->requires_grad) beta->grad.v[j] += sum_dy;
                    if (x->requires_grad) {
                        for (int i = 0; i < xv.n; ++i) {
                            const T* gy = node.grad.plane(i, j);
                            const T* xh = xhat_saved->plane(i, j);
                            T* gx = x->grad.plane(i, j);
                            if (training) {
                                for (size_t q = 0; q < plane; ++q)
                                    gx[q] += g * istd *
                                             (gy[q] - sum_dy / m_count -
                                              xh[q] * sum_dy_xhat / m_count);
                            } else {
                                for (size_t q = 0; q < plane; ++q) gx[q] += g * istd * gy[q];
                            }
                        }
                    }
                }
            });
    }

    const Var<T>& gamma() const { return gamma_; }
    const Var<T>& beta() const { return beta_; }
    Var<T>& running_mean() { return running_mean_; }
    Var<T>& running_var() { return running_var_; }
    const Var<T>& running_mean() const { return running_mean_; }
    const Var<T>& running_var() const { return running_var_; }

  private:
    Var<T> gamma_, beta_, running_mean_, running_var_;
    T momentum_ = T(0.1);
    T eps_ = T(1e-5);
};

// Conv -> BatchNorm -> ReLU, the basic block used everywhere.
template <typename T>
class Cbr {
  public:
    Cbr() = default;
    Cbr(ParamRegistry<T>& reg, const std::string& name, int ci, int co, int k,
        int stride = 1, int dilation = 1)
        : conv_(reg, name + ".conv", ci, co, k, stride, dilation, /*with_bias=*/false),
          bn_(reg, name + ".bn", co) {}

    Var<T> forward(const Var<T>& x, bool training) const {
        return relu(bn_.forward(conv_.forward(x), training));
    }

    int out_size(int in) const { return conv_.out_size(in); }
    long long macs(int h, int w) const { return conv_.macs(h, w); }
    const Conv2dLayer<T>& conv() const { return conv_; }
    const BatchNorm2dLayer<T>& bn() const { return bn_; }

  private:
    Conv2dLayer<T> conv_;
    BatchNorm2dLayer<T> bn_;
};

// Chain of CBR units whose channel pairs slide a width-2 window over
// [in, out, out, ...]: (in,out), (out,out), ...
template <typename T>
class StackedCbr {
  public:
    StackedCbr() = default;
    StackedCbr(ParamRegistry<T>& reg, const std::string& name, int ci, int co,
               int num_blocks, int k) {
        check(num_blocks >= 1, "StackedCbr: num_blocks must be >= 1");
        int prev = ci;
        for (int b = 0; b < num_blocks; ++b) {
            blocks_.emplace_back(reg, name + ".cbr_" + std::to_string(b), prev, co, k);
            prev = co;
        }
    }

    Var<T> forward(Var<T> x, bool training) const {
        for (const auto& b : blocks_) x = b.forward(x, training);
        return x;
    }

    long long macs(int h, int w) const {
        long long total = 0;
        for (const auto& b : blocks_) total += b.macs(h, w);  // stride 1: size kept
        return total;
    }

    const std::vector<Cbr<T>>& blocks() const { return blocks_; }

  private:
    std::vector<Cbr<T>> blocks_;
};

}  // namespace mixscale
