#pragma once

#include "mixscale/nn/module.hpp"

namespace mixscale {

// Grouped channel-mix block. A 1x1 conv expands the input to G*C channels
// which are processed group by group: each group's transform output is split
// into an exchange slice passed to the next group, a gating slice, and a
// payload slice. A squeeze-style network over the pooled gating slices
// produces a per-channel vector that modulates the payload before the
// residual output transform.
template <typename T>
class GroupMix {
  public:
    GroupMix() = default;
    GroupMix(ParamRegistry<T>& reg, const std::string& name, int channels, int groups,
             int group_channels)
        : groups_(groups), group_channels_(group_channels), channels_(channels) {
        check(groups >= 2, "GroupMix: groups must be >= 2");
        const int C = group_channels, G = groups;
        expand_ = Conv2dLayer<T>(reg, name + ".expand", channels, G * C, 1, 1, 1, true);
        for (int i = 0; i < G; ++i) {
            int cin = i == 0 ? C : 2 * C;
            int cout = i == G - 1 ? 2 * C : 3 * C;
            interact_.emplace_back(reg, name + ".group" + std::to_string(i), cin, cout, 3);
        }
        int mid = (G * C) / 4;
        gate1_ = Conv2dLayer<T>(reg, name + ".gate1", G * C, mid, 1, 1, 1, true);
        gate2_ = Conv2dLayer<T>(reg, name + ".gate2", mid, G * C, 1, 1, 1, true);
        trans_ = Conv2dLayer<T>(reg, name + ".trans", G * C, channels, 3, 1, 1, false);
        trans_bn_ = BatchNorm2dLayer<T>(reg, name + ".trans_bn", channels);
    }

    struct GroupOutputs {
        std::vector<Var<T>> exchange;  // G-1 entries, C channels each
        std::vector<Var<T>> gating;    // G entries
        std::vector<Var<T>> payload;   // G entries
    };

    // Sequential group iteration over an already-expanded G*C-channel map.
    GroupOutputs iterate(const Var<T>& expanded, bool training) const {
        const int C = group_channels_, G = groups_;
        check(expanded->value.c == G * C, "GroupMix::iterate: expected " +
                                              std::to_string(G * C) + " channels, got " +
                                              std::to_string(expanded->value.c));
        GroupOutputs out;
        Var<T> prev;
        for (int i = 0; i < G; ++i) {
            Var<T> g = slice_channels(expanded, i * C, C);
            Var<T> in = i == 0 ? g : concat_channels<T>({g, prev});
            Var<T> t = interact_[i].forward(in, training);
            if (i < G - 1) {
                prev = slice_channels(t, 0, C);
                out.exchange.push_back(prev);
                out.gating.push_back(slice_channels(t, C, C));
                out.payload.push_back(slice_channels(t, 2 * C, C));
            } else {
                out.gating.push_back(slice_channels(t, 0, C));
                out.payload.push_back(slice_channels(t, C, C));
            }
        }
        return out;
    }

    Var<T> forward(const Var<T>& x, bool training,
                   const TensorT<T>* gate_override = nullptr) const {
        Var<T> expanded = expand_.forward(x);
        GroupOutputs parts = iterate(expanded, training);
        Var<T> gating = concat_channels<T>(parts.gating);
        Var<T> payload = concat_channels<T>(parts.payload);
        Var<T> gate;
        if (gate_override) {
            gate = make_leaf<T>(*gate_override, false);
        } else {
            gate = sigmoid(gate2_.forward(relu(gate1_.forward(global_avg_pool(gating)))));
        }
        Var<T> inner = trans_bn_.forward(trans_.forward(mul_bcast(payload, gate)), training);
        return relu(add(x, inner));
    }

    long long macs(int h, int w) const {
        long long total = expand_.macs(h, w);
        for (const auto& t : interact_) total += t.macs(h, w);
        total += gate1_.macs(1, 1) + gate2_.macs(1, 1);
        total += trans_.macs(h, w);
        return total;
    }

    int groups() const { return groups_; }
    int group_channels() const { return group_channels_; }
    const Conv2dLayer<T>& expand_conv() const { return expand_; }
    const std::vector<Cbr<T>>& interact() const { return interact_; }
    Conv2dLayer<T>& trans_conv() { return trans_; }

  private:
    int groups_ = 0, group_channels_ = 0, channels_ = 0;
    Conv2dLayer<T> expand_;
    std::vector<Cbr<T>> interact_;
    Conv2dLayer<T> gate1_, gate2_, trans_;
    BatchNorm2dLayer<T> trans_bn_;
};

}  // namespace mixscale
