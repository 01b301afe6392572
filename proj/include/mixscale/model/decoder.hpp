#pragma once

#include "mixscale/model/backbone.hpp"
#include "mixscale/model/mix_block.hpp"

namespace mixscale {

// Top-down decoder: five per-level fusion units chained deep-to-shallow,
// each consuming the level feature plus the upsampled deeper output, then a
// CBR head producing the single-channel probability map at input resolution.
template <typename T>
class MixedScaleDecoder {
  public:
    MixedScaleDecoder(ParamRegistry<T>& reg, const std::string& name, const ModelConfig& cfg)
        : unit_kind_(cfg.decoder_unit) {
        for (int i = 0; i < 5; ++i) {
            std::string uname = name + ".fuse" + std::to_string(i + 1);
            if (cfg.decoder_unit == DecoderUnit::Mix)
                mix_units_.emplace_back(reg, uname, cfg.base_channels, cfg.groups,
                                        cfg.group_channels);
            else
                cbr_units_.emplace_back(reg, uname, cfg.base_channels, cfg.base_channels,
                                        cfg.fuse_repeat, cfg.decoder_kernel);
        }
        head_ = StackedCbr<T>(reg, name + ".head", cfg.base_channels,
                              cfg.head_mid_channels, cfg.head_repeat, cfg.decoder_kernel);
        head_out_ = Conv2dLayer<T>(reg, name + ".head_out", cfg.head_mid_channels, 1, 1, 1,
                                   1, /*bias=*/true);
    }

    Var<T> fuse_unit(int level_index, const Var<T>& x, bool training) const {
        if (unit_kind_ == DecoderUnit::Mix) return mix_units_[level_index].forward(x, training);
        return cbr_units_[level_index].forward(x, training);
    }

    // fused is indexed shallow-to-deep (levels 1..5 at strides 2..32).
    Var<T> forward(const LevelFeatures<T>& fused, bool training,
                   LevelFeatures<T>* stage_out = nullptr) const {
        Var<T> deeper;
        for (int i = 4; i >= 0; --i) {
            Var<T> fhat =
                i == 4 ? fused[i]
                       : add(fused[i], bilinear_resize(deeper, fused[i]->value.h,
                                                       fused[i]->value.w));
            deeper = fuse_unit(i, fhat, training);
            if (stage_out) (*stage_out)[i] = deeper;
        }
        Var<T> logits = head_out_.forward(head_.forward(deeper, training));
        logits = bilinear_resize(logits, logits->value.h * 2, logits->value.w * 2);
        return sigmoid(logits);
    }

    long long macs(const std::array<std::pair<int, int>, 5>& sizes) const {
        long long total = 0;
        for (int i = 0; i < 5; ++i) {
            auto [h, w] = sizes[i];
            total += unit_kind_ == DecoderUnit::Mix ? mix_units_[i].macs(h, w)
                                                    : cbr_units_[i].macs(h, w);
        }
        total += head_.macs(sizes[0].first, sizes[0].second);
        total += head_out_.macs(sizes[0].first, sizes[0].second);
        return total;
    }

    const std::vector<GroupMix<T>>& mix_units() const { return mix_units_; }
    std::vector<GroupMix<T>>& mix_units() { return mix_units_; }

  private:
    DecoderUnit unit_kind_;
    std::vector<GroupMix<T>> mix_units_;
    std::vector<StackedCbr<T>> cbr_units_;
    StackedCbr<T> head_;
    Conv2dLayer<T> head_out_;
};

}  // namespace mixscale
