#pragma once

#include "mixscale/model/backbone.hpp"

namespace mixscale {

// Dilated pyramid block applied to the deepest backbone level: five CBR
// branches, kernels (1,3,3,3,1) with dilations (1,2,5,7,1). The second 1x1
// branch runs on the globally pooled input and is upsampled back. Branch
// outputs are concatenated and fused by a 3x3 CBR.
template <typename T>
class AsppBlock {
  public:
    AsppBlock() = default;
    AsppBlock(ParamRegistry<T>& reg, const std::string& name, int cin, int cout)
        : b0_(reg, name + ".branch0", cin, cout, 1, 1, 1),
          b1_(reg, name + ".branch1", cin, cout, 3, 1, 2),
          b2_(reg, name + ".branch2", cin, cout, 3, 1, 5),
          b3_(reg, name + ".branch3", cin, cout, 3, 1, 7),
          b4_(reg, name + ".branch4_gap", cin, cout, 1, 1, 1),
          fuse_(reg, name + ".fuse", 5 * cout, cout, 3, 1, 1) {}

    Var<T> forward(const Var<T>& x, bool training) const {
        int h = x->value.h, w = x->value.w;
        Var<T> gap = bilinear_resize(b4_.forward(global_avg_pool(x), training), h, w);
        Var<T> cat = concat_channels<T>({b0_.forward(x, training), b1_.forward(x, training),
                                         b2_.forward(x, training), b3_.forward(x, training),
                                         gap});
        return fuse_.forward(cat, training);
    }

    long long macs(int h, int w) const {
        return b0_.macs(h, w) + b1_.macs(h, w) + b2_.macs(h, w) + b3_.macs(h, w) +
               b4_.macs(1, 1) + fuse_.macs(h, w);
    }

  private:
    Cbr<T> b0_, b1_, b2_, b3_, b4_, fuse_;
};

// Per-level channel compression to a uniform width: one 3x3 CBR for levels
// 1..4 and the dilated pyramid block for level 5.
template <typename T>
class ChannelCompress {
  public:
    ChannelCompress(ParamRegistry<T>& reg, const std::string& name,
                    const std::array<int, 5>& in_channels, int out_channels)
        : out_channels_(out_channels) {
        for (int i = 0; i < 4; ++i)
            level_[i] = Cbr<T>(reg, name + ".level" + std::to_string(i + 1),
                               in_channels[i], out_channels, 3, 1, 1);
        aspp_ = AsppBlock<T>(reg, name + ".level5", in_channels[4], out_channels);
    }

    LevelFeatures<T> forward(const LevelFeatures<T>& f, bool training) const {
        LevelFeatures<T> out;
        for (int i = 0; i < 4; ++i) out[i] = level_[i].forward(f[i], training);
        out[4] = aspp_.forward(f[4], training);
        return out;
    }

    long long macs(const std::array<std::pair<int, int>, 5>& sizes) const {
        long long total = 0;
        for (int i = 0; i < 4; ++i) total += level_[i].macs(sizes[i].first, sizes[i].second);
        total += aspp_.macs(sizes[4].first, sizes[4].second);
        return total;
    }

    int out_channels() const { return out_channels_; }

  private:
    std::array<Cbr<T>, 4> level_;
    AsppBlock<T> aspp_;
    int out_channels_ = 0;
};

}  // namespace mixscale
