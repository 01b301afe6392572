#pragma once

#include <array>
#include <memory>

#include "mixscale/config/config.hpp"
#include "mixscale/nn/module.hpp"

namespace mixscale {

// Five feature maps at strides (2,4,8,16,32).
template <typename T>
using LevelFeatures = std::array<Var<T>, 5>;

struct LevelShape {
    int c, h, w;
};

template <typename T>
class BackboneBase {
  public:
    virtual ~BackboneBase() = default;
    virtual LevelFeatures<T> forward(const Var<T>& x, bool training) const = 0;
    virtual std::array<int, 5> channels() const = 0;
    virtual long long macs(int h, int w) const = 0;
};

// Five stride-2 stages of two 3x3 CBR units each; same stride ladder as the
// full backbone so every downstream shape contract runs on CPU-scale inputs.
template <typename T>
class TinyBackbone : public BackboneBase<T> {
  public:
    TinyBackbone(ParamRegistry<T>& reg, const std::string& name) {
        int prev = 3;
        for (int s = 0; s < 5; ++s) {
            down_[s] = Cbr<T>(reg, name + ".stage" + std::to_string(s + 1) + ".down", prev,
                              kChannels[s], 3, /*stride=*/2);
            keep_[s] = Cbr<T>(reg, name + ".stage" + std::to_string(s + 1) + ".keep",
                              kChannels[s], kChannels[s], 3, /*stride=*/1);
            prev = kChannels[s];
        }
    }

    LevelFeatures<T> forward(const Var<T>& x, bool training) const override {
        LevelFeatures<T> out;
        Var<T> cur = x;
        for (int s = 0; s < 5; ++s) {
            cur = keep_[s].forward(down_[s].forward(cur, training), training);
            out[s] = cur;
        }
        return out;
    }

    std::array<int, 5> channels() const override {
        return {kChannels[0], kChannels[1], kChannels[2], kChannels[3], kChannels[4]};
    }

    long long macs(int h, int w) const override {
        long long total = 0;
        for (int s = 0; s < 5; ++s) {
            total += down_[s].macs(h, w);
            h = down_[s].out_size(h);
            w = down_[s].out_size(w);
            total += keep_[s].macs(h, w);
        }
        return total;
    }

    static constexpr std::array<int, 5> kChannels = {8, 16, 32, 64, 128};

  private:
    std::array<Cbr<T>, 5> down_, keep_;
};

// ResNet-50 feature trunk. Level 1 is tapped before the stem max-pool;
// levels 2..5 are the stage outputs. Stride sits on each stage's 3x3 conv.
template <typename T>
class ResNet50Backbone : public BackboneBase<T> {
  public:
    ResNet50Backbone(ParamRegistry<T>& reg, const std::string& name)
        : stem_conv_(reg, name + ".conv1", 3, 64, 7, /*stride=*/2, 1, /*bias=*/false),
          stem_bn_(reg, name + ".bn1", 64) {
        build_stage(reg, name + ".layer1", 64, 64, 256, 3, 1);
        build_stage(reg, name + ".layer2", 256, 128, 512, 4, 2);
        build_stage(reg, name + ".layer3", 512, 256, 1024, 6, 2);
        build_stage(reg, name + ".layer4", 1024, 512, 2048, 3, 2);
    }

    LevelFeatures<T> forward(const Var<T>& x, bool training) const override {
        LevelFeatures<T> out;
        Var<T> cur = relu(stem_bn_.forward(conv2d(x, stem_conv_.weight(), Var<T>{}, 2, 3),
                                           training));
        out[0] = cur;
        cur = max_pool2d(cur, 3, 2, 1);
        for (int s = 0; s < 4; ++s) {
            for (const auto& block : stages_[s]) cur = block.forward(cur, training);
            out[s + 1] = cur;
        }
        return out;
    }

    std::array<int, 5> channels() const override { return {64, 256, 512, 1024, 2048}; }

    long long macs(int h, int w) const override {
        int oh = stem_conv_.out_size(h), ow = stem_conv_.out_size(w);
        long long total = stem_conv_.macs(h, w);
        oh = conv_out_size(oh, 3, 2, 1, 1);
        ow = conv_out_size(ow, 3, 2, 1, 1);
        for (int s = 0; s < 4; ++s)
            for (const auto& block : stages_[s]) total += block.macs_and_advance(oh, ow);
        return total;
    }

  private:
    struct Bottleneck {
        Conv2dLayer<T> conv1, conv2, conv3, down_conv;
        BatchNorm2dLayer<T> bn1, bn2, bn3, down_bn;
        bool has_down = false;
        int stride = 1;

        Var<T> forward(const Var<T>& x, bool training) const {
            Var<T> y = relu(bn1.forward(conv1.forward(x), training));
            y = relu(bn2.forward(conv2.forward(y), training));
            y = bn3.forward(conv3.forward(y), training);
            Var<T> skip = has_down ? down_bn.forward(down_conv.forward(x), training) : x;
            return relu(add(y, skip));
        }

        long long macs_and_advance(int& h, int& w) const {
            long long total = conv1.macs(h, w);
            if (has_down) total += down_conv.macs(h, w);
            int oh = conv2.out_size(h), ow = conv2.out_size(w);
            total += conv2.macs(h, w) + conv3.macs(oh, ow);
            h = oh;
            w = ow;
            return total;
        }
    };

    void build_stage(ParamRegistry<T>& reg, const std::string& name, int cin, int mid,
                     int cout, int blocks, int stride) {
        std::vector<Bottleneck> stage;
        for (int b = 0; b < blocks; ++b) {
            std::string bn = name + "." + std::to_string(b);
            Bottleneck blk;
            int in_c = b == 0 ? cin : cout;
            int s = b == 0 ? stride : 1;
            blk.stride = s;
            blk.conv1 = Conv2dLayer<T>(reg, bn + ".conv1", in_c, mid, 1, 1, 1, false);
            blk.bn1 = BatchNorm2dLayer<T>(reg, bn + ".bn1", mid);
            blk.conv2 = Conv2dLayer<T>(reg, bn + ".conv2", mid, mid, 3, s, 1, false);
            blk.bn2 = BatchNorm2dLayer<T>(reg, bn + ".bn2", mid);
            blk.conv3 = Conv2dLayer<T>(reg, bn + ".conv3", mid, cout, 1, 1, 1, false);
            blk.bn3 = BatchNorm2dLayer<T>(reg, bn + ".bn3", cout);
            if (b == 0) {
                blk.has_down = true;
                blk.down_conv =
                    Conv2dLayer<T>(reg, bn + ".downsample.0", in_c, cout, 1, s, 1, false);
                blk.down_bn = BatchNorm2dLayer<T>(reg, bn + ".downsample.1", cout);
            }
            stage.push_back(std::move(blk));
        }
        stages_.push_back(std::move(stage));
    }

    Conv2dLayer<T> stem_conv_;
    BatchNorm2dLayer<T> stem_bn_;
    std::vector<std::vector<Bottleneck>> stages_;
};

template <typename T>
std::unique_ptr<BackboneBase<T>> make_backbone(ParamRegistry<T>& reg, Backbone kind,
                                               const std::string& name) {
    if (kind == Backbone::Tiny) return std::make_unique<TinyBackbone<T>>(reg, name);
    return std::make_unique<ResNet50Backbone<T>>(reg, name);
}

}  // namespace mixscale
