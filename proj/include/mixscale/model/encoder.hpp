#pragma once

#include <map>

#include "mixscale/model/compress.hpp"

namespace mixscale {

// One parameter set shared across every pyramid scale: the same backbone
// and compression modules process each input resolution.
template <typename T>
class TripletEncoder {
  public:
    TripletEncoder(ParamRegistry<T>& reg, Backbone kind, int base_channels,
                   const std::string& name)
        : backbone_(make_backbone<T>(reg, kind, name + ".backbone")),
          compress_(reg, name + ".compress", backbone_->channels(), base_channels) {}

    LevelFeatures<T> encode(const Var<T>& image, bool training) const {
        return compress_.forward(backbone_->forward(image, training), training);
    }

    // Keyed by scale factor; iteration order is ascending scale.
    std::map<double, LevelFeatures<T>> encode_triplet(
        const std::map<double, Var<T>>& pyramid, bool training) const {
        std::map<double, LevelFeatures<T>> out;
        for (const auto& [scale, image] : pyramid)
            out[scale] = encode(image, training);
        return out;
    }

    static std::array<std::pair<int, int>, 5> level_sizes(int h, int w) {
        std::array<std::pair<int, int>, 5> out;
        for (int i = 0; i < 5; ++i) {
            int s = 1 << (i + 1);
            out[i] = {h / s, w / s};
        }
        return out;
    }

    long long macs(int h, int w) const {
        return backbone_->macs(h, w) + compress_.macs(level_sizes(h, w));
    }

    const BackboneBase<T>& backbone() const { return *backbone_; }

  private:
    std::unique_ptr<BackboneBase<T>> backbone_;
    ChannelCompress<T> compress_;
};

}  // namespace mixscale
