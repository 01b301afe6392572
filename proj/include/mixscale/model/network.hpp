#pragma once

#include "mixscale/model/decoder.hpp"
#include "mixscale/model/merge.hpp"

namespace mixscale {

// The full segmentation network: shared-weight pyramid encoder, per-level
// scale merging, top-down decoder, prediction head. Module construction
// depends only on the architecture knobs (merge strategy, decoder unit,
// widths); the configured scale subset gates the data path at runtime, so
// the parameter count is independent of how many scales are fed.
template <typename T>
class SegmentationNetwork {
  public:
    SegmentationNetwork(const ModelConfig& cfg, uint64_t seed)
        : cfg_(cfg), registry_(seed),
          encoder_(registry_, cfg.backbone, cfg.base_channels, "encoder") {
        cfg.validate();
        if (cfg.merge == MergeStrategy::Attention) {
            for (int i = 0; i < 5; ++i)
                fusion_.emplace_back(registry_, "merge.level" + std::to_string(i + 1),
                                     cfg.base_channels);
        }
        decoder_ = std::make_unique<MixedScaleDecoder<T>>(registry_, "decoder", cfg);
    }

    struct ForwardExtras {
        // Per-level softmax attention maps (only when the attention merge ran).
        std::array<Var<T>, 5> attention;
        // Per-level decoder stage outputs.
        LevelFeatures<T> stages;
    };

    // Inputs keyed by scale factor; the 1.0 entry is required.
    Var<T> forward(const std::map<double, Var<T>>& pyramid, bool training,
                   ForwardExtras* extras = nullptr) const {
        check(pyramid.count(1.0) == 1, "forward: pyramid must contain the 1.0 scale");
        auto feats = encoder_.encode_triplet(pyramid, training);

        const bool single_scale = feats.size() == 1;
        auto get = [&feats](double s) -> std::optional<LevelFeatures<T>*> {
            auto it = feats.find(s);
            if (it == feats.end()) return std::nullopt;
            return &it->second;
        };
        auto f05 = get(0.5), f15 = get(1.5);
        LevelFeatures<T>& f10 = feats.at(1.0);

        LevelFeatures<T> merged;
        for (int i = 0; i < 5; ++i) {
            if (single_scale) {
                merged[i] = f10[i];  // exact passthrough
            } else if (cfg_.merge == MergeStrategy::Attention) {
                auto res = fusion_[i].forward(
                    f05 ? std::optional<Var<T>>((**f05)[i]) : std::nullopt, f10[i],
                    f15 ? std::optional<Var<T>>((**f15)[i]) : std::nullopt, training);
                merged[i] = res.fused;
                if (extras) extras->attention[i] = res.attention;
            } else {
                merged[i] = addition_merge<T>(
                    f05 ? std::optional<Var<T>>((**f05)[i]) : std::nullopt, f10[i],
                    f15 ? std::optional<Var<T>>((**f15)[i]) : std::nullopt);
            }
        }
        return decoder_->forward(merged, training, extras ? &extras->stages : nullptr);
    }

    // Builds the input pyramid from a normalized main-scale image batch.
    std::map<double, Var<T>> build_pyramid(const Var<T>& main_image) const {
        std::map<double, Var<T>> out;
        int h = main_image->value.h, w = main_image->value.w;
        for (double s : cfg_.scales) {
            if (s == 1.0)
                out[1.0] = main_image;
            else
                out[s] = bilinear_resize(main_image, static_cast<int>(h * s),
                                         static_cast<int>(w * s));
        }
        return out;
    }

    // Conv/linear multiply-accumulates for one forward at main scale S,
    // doubled into FLOPs by the caller. Mirrors the runtime data path.
    long long count_macs(int S) const {
        long long total = 0;
        const bool with_small = cfg_.has_scale(0.5);
        const bool with_large = cfg_.has_scale(1.5);
        total += encoder_.macs(S, S);
        if (with_small) total += encoder_.macs(S / 2, S / 2);
        if (with_large) total += encoder_.macs(S * 3 / 2, S * 3 / 2);
        auto sizes = TripletEncoder<T>::level_sizes(S, S);
        if (cfg_.scales.size() > 1 && cfg_.merge == MergeStrategy::Attention)
            for (int i = 0; i < 5; ++i)
                total += fusion_[i].macs(sizes[i].first, sizes[i].second, with_small,
                                         with_large);
        total += decoder_->macs(sizes);
        return total;
    }
    long long count_flops(int S) const { return 2 * count_macs(S); }

    size_t parameter_count() const { return registry_.trainable_count(); }

    const ModelConfig& config() const { return cfg_; }
    ParamRegistry<T>& registry() { return registry_; }
    const ParamRegistry<T>& registry() const { return registry_; }
    const TripletEncoder<T>& encoder() const { return encoder_; }
    std::vector<ScaleFusion<T>>& fusion() { return fusion_; }
    MixedScaleDecoder<T>& decoder() { return *decoder_; }

  private:
    ModelConfig cfg_;
    ParamRegistry<T> registry_;
    TripletEncoder<T> encoder_;
    std::vector<ScaleFusion<T>> fusion_;
    std::unique_ptr<MixedScaleDecoder<T>> decoder_;
};

}  // namespace mixscale
