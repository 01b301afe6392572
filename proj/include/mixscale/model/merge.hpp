#pragma once

#include <optional>

#include "mixscale/model/encoder.hpp"

namespace mixscale {

// Resamples an auxiliary-scale feature onto the main-scale grid: 0.5x
// features are upsampled bilinearly, 1.5x features are downsampled by the
// max+average pooling hybrid.
template <typename T>
Var<T> resample_to_main(const Var<T>& f, double source_scale, int th, int tw) {
    if (source_scale < 1.0) return bilinear_resize(f, th, tw);
    check(f->value.h >= th && f->value.w >= tw,
          "resample_to_main: downsample target larger than source");
    return hybrid_downsample(f, th, tw);
}

// Attention-weighted fusion of up to three scale branches at one level.
// Each auxiliary branch runs a CBR before and after resampling; the main
// branch runs one CBR. A small stack generates per-pixel logits over the
// three scales; softmax over the present scales weights the branches.
template <typename T>
class ScaleFusion {
  public:
    ScaleFusion() = default;
    ScaleFusion(ParamRegistry<T>& reg, const std::string& name, int channels)
        : pre_s_(reg, name + ".small.pre", channels, channels, 3),
          post_s_(reg, name + ".small.post", channels, channels, 3),
          main_(reg, name + ".main", channels, channels, 3),
          pre_l_(reg, name + ".large.pre", channels, channels, 3),
          post_l_(reg, name + ".large.post", channels, channels, 3),
          attn_stack_(reg, name + ".attn", 3 * channels, channels, 2, 3),
          attn_out_(reg, name + ".attn.out", channels, 3, 1, 1, 1, /*bias=*/true) {}

    struct Result {
        Var<T> fused;
        Var<T> attention;                // (n, n_present, h, w), softmax-normalized
        std::vector<double> attn_scales; // scale factor per attention channel
        std::vector<Var<T>> branches;    // aligned post-conv branch features
    };

    Result forward(const std::optional<Var<T>>& f05, const Var<T>& f10,
                   const std::optional<Var<T>>& f15, bool training) const {
        const int th = f10->value.h, tw = f10->value.w;
        Var<T> b10 = main_.forward(f10, training);
        std::optional<Var<T>> b05, b15;
        if (f05)
            b05 = post_s_.forward(
                resample_to_main(pre_s_.forward(*f05, training), 0.5, th, tw), training);
        if (f15)
            b15 = post_l_.forward(
                resample_to_main(pre_l_.forward(*f15, training), 1.5, th, tw), training);

        // Absent scales contribute zero input to the attention generator and
        // are excluded from the softmax.
        Var<T> cat = concat_channels<T>({b05 ? *b05 : zeros_like_var(b10), b10,
                                         b15 ? *b15 : zeros_like_var(b10)});
        Var<T> logits = attn_out_.forward(attn_stack_.forward(cat, training));

        std::vector<Var<T>> present_logits, branches;
        std::vector<double> scales;
        if (b05) {
            present_logits.push_back(slice_channels(logits, 0, 1));
            branches.push_back(*b05);
            scales.push_back(0.5);
        }
        present_logits.push_back(slice_channels(logits, 1, 1));
        branches.push_back(b10);
        scales.push_back(1.0);
        if (b15) {
            present_logits.push_back(slice_channels(logits, 2, 1));
            branches.push_back(*b15);
            scales.push_back(1.5);
        }

        Var<T> attn = softmax_channels(concat_channels<T>(present_logits));
        Var<T> fused;
        for (size_t k = 0; k < branches.size(); ++k) {
            Var<T> term = mul_bcast(branches[k], slice_channels(attn, (int)k, 1));
            fused = fused ? add(fused, term) : term;
        }
        return {fused, attn, scales, branches};
    }

    long long macs(int th, int tw, bool with_small, bool with_large) const {
        long long total = main_.macs(th, tw);
        if (with_small) {
            total += pre_s_.macs(th / 2, tw / 2);  // source grid is half size
            total += post_s_.macs(th, tw);
        }
        if (with_large) {
            total += pre_l_.macs(th * 3 / 2, tw * 3 / 2);
            total += post_l_.macs(th, tw);
        }
        total += attn_stack_.macs(th, tw) + attn_out_.macs(th, tw);
        return total;
    }

    const Conv2dLayer<T>& attention_out() const { return attn_out_; }
    Conv2dLayer<T>& attention_out() { return attn_out_; }

  private:
    Cbr<T> pre_s_, post_s_, main_, pre_l_, post_l_;
    StackedCbr<T> attn_stack_;
    Conv2dLayer<T> attn_out_;
};

// Plain-addition ablation: sum of the resampled branches, no attention and
// no convolutions beyond the resampling operators.
template <typename T>
Var<T> addition_merge(const std::optional<Var<T>>& f05, const Var<T>& f10,
                      const std::optional<Var<T>>& f15) {
    const int th = f10->value.h, tw = f10->value.w;
    Var<T> out = f10;
    if (f05) out = add(out, resample_to_main(*f05, 0.5, th, tw));
    if (f15) out = add(out, resample_to_main(*f15, 1.5, th, tw));
    return out;
}

}  // namespace mixscale
