#pragma once

#include <optional>

#include "mixscale/config/config.hpp"
#include "mixscale/core/tensor.hpp"

namespace mixscale {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SamplePair {
    std::string image_path;
    std::string mask_path;
    std::string stem;
};

struct IndexResult {
    std::vector<SamplePair> pairs;           // matched by stem, sorted
    std::vector<std::string> unmatched;      // warnings
};

// Scans root/Image and root/GT, pairing files by stem. Empty intersection
// and duplicate stems are hard errors.
IndexResult index_dataset(const std::string& root);

// Geometric transform applied identically to an image and its mask.
struct AugRecord {
    bool hflip = false;
    bool rotated = false;
    double angle_deg = 0.0;
};

// Horizontal flip.
TensorF hflip_image(const TensorF& img);

// Rotation about the image center with reflective border handling; bilinear
// sampling for images, nearest-neighbor for masks.
TensorF rotate_image(const TensorF& img, double angle_deg, bool nearest);

// Plain bilinear resize on raw tensors (no autograd), half-pixel convention.
TensorF resize_bilinear(const TensorF& img, int oh, int ow);
TensorF resize_nearest(const TensorF& img, int oh, int ow);

// Applies a recorded transform to a mask already at target resolution.
TensorF apply_transform_mask(const TensorF& mask, const AugRecord& rec);

struct LoadedSample {
    TensorF image;  // (1,3,S,S), normalized
    TensorF mask;   // (1,1,S,S), values in {0,1}
    AugRecord transform;
};

// Per-channel standardization statistics used with the pretrained backbone.
struct Normalization {
    std::array<float, 3> mean{0.f, 0.f, 0.f};
    std::array<float, 3> stddev{1.f, 1.f, 1.f};
    static Normalization for_backbone(Backbone b);
};

void normalize_inplace(TensorF& img, const Normalization& nrm);

// Decodes, resizes to S x S, augments image and mask with the same
// transform, binarizes the mask (>127), and normalizes the image.
LoadedSample load_and_augment(const SamplePair& pair, int main_scale,
                              const Normalization& nrm, bool hflip, bool rotate,
                              uint64_t rng_seed);

// Source of training samples; index-addressed so loading is order- and
// worker-count-independent. The per-sample seed is mixed from
// (dataset seed, epoch, index).
class SampleSource {
  public:
    virtual ~SampleSource() = default;
    virtual size_t size() const = 0;
    virtual LoadedSample load(size_t index, uint64_t epoch) const = 0;
};

class DiskSampleSource : public SampleSource {
  public:
    DiskSampleSource(std::vector<SamplePair> pairs, int main_scale, Normalization nrm,
                     bool hflip, bool rotate, uint64_t seed, bool skip_undecodable);
    size_t size() const override { return pairs_.size(); }
    LoadedSample load(size_t index, uint64_t epoch) const override;
    const std::vector<SamplePair>& pairs() const { return pairs_; }

  private:
    std::vector<SamplePair> pairs_;
    int main_scale_;
    Normalization nrm_;
    bool hflip_, rotate_;
    uint64_t seed_;
    bool skip_undecodable_;
};

// Deterministic blob dataset used by the training sanity checks: textured
// background with one high-contrast elliptical foreground region per image.
class SyntheticSource : public SampleSource {
  public:
    SyntheticSource(size_t count, int main_scale, uint64_t seed);
    size_t size() const override { return count_; }
    LoadedSample load(size_t index, uint64_t epoch) const override;

  private:
    size_t count_;
    int main_scale_;
    uint64_t seed_;
};

// Stacks per-sample tensors into batch tensors.
TensorF stack_batch(const std::vector<TensorF>& items);

uint64_t mix_seed(uint64_t seed, uint64_t epoch, uint64_t index);

}  // namespace mixscale
