#include "mixscale/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>

#include "mixscale/data/image_io.hpp"

namespace fs = std::filesystem;

namespace mixscale {

namespace {

bool has_ext(const fs::path& p, std::initializer_list<const char*> exts) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), ::tolower);
    for (const char* x : exts)
        if (e == x) return true;
    return false;
}

}  // namespace

IndexResult index_dataset(const std::string& root) {
    fs::path image_dir = fs::path(root) / "Image";
    fs::path gt_dir = fs::path(root) / "GT";
    if (!fs::is_directory(image_dir))
        throw DatasetError("dataset root is missing directory: " + image_dir.string());
    if (!fs::is_directory(gt_dir))
        throw DatasetError("dataset root is missing directory: " + gt_dir.string());

    std::map<std::string, fs::path> images, masks;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (!entry.is_regular_file() ||
            !has_ext(entry.path(), {".jpg", ".jpeg", ".png"}))
            continue;
        std::string stem = entry.path().stem().string();
        if (images.count(stem))
            throw DatasetError("duplicate image stem '" + stem + "' in " +
                               image_dir.string());
        images[stem] = entry.path();
    }
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
        if (!entry.is_regular_file() || !has_ext(entry.path(), {".png"})) continue;
        std::string stem = entry.path().stem().string();
        if (masks.count(stem))
            throw DatasetError("duplicate mask stem '" + stem + "' in " + gt_dir.string());
        masks[stem] = entry.path();
    }

    IndexResult result;
    for (const auto& [stem, ipath] : images) {
        auto it = masks.find(stem);
        if (it == masks.end()) {
            result.unmatched.push_back(ipath.string());
            continue;
        }
        result.pairs.push_back({ipath.string(), it->second.string(), stem});
    }
    for (const auto& [stem, mpath] : masks)
        if (!images.count(stem)) result.unmatched.push_back(mpath.string());

    if (result.pairs.empty())
        throw DatasetError("no matched image/mask pairs under " + image_dir.string());
    std::sort(result.pairs.begin(), result.pairs.end(),
              [](const SamplePair& a, const SamplePair& b) { return a.stem < b.stem; });
    for (const auto& u : result.unmatched)
        std::fprintf(stderr, "[warn] unmatched dataset file: %s\n", u.c_str());
    return result;
}

TensorF resize_bilinear(const TensorF& img, int oh, int ow) {
    if (img.h == oh && img.w == ow) return img;
    TensorF out(img.n, img.c, oh, ow);
    double sy = static_cast<double>(img.h) / oh;
    double sx = static_cast<double>(img.w) / ow;
    for (int i = 0; i < img.n; ++i)
        for (int j = 0; j < img.c; ++j) {
            const float* src = img.plane(i, j);
            float* dst = out.plane(i, j);
            for (int r = 0; r < oh; ++r) {
                double fy = std::max(0.0, (r + 0.5) * sy - 0.5);
                int y0 = std::min(static_cast<int>(fy), img.h - 1);
                int y1 = std::min(y0 + 1, img.h - 1);
                float wy = static_cast<float>(fy - y0);
                for (int s = 0; s < ow; ++s) {
                    double fx = std::max(0.0, (s + 0.5) * sx - 0.5);
                    int x0 = std::min(static_cast<int>(fx), img.w - 1);
                    int x1 = std::min(x0 + 1, img.w - 1);
                    float wx = static_cast<float>(fx - x0);
                    float top = src[y0 * img.w + x0] * (1 - wx) + src[y0 * img.w + x1] * wx;
                    float bot = src[y1 * img.w + x0] * (1 - wx) + src[y1 * img.w + x1] * wx;
                    dst[r * ow + s] = top * (1 - wy) + bot * wy;
                }
            }
        }
    return out;
}

TensorF resize_nearest(const TensorF& img, int oh, int ow) {
    if (img.h == oh && img.w == ow) return img;
    TensorF out(img.n, img.c, oh, ow);
    for (int i = 0; i < img.n; ++i)
        for (int j = 0; j < img.c; ++j) {
            const float* src = img.plane(i, j);
            float* dst = out.plane(i, j);
            for (int r = 0; r < oh; ++r) {
                int y = std::min(static_cast<int>((r + 0.5) * img.h / oh), img.h - 1);
                for (int s = 0; s < ow; ++s) {
                    int x = std::min(static_cast<int>((s + 0.5) * img.w / ow), img.w - 1);
                    dst[r * ow + s] = src[y * img.w + x];
                }
            }
        }
    return out;
}

TensorF hflip_image(const TensorF& img) {
    TensorF out(img.n, img.c, img.h, img.w);
    for (int i = 0; i < img.n; ++i)
        for (int j = 0; j < img.c; ++j)
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    out.at(i, j, y, x) = img.at(i, j, y, img.w - 1 - x);
    return out;
}

namespace {

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

}  // namespace

TensorF rotate_image(const TensorF& img, double angle_deg, bool nearest) {
    double rad = angle_deg * M_PI / 180.0;
    double ca = std::cos(rad), sa = std::sin(rad);
    double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
    TensorF out(img.n, img.c, img.h, img.w);
    for (int i = 0; i < img.n; ++i)
        for (int j = 0; j < img.c; ++j) {
            const float* src = img.plane(i, j);
            float* dst = out.plane(i, j);
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) {
                    // inverse mapping: rotate destination by -angle
                    double dy = y - cy, dx = x - cx;
                    double sy_f = cy + (sa * dx + ca * dy);
                    double sx_f = cx + (ca * dx - sa * dy);
                    if (nearest) {
                        int ys = reflect_index((int)std::lround(sy_f), img.h);
                        int xs = reflect_index((int)std::lround(sx_f), img.w);
                        dst[y * img.w + x] = src[ys * img.w + xs];
                    } else {
                        int y0 = (int)std::floor(sy_f), x0 = (int)std::floor(sx_f);
                        double wy = sy_f - y0, wx = sx_f - x0;
                        int ya = reflect_index(y0, img.h), yb = reflect_index(y0 + 1, img.h);
                        int xa = reflect_index(x0, img.w), xb = reflect_index(x0 + 1, img.w);
                        double top = src[ya * img.w + xa] * (1 - wx) + src[ya * img.w + xb] * wx;
                        double bot = src[yb * img.w + xa] * (1 - wx) + src[yb * img.w + xb] * wx;
                        dst[y * img.w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
                    }
                }
        }
    return out;
}

TensorF apply_transform_mask(const TensorF& mask, const AugRecord& rec) {
    TensorF out = mask;
    if (rec.hflip) out = hflip_image(out);
    if (rec.rotated) out = rotate_image(out, rec.angle_deg, /*nearest=*/true);
    return out;
}

Normalization Normalization::for_backbone(Backbone b) {
    if (b == Backbone::ResNet50)
        return {{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
    return {};
}

void normalize_inplace(TensorF& img, const Normalization& nrm) {
    for (int i = 0; i < img.n; ++i)
        for (int j = 0; j < img.c; ++j) {
            float* p = img.plane(i, j);
            size_t plane = static_cast<size_t>(img.h) * img.w;
            for (size_t q = 0; q < plane; ++q) p[q] = (p[q] - nrm.mean[j]) / nrm.stddev[j];
        }
}

uint64_t mix_seed(uint64_t seed, uint64_t epoch, uint64_t index) {
    // splitmix64 over the packed triple
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (epoch + 1) + 0xbf58476d1ce4e5b9ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

TensorF binarize_mask(const TensorF& raw) {
    TensorF out(raw.n, raw.c, raw.h, raw.w);
    for (size_t i = 0; i < raw.v.size(); ++i) out.v[i] = raw.v[i] > 127.0f ? 1.0f : 0.0f;
    return out;
}

LoadedSample assemble_sample(TensorF image, TensorF mask_raw, int S,
                             const Normalization& nrm, bool hflip, bool rotate,
                             uint64_t rng_seed) {
    std::mt19937_64 rng(rng_seed);
    image = resize_bilinear(image, S, S);
    TensorF mask = resize_nearest(mask_raw, S, S);

    AugRecord rec;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (hflip && coin(rng) < 0.5) rec.hflip = true;
    if (rotate && coin(rng) < 0.5) {
        rec.rotated = true;
        std::uniform_real_distribution<double> angle(-15.0, 15.0);
        rec.angle_deg = angle(rng);
    }
    if (rec.hflip) {
        image = hflip_image(image);
        mask = hflip_image(mask);
    }
    if (rec.rotated) {
        image = rotate_image(image, rec.angle_deg, /*nearest=*/false);
        mask = rotate_image(mask, rec.angle_deg, /*nearest=*/true);
    }
    mask = binarize_mask(mask);
    normalize_inplace(image, nrm);
    return {std::move(image), std::move(mask), rec};
}

}  // namespace

LoadedSample load_and_augment(const SamplePair& pair, int main_scale,
                              const Normalization& nrm, bool hflip, bool rotate,
                              uint64_t rng_seed) {
    check(main_scale % 32 == 0, "load_and_augment: main scale must be divisible by 32");
    TensorF image = read_image_rgb(pair.image_path);
    TensorF mask = read_image_gray(pair.mask_path);
    return assemble_sample(std::move(image), std::move(mask), main_scale, nrm, hflip,
                           rotate, rng_seed);
}

DiskSampleSource::DiskSampleSource(std::vector<SamplePair> pairs, int main_scale,
                                   Normalization nrm, bool hflip, bool rotate,
                                   uint64_t seed, bool skip_undecodable)
    : pairs_(std::move(pairs)), main_scale_(main_scale), nrm_(nrm), hflip_(hflip),
      rotate_(rotate), seed_(seed), skip_undecodable_(skip_undecodable) {}

LoadedSample DiskSampleSource::load(size_t index, uint64_t epoch) const {
    const SamplePair& pair = pairs_[index % pairs_.size()];
    try {
        return load_and_augment(pair, main_scale_, nrm_, hflip_, rotate_,
                                mix_seed(seed_, epoch, index));
    } catch (const ImageIoError& err) {
        if (!skip_undecodable_) throw;
        std::fprintf(stderr, "[warn] skipping undecodable sample %s: %s\n",
                     pair.stem.c_str(), err.what());
        // fall back to the next decodable sample
        return load((index + 1) % pairs_.size(), epoch);
    }
}

SyntheticSource::SyntheticSource(size_t count, int main_scale, uint64_t seed)
    : count_(count), main_scale_(main_scale), seed_(seed) {}

LoadedSample SyntheticSource::load(size_t index, uint64_t epoch) const {
    (void)epoch;  // samples are fixed; no augmentation
    const int S = main_scale_;
    std::mt19937_64 rng(mix_seed(seed_, 0, index));
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    double cy = S * (0.3 + 0.4 * uni(rng)), cx = S * (0.3 + 0.4 * uni(rng));
    double ry = S * (0.12 + 0.18 * uni(rng)), rx = S * (0.12 + 0.18 * uni(rng));
    double phase_y = 2 * M_PI * uni(rng), phase_x = 2 * M_PI * uni(rng);
    float bg[3] = {(float)(0.15 + 0.2 * uni(rng)), (float)(0.15 + 0.2 * uni(rng)),
                   (float)(0.15 + 0.2 * uni(rng))};
    float fg[3] = {(float)(0.7 + 0.25 * uni(rng)), (float)(0.7 + 0.25 * uni(rng)),
                   (float)(0.7 + 0.25 * uni(rng))};

    TensorF image(1, 3, S, S);
    TensorF mask(1, 1, S, S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            double dy = (y - cy) / ry, dx = (x - cx) / rx;
            bool inside = dy * dy + dx * dx <= 1.0;
            float texture =
                0.05f * static_cast<float>(std::sin(0.35 * y + phase_y) *
                                           std::cos(0.35 * x + phase_x));
            for (int ch = 0; ch < 3; ++ch)
                image.at(0, ch, y, x) =
                    std::clamp((inside ? fg[ch] : bg[ch]) + texture, 0.0f, 1.0f);
            mask.at(0, 0, y, x) = inside ? 1.0f : 0.0f;
        }
    return {std::move(image), std::move(mask), AugRecord{}};
}

TensorF stack_batch(const std::vector<TensorF>& items) {
    check(!items.empty(), "stack_batch: empty batch");
    const TensorF& first = items[0];
    TensorF out(static_cast<int>(items.size()), first.c, first.h, first.w);
    size_t per = first.size();
    for (size_t i = 0; i < items.size(); ++i) {
        check(items[i].size() == per && items[i].c == first.c && items[i].h == first.h &&
                  items[i].w == first.w,
              "stack_batch: inconsistent shapes");
        std::copy_n(items[i].data(), per, out.data() + i * per);
    }
    return out;
}

}  // namespace mixscale
