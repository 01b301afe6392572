#include "mixscale/runtime/inference.hpp"

#include <filesystem>

#include "mixscale/data/image_io.hpp"

namespace fs = std::filesystem;

namespace mixscale {

TensorF predict(const SegmentationNetwork<float>& net, const TensorF& image_batch) {
    NoGradGuard no_grad;
    Var<float> x = make_leaf<float>(image_batch, false);
    auto pyramid = net.build_pyramid(x);
    return net.forward(pyramid, /*training=*/false)->value;
}

size_t infer_folder(const SegmentationNetwork<float>& net, int main_scale,
                    const std::string& data_root, const std::string& out_dir,
                    const std::string& debug_dump_dir) {
    fs::path image_dir = fs::path(data_root) / "Image";
    if (!fs::is_directory(image_dir))
        throw DatasetError("dataset root is missing directory: " + image_dir.string());
    fs::create_directories(out_dir);
    if (!debug_dump_dir.empty()) fs::create_directories(debug_dump_dir);

    Normalization nrm = Normalization::for_backbone(net.config().backbone);
    size_t written = 0;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(image_dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const auto& path : files) {
        TensorF raw = read_image_rgb(path.string());
        int orig_h = raw.h, orig_w = raw.w;
        TensorF image = resize_bilinear(raw, main_scale, main_scale);
        normalize_inplace(image, nrm);

        NoGradGuard no_grad;
        Var<float> x = make_leaf<float>(image, false);
        auto pyramid = net.build_pyramid(x);
        SegmentationNetwork<float>::ForwardExtras extras;
        Var<float> pred = net.forward(pyramid, /*training=*/false,
                                      debug_dump_dir.empty() ? nullptr : &extras);
        TensorF map = resize_bilinear(pred->value, orig_h, orig_w);
        write_gray_png((fs::path(out_dir) / (path.stem().string() + ".png")).string(), map);

        if (!debug_dump_dir.empty()) {
            // attention maps per level/scale plus decoder stage channel means
            for (int lvl = 0; lvl < 5; ++lvl) {
                if (extras.attention[lvl]) {
                    const auto& a = extras.attention[lvl]->value;
                    for (int ch = 0; ch < a.c; ++ch) {
                        TensorF slice(1, 1, a.h, a.w);
                        for (int y = 0; y < a.h; ++y)
                            for (int z = 0; z < a.w; ++z)
                                slice.at(0, 0, y, z) = a.at(0, ch, y, z);
                        write_gray_png((fs::path(debug_dump_dir) /
                                        (path.stem().string() + "_attn_l" +
                                         std::to_string(lvl + 1) + "_c" +
                                         std::to_string(ch) + ".png"))
                                           .string(),
                                       slice);
                    }
                }
                if (extras.stages[lvl]) {
                    const auto& s = extras.stages[lvl]->value;
                    TensorF mean_map(1, 1, s.h, s.w);
                    float lo = 1e30f, hi = -1e30f;
                    for (int y = 0; y < s.h; ++y)
                        for (int z = 0; z < s.w; ++z) {
                            float acc = 0;
                            for (int ch = 0; ch < s.c; ++ch) acc += s.at(0, ch, y, z);
                            acc /= s.c;
                            mean_map.at(0, 0, y, z) = acc;
                            lo = std::min(lo, acc);
                            hi = std::max(hi, acc);
                        }
                    float span = hi > lo ? hi - lo : 1.f;
                    for (auto& v : mean_map.v) v = (v - lo) / span;
                    write_gray_png((fs::path(debug_dump_dir) /
                                    (path.stem().string() + "_stage_l" +
                                     std::to_string(lvl + 1) + ".png"))
                                       .string(),
                                   mean_map);
                }
            }
        }
        ++written;
    }
    if (written == 0)
        throw DatasetError("no decodable images under " + image_dir.string());
    return written;
}

}  // namespace mixscale
