#pragma once

#include "mixscale/data/dataset.hpp"
#include "mixscale/model/network.hpp"

namespace mixscale {

// Single normalized main-scale image batch -> probability map (no grad).
TensorF predict(const SegmentationNetwork<float>& net, const TensorF& image_batch);

// Runs inference for every image under root/Image, writing one 8-bit
// grayscale PNG per sample stem into out_dir. Predictions are resized back
// to the original image resolution. Returns the number of images written.
size_t infer_folder(const SegmentationNetwork<float>& net, int main_scale,
                    const std::string& data_root, const std::string& out_dir,
                    const std::string& debug_dump_dir = "");

}  // namespace mixscale
