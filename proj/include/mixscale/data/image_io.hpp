#pragma once

#include <string>

#include "mixscale/core/tensor.hpp"

namespace mixscale {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// RGB image as (1,3,H,W) float in [0,1].
TensorF read_image_rgb(const std::string& path);

// Grayscale image as (1,1,H,W) float holding the raw 8-bit values 0..255.
TensorF read_image_gray(const std::string& path);

// Writes a (1,1,H,W) map of [0,1] floats as an 8-bit grayscale PNG.
void write_gray_png(const std::string& path, const TensorF& map);

}  // namespace mixscale
