#include "mixscale/data/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>

namespace mixscale {

TensorF read_image_rgb(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw ImageIoError("cannot decode image: " + path);
    TensorF out(1, 3, img.rows, img.cols);
    for (int y = 0; y < img.rows; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            // OpenCV decodes BGR
            out.at(0, 0, y, x) = row[x][2] / 255.0f;
            out.at(0, 1, y, x) = row[x][1] / 255.0f;
            out.at(0, 2, y, x) = row[x][0] / 255.0f;
        }
    }
    return out;
}

TensorF read_image_gray(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw ImageIoError("cannot decode image: " + path);
    TensorF out(1, 1, img.rows, img.cols);
    for (int y = 0; y < img.rows; ++y) {
        const uint8_t* row = img.ptr<uint8_t>(y);
        for (int x = 0; x < img.cols; ++x) out.at(0, 0, y, x) = static_cast<float>(row[x]);
    }
    return out;
}

void write_gray_png(const std::string& path, const TensorF& map) {
    check(map.n == 1 && map.c == 1, "write_gray_png: expected (1,1,H,W)");
    cv::Mat img(map.h, map.w, CV_8UC1);
    for (int y = 0; y < map.h; ++y) {
        uint8_t* row = img.ptr<uint8_t>(y);
        for (int x = 0; x < map.w; ++x) {
            float v = std::clamp(map.at(0, 0, y, x), 0.0f, 1.0f);
            row[x] = static_cast<uint8_t>(std::lround(v * 255.0f));
        }
    }
    if (!cv::imwrite(path, img)) throw ImageIoError("cannot write image: " + path);
}

}  // namespace mixscale
