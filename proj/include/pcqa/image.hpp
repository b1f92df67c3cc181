#pragma once

#include <string>
#include <vector>

#include "pcqa/common.hpp"

namespace pcqa {

// Planar-free RGB image, row-major, channel-interleaved, values in [0,1]
// unless stated otherwise at the call site.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // height * width * 3

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    double mean() const;
};

Image load_image(const std::string& path);
void save_image_png(const Image& img, const std::string& path);

// Bilinear resampling with the pixel-center convention.
Image resize_bilinear(const Image& img, int out_h, int out_w);

Image hflip(const Image& img);

// Top-left anchored crop of size h x w at offset (y0, x0).
Image crop(const Image& img, int y0, int x0, int h, int w);

void clamp01(Image& img);

}  // namespace pcqa
