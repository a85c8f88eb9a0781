#pragma once

#include <cstddef>
#include <vector>

namespace reimagine {

// Interleaved H x W x C image with real-valued samples (nominally [0,1]).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c = 3, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    bool same_size(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool empty() const { return data.empty(); }
};

// Luma 0.299 R + 0.587 G + 0.114 B; single-channel inputs are returned as is.
Image to_gray(const Image& rgb);

}  // namespace reimagine
