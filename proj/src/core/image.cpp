#include "reimagine/core/image.hpp"

#include <stdexcept>

namespace reimagine {

Image to_gray(const Image& rgb) {
    if (rgb.channels == 1) return rgb;
    if (rgb.channels != 3) throw std::invalid_argument("to_gray: expected 1 or 3 channels");
    Image g(rgb.width, rgb.height, 1);
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            g.at(x, y) = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2);
        }
    }
    return g;
}

}  // namespace reimagine
