#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "reimagine/core/image.hpp"

namespace reimagine {

// Binary PPM (P6, maxval 255). Samples are clamped to [0,1] and rounded to
// the nearest of 256 levels on write; reads produce k / 255.
void write_ppm(const std::filesystem::path& path, const Image& rgb);
Image read_ppm(const std::filesystem::path& path);

std::vector<std::uint8_t> quantize(const Image& img);

}  // namespace reimagine
