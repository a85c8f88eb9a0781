#include "reimagine/core/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "reimagine/core/errors.hpp"

namespace reimagine {

std::vector<std::uint8_t> quantize(const Image& img) {
    std::vector<std::uint8_t> out(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, const Image& rgb) {
    if (rgb.channels != 3) throw std::invalid_argument("write_ppm: expected RGB image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "P6\n" << rgb.width << ' ' << rgb.height << "\n255\n";
    const auto bytes = quantize(rgb);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string ignored;
            std::getline(in, ignored);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    if (header_token(in) != "P6") throw FormatError("'" + path.string() + "' is not a binary PPM");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(header_token(in));
        h = std::stoi(header_token(in));
        maxval = std::stoi(header_token(in));
    } catch (const std::exception&) {
        throw FormatError("'" + path.string() + "' has a malformed PPM header");
    }
    if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("'" + path.string() + "' must be 8-bit P6");
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw FormatError("'" + path.string() + "' is truncated");
    }
    Image img(w, h, 3);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

}  // namespace reimagine
