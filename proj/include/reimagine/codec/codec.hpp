#pragma once

#include <vector>

#include "reimagine/core/image.hpp"
#include "reimagine/core/tensor.hpp"

namespace reimagine::codec {

// Spatial latent of one image: data is (3*p*p) x h x w. Channel index is
// color * p*p + haar_row * p + haar_col.
struct LatentImage {
    Tensor data;
    int patch = 1;

    int channels() const { return static_cast<int>(data.dim(0)); }
    int grid_height() const { return static_cast<int>(data.dim(1)); }
    int grid_width() const { return static_cast<int>(data.dim(2)); }
};

// C x T x H x W latent video.
struct LatentVideo {
    Tensor data;
    int patch = 1;
    double frame_rate = 8.0;

    int channels() const { return static_cast<int>(data.dim(0)); }
    int frames() const { return static_cast<int>(data.dim(1)); }
    int grid_height() const { return static_cast<int>(data.dim(2)); }
    int grid_width() const { return static_cast<int>(data.dim(3)); }

    LatentImage frame(int t) const;
    void set_frame(int t, const LatentImage& latent);
};

// Orthonormal 1-D Haar matrix of size p (p a power of two), rows are basis
// functions: row 0 is the scaling function.
MatrixRM haar_matrix(int p);

// Non-overlapping p x p patches through the separable normalized Haar
// transform. Exact inverse via decode; energy preserving.
LatentImage encode(const Image& image, int patch);
Image decode(const LatentImage& latent);

LatentVideo encode_video(const std::vector<Image>& frames, int patch);
std::vector<Image> decode_video(const LatentVideo& video);

}  // namespace reimagine::codec
