#include "reimagine/codec/codec.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace reimagine::codec {

namespace {

void require_patch(int p) {
    if (p < 1 || (p & (p - 1)) != 0) {
        throw std::invalid_argument("codec: patch factor must be a power of two, got " + std::to_string(p));
    }
}

}  // namespace

MatrixRM haar_matrix(int p) {
    require_patch(p);
    MatrixRM h = MatrixRM::Ones(1, 1);
    const double s = 1.0 / std::sqrt(2.0);
    for (int n = 1; n < p; n *= 2) {
        MatrixRM next = MatrixRM::Zero(2 * n, 2 * n);
        // Coarse rows: previous basis upsampled; detail rows: local differences.
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                next(r, 2 * c) = s * h(r, c);
                next(r, 2 * c + 1) = s * h(r, c);
            }
            next(n + r, 2 * r) = s;
            next(n + r, 2 * r + 1) = -s;
        }
        h = std::move(next);
    }
    return h;
}

LatentImage encode(const Image& image, int patch) {
    require_patch(patch);
    if (image.channels != 3) throw std::invalid_argument("codec::encode: expected an RGB image");
    if (image.width % patch != 0 || image.height % patch != 0) {
        throw std::invalid_argument("codec::encode: resolution " + std::to_string(image.width) + "x" +
                                    std::to_string(image.height) + " not divisible by patch " +
                                    std::to_string(patch));
    }
    const int gw = image.width / patch, gh = image.height / patch;
    const int pp = patch * patch;
    const MatrixRM h = haar_matrix(patch);
    LatentImage out{Tensor({static_cast<std::size_t>(3 * pp), static_cast<std::size_t>(gh),
                            static_cast<std::size_t>(gw)}),
                    patch};
    MatrixRM block(patch, patch);
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            for (int c = 0; c < 3; ++c) {
                for (int i = 0; i < patch; ++i) {
                    for (int j = 0; j < patch; ++j) block(i, j) = image.at(gx * patch + j, gy * patch + i, c);
                }
                const MatrixRM coeff = h * block * h.transpose();
                for (int i = 0; i < patch; ++i) {
                    for (int j = 0; j < patch; ++j) {
                        const std::size_t ch = static_cast<std::size_t>(c * pp + i * patch + j);
                        out.data[(ch * gh + gy) * gw + gx] = coeff(i, j);
                    }
                }
            }
        }
    }
    return out;
}

Image decode(const LatentImage& latent) {
    const int patch = latent.patch;
    require_patch(patch);
    if (latent.data.rank() != 3) throw std::invalid_argument("codec::decode: latent must be C x h x w");
    const int pp = patch * patch;
    if (latent.channels() != 3 * pp) {
        throw std::invalid_argument("codec::decode: channel count " + std::to_string(latent.channels()) +
                                    " != 3*p^2 = " + std::to_string(3 * pp));
    }
    const int gh = latent.grid_height(), gw = latent.grid_width();
    const MatrixRM h = haar_matrix(patch);
    Image out(gw * patch, gh * patch, 3);
    MatrixRM coeff(patch, patch);
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            for (int c = 0; c < 3; ++c) {
                for (int i = 0; i < patch; ++i) {
                    for (int j = 0; j < patch; ++j) {
                        const std::size_t ch = static_cast<std::size_t>(c * pp + i * patch + j);
                        coeff(i, j) = latent.data[(ch * gh + gy) * gw + gx];
                    }
                }
                const MatrixRM block = h.transpose() * coeff * h;
                for (int i = 0; i < patch; ++i) {
                    for (int j = 0; j < patch; ++j) out.at(gx * patch + j, gy * patch + i, c) = block(i, j);
                }
            }
        }
    }
    return out;
}

LatentImage LatentVideo::frame(int t) const {
    const std::size_t c = data.dim(0), frames = data.dim(1), h = data.dim(2), w = data.dim(3);
    if (t < 0 || static_cast<std::size_t>(t) >= frames) throw std::out_of_range("LatentVideo::frame");
    LatentImage out{Tensor({c, h, w}), patch};
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = data.data() + (ch * frames + t) * h * w;
        std::copy(src, src + h * w, out.data.data() + ch * h * w);
    }
    return out;
}

void LatentVideo::set_frame(int t, const LatentImage& latent) {
    const std::size_t c = data.dim(0), frames = data.dim(1), h = data.dim(2), w = data.dim(3);
    if (latent.data.shape() != std::vector<std::size_t>{c, h, w}) {
        throw std::invalid_argument("LatentVideo::set_frame: shape mismatch");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = latent.data.data() + ch * h * w;
        std::copy(src, src + h * w, data.data() + (ch * frames + t) * h * w);
    }
}

LatentVideo encode_video(const std::vector<Image>& frames, int patch) {
    if (frames.empty()) throw std::invalid_argument("codec::encode_video: no frames");
    for (const auto& f : frames) {
        if (!f.same_size(frames.front())) throw std::invalid_argument("codec::encode_video: inconsistent resolutions");
    }
    const LatentImage first = encode(frames.front(), patch);
    const std::size_t c = first.data.dim(0), h = first.data.dim(1), w = first.data.dim(2);
    LatentVideo video{Tensor({c, frames.size(), h, w}), patch};
    video.set_frame(0, first);
    for (std::size_t t = 1; t < frames.size(); ++t) video.set_frame(static_cast<int>(t), encode(frames[t], patch));
    return video;
}

std::vector<Image> decode_video(const LatentVideo& video) {
    if (video.data.rank() != 4) throw std::invalid_argument("codec::decode_video: latent must be C x T x H x W");
    std::vector<Image> out;
    out.reserve(video.frames());
    for (int t = 0; t < video.frames(); ++t) out.push_back(decode(video.frame(t)));
    return out;
}

}  // namespace reimagine::codec
