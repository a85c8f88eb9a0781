#pragma once

#include <array>
#include <vector>

#include "reimagine/bodyrender/types.hpp"
#include "reimagine/codec/codec.hpp"
#include "reimagine/core/image.hpp"
#include "reimagine/tokens/layers.hpp"
#include "reimagine/tokens/rope.hpp"

namespace reimagine::tokens {

struct TokenSegment {
    MatrixRM tokens;  // n x d
    std::vector<PositionTriple> positions;
};

// Pose, front, back and noise tokens in that order.
struct TokenSequence {
    MatrixRM tokens;
    std::vector<PositionTriple> positions;
    std::array<std::size_t, 4> segment_lengths{};

    std::size_t size() const { return positions.size(); }
    std::size_t width() const { return static_cast<std::size_t>(tokens.cols()); }
    std::size_t segment_offset(int segment) const;
};

// Empty segments (zero rows) are allowed; non-empty ones must share a width.
TokenSequence assemble(const MatrixRM& pose, const MatrixRM& front, const MatrixRM& back, const MatrixRM& noise);
std::array<MatrixRM, 4> disassemble(const TokenSequence& seq);

// Pose token i sits at (0, i, 0); grid tokens at (x, y, c) in row-major order.
std::vector<PositionTriple> pose_positions(std::size_t count);
std::vector<PositionTriple> grid_positions(int grid_width, int grid_height, int condition);

// Latent C x h x w -> (h*w) x C, one row per grid cell in row-major order.
MatrixRM latent_to_rows(const codec::LatentImage& latent);
// Inverse of latent_to_rows.
codec::LatentImage rows_to_latent(const MatrixRM& rows, int grid_width, int grid_height, int patch);

// Learned projection of every grid cell to one token; c must be 1, 2 or 3.
TokenSegment tokenize_image_latent(const codec::LatentImage& latent, int condition, const Linear& projection);

struct PoseMlp {
    Linear layer1;  // (3J + B) x hidden
    Linear layer2;  // hidden x (tokens * d)
    int tokens = 4;
};

PoseMlp make_pose_mlp(int input_width, int hidden, int tokens, int d, Rng& rng);
PoseMlp zeros_like(const PoseMlp& like);

struct PoseMlpCache {
    MatrixRM input, pre, hidden, down1, down2;
};

// Joint rotations followed by shape coefficients.
MatrixRM pose_input(const body::PoseParams& pose, const body::ShapeParams& shape);
// Tokens x d.
MatrixRM embed_pose(const body::PoseParams& pose, const body::ShapeParams& shape, const PoseMlp& mlp,
                    PoseMlpCache* cache = nullptr);
// Accumulates gradients; returns dL/d(input row).
MatrixRM embed_pose_backward(const PoseMlp& mlp, const PoseMlpCache& cache, const MatrixRM& d_tokens,
                             PoseMlp& grad);

struct NormalEncoder {
    Conv2d conv1, conv2, conv3;
    int patch = 1;
};

// Three 3x3 convolutions 3 -> 16 -> 32 -> d whose strides multiply to `patch`.
NormalEncoder make_normal_encoder(int patch, int d, Rng& rng);
NormalEncoder zeros_like(const NormalEncoder& like);
std::array<int, 3> encoder_strides(int patch);

struct NormalEncoderCache {
    int height = 0, width = 0;
    MatrixRM cols1, pre1, cols2, pre2, cols3;
};

// (h*w) x d feature per noise-grid cell, row-major like the noise tokens.
MatrixRM encode_normal_features(const Image& normal_rgb, const NormalEncoder& encoder,
                                NormalEncoderCache* cache = nullptr);
void encode_normal_features_backward(const NormalEncoder& encoder, const NormalEncoderCache& cache,
                                     const MatrixRM& d_features, NormalEncoder& grad);

}  // namespace reimagine::tokens
