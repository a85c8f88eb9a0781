#include "reimagine/tokens/tokens.hpp"

#include <stdexcept>
#include <string>

namespace reimagine::tokens {

std::size_t TokenSequence::segment_offset(int segment) const {
    std::size_t off = 0;
    for (int s = 0; s < segment; ++s) off += segment_lengths[s];
    return off;
}

std::vector<PositionTriple> pose_positions(std::size_t count) {
    std::vector<PositionTriple> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = {0, static_cast<int>(i), kPoseCondition};
    return out;
}

std::vector<PositionTriple> grid_positions(int grid_width, int grid_height, int condition) {
    std::vector<PositionTriple> out;
    out.reserve(static_cast<std::size_t>(grid_width) * grid_height);
    for (int y = 0; y < grid_height; ++y) {
        for (int x = 0; x < grid_width; ++x) out.push_back({x, y, condition});
    }
    return out;
}

TokenSequence assemble(const MatrixRM& pose, const MatrixRM& front, const MatrixRM& back, const MatrixRM& noise) {
    const MatrixRM* parts[4] = {&pose, &front, &back, &noise};
    Eigen::Index width = -1, rows = 0;
    for (const auto* p : parts) {
        if (p->rows() == 0) continue;
        if (width >= 0 && p->cols() != width) {
            throw std::invalid_argument("assemble: token widths differ (" + std::to_string(width) + " vs " +
                                        std::to_string(p->cols()) + ")");
        }
        width = p->cols();
        rows += p->rows();
    }
    TokenSequence seq;
    seq.tokens.resize(rows, std::max<Eigen::Index>(width, 0));
    Eigen::Index at = 0;
    for (int s = 0; s < 4; ++s) {
        const MatrixRM& p = *parts[s];
        seq.segment_lengths[s] = static_cast<std::size_t>(p.rows());
        if (p.rows() > 0) seq.tokens.middleRows(at, p.rows()) = p;
        at += p.rows();
    }
    return seq;
}

std::array<MatrixRM, 4> disassemble(const TokenSequence& seq) {
    std::array<MatrixRM, 4> out;
    Eigen::Index at = 0;
    for (int s = 0; s < 4; ++s) {
        const auto n = static_cast<Eigen::Index>(seq.segment_lengths[s]);
        out[s] = seq.tokens.middleRows(at, n);
        at += n;
    }
    return out;
}

MatrixRM latent_to_rows(const codec::LatentImage& latent) {
    const int c = latent.channels(), h = latent.grid_height(), w = latent.grid_width();
    // C x (h*w) viewed, then transposed.
    return latent.data.matrix(c, static_cast<std::size_t>(h) * w).transpose();
}

codec::LatentImage rows_to_latent(const MatrixRM& rows, int grid_width, int grid_height, int patch) {
    if (rows.rows() != static_cast<Eigen::Index>(grid_width) * grid_height) {
        throw std::invalid_argument("rows_to_latent: row count does not match the grid");
    }
    codec::LatentImage out{Tensor({static_cast<std::size_t>(rows.cols()), std::size_t(grid_height),
                                   std::size_t(grid_width)}),
                           patch};
    out.data.matrix(rows.cols(), rows.rows()) = rows.transpose();
    return out;
}

TokenSegment tokenize_image_latent(const codec::LatentImage& latent, int condition, const Linear& projection) {
    if (condition < kFrontCondition || condition > kNoiseCondition) {
        throw std::invalid_argument("tokenize_image_latent: condition index must be 1, 2 or 3, got " +
                                    std::to_string(condition));
    }
    return {linear_forward(projection, latent_to_rows(latent)),
            grid_positions(latent.grid_width(), latent.grid_height(), condition)};
}

PoseMlp make_pose_mlp(int input_width, int hidden, int tokens, int d, Rng& rng) {
    return {make_linear(input_width, hidden, true, rng), make_linear(hidden, tokens * d, true, rng), tokens};
}

PoseMlp zeros_like(const PoseMlp& like) { return {zeros_like(like.layer1), zeros_like(like.layer2), like.tokens}; }

MatrixRM pose_input(const body::PoseParams& pose, const body::ShapeParams& shape) {
    const auto rot = pose.flat_rotations();
    MatrixRM in(1, static_cast<Eigen::Index>(rot.size() + shape.coefficients.size()));
    Eigen::Index i = 0;
    for (double v : rot) in(0, i++) = v;
    for (double v : shape.coefficients) in(0, i++) = v;
    return in;
}

MatrixRM embed_pose(const body::PoseParams& pose, const body::ShapeParams& shape, const PoseMlp& mlp,
                    PoseMlpCache* cache) {
    MatrixRM in = pose_input(pose, shape);
    if (in.cols() != mlp.layer1.in()) {
        throw std::invalid_argument("embed_pose: input width " + std::to_string(in.cols()) +
                                    " (3J + B) != MLP input width " + std::to_string(mlp.layer1.in()));
    }
    const int d = mlp.layer2.out() / mlp.tokens;
    MatrixRM down1, down2;
    MatrixRM pre = linear_forward(mlp.layer1, in, &down1);
    MatrixRM hidden = gelu(pre);
    const MatrixRM flat = linear_forward(mlp.layer2, hidden, &down2);
    MatrixRM out = Eigen::Map<const MatrixRM>(flat.data(), mlp.tokens, d);
    if (cache) *cache = {std::move(in), std::move(pre), std::move(hidden), std::move(down1), std::move(down2)};
    return out;
}

MatrixRM embed_pose_backward(const PoseMlp& mlp, const PoseMlpCache& cache, const MatrixRM& d_tokens,
                             PoseMlp& grad) {
    const MatrixRM d_flat = Eigen::Map<const MatrixRM>(d_tokens.data(), 1, d_tokens.size());
    const MatrixRM d_hidden = linear_backward(mlp.layer2, cache.hidden, cache.down2, d_flat, grad.layer2);
    const MatrixRM d_pre = gelu_backward(cache.pre, d_hidden);
    return linear_backward(mlp.layer1, cache.input, cache.down1, d_pre, grad.layer1);
}

std::array<int, 3> encoder_strides(int patch) {
    if (patch < 1 || (patch & (patch - 1)) != 0) {
        throw std::invalid_argument("normal encoder: patch must be a power of two, got " + std::to_string(patch));
    }
    // Spread factors of two over the layers, earlier layers first.
    std::array<int, 3> s{1, 1, 1};
    int remaining = patch, layer = 0;
    while (remaining > 1) {
        s[layer % 3] *= 2;
        remaining /= 2;
        ++layer;
    }
    return s;
}

NormalEncoder make_normal_encoder(int patch, int d, Rng& rng) {
    const auto s = encoder_strides(patch);
    return {make_conv(3, 16, s[0], rng), make_conv(16, 32, s[1], rng), make_conv(32, d, s[2], rng), patch};
}

NormalEncoder zeros_like(const NormalEncoder& like) {
    return {zeros_like(like.conv1), zeros_like(like.conv2), zeros_like(like.conv3), like.patch};
}

MatrixRM encode_normal_features(const Image& normal_rgb, const NormalEncoder& encoder, NormalEncoderCache* cache) {
    const int p = encoder.patch;
    if (normal_rgb.channels != 3) throw std::invalid_argument("encode_normal_features: expected an RGB image");
    if (normal_rgb.width % p != 0 || normal_rgb.height % p != 0) {
        throw std::invalid_argument("encode_normal_features: resolution " + std::to_string(normal_rgb.width) + "x" +
                                    std::to_string(normal_rgb.height) + " not divisible by patch " +
                                    std::to_string(p));
    }
    const int h0 = normal_rgb.height, w0 = normal_rgb.width;
    const MatrixRM x0 = Eigen::Map<const MatrixRM>(normal_rgb.data.data(), static_cast<Eigen::Index>(h0) * w0, 3);
    NormalEncoderCache local;
    NormalEncoderCache& c = cache ? *cache : local;
    c.height = h0;
    c.width = w0;
    c.pre1 = conv_forward(encoder.conv1, x0, h0, w0, &c.cols1);
    const int h1 = conv_output_size(h0, encoder.conv1.stride), w1 = conv_output_size(w0, encoder.conv1.stride);
    c.pre2 = conv_forward(encoder.conv2, gelu(c.pre1), h1, w1, &c.cols2);
    const int h2 = conv_output_size(h1, encoder.conv2.stride), w2 = conv_output_size(w1, encoder.conv2.stride);
    return conv_forward(encoder.conv3, gelu(c.pre2), h2, w2, &c.cols3);
}

void encode_normal_features_backward(const NormalEncoder& encoder, const NormalEncoderCache& cache,
                                     const MatrixRM& d_features, NormalEncoder& grad) {
    const int h0 = cache.height, w0 = cache.width;
    const int h1 = conv_output_size(h0, encoder.conv1.stride), w1 = conv_output_size(w0, encoder.conv1.stride);
    const int h2 = conv_output_size(h1, encoder.conv2.stride), w2 = conv_output_size(w1, encoder.conv2.stride);
    const MatrixRM d_act2 = conv_backward(encoder.conv3, cache.cols3, d_features, h2, w2, grad.conv3, true);
    const MatrixRM d_act1 =
        conv_backward(encoder.conv2, cache.cols2, gelu_backward(cache.pre2, d_act2), h1, w1, grad.conv2, true);
    conv_backward(encoder.conv1, cache.cols1, gelu_backward(cache.pre1, d_act1), h0, w0, grad.conv1, false);
}

}  // namespace reimagine::tokens
