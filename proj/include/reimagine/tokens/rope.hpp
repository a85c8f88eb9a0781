#pragma once

#include <array>
#include <span>
#include <vector>

#include "reimagine/core/tensor.hpp"

namespace reimagine::tokens {

enum Condition : int { kPoseCondition = 0, kFrontCondition = 1, kBackCondition = 2, kNoiseCondition = 3 };

struct PositionTriple {
    int x = 0;
    int y = 0;
    int c = 0;

    bool operator==(const PositionTriple&) const = default;
};

struct RopeConfig {
    int d_head = 64;
    std::array<int, 3> split{24, 24, 16};  // dims given to x, y, c
    double base = 10000.0;

    // Throws std::invalid_argument on an odd head width or a bad split.
    void validate() const;
    // Default split for a head width: c gets a quarter (even, >= 2), x and y share the rest.
    static RopeConfig for_head(int d_head, double base = 10000.0);
};

// Rotates consecutive pairs of each axis block by coord * base^(-2k / d_axis).
std::vector<double> rope_rotate(std::span<const double> v, const PositionTriple& p, const RopeConfig& cfg);

// Cached cos/sin for a fixed list of positions.
class RopeTable {
public:
    RopeTable(const std::vector<PositionTriple>& positions, const RopeConfig& cfg);

    std::size_t size() const { return static_cast<std::size_t>(cos_.rows()); }
    const RopeConfig& config() const { return cfg_; }

    // Rotates the d_head columns starting at `col` of every row in place;
    // `inverse` applies the transpose rotation.
    void apply(MatrixRM& m, Eigen::Index col = 0, bool inverse = false) const;

private:
    RopeConfig cfg_;
    MatrixRM cos_, sin_;  // N x d_head/2
};

struct AttentionCache {
    MatrixRM q_rot, k_rot, probs;
};

// softmax(RoPE(Q) RoPE(K)^T / sqrt(d_head)) V over all tokens.
MatrixRM attention(const MatrixRM& q, const MatrixRM& k, const MatrixRM& v,
                   const std::vector<PositionTriple>& positions, const RopeConfig& cfg);
MatrixRM attention(const MatrixRM& q, const MatrixRM& k, const MatrixRM& v, const RopeTable& rope,
                   AttentionCache* cache = nullptr);
// Pre-softmax score matrix.
MatrixRM attention_scores(const MatrixRM& q, const MatrixRM& k, const std::vector<PositionTriple>& positions,
                          const RopeConfig& cfg);

struct AttentionGrads {
    MatrixRM dq, dk, dv;
};

AttentionGrads attention_backward(const AttentionCache& cache, const MatrixRM& v, const RopeTable& rope,
                                  const MatrixRM& d_out);

}  // namespace reimagine::tokens
