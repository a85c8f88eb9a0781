#include "reimagine/tokens/rope.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace reimagine::tokens {

void RopeConfig::validate() const {
    if (d_head < 2 || d_head % 2 != 0) {
        throw std::invalid_argument("rope: d_head must be even and >= 2, got " + std::to_string(d_head));
    }
    int total = 0;
    for (int s : split) {
        if (s < 2 || s % 2 != 0) throw std::invalid_argument("rope: split components must be even and >= 2");
        total += s;
    }
    if (total != d_head) throw std::invalid_argument("rope: split does not sum to d_head");
    if (!(base > 1.0)) throw std::invalid_argument("rope: base must be > 1");
}

RopeConfig RopeConfig::for_head(int d_head, double base) {
    if (d_head < 6 || d_head % 2 != 0) {
        throw std::invalid_argument("rope: d_head must be even and >= 6, got " + std::to_string(d_head));
    }
    const int dc = std::max(2, (d_head / 4) / 2 * 2);
    const int dx = ((d_head - dc) / 2) / 2 * 2;
    const int dy = d_head - dc - dx;
    return {d_head, {dx, dy, dc}, base};
}

namespace {

// Angle for pair j of a head at position p.
double pair_angle(int j, const PositionTriple& p, const RopeConfig& cfg) {
    int start = 0;
    for (int axis = 0; axis < 3; ++axis) {
        const int width = cfg.split[axis];
        if (2 * j < start + width) {
            const int k = j - start / 2;
            const int coord = axis == 0 ? p.x : axis == 1 ? p.y : p.c;
            return coord * std::pow(cfg.base, -2.0 * k / width);
        }
        start += width;
    }
    return 0.0;
}

}  // namespace

std::vector<double> rope_rotate(std::span<const double> v, const PositionTriple& p, const RopeConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(v.size()) != cfg.d_head) {
        throw std::invalid_argument("rope_rotate: vector length " + std::to_string(v.size()) + " != d_head " +
                                    std::to_string(cfg.d_head));
    }
    std::vector<double> out(v.begin(), v.end());
    for (int j = 0; j < cfg.d_head / 2; ++j) {
        const double a = pair_angle(j, p, cfg);
        const double c = std::cos(a), s = std::sin(a);
        out[2 * j] = v[2 * j] * c - v[2 * j + 1] * s;
        out[2 * j + 1] = v[2 * j] * s + v[2 * j + 1] * c;
    }
    return out;
}

RopeTable::RopeTable(const std::vector<PositionTriple>& positions, const RopeConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const Eigen::Index n = static_cast<Eigen::Index>(positions.size()), half = cfg.d_head / 2;
    cos_.resize(n, half);
    sin_.resize(n, half);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < half; ++j) {
            const double a = pair_angle(static_cast<int>(j), positions[i], cfg);
            cos_(i, j) = std::cos(a);
            sin_(i, j) = std::sin(a);
        }
    }
}

void RopeTable::apply(MatrixRM& m, Eigen::Index col, bool inverse) const {
    if (m.rows() != cos_.rows() || col + cfg_.d_head > m.cols()) {
        throw std::invalid_argument("RopeTable::apply: matrix does not match the table");
    }
    const double sign = inverse ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double* row = m.row(i).data() + col;
        for (Eigen::Index j = 0; j < cos_.cols(); ++j) {
            const double c = cos_(i, j), s = sign * sin_(i, j);
            const double a = row[2 * j], b = row[2 * j + 1];
            row[2 * j] = a * c - b * s;
            row[2 * j + 1] = a * s + b * c;
        }
    }
}

namespace {

void check_qkv(const MatrixRM& q, const MatrixRM& k, const MatrixRM& v, std::size_t n_positions, int d_head) {
    const auto n = static_cast<Eigen::Index>(n_positions);
    if (q.rows() != n || k.rows() != n || v.rows() != n) {
        throw std::invalid_argument("attention: Q, K, V and positions must have the same token count");
    }
    if (q.cols() != d_head || k.cols() != d_head) {
        throw std::invalid_argument("attention: Q and K must have d_head = " + std::to_string(d_head) + " columns");
    }
}

}  // namespace

MatrixRM attention(const MatrixRM& q, const MatrixRM& k, const MatrixRM& v, const RopeTable& rope,
                   AttentionCache* cache) {
    check_qkv(q, k, v, rope.size(), rope.config().d_head);
    MatrixRM qr = q, kr = k;
    rope.apply(qr);
    rope.apply(kr);
    // Scale a factor before the product so Eigen uses its blocked GEMM.
    const MatrixRM qs = qr * (1.0 / std::sqrt(static_cast<double>(rope.config().d_head)));
    MatrixRM p(q.rows(), k.rows());
    p.noalias() = qs * kr.transpose();
    Eigen::VectorXd inv_sum(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        inv_sum[i] = 1.0 / p.row(i).sum();
    }
    // Normalize after the value product; the probabilities are only scaled when cached.
    MatrixRM out(q.rows(), v.cols());
    out.noalias() = p * v;
    out = inv_sum.asDiagonal() * out;
    if (cache) {
        cache->q_rot = std::move(qr);
        cache->k_rot = std::move(kr);
        cache->probs = inv_sum.asDiagonal() * p;
    }
    return out;
}

MatrixRM attention(const MatrixRM& q, const MatrixRM& k, const MatrixRM& v,
                   const std::vector<PositionTriple>& positions, const RopeConfig& cfg) {
    return attention(q, k, v, RopeTable(positions, cfg));
}

MatrixRM attention_scores(const MatrixRM& q, const MatrixRM& k, const std::vector<PositionTriple>& positions,
                          const RopeConfig& cfg) {
    check_qkv(q, k, k, positions.size(), cfg.d_head);
    const RopeTable rope(positions, cfg);
    MatrixRM qr = q, kr = k;
    rope.apply(qr);
    rope.apply(kr);
    qr *= 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
    return qr * kr.transpose();
}

AttentionGrads attention_backward(const AttentionCache& cache, const MatrixRM& v, const RopeTable& rope,
                                  const MatrixRM& d_out) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rope.config().d_head));
    AttentionGrads g;
    g.dv.noalias() = cache.probs.transpose() * d_out;
    MatrixRM ds(d_out.rows(), v.rows());
    ds.noalias() = d_out * v.transpose();
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        const double dot = ds.row(i).dot(cache.probs.row(i));
        ds.row(i) = cache.probs.row(i).cwiseProduct((ds.row(i).array() - dot).matrix());
    }
    ds *= scale;
    g.dq.noalias() = ds * cache.k_rot;
    g.dk.noalias() = ds.transpose() * cache.q_rot;
    rope.apply(g.dq, 0, true);
    rope.apply(g.dk, 0, true);
    return g;
}

}  // namespace reimagine::tokens
