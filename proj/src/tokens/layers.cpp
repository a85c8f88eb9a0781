#include "reimagine/tokens/layers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace reimagine::tokens {

namespace {

constexpr double kLayerNormEps = 1e-5;

Tensor zeros(const Tensor& like) { return like.empty() ? Tensor() : Tensor(like.shape(), 0.0); }

using RowMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

RowMap row(Tensor& t) { return RowMap(t.data(), static_cast<Eigen::Index>(t.size())); }
ConstRowMap row(const Tensor& t) { return ConstRowMap(t.data(), static_cast<Eigen::Index>(t.size())); }

void fill_normal(Tensor& t, Rng& rng, double std) {
    for (auto& v : t.storage()) v = std * rng.normal();
}

}  // namespace

Linear make_linear(int in, int out, bool bias, Rng& rng, double scale) {
    if (in < 1 || out < 1) throw std::invalid_argument("make_linear: sizes must be >= 1");
    Linear l;
    l.weight = Tensor({std::size_t(in), std::size_t(out)});
    fill_normal(l.weight, rng, scale / std::sqrt(static_cast<double>(in)));
    if (bias) l.bias = Tensor({std::size_t(out)});
    return l;
}

Linear zeros_like(const Linear& like) {
    return {zeros(like.weight), zeros(like.bias), zeros(like.lora_down), zeros(like.lora_up)};
}

MatrixRM linear_forward(const Linear& layer, const MatrixRM& x, MatrixRM* x_down) {
    if (x.cols() != layer.in()) {
        throw std::invalid_argument("linear: input width " + std::to_string(x.cols()) + " != " +
                                    std::to_string(layer.in()));
    }
    MatrixRM y = x * layer.weight.matrix();
    if (layer.has_bias()) y.rowwise() += row(layer.bias);
    if (layer.has_adapter()) {
        const auto down = layer.lora_down.matrix();
        MatrixRM xd = x * down;
        y += xd * layer.lora_up.matrix();
        if (x_down) *x_down = std::move(xd);
    }
    return y;
}

MatrixRM linear_backward(const Linear& layer, const MatrixRM& x, const MatrixRM& x_down, const MatrixRM& dy,
                         Linear& grad) {
    grad.weight.matrix().noalias() += x.transpose() * dy;
    if (layer.has_bias()) row(grad.bias) += dy.colwise().sum();
    MatrixRM dx = dy * layer.weight.matrix().transpose();
    if (layer.has_adapter()) {
        grad.lora_up.matrix().noalias() += x_down.transpose() * dy;
        const MatrixRM dxd = dy * layer.lora_up.matrix().transpose();
        grad.lora_down.matrix().noalias() += x.transpose() * dxd;
        dx.noalias() += dxd * layer.lora_down.matrix().transpose();
    }
    return dx;
}

namespace {

// tanh(u) = 2 sigmoid(2u) - 1 lets the whole activation run on the vectorized exp.
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

using ArrayRM = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

double gelu(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return x / (1.0 + std::exp(-2.0 * u));
}

double gelu_derivative(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double s = 1.0 / (1.0 + std::exp(-2.0 * u));
    return s + x * 2.0 * s * (1.0 - s) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

MatrixRM gelu(const MatrixRM& x) {
    const auto a = x.array();
    return (a / (1.0 + (-2.0 * kGeluC * (a + kGeluA * a.cube())).exp())).matrix();
}

MatrixRM gelu_backward(const MatrixRM& pre, const MatrixRM& dy) {
    const auto a = pre.array();
    const ArrayRM s = 1.0 / (1.0 + (-2.0 * kGeluC * (a + kGeluA * a.cube())).exp());
    const ArrayRM ds = s + a * 2.0 * s * (1.0 - s) * kGeluC * (1.0 + 3.0 * kGeluA * a.square());
    return (dy.array() * ds).matrix();
}

LayerNorm make_layer_norm(int d) { return {Tensor({std::size_t(d)}, 1.0), Tensor({std::size_t(d)}, 0.0)}; }

LayerNorm zeros_like(const LayerNorm& like) { return {zeros(like.gain), zeros(like.bias)}; }

MatrixRM layer_norm_forward(const LayerNorm& ln, const MatrixRM& x, LayerNormCache* cache) {
    const Eigen::Index d = x.cols();
    if (d != static_cast<Eigen::Index>(ln.gain.size())) throw std::invalid_argument("layer_norm: width mismatch");
    MatrixRM xhat(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
        xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
    }
    MatrixRM y = xhat.array().rowwise() * row(ln.gain).array();
    y.rowwise() += row(ln.bias);
    if (cache) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

MatrixRM layer_norm_backward(const LayerNorm& ln, const LayerNormCache& cache, const MatrixRM& dy, LayerNorm& grad) {
    row(grad.gain) += (dy.cwiseProduct(cache.normalized)).colwise().sum();
    row(grad.bias) += dy.colwise().sum();
    const MatrixRM dxhat = dy.array().rowwise() * row(ln.gain).array();
    MatrixRM dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).mean();
        const double mean_dx = dxhat.row(r).dot(cache.normalized.row(r)) / static_cast<double>(dy.cols());
        dx.row(r) = cache.inv_std(r) *
                    (dxhat.row(r).array() - mean_d - cache.normalized.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

Conv2d make_conv(int cin, int cout, int stride, Rng& rng, double scale) {
    if (cin < 1 || cout < 1 || stride < 1) throw std::invalid_argument("make_conv: sizes must be >= 1");
    Conv2d c;
    c.weight = Tensor({3, 3, std::size_t(cin), std::size_t(cout)});
    fill_normal(c.weight, rng, scale / std::sqrt(9.0 * cin));
    c.bias = Tensor({std::size_t(cout)});
    c.stride = stride;
    return c;
}

Conv2d zeros_like(const Conv2d& like) { return {zeros(like.weight), zeros(like.bias), like.stride}; }

int conv_output_size(int size, int stride) { return (size - 1) / stride + 1; }

MatrixRM im2col(const MatrixRM& x, int height, int width, int stride) {
    const int cin = static_cast<int>(x.cols());
    const int ho = conv_output_size(height, stride), wo = conv_output_size(width, stride);
    MatrixRM cols = MatrixRM::Zero(static_cast<Eigen::Index>(ho) * wo, 9 * cin);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * stride + ky - 1;
                if (iy < 0 || iy >= height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ox * stride + kx - 1;
                    if (ix < 0 || ix >= width) continue;
                    cols.block(row, (ky * 3 + kx) * cin, 1, cin) = x.row(static_cast<Eigen::Index>(iy) * width + ix);
                }
            }
        }
    }
    return cols;
}

MatrixRM conv_forward(const Conv2d& conv, const MatrixRM& x, int height, int width, MatrixRM* cols_out) {
    const int cin = conv.in_channels();
    if (x.cols() != cin || x.rows() != static_cast<Eigen::Index>(height) * width) {
        throw std::invalid_argument("conv: input is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                    ", expected " + std::to_string(height * width) + "x" + std::to_string(cin));
    }
    MatrixRM cols = im2col(x, height, width, conv.stride);
    MatrixRM y = cols * conv.weight.matrix(9 * cin, conv.out_channels());
    y.rowwise() += row(conv.bias);
    if (cols_out) *cols_out = std::move(cols);
    return y;
}

MatrixRM conv_backward(const Conv2d& conv, const MatrixRM& cols, const MatrixRM& dy, int height, int width,
                       Conv2d& grad, bool need_dx) {
    const int cin = conv.in_channels(), cout = conv.out_channels();
    grad.weight.matrix(9 * cin, cout).noalias() += cols.transpose() * dy;
    row(grad.bias) += dy.colwise().sum();
    if (!need_dx) return {};
    const MatrixRM dcols = dy * conv.weight.matrix(9 * cin, cout).transpose();
    const int ho = conv_output_size(height, conv.stride), wo = conv_output_size(width, conv.stride);
    MatrixRM dx = MatrixRM::Zero(static_cast<Eigen::Index>(height) * width, cin);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * conv.stride + ky - 1;
                if (iy < 0 || iy >= height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ox * conv.stride + kx - 1;
                    if (ix < 0 || ix >= width) continue;
                    dx.row(static_cast<Eigen::Index>(iy) * width + ix) += dcols.block(row, (ky * 3 + kx) * cin, 1, cin);
                }
            }
        }
    }
    return dx;
}

}  // namespace reimagine::tokens
