#pragma once

#include "reimagine/core/rng.hpp"
#include "reimagine/core/tensor.hpp"

namespace reimagine::tokens {

// y = x W + b, optionally plus a low-rank term (x D) U.
struct Linear {
    Tensor weight;     // in x out
    Tensor bias;       // out, empty when the layer has no bias
    Tensor lora_down;  // in x r, empty without an adapter
    Tensor lora_up;    // r x out

    int in() const { return static_cast<int>(weight.dim(0)); }
    int out() const { return static_cast<int>(weight.dim(1)); }
    bool has_bias() const { return !bias.empty(); }
    bool has_adapter() const { return !lora_down.empty(); }
};

// Weights ~ N(0, scale^2 / in); bias zero.
Linear make_linear(int in, int out, bool bias, Rng& rng, double scale = 1.0);
// Same structure as `like` with every tensor zero (used for gradients).
Linear zeros_like(const Linear& like);

// `x_down` receives x D when the layer has an adapter (needed by backward).
MatrixRM linear_forward(const Linear& layer, const MatrixRM& x, MatrixRM* x_down = nullptr);
// Accumulates parameter gradients into `grad` and returns dL/dx.
MatrixRM linear_backward(const Linear& layer, const MatrixRM& x, const MatrixRM& x_down, const MatrixRM& dy,
                         Linear& grad);

// GELU, tanh form.
double gelu(double x);
double gelu_derivative(double x);
MatrixRM gelu(const MatrixRM& x);
// dL/dx given the pre-activation and dL/dy.
MatrixRM gelu_backward(const MatrixRM& pre, const MatrixRM& dy);

struct LayerNorm {
    Tensor gain;  // d
    Tensor bias;  // d
};

LayerNorm make_layer_norm(int d);
LayerNorm zeros_like(const LayerNorm& like);

struct LayerNormCache {
    MatrixRM normalized;
    Eigen::VectorXd inv_std;
};

// Row-wise normalization over the last dimension, epsilon 1e-5.
MatrixRM layer_norm_forward(const LayerNorm& ln, const MatrixRM& x, LayerNormCache* cache = nullptr);
MatrixRM layer_norm_backward(const LayerNorm& ln, const LayerNormCache& cache, const MatrixRM& dy, LayerNorm& grad);

// 3x3 convolution, zero padding 1, on H x W x C activations stored as an
// (H*W) x C row-major matrix.
struct Conv2d {
    Tensor weight;  // 3 x 3 x cin x cout
    Tensor bias;    // cout
    int stride = 1;

    int in_channels() const { return static_cast<int>(weight.dim(2)); }
    int out_channels() const { return static_cast<int>(weight.dim(3)); }
};

Conv2d make_conv(int cin, int cout, int stride, Rng& rng, double scale = 1.0);
Conv2d zeros_like(const Conv2d& like);

int conv_output_size(int size, int stride);
// Patch matrix (Ho*Wo) x (9*cin), ordered (ky, kx, cin).
MatrixRM im2col(const MatrixRM& x, int height, int width, int stride);
MatrixRM conv_forward(const Conv2d& conv, const MatrixRM& x, int height, int width, MatrixRM* cols = nullptr);
// Accumulates parameter gradients; returns dL/dx when `need_dx` (else empty).
MatrixRM conv_backward(const Conv2d& conv, const MatrixRM& cols, const MatrixRM& dy, int height, int width,
                       Conv2d& grad, bool need_dx);

}  // namespace reimagine::tokens
