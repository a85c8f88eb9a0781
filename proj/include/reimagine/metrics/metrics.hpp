#pragma once

#include <vector>

#include "reimagine/core/image.hpp"

namespace reimagine::metrics {

// Per-pixel displacement in pixels, H x W, row-major.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> u, v;

    FlowField() = default;
    FlowField(int w, int h) : width(w), height(h), u(static_cast<std::size_t>(w) * h), v(u.size()) {}
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct HornSchunckParams {
    double alpha = 15.0;
    int iterations = 200;
    int levels = 3;
    // Unit-range intensities are multiplied by this before estimation.
    double intensity_scale = 255.0;
};

// 10 log10(1 / MSE). Identical images give +infinity.
double psnr(const Image& a, const Image& b);

// Mean Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03) on luma.
double ssim(const Image& a, const Image& b);

// Coarse-to-fine Horn-Schunck flow from `first` to `second`. RGB inputs are
// converted to luma.
FlowField estimate_flow(const Image& first, const Image& second, const HornSchunckParams& params = {});

// Backward bilinear warp with border clamping: out(p) = image(p - flow(p)).
// With flow estimated from I_t to I_{t+1}, warp(I_t, flow) predicts I_{t+1}.
Image warp(const Image& image, const FlowField& flow);

// Mean over consecutive pairs of the mean per-sample L1 between
// warp(I_t, flow_t) and I_{t+1}.
double flow_warp_error(const std::vector<Image>& frames, const HornSchunckParams& params = {});

}  // namespace reimagine::metrics
