#pragma once

#include <cstddef>
#include <vector>

#include "reimagine/codec/codec.hpp"

namespace reimagine::temporal {

// Gaussian low-pass over (T, H, W) bin frequencies, stored T x H x W.
struct FrequencyMask {
    std::size_t frames = 0, height = 0, width = 0;
    double tau_t = 0.0, tau_s = 0.0;
    std::vector<double> values;

    double at(std::size_t t, std::size_t y, std::size_t x) const { return values[(t * height + y) * width + x]; }
};

// Frequency of bin k for an n-point DFT, in cycles/sample within [-1/2, 1/2).
double bin_frequency(std::size_t k, std::size_t n);

FrequencyMask build_mask(std::size_t frames, std::size_t height, std::size_t width, double tau_t, double tau_s);

// Per channel: FFT over (T, H, W), multiply by the mask, inverse, keep the
// real part. With anchoring, frame 0 is copied back from the input.
codec::LatentVideo spectral_filter(const codec::LatentVideo& latent, const FrequencyMask& mask,
                                   bool anchor_first_frame);

// Temporal median over an odd window with edge clamping.
codec::LatentVideo median_filter_baseline(const codec::LatentVideo& latent, int window);

}  // namespace reimagine::temporal
