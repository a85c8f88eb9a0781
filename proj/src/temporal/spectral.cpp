#include "reimagine/temporal/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "reimagine/core/parallel.hpp"
#include "reimagine/temporal/fft.hpp"

namespace reimagine::temporal {

namespace {

constexpr double kImagTolerance = 1e-6;

}  // namespace

double bin_frequency(std::size_t k, std::size_t n) {
    // Bins at or above n/2 alias to negative frequencies; for even n the
    // Nyquist bin maps to -1/2.
    const auto sk = static_cast<long long>(k), sn = static_cast<long long>(n);
    const long long signed_k = 2 * sk >= sn ? sk - sn : sk;
    return static_cast<double>(signed_k) / static_cast<double>(n);
}

FrequencyMask build_mask(std::size_t frames, std::size_t height, std::size_t width, double tau_t, double tau_s) {
    if (!(tau_t > 0.0) || !(tau_s > 0.0)) throw std::invalid_argument("build_mask: tau_t and tau_s must be > 0");
    if (frames == 0 || height == 0 || width == 0) throw std::invalid_argument("build_mask: dims must be >= 1");
    FrequencyMask mask{frames, height, width, tau_t, tau_s, std::vector<double>(frames * height * width)};
    for (std::size_t t = 0; t < frames; ++t) {
        const double ft = bin_frequency(t, frames) / tau_t;
        for (std::size_t y = 0; y < height; ++y) {
            const double fy = bin_frequency(y, height) / tau_s;
            for (std::size_t x = 0; x < width; ++x) {
                const double fx = bin_frequency(x, width) / tau_s;
                mask.values[(t * height + y) * width + x] = std::exp(-(ft * ft) - (fx * fx) - (fy * fy));
            }
        }
    }
    return mask;
}

codec::LatentVideo spectral_filter(const codec::LatentVideo& latent, const FrequencyMask& mask,
                                   bool anchor_first_frame) {
    if (latent.data.rank() != 4) throw std::invalid_argument("spectral_filter: latent must be C x T x H x W");
    const std::size_t channels = latent.data.dim(0), frames = latent.data.dim(1);
    const std::size_t height = latent.data.dim(2), width = latent.data.dim(3);
    if (mask.frames != frames || mask.height != height || mask.width != width) {
        throw std::invalid_argument("spectral_filter: mask dims " + std::to_string(mask.frames) + "x" +
                                    std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                                    " do not match latent " + latent.data.shape_string());
    }
    codec::LatentVideo out = latent;
    const std::size_t volume = frames * height * width;
    std::vector<double> worst_imag(channels, 0.0);
    parallel_for(channels, [&](std::size_t c) {
        ComplexVolume v(frames, height, width);
        const double* src = latent.data.data() + c * volume;
        for (std::size_t i = 0; i < volume; ++i) v.data[i] = Complex(src[i], 0.0);
        ComplexVolume spectrum = fft3(v);
        for (std::size_t i = 0; i < volume; ++i) spectrum.data[i] *= mask.values[i];
        const ComplexVolume back = ifft3(spectrum);
        double* dst = out.data.data() + c * volume;
        for (std::size_t i = 0; i < volume; ++i) {
            dst[i] = back.data[i].real();
            worst_imag[c] = std::max(worst_imag[c], std::abs(back.data[i].imag()));
        }
    });
    const double imag = *std::max_element(worst_imag.begin(), worst_imag.end());
    if (imag >= kImagTolerance) {
        throw std::runtime_error("spectral_filter: imaginary residual " + std::to_string(imag) +
                                 " exceeds tolerance; mask is not conjugate-symmetric");
    }
    if (anchor_first_frame) out.set_frame(0, latent.frame(0));
    return out;
}

codec::LatentVideo median_filter_baseline(const codec::LatentVideo& latent, int window) {
    if (window < 1 || window % 2 == 0) {
        throw std::invalid_argument("median_filter_baseline: window must be odd and >= 1, got " +
                                    std::to_string(window));
    }
    if (latent.data.rank() != 4) throw std::invalid_argument("median_filter_baseline: latent must be C x T x H x W");
    const int channels = latent.channels(), frames = latent.frames();
    const std::size_t plane = static_cast<std::size_t>(latent.grid_height()) * latent.grid_width();
    codec::LatentVideo out = latent;
    const int half = window / 2;
    parallel_for(static_cast<std::size_t>(channels), [&](std::size_t c) {
        std::vector<double> buf(window);
        const double* src = latent.data.data() + c * frames * plane;
        double* dst = out.data.data() + c * frames * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            for (int t = 0; t < frames; ++t) {
                for (int k = -half; k <= half; ++k) {
                    const int s = std::clamp(t + k, 0, frames - 1);
                    buf[k + half] = src[s * plane + i];
                }
                std::nth_element(buf.begin(), buf.begin() + half, buf.end());
                dst[t * plane + i] = buf[half];
            }
        }
    });
    return out;
}

}  // namespace reimagine::temporal
