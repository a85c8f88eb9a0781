#include "reimagine/temporal/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace reimagine::temporal {

namespace {

// Largest prime handled by the generic O(p^2) butterfly.
constexpr std::size_t kMaxRadix = 31;

std::vector<std::size_t> factorize(std::size_t n) {
    std::vector<std::size_t> f;
    // Prefer radix 4, then 2, then odd primes.
    while (n % 4 == 0) {
        f.push_back(4);
        n /= 4;
    }
    while (n % 2 == 0) {
        f.push_back(2);
        n /= 2;
    }
    for (std::size_t p = 3; p * p <= n; p += 2) {
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    }
    if (n > 1) f.push_back(n);
    return f;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

Complex unit_root(std::size_t k, std::size_t n) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return {std::cos(a), std::sin(a)};
}

}  // namespace

struct FftPlan::Bluestein {
    std::size_t m = 0;
    std::unique_ptr<FftPlan> inner;
    std::vector<Complex> chirp;           // exp(-i pi k^2 / n)
    std::vector<Complex> kernel_spectrum; // FFT of conj(chirp), wrapped to length m
};

FftPlan::FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("FftPlan: length must be >= 1");
    factors_ = factorize(n);
    bool small = true;
    for (auto f : factors_) small = small && f <= kMaxRadix;
    if (small) {
        twiddles_.resize(n);
        for (std::size_t k = 0; k < n; ++k) twiddles_[k] = unit_root(k, n);
        return;
    }
    factors_.clear();
    bluestein_ = std::make_unique<Bluestein>();
    auto& b = *bluestein_;
    b.m = next_pow2(2 * n - 1);
    b.inner = std::make_unique<FftPlan>(b.m);
    b.chirp.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small and exact.
        const std::size_t k2 = (k * k) % (2 * n);
        const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        b.chirp[k] = {std::cos(a), std::sin(a)};
    }
    b.kernel_spectrum.assign(b.m, Complex(0.0, 0.0));
    b.kernel_spectrum[0] = std::conj(b.chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        b.kernel_spectrum[k] = std::conj(b.chirp[k]);
        b.kernel_spectrum[b.m - k] = std::conj(b.chirp[k]);
    }
    b.inner->forward(b.kernel_spectrum);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

void FftPlan::recurse(Complex* out, const Complex* in, std::size_t fstride, std::size_t in_stride,
                      std::size_t factor_index) const {
    const std::size_t p = factors_[factor_index];
    const std::size_t n = n_ / fstride;  // length at this level
    const std::size_t m = n / p;
    if (m == 1) {
        for (std::size_t q = 0; q < p; ++q) out[q] = in[q * fstride * in_stride];
    } else {
        for (std::size_t q = 0; q < p; ++q) {
            recurse(out + q * m, in + q * fstride * in_stride, fstride * p, in_stride, factor_index + 1);
        }
    }

    // Butterflies: out[k + s m] = sum_q W_n^{qk} y_q[k] W_p^{qs}.
    Complex scratch[kMaxRadix];
    const std::size_t root_step = n_ / p;  // W_p = W_N^{N/p}
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t q = 0; q < p; ++q) {
            scratch[q] = out[q * m + k] * twiddles_[(q * k * fstride) % n_];
        }
        if (p == 2) {
            out[k] = scratch[0] + scratch[1];
            out[k + m] = scratch[0] - scratch[1];
        } else if (p == 4) {
            const Complex a = scratch[0] + scratch[2], b = scratch[0] - scratch[2];
            const Complex c = scratch[1] + scratch[3];
            const Complex d = scratch[1] - scratch[3];
            const Complex minus_i_d(d.imag(), -d.real());
            out[k] = a + c;
            out[k + m] = b + minus_i_d;
            out[k + 2 * m] = a - c;
            out[k + 3 * m] = b - minus_i_d;
        } else {
            for (std::size_t s = 0; s < p; ++s) {
                Complex acc = scratch[0];
                for (std::size_t q = 1; q < p; ++q) acc += scratch[q] * twiddles_[(q * s * root_step) % n_];
                out[k + s * m] = acc;
            }
        }
    }
}

void FftPlan::mixed_radix(const Complex* in, std::size_t in_stride, Complex* out) const {
    if (n_ == 1) {
        out[0] = in[0];
        return;
    }
    recurse(out, in, 1, in_stride, 0);
}

void FftPlan::forward(std::span<Complex> data) const {
    if (data.size() != n_) throw std::invalid_argument("FftPlan::forward: length mismatch");
    if (!bluestein_) {
        std::vector<Complex> in(data.begin(), data.end());
        mixed_radix(in.data(), 1, data.data());
        return;
    }
    const auto& b = *bluestein_;
    std::vector<Complex> a(b.m, Complex(0.0, 0.0));
    for (std::size_t k = 0; k < n_; ++k) a[k] = data[k] * b.chirp[k];
    b.inner->forward(a);
    for (std::size_t k = 0; k < b.m; ++k) a[k] *= b.kernel_spectrum[k];
    b.inner->inverse_unscaled(a);
    const double scale = 1.0 / static_cast<double>(b.m);
    for (std::size_t k = 0; k < n_; ++k) data[k] = a[k] * scale * b.chirp[k];
}

void FftPlan::inverse_unscaled(std::span<Complex> data) const {
    for (auto& c : data) c = std::conj(c);
    forward(data);
    for (auto& c : data) c = std::conj(c);
}

namespace {

enum class Direction { kForward, kInverse };

ComplexVolume transform3(const ComplexVolume& in, Direction dir) {
    if (in.frames == 0 || in.height == 0 || in.width == 0) throw std::invalid_argument("fft3: empty volume");
    if (in.data.size() != in.frames * in.height * in.width) throw std::invalid_argument("fft3: bad volume size");
    ComplexVolume out = in;
    const FftPlan pt(in.frames), ph(in.height), pw(in.width);
    auto run = [dir](const FftPlan& plan, std::span<Complex> line) {
        if (dir == Direction::kForward) {
            plan.forward(line);
        } else {
            plan.inverse_unscaled(line);
        }
    };
    std::vector<Complex> line;
    // Along W (contiguous).
    for (std::size_t t = 0; t < out.frames; ++t) {
        for (std::size_t y = 0; y < out.height; ++y) {
            run(pw, std::span<Complex>(out.data.data() + out.index(t, y, 0), out.width));
        }
    }
    // Along H.
    line.resize(out.height);
    for (std::size_t t = 0; t < out.frames; ++t) {
        for (std::size_t x = 0; x < out.width; ++x) {
            for (std::size_t y = 0; y < out.height; ++y) line[y] = out.data[out.index(t, y, x)];
            run(ph, line);
            for (std::size_t y = 0; y < out.height; ++y) out.data[out.index(t, y, x)] = line[y];
        }
    }
    // Along T.
    line.resize(out.frames);
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) {
            for (std::size_t t = 0; t < out.frames; ++t) line[t] = out.data[out.index(t, y, x)];
            run(pt, line);
            for (std::size_t t = 0; t < out.frames; ++t) out.data[out.index(t, y, x)] = line[t];
        }
    }
    if (dir == Direction::kInverse) {
        const double scale = 1.0 / static_cast<double>(out.data.size());
        for (auto& c : out.data) c *= scale;
    }
    return out;
}

}  // namespace

ComplexVolume fft3(const ComplexVolume& volume) { return transform3(volume, Direction::kForward); }

ComplexVolume ifft3(const ComplexVolume& spectrum) { return transform3(spectrum, Direction::kInverse); }

}  // namespace reimagine::temporal
