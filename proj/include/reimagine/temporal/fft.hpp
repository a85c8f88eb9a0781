#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace reimagine::temporal {

using Complex = std::complex<double>;

// One-dimensional DFT of a fixed length. Lengths whose prime factors are all
// small go through a recursive mixed-radix Cooley-Tukey; any other length
// uses Bluestein's chirp-z transform over a power-of-two convolution.
class FftPlan {
public:
    explicit FftPlan(std::size_t n);
    ~FftPlan();
    FftPlan(FftPlan&&) noexcept;
    FftPlan& operator=(FftPlan&&) noexcept;

    std::size_t size() const { return n_; }
    bool uses_bluestein() const { return bluestein_ != nullptr; }

    // Unnormalized forward transform X_k = sum_j x_j exp(-2 pi i jk / n), in place.
    void forward(std::span<Complex> data) const;
    // Unnormalized inverse (positive exponent), in place.
    void inverse_unscaled(std::span<Complex> data) const;

private:
    struct Bluestein;

    void mixed_radix(const Complex* in, std::size_t in_stride, Complex* out) const;
    void recurse(Complex* out, const Complex* in, std::size_t fstride, std::size_t in_stride,
                 std::size_t factor_index) const;

    std::size_t n_ = 0;
    std::vector<std::size_t> factors_;
    std::vector<Complex> twiddles_;
    std::unique_ptr<Bluestein> bluestein_;
};

// Dense complex T x H x W volume, row-major (w fastest).
struct ComplexVolume {
    std::size_t frames = 0, height = 0, width = 0;
    std::vector<Complex> data;

    ComplexVolume() = default;
    ComplexVolume(std::size_t t, std::size_t h, std::size_t w)
        : frames(t), height(h), width(w), data(t * h * w) {}
    std::size_t index(std::size_t t, std::size_t y, std::size_t x) const { return (t * height + y) * width + x; }
};

// Unnormalized forward 3-D DFT.
ComplexVolume fft3(const ComplexVolume& volume);
// Inverse 3-D DFT normalized by 1 / (T H W).
ComplexVolume ifft3(const ComplexVolume& spectrum);

}  // namespace reimagine::temporal
