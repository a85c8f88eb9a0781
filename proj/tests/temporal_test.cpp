#include <doctest.h>

#include <array>
#include <chrono>
#include <cmath>
#include <numbers>

#include "reimagine/core/parallel.hpp"
#include "reimagine/core/rng.hpp"
#include "reimagine/temporal/fft.hpp"
#include "reimagine/temporal/spectral.hpp"

using namespace reimagine;
using namespace reimagine::temporal;

namespace {

// Brute-force 3-D DFT, O(N^2).
ComplexVolume naive_dft3(const ComplexVolume& v, double sign = -1.0) {
    ComplexVolume out(v.frames, v.height, v.width);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t kt = 0; kt < v.frames; ++kt) {
        for (std::size_t ky = 0; ky < v.height; ++ky) {
            for (std::size_t kx = 0; kx < v.width; ++kx) {
                Complex acc(0.0, 0.0);
                for (std::size_t t = 0; t < v.frames; ++t) {
                    for (std::size_t y = 0; y < v.height; ++y) {
                        for (std::size_t x = 0; x < v.width; ++x) {
                            const double phase = static_cast<double>(kt * t % v.frames) / v.frames +
                                                 static_cast<double>(ky * y % v.height) / v.height +
                                                 static_cast<double>(kx * x % v.width) / v.width;
                            acc += v.data[v.index(t, y, x)] * std::polar(1.0, sign * two_pi * phase);
                        }
                    }
                }
                out.data[out.index(kt, ky, kx)] = acc;
            }
        }
    }
    return out;
}

ComplexVolume random_volume(std::size_t t, std::size_t h, std::size_t w, Rng& rng) {
    ComplexVolume v(t, h, w);
    for (auto& c : v.data) c = Complex(rng.normal(), rng.normal());
    return v;
}

double relative_error(const ComplexVolume& a, const ComplexVolume& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        num += std::norm(a.data[i] - b.data[i]);
        den += std::norm(b.data[i]);
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

codec::LatentVideo random_video(int c, int t, int h, int w, Rng& rng) {
    codec::LatentVideo v{Tensor({std::size_t(c), std::size_t(t), std::size_t(h), std::size_t(w)}), 1};
    for (auto& x : v.data.storage()) x = rng.normal();
    return v;
}

double temporal_variation(const codec::LatentVideo& v) {
    double tv = 0.0;
    for (int t = 0; t + 1 < v.frames(); ++t) {
        const auto a = v.frame(t), b = v.frame(t + 1);
        for (std::size_t i = 0; i < a.data.size(); ++i) tv += std::pow(b.data[i] - a.data[i], 2);
    }
    return tv;
}

double spectral_energy(const codec::LatentVideo& v) {
    double e = 0.0;
    for (double x : v.data.storage()) e += x * x;
    return e;
}

}  // namespace

TEST_CASE("1-D plans agree with the naive DFT for every length up to 70") {
    Rng rng(3);
    for (std::size_t n = 1; n <= 70; ++n) {
        ComplexVolume v = random_volume(1, 1, n, rng);
        const ComplexVolume ref = naive_dft3(v);
        FftPlan plan(n);
        plan.forward(v.data);
        INFO("n = " << n);
        CHECK(relative_error(v, ref) < 1e-10);
    }
    CHECK(FftPlan(37).uses_bluestein());
    CHECK(FftPlan(97).uses_bluestein());
    CHECK_FALSE(FftPlan(48).uses_bluestein());
    CHECK_THROWS_AS(FftPlan(0), std::invalid_argument);
}

TEST_CASE("fft3 matches the naive DFT oracle") {
    Rng rng(5);
    for (auto dims : {std::array<std::size_t, 3>{4, 4, 4}, {5, 6, 7}, {3, 1, 37}}) {
        const ComplexVolume v = random_volume(dims[0], dims[1], dims[2], rng);
        CHECK(relative_error(fft3(v), naive_dft3(v)) < 1e-8);
    }
}

TEST_CASE("fft3 of a constant puts everything in the zero bin") {
    ComplexVolume v(3, 4, 5);
    for (auto& c : v.data) c = Complex(2.5, 0.0);
    const ComplexVolume s = fft3(v);
    CHECK(std::abs(s.data[0] - Complex(2.5 * 60, 0.0)) < 1e-10);
    for (std::size_t i = 1; i < s.data.size(); ++i) CHECK(std::abs(s.data[i]) < 1e-10);
}

TEST_CASE("ifft3 inverts fft3") {
    Rng rng(9);
    const ComplexVolume v = random_volume(5, 6, 7, rng);
    CHECK(relative_error(ifft3(fft3(v)), v) < 1e-9);
    CHECK_THROWS_AS(fft3(ComplexVolume(0, 2, 2)), std::invalid_argument);
}

TEST_CASE("bin frequencies follow fftfreq") {
    CHECK(bin_frequency(0, 8) == 0.0);
    CHECK(bin_frequency(3, 8) == 0.375);
    CHECK(bin_frequency(4, 8) == -0.5);
    CHECK(bin_frequency(7, 8) == -0.125);
    CHECK(bin_frequency(2, 5) == 0.4);
    CHECK(bin_frequency(3, 5) == -0.4);
}

TEST_CASE("mask values") {
    // 50 samples: bin 3 sits at exactly 0.06 cycles/sample; 25 samples: bin 3 at 0.12.
    const FrequencyMask m = build_mask(50, 25, 25, 0.06, 0.12);
    CHECK(m.at(0, 0, 0) == 1.0);
    CHECK(m.at(3, 0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(m.at(3, 0, 3) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(m.at(3, 0, 0) == doctest::Approx(0.367879).epsilon(1e-6));
    CHECK(m.at(3, 0, 3) == doctest::Approx(0.135335).epsilon(1e-5));
    // Symmetric under negation and bounded.
    for (std::size_t t = 0; t < 50; ++t) {
        for (std::size_t y = 0; y < 25; ++y) {
            for (std::size_t x = 0; x < 25; ++x) {
                const double v = m.at(t, y, x);
                CHECK(v == m.at((50 - t) % 50, (25 - y) % 25, (25 - x) % 25));
                CHECK(v <= 1.0);
                CHECK(v >= 0.0);
            }
        }
    }
    CHECK_THROWS_AS(build_mask(4, 4, 4, 0.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(build_mask(4, 4, 4, 0.1, -1.0), std::invalid_argument);
}

TEST_CASE("spectral filter on constants and sinusoids") {
    const FrequencyMask mask = build_mask(16, 4, 4, 0.06, 0.12);
    codec::LatentVideo constant{Tensor({2, 16, 4, 4}, 0.75), 1};
    const auto fc = spectral_filter(constant, mask, false);
    for (double v : fc.data.storage()) CHECK(v == doctest::Approx(0.75).epsilon(1e-9));

    // cos(2 pi f t) at spatial DC, f = 2/16.
    const double f = 2.0 / 16.0;
    codec::LatentVideo wave{Tensor({1, 16, 4, 4}), 1};
    for (int t = 0; t < 16; ++t) {
        for (int i = 0; i < 16; ++i) wave.data[t * 16 + i] = std::cos(2.0 * std::numbers::pi * f * t);
    }
    const auto fw = spectral_filter(wave, mask, false);
    const double gain = std::exp(-std::pow(f / 0.06, 2));
    for (int t = 0; t < 16; ++t) {
        CHECK(std::abs(fw.data[t * 16 + 5] - gain * std::cos(2.0 * std::numbers::pi * f * t)) < 1e-6);
    }
}

TEST_CASE("spectral filter invariants") {
    Rng rng(21);
    const auto a = random_video(3, 9, 5, 6, rng);
    const auto b = random_video(3, 9, 5, 6, rng);
    const FrequencyMask mask = build_mask(9, 5, 6, 0.06, 0.12);

    const auto fa = spectral_filter(a, mask, false);
    const auto fb = spectral_filter(b, mask, false);
    CHECK(spectral_energy(fa) <= spectral_energy(a) + 1e-6);
    CHECK(temporal_variation(fa) <= temporal_variation(a) + 1e-6);

    codec::LatentVideo mix = a;
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
    const auto fm = spectral_filter(mix, mask, false);
    for (std::size_t i = 0; i < fm.data.size(); ++i) {
        CHECK(std::abs(fm.data[i] - (2.0 * fa.data[i] - 0.5 * fb.data[i])) < 1e-6);
    }

    const auto anchored = spectral_filter(a, mask, true);
    CHECK(anchored.frame(0).data.storage() == a.frame(0).data.storage());
    CHECK(anchored.frame(1).data.storage() == fa.frame(1).data.storage());

    CHECK_THROWS_AS(spectral_filter(a, build_mask(8, 5, 6, 0.06, 0.12), false), std::invalid_argument);
}

TEST_CASE("spectral filter is independent of thread count") {
    Rng rng(4);
    const auto a = random_video(6, 8, 4, 4, rng);
    const FrequencyMask mask = build_mask(8, 4, 4, 0.06, 0.12);
    const int before = thread_count();
    set_thread_count(1);
    const auto one = spectral_filter(a, mask, true);
    set_thread_count(3);
    const auto three = spectral_filter(a, mask, true);
    set_thread_count(before);
    CHECK(one.data.storage() == three.data.storage());
}

TEST_CASE("median filter baseline") {
    codec::LatentVideo impulse{Tensor({1, 5, 1, 1}, std::vector<double>{0, 0, 9, 0, 0}), 1};
    const auto m = median_filter_baseline(impulse, 3);
    for (double v : m.data.storage()) CHECK(v == 0.0);

    Rng rng(2);
    const auto a = random_video(2, 7, 3, 3, rng);
    CHECK(median_filter_baseline(a, 1).data.storage() == a.data.storage());
    codec::LatentVideo constant{Tensor({2, 6, 2, 2}, 1.25), 1};
    CHECK(median_filter_baseline(constant, 5).data.storage() == constant.data.storage());

    // Edge clamping: 1,5,2 with window 3 -> med(1,1,5)=1, med(1,5,2)=2, med(5,2,2)=2.
    codec::LatentVideo edge{Tensor({1, 3, 1, 1}, std::vector<double>{1, 5, 2}), 1};
    CHECK(median_filter_baseline(edge, 3).data.storage() == TensorStorage{1, 2, 2});

    CHECK_THROWS_AS(median_filter_baseline(a, 2), std::invalid_argument);
    CHECK_THROWS_AS(median_filter_baseline(a, 0), std::invalid_argument);
}

TEST_CASE("spectral filter on a 16-frame latent video is fast") {
    Rng rng(8);
    const auto a = random_video(48, 16, 16, 16, rng);
    const FrequencyMask mask = build_mask(16, 16, 16, 0.06, 0.12);
    const auto start = std::chrono::steady_clock::now();
    const auto f = spectral_filter(a, mask, true);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 1.0);
    CHECK(f.data.size() == a.data.size());
}
