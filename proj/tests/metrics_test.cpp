#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "reimagine/core/rng.hpp"
#include "reimagine/metrics/metrics.hpp"

using namespace reimagine;
using namespace reimagine::metrics;

namespace {

double pattern(double x, double y) {
    return 0.5 + 0.2 * std::sin(2.0 * std::numbers::pi * x / 24.0) * std::cos(2.0 * std::numbers::pi * y / 30.0) +
           0.004 * x;
}

// Smooth RGB image whose content is displaced by (dx, dy).
Image smooth_image(int w, int h, double dx, double dy) {
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = pattern(x - dx, y - dy);
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = v * (0.8 + 0.1 * c);
        }
    }
    return img;
}

Image random_image(int w, int h, int c, Rng& rng) {
    Image img(w, h, c);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

struct FlowStats {
    double mean_u = 0.0, mean_abs_v = 0.0;
};

FlowStats interior_stats(const FlowField& f, int margin) {
    FlowStats s;
    int n = 0;
    for (int y = margin; y < f.height - margin; ++y) {
        for (int x = margin; x < f.width - margin; ++x) {
            s.mean_u += f.u[f.index(x, y)];
            s.mean_abs_v += std::abs(f.v[f.index(x, y)]);
            ++n;
        }
    }
    s.mean_u /= n;
    s.mean_abs_v /= n;
    return s;
}

}  // namespace

TEST_CASE("psnr examples") {
    const Image a(8, 8, 3, 0.25);
    CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
    CHECK(psnr(Image(8, 8, 3, 0.0), Image(8, 8, 3, 1.0)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(psnr(Image(8, 8, 3, 0.0), Image(8, 8, 3, 0.5)) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
    CHECK(psnr(Image(8, 8, 3, 0.0), Image(8, 8, 3, 0.5)) == doctest::Approx(6.0206).epsilon(1e-4));
    double prev = std::numeric_limits<double>::infinity();
    for (double e : {0.01, 0.05, 0.1, 0.3, 0.7}) {
        const double p = psnr(a, Image(8, 8, 3, 0.25 + e));
        CHECK(p < prev);
        prev = p;
    }
    CHECK_THROWS_AS(psnr(Image(8, 8, 3), Image(8, 9, 3)), std::invalid_argument);
}

TEST_CASE("ssim examples") {
    Rng rng(12);
    const Image a = random_image(24, 20, 3, rng);
    const Image b = random_image(24, 20, 3, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s < 1.0 - 1e-9);

    const double c1 = 1e-4;
    CHECK(ssim(Image(16, 16, 1, 0.0), Image(16, 16, 1, 1.0)) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));
    CHECK_THROWS_AS(ssim(Image(10, 20, 1), Image(10, 20, 1)), std::invalid_argument);
    CHECK_THROWS_AS(ssim(Image(16, 16, 1), Image(16, 17, 1)), std::invalid_argument);
}

TEST_CASE("flow of identical frames is zero") {
    const Image a = smooth_image(48, 40, 0, 0);
    const FlowField f = estimate_flow(a, a);
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        CHECK(std::abs(f.u[i]) < 1e-3);
        CHECK(std::abs(f.v[i]) < 1e-3);
    }
}

TEST_CASE("flow recovers a one pixel horizontal shift and is antisymmetric") {
    const Image a = smooth_image(64, 64, 0, 0);
    const Image b = smooth_image(64, 64, 1, 0);
    const FlowField fwd = estimate_flow(a, b);
    const FlowStats s = interior_stats(fwd, 8);
    CHECK(s.mean_u >= 0.7);
    CHECK(s.mean_u <= 1.3);
    CHECK(s.mean_abs_v < 0.2);

    const FlowField back = estimate_flow(b, a);
    double err = 0.0;
    int n = 0;
    for (int y = 8; y < 56; ++y) {
        for (int x = 8; x < 56; ++x) {
            const std::size_t i = fwd.index(x, y);
            err += std::hypot(fwd.u[i] + back.u[i], fwd.v[i] + back.v[i]);
            ++n;
        }
    }
    CHECK(err / n < 0.3);
    CHECK_THROWS_AS(estimate_flow(a, Image(64, 63, 3)), std::invalid_argument);
}

TEST_CASE("warp examples") {
    Rng rng(3);
    const Image img = random_image(10, 6, 3, rng);
    CHECK(warp(img, FlowField(10, 6)).data == img.data);

    // Vertical step edge between x = 4 and x = 5; flow (1, 0) moves it right.
    Image step(10, 6, 1);
    for (int y = 0; y < 6; ++y) {
        for (int x = 5; x < 10; ++x) step.at(x, y) = 1.0;
    }
    FlowField right(10, 6);
    std::fill(right.u.begin(), right.u.end(), 1.0);
    const Image moved = warp(step, right);
    for (int y = 0; y < 6; ++y) {
        for (int x = 1; x < 10; ++x) CHECK(moved.at(x, y) == (x >= 6 ? 1.0 : 0.0));
        CHECK(moved.at(0, y) == 0.0);  // sample at x = -1 clamps to the border
    }

    FlowField far(10, 6);
    std::fill(far.u.begin(), far.u.end(), -100.0);
    std::fill(far.v.begin(), far.v.end(), 100.0);
    const Image clamped = warp(img, far);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 10; ++x) CHECK(clamped.at(x, y, 1) == img.at(9, 0, 1));
    }
    CHECK_THROWS_AS(warp(img, FlowField(9, 6)), std::invalid_argument);
}

TEST_CASE("flow warp error") {
    const Image a = smooth_image(48, 48, 0, 0);
    CHECK(flow_warp_error({a, a, a}) < 1e-3);
    CHECK(flow_warp_error({a, a}) < 1e-9);

    Image brighter = a;
    for (auto& v : brighter.data) v += 0.1;
    CHECK(std::abs(flow_warp_error({brighter, brighter, brighter}) - flow_warp_error({a, a, a})) < 1e-9);

    std::vector<Image> moving, shuffled;
    for (int t = 0; t < 6; ++t) moving.push_back(smooth_image(48, 48, t, 0));
    for (int t : {0, 3, 1, 5, 2, 4}) shuffled.push_back(moving[t]);
    const double e_moving = flow_warp_error(moving), e_shuffled = flow_warp_error(shuffled);
    CHECK(e_moving >= 0.0);
    CHECK(e_moving < e_shuffled);
    CHECK_THROWS_AS(flow_warp_error({a}), std::invalid_argument);
}

TEST_CASE("flow estimation at unit intensity range converges poorly with alpha 15") {
    // Records why intensities are rescaled before Horn-Schunck.
    const Image a = smooth_image(64, 64, 0, 0);
    const Image b = smooth_image(64, 64, 1, 0);
    HornSchunckParams unit;
    unit.intensity_scale = 1.0;
    const FlowStats s = interior_stats(estimate_flow(a, b, unit), 8);
    MESSAGE("unit-range mean u = " << s.mean_u);
    CHECK(s.mean_u < 0.7);
}
