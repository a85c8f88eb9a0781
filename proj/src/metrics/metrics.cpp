#include "reimagine/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "reimagine/core/parallel.hpp"
#include "reimagine/core/tensor.hpp"

namespace reimagine::metrics {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
// Coarsest pyramid level is not shrunk below this many pixels per side.
constexpr int kMinLevelSize = 8;

void require_same_size(const Image& a, const Image& b, const char* what) {
    if (!a.same_size(b)) {
        throw std::invalid_argument(std::string(what) + ": size mismatch " + std::to_string(a.width) + "x" +
                                    std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                                    std::to_string(b.channels));
    }
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Valid-mode separable filtering of a single-channel image.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

struct Gray {
    int width = 0, height = 0;
    std::vector<double> data;

    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    double clamped(int x, int y) const {
        return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
    }
    double bilinear(double x, double y) const {
        x = std::clamp(x, 0.0, static_cast<double>(width - 1));
        y = std::clamp(y, 0.0, static_cast<double>(height - 1));
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        const int x1 = std::min(x0 + 1, width - 1), y1 = std::min(y0 + 1, height - 1);
        const double fx = x - x0, fy = y - y0;
        return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1 - fx) * at(x0, y1) + fx * at(x1, y1));
    }
};

Gray gray_of(const Image& img, double scale) {
    const Image g = to_gray(img);
    Gray out{g.width, g.height, g.data};
    for (auto& v : out.data) v *= scale;
    return out;
}

Gray downsample(const Gray& g) {
    Gray out{g.width / 2, g.height / 2, {}};
    out.data.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            out.data[static_cast<std::size_t>(y) * out.width + x] =
                0.25 * (g.at(2 * x, 2 * y) + g.at(2 * x + 1, 2 * y) + g.at(2 * x, 2 * y + 1) + g.at(2 * x + 1, 2 * y + 1));
        }
    }
    return out;
}

// Resamples a coarse flow onto a finer grid, doubling displacements.
FlowField upsample(const FlowField& coarse, int width, int height) {
    FlowField fine(width, height);
    Gray cu{coarse.width, coarse.height, coarse.u}, cv{coarse.width, coarse.height, coarse.v};
    const double sx = static_cast<double>(coarse.width) / width, sy = static_cast<double>(coarse.height) / height;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double cx = (x + 0.5) * sx - 0.5, cy = (y + 0.5) * sy - 0.5;
            fine.u[fine.index(x, y)] = 2.0 * cu.bilinear(cx, cy);
            fine.v[fine.index(x, y)] = 2.0 * cv.bilinear(cx, cy);
        }
    }
    return fine;
}

// Jacobi Horn-Schunck refinement of `flow` at one level. The second frame is
// warped toward the first by the current flow and an increment is solved for.
void refine_level(const Gray& first, const Gray& second, FlowField& flow, const HornSchunckParams& params) {
    const int w = first.width, h = first.height;
    Gray warped{w, h, std::vector<double>(first.data.size())};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            warped.data[i] = second.bilinear(x + flow.u[i], y + flow.v[i]);
        }
    }
    const std::size_t n = first.data.size();
    std::vector<double> ix(n), iy(n), it(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            ix[i] = 0.25 * (first.clamped(x + 1, y) - first.clamped(x - 1, y) + warped.clamped(x + 1, y) -
                            warped.clamped(x - 1, y));
            iy[i] = 0.25 * (first.clamped(x, y + 1) - first.clamped(x, y - 1) + warped.clamped(x, y + 1) -
                            warped.clamped(x, y - 1));
            it[i] = warped.data[i] - first.data[i];
        }
    }
    const double a2 = params.alpha * params.alpha;
    std::vector<double> du(n, 0.0), dv(n, 0.0), nu(n), nv(n);
    auto neighbor_mean = [&](const std::vector<double>& f, int x, int y) {
        auto at = [&](int xx, int yy) {
            return f[static_cast<std::size_t>(std::clamp(yy, 0, h - 1)) * w + std::clamp(xx, 0, w - 1)];
        };
        return (at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1)) / 6.0 +
               (at(x - 1, y - 1) + at(x + 1, y - 1) + at(x - 1, y + 1) + at(x + 1, y + 1)) / 12.0;
    };
    // Smoothness acts on the total flow, so neighbour averages include the
    // flow carried over from coarser levels.
    std::vector<double> base_du(n), base_dv(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            base_du[i] = neighbor_mean(flow.u, x, y) - flow.u[i];
            base_dv[i] = neighbor_mean(flow.v, x, y) - flow.v[i];
        }
    }
    for (int iter = 0; iter < params.iterations; ++iter) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = flow.index(x, y);
                const double ubar = neighbor_mean(du, x, y) + base_du[i];
                const double vbar = neighbor_mean(dv, x, y) + base_dv[i];
                const double r = (ix[i] * ubar + iy[i] * vbar + it[i]) / (a2 + ix[i] * ix[i] + iy[i] * iy[i]);
                nu[i] = ubar - ix[i] * r;
                nv[i] = vbar - iy[i] * r;
            }
        }
        du.swap(nu);
        dv.swap(nv);
    }
    for (std::size_t i = 0; i < n; ++i) {
        flow.u[i] += du[i];
        flow.v[i] += dv[i];
    }
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_size(a, b, "psnr");
    if (a.data.empty()) throw std::invalid_argument("psnr: empty images");
    CompensatedSum sum;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum.add(d * d);
    }
    const double mse = sum.value() / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    require_same_size(a, b, "ssim");
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw std::invalid_argument("ssim: images must be at least 11x11, got " + std::to_string(a.width) + "x" +
                                    std::to_string(a.height));
    }
    const Image ga = to_gray(a), gb = to_gray(b);
    const int w = ga.width, h = ga.height;
    const std::size_t n = ga.data.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = ga.data[i] * ga.data[i];
        bb[i] = gb.data[i] * gb.data[i];
        ab[i] = ga.data[i] * gb.data[i];
    }
    const auto k = gaussian_kernel();
    const auto mu_a = filter_valid(ga.data, w, h, k), mu_b = filter_valid(gb.data, w, h, k);
    const auto e_aa = filter_valid(aa, w, h, k), e_bb = filter_valid(bb, w, h, k), e_ab = filter_valid(ab, w, h, k);
    CompensatedSum sum;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
        sum.add(((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2)));
    }
    return sum.value() / static_cast<double>(mu_a.size());
}

FlowField estimate_flow(const Image& first, const Image& second, const HornSchunckParams& params) {
    require_same_size(first, second, "estimate_flow");
    if (params.levels < 1 || params.iterations < 0 || !(params.alpha > 0.0)) {
        throw std::invalid_argument("estimate_flow: invalid Horn-Schunck parameters");
    }
    std::vector<Gray> p1{gray_of(first, params.intensity_scale)}, p2{gray_of(second, params.intensity_scale)};
    while (static_cast<int>(p1.size()) < params.levels && p1.back().width / 2 >= kMinLevelSize &&
           p1.back().height / 2 >= kMinLevelSize) {
        p1.push_back(downsample(p1.back()));
        p2.push_back(downsample(p2.back()));
    }
    FlowField flow(p1.back().width, p1.back().height);
    for (int level = static_cast<int>(p1.size()) - 1; level >= 0; --level) {
        if (flow.width != p1[level].width || flow.height != p1[level].height) {
            flow = upsample(flow, p1[level].width, p1[level].height);
        }
        refine_level(p1[level], p2[level], flow, params);
    }
    return flow;
}

Image warp(const Image& image, const FlowField& flow) {
    if (flow.width != image.width || flow.height != image.height) {
        throw std::invalid_argument("warp: flow " + std::to_string(flow.width) + "x" + std::to_string(flow.height) +
                                    " does not match image " + std::to_string(image.width) + "x" +
                                    std::to_string(image.height));
    }
    Image out(image.width, image.height, image.channels);
    for (int c = 0; c < image.channels; ++c) {
        Gray plane{image.width, image.height, std::vector<double>(static_cast<std::size_t>(image.width) * image.height)};
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) plane.data[flow.index(x, y)] = image.at(x, y, c);
        }
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                const std::size_t i = flow.index(x, y);
                out.at(x, y, c) = plane.bilinear(x - flow.u[i], y - flow.v[i]);
            }
        }
    }
    return out;
}

double flow_warp_error(const std::vector<Image>& frames, const HornSchunckParams& params) {
    if (frames.size() < 2) throw std::invalid_argument("flow_warp_error: need at least 2 frames");
    for (const auto& f : frames) require_same_size(f, frames.front(), "flow_warp_error");
    std::vector<double> per_pair(frames.size() - 1);
    parallel_for(per_pair.size(), [&](std::size_t t) {
        const FlowField flow = estimate_flow(frames[t], frames[t + 1], params);
        const Image predicted = warp(frames[t], flow);
        CompensatedSum sum;
        for (std::size_t i = 0; i < predicted.data.size(); ++i) sum.add(std::abs(predicted.data[i] - frames[t + 1].data[i]));
        per_pair[t] = sum.value() / static_cast<double>(predicted.data.size());
    });
    CompensatedSum total;
    for (double e : per_pair) total.add(e);
    return total.value() / static_cast<double>(per_pair.size());
}

}  // namespace reimagine::metrics
