#include "reimagine/bodyrender/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "reimagine/core/parallel.hpp"

namespace reimagine::body {

namespace {

constexpr double kNearPlane = 1e-3;
constexpr int kBandRows = 16;

struct ProjectedTriangle {
    int index;
    std::array<Vec2, 3> screen;
    std::array<double, 3> inv_depth;
    int min_x, max_x, min_y, max_y;
    double area;
};

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

std::vector<ProjectedTriangle> project(const PosedMesh& mesh, const CameraParams& camera) {
    std::vector<Vec3> cam(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) cam[i] = camera.to_camera(mesh.vertices[i]);

    std::vector<ProjectedTriangle> out;
    out.reserve(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Vec3& p0 = cam[tri[0]];
        const Vec3& p1 = cam[tri[1]];
        const Vec3& p2 = cam[tri[2]];
        if (-p0.z() < kNearPlane || -p1.z() < kNearPlane || -p2.z() < kNearPlane) continue;
        // Camera at the origin: front faces have normals pointing back at it.
        const Vec3 n = (p1 - p0).cross(p2 - p0);
        if (n.dot(p0) >= 0.0) continue;

        ProjectedTriangle pt;
        pt.index = static_cast<int>(t);
        const std::array<const Vec3*, 3> ps = {&p0, &p1, &p2};
        double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
        double lo_y = lo_x, hi_y = -lo_x;
        for (int k = 0; k < 3; ++k) {
            const double depth = -ps[k]->z();
            pt.inv_depth[k] = 1.0 / depth;
            pt.screen[k] = Vec2(camera.principal_point.x() + camera.focal * ps[k]->x() / depth,
                                camera.principal_point.y() - camera.focal * ps[k]->y() / depth);
            lo_x = std::min(lo_x, pt.screen[k].x());
            hi_x = std::max(hi_x, pt.screen[k].x());
            lo_y = std::min(lo_y, pt.screen[k].y());
            hi_y = std::max(hi_y, pt.screen[k].y());
        }
        pt.area = edge(pt.screen[0], pt.screen[1], pt.screen[2]);
        if (pt.area == 0.0 || !std::isfinite(pt.area)) continue;
        pt.min_x = std::max(0, static_cast<int>(std::floor(lo_x - 0.5)));
        pt.max_x = std::min(camera.width - 1, static_cast<int>(std::ceil(hi_x - 0.5)));
        pt.min_y = std::max(0, static_cast<int>(std::floor(lo_y - 0.5)));
        pt.max_y = std::min(camera.height - 1, static_cast<int>(std::ceil(hi_y - 0.5)));
        if (pt.min_x > pt.max_x || pt.min_y > pt.max_y) continue;
        out.push_back(pt);
    }
    return out;
}

}  // namespace

VisibilityBuffer rasterize(const PosedMesh& mesh, const CameraParams& camera) {
    camera.validate();
    VisibilityBuffer vb;
    vb.width = camera.width;
    vb.height = camera.height;
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    vb.triangle.assign(pixels, -1);
    vb.barycentric.assign(pixels, {0.0, 0.0, 0.0});
    vb.depth.assign(pixels, std::numeric_limits<double>::infinity());

    const auto tris = project(mesh, camera);
    const int bands = (camera.height + kBandRows - 1) / kBandRows;
    // Each band owns a disjoint set of rows and visits triangles in index
    // order, so the output does not depend on how bands are scheduled.
    parallel_for(static_cast<std::size_t>(bands), [&](std::size_t band) {
        const int row_lo = static_cast<int>(band) * kBandRows;
        const int row_hi = std::min(camera.height - 1, row_lo + kBandRows - 1);
        for (const auto& pt : tris) {
            const int y0 = std::max(pt.min_y, row_lo);
            const int y1 = std::min(pt.max_y, row_hi);
            for (int y = y0; y <= y1; ++y) {
                for (int x = pt.min_x; x <= pt.max_x; ++x) {
                    const Vec2 p(x + 0.5, y + 0.5);
                    const double l0 = edge(pt.screen[1], pt.screen[2], p) / pt.area;
                    const double l1 = edge(pt.screen[2], pt.screen[0], p) / pt.area;
                    const double l2 = edge(pt.screen[0], pt.screen[1], p) / pt.area;
                    if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
                    const double w0 = l0 * pt.inv_depth[0];
                    const double w1 = l1 * pt.inv_depth[1];
                    const double w2 = l2 * pt.inv_depth[2];
                    const double inv = w0 + w1 + w2;
                    const double depth = 1.0 / inv;
                    const std::size_t idx = static_cast<std::size_t>(y) * camera.width + x;
                    if (depth < vb.depth[idx]) {
                        vb.depth[idx] = depth;
                        vb.triangle[idx] = pt.index;
                        vb.barycentric[idx] = {w0 / inv, w1 / inv, w2 / inv};
                    }
                }
            }
        }
    });
    return vb;
}

NormalMap render_normal_map(const PosedMesh& mesh, const CameraParams& camera) {
    const auto vb = rasterize(mesh, camera);
    NormalMap map(camera.width, camera.height);
    for (std::size_t i = 0; i < vb.triangle.size(); ++i) {
        const int t = vb.triangle[i];
        if (t < 0) continue;
        const auto& tri = mesh.triangles[t];
        const auto& b = vb.barycentric[i];
        Vec3 n = b[0] * mesh.normals[tri[0]] + b[1] * mesh.normals[tri[1]] + b[2] * mesh.normals[tri[2]];
        double len = n.norm();
        if (len < 1e-12) {
            n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
            len = n.norm();
        }
        if (len < 1e-300) continue;
        map.normals[i] = n / len;
        map.mask[i] = 1;
    }
    return map;
}

Image encode_normals_rgb(const NormalMap& map) {
    Image img(map.width, map.height, 3);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const std::size_t i = map.index(x, y);
            if (!map.mask[i]) continue;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = (map.normals[i][c] + 1.0) / 2.0;
        }
    }
    return img;
}

NormalMap decode_normals_rgb(const Image& rgb, const std::vector<std::uint8_t>& mask) {
    if (rgb.channels != 3) throw std::invalid_argument("decode_normals_rgb: expected RGB image");
    if (mask.size() != static_cast<std::size_t>(rgb.width) * rgb.height) {
        throw std::invalid_argument("decode_normals_rgb: mask size mismatch");
    }
    NormalMap map(rgb.width, rgb.height);
    map.mask = mask;
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            const std::size_t i = map.index(x, y);
            if (!mask[i]) continue;
            for (int c = 0; c < 3; ++c) map.normals[i][c] = 2.0 * rgb.at(x, y, c) - 1.0;
        }
    }
    return map;
}

Image render_shaded(const PosedMesh& mesh, const CameraParams& camera, const Vec3& light_dir) {
    if (std::abs(light_dir.norm() - 1.0) > 1e-6) throw std::invalid_argument("render_shaded: light_dir must be unit");
    const auto vb = rasterize(mesh, camera);
    Image img(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * camera.width + x;
            const int t = vb.triangle[i];
            if (t < 0) continue;
            const auto& tri = mesh.triangles[t];
            const auto& b = vb.barycentric[i];
            Vec3 n = b[0] * mesh.normals[tri[0]] + b[1] * mesh.normals[tri[1]] + b[2] * mesh.normals[tri[2]];
            const double len = n.norm();
            if (len > 1e-12) n /= len;
            const Vec3 color = b[0] * mesh.colors[tri[0]] + b[1] * mesh.colors[tri[1]] + b[2] * mesh.colors[tri[2]];
            const double diffuse = std::max(0.0, n.dot(light_dir));
            for (int c = 0; c < 3; ++c) {
                img.at(x, y, c) = std::clamp(color[c] * diffuse + kAmbient * color[c], 0.0, 1.0);
            }
        }
    }
    return img;
}

}  // namespace reimagine::body
