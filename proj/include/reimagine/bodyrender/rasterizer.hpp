#pragma once

#include <array>
#include <vector>

#include "reimagine/bodyrender/types.hpp"
#include "reimagine/core/image.hpp"

namespace reimagine::body {

// Per-pixel visibility: the winning triangle (or -1) and its
// perspective-correct barycentric weights.
struct VisibilityBuffer {
    int width = 0;
    int height = 0;
    std::vector<int> triangle;
    std::vector<std::array<double, 3>> barycentric;
    std::vector<double> depth;
};

// Z-buffered rasterization with back-face culling. Pixel centers sit at
// (x + 0.5, y + 0.5); edges are inclusive; a strictly smaller depth wins, so
// equal depths resolve to the lower triangle index. Triangles with a vertex
// closer than the near plane are skipped.
VisibilityBuffer rasterize(const PosedMesh& mesh, const CameraParams& camera);

// World-space unit normals per covered pixel (barycentric interpolation of
// vertex normals, renormalized).
NormalMap render_normal_map(const PosedMesh& mesh, const CameraParams& camera);

// Covered pixels map n -> (n + 1) / 2; uncovered pixels are black.
Image encode_normals_rgb(const NormalMap& map);
// Inverse of encode_normals_rgb on `mask`.
NormalMap decode_normals_rgb(const Image& rgb, const std::vector<std::uint8_t>& mask);

constexpr double kAmbient = 0.2;

// Lambertian shading with ambient term: c * max(0, n.l) + 0.2 c, clamped to
// [0,1]. Background is black.
Image render_shaded(const PosedMesh& mesh, const CameraParams& camera, const Vec3& light_dir);

}  // namespace reimagine::body
