#pragma once

#include <vector>

#include "reimagine/bodyrender/types.hpp"

namespace reimagine::body {

// World transform per joint: G_j = G_parent * Translate(rest_offset_j) * Rotate(theta_j).
// The root is additionally pre-translated by the pose's global translation.
std::vector<RigidTransform> forward_kinematics(const Skeleton& skeleton, const PoseParams& pose);

// Per-joint skinning transforms G_j * B_j^-1, where B_j is the rest (zero
// pose) transform. These are what skin_mesh consumes.
std::vector<RigidTransform> skinning_transforms(const Skeleton& skeleton, const PoseParams& pose);

// Linear blend skinning: v' = sum_j w_vj * T_j * (v + shape_basis * shape).
// `shape` is an additive offset on top of the template (the procedural
// humanoid bakes its own shape in, so pipelines pass zeros). It may be shorter
// than the basis; missing coefficients count as zero. Vertex normals are the
// renormalized area-weighted sum of incident posed face normals.
PosedMesh skin_mesh(const RiggedMesh& mesh, const std::vector<RigidTransform>& transforms,
                    const ShapeParams& shape);

// Convenience: skinning_transforms + skin_mesh with a zero shape offset.
PosedMesh pose_mesh(const Skeleton& skeleton, const RiggedMesh& mesh, const PoseParams& pose);

// Area-weighted vertex normals of an arbitrary triangle mesh.
std::vector<Vec3> vertex_normals(const std::vector<Vec3>& vertices, const std::vector<Triangle>& triangles);

}  // namespace reimagine::body
