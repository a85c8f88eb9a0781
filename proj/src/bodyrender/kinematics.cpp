#include "reimagine/bodyrender/kinematics.hpp"

#include <stdexcept>
#include <string>

namespace reimagine::body {

std::vector<RigidTransform> forward_kinematics(const Skeleton& skeleton, const PoseParams& pose) {
    const std::size_t n = skeleton.joint_count();
    if (pose.joint_count() != n) {
        throw std::invalid_argument("forward_kinematics: pose has " + std::to_string(pose.joint_count()) +
                                    " joints, skeleton has " + std::to_string(n));
    }
    std::vector<RigidTransform> world(n);
    for (int j : skeleton.topological_order()) {
        const RigidTransform local = RigidTransform::translate(skeleton.rest_offset[j]) *
                                     RigidTransform::rotate(axis_angle_to_matrix(pose.joint_rotations[j]));
        const int p = skeleton.parent[j];
        if (p == Skeleton::kNoParent) {
            world[j] = RigidTransform::translate(pose.global_translation) * local;
        } else {
            world[j] = world[p] * local;
        }
    }
    return world;
}

std::vector<RigidTransform> skinning_transforms(const Skeleton& skeleton, const PoseParams& pose) {
    const auto posed = forward_kinematics(skeleton, pose);
    const auto rest = forward_kinematics(skeleton, PoseParams::zero(skeleton.joint_count()));
    std::vector<RigidTransform> out(posed.size());
    for (std::size_t j = 0; j < posed.size(); ++j) out[j] = posed[j] * rest[j].inverse();
    return out;
}

std::vector<Vec3> vertex_normals(const std::vector<Vec3>& vertices, const std::vector<Triangle>& triangles) {
    std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
    for (const auto& t : triangles) {
        // Unnormalized cross product carries twice the face area.
        const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        for (int idx : t) normals[idx] += n;
    }
    for (auto& n : normals) {
        const double len = n.norm();
        n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }
    return normals;
}

PosedMesh skin_mesh(const RiggedMesh& mesh, const std::vector<RigidTransform>& transforms,
                    const ShapeParams& shape) {
    if (shape.coefficients.size() > mesh.shape_basis.size()) {
        throw std::invalid_argument("skin_mesh: more shape coefficients than basis vectors");
    }
    PosedMesh out;
    out.vertices.resize(mesh.vertices.size());
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        Vec3 rest = mesh.vertices[v];
        for (std::size_t k = 0; k < shape.coefficients.size(); ++k) {
            if (shape.coefficients[k] != 0.0) rest += shape.coefficients[k] * mesh.shape_basis[k][v];
        }
        // Accumulated as rest + sum_j w_j (T_j rest - rest), equal to the blend
        // for unit weight rows and exact for identity transforms.
        Vec3 p = rest;
        for (const auto& sw : mesh.skin_weights[v]) {
            if (static_cast<std::size_t>(sw.joint) >= transforms.size()) {
                throw std::invalid_argument("skin_mesh: transform count does not cover joint " +
                                            std::to_string(sw.joint));
            }
            p += sw.weight * (transforms[sw.joint].apply(rest) - rest);
        }
        out.vertices[v] = p;
    }
    out.triangles = mesh.triangles;
    out.colors = mesh.vertex_colors;
    out.normals = vertex_normals(out.vertices, out.triangles);
    return out;
}

PosedMesh pose_mesh(const Skeleton& skeleton, const RiggedMesh& mesh, const PoseParams& pose) {
    return skin_mesh(mesh, skinning_transforms(skeleton, pose), ShapeParams{});
}

}  // namespace reimagine::body
