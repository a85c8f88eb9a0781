#include "reimagine/bodyrender/types.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "reimagine/core/errors.hpp"

namespace reimagine::body {

std::vector<double> PoseParams::flat_rotations() const {
    std::vector<double> out;
    out.reserve(joint_rotations.size() * 3);
    for (const auto& r : joint_rotations) {
        out.push_back(r.x());
        out.push_back(r.y());
        out.push_back(r.z());
    }
    return out;
}

void PoseParams::validate() const {
    for (std::size_t j = 0; j < joint_rotations.size(); ++j) {
        const double angle = joint_rotations[j].norm();
        if (!std::isfinite(angle) || angle >= 2.0 * std::numbers::pi) {
            throw std::invalid_argument("pose: joint " + std::to_string(j) + " rotation magnitude must be < 2*pi");
        }
    }
    if (!global_translation.allFinite()) throw std::invalid_argument("pose: non-finite translation");
}

void Skeleton::validate() const {
    const std::size_t n = parent.size();
    if (n == 0) throw ValidationError("skeleton: no joints");
    if (rest_offset.size() != n) throw ValidationError("skeleton: rest_offset count differs from joint count");
    if (parent[0] != kNoParent) throw ValidationError("skeleton: joint 0 must be the root");
    for (std::size_t j = 1; j < n; ++j) {
        if (parent[j] < 0 || static_cast<std::size_t>(parent[j]) >= n) {
            throw ValidationError("skeleton: joint " + std::to_string(j) + " has invalid parent");
        }
    }
    // Every chain of parents must reach the root within n hops.
    for (std::size_t j = 1; j < n; ++j) {
        int cur = static_cast<int>(j);
        std::size_t hops = 0;
        while (cur != 0) {
            cur = parent[cur];
            if (cur == kNoParent || ++hops > n) {
                throw ValidationError("skeleton: parent cycle through joint " + std::to_string(j));
            }
        }
    }
}

std::vector<int> Skeleton::topological_order() const {
    const std::size_t n = parent.size();
    std::vector<std::vector<int>> children(n);
    for (std::size_t j = 1; j < n; ++j) children[parent[j]].push_back(static_cast<int>(j));
    std::vector<int> order;
    order.reserve(n);
    order.push_back(0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (int c : children[order[i]]) order.push_back(c);
    }
    return order;
}

void RiggedMesh::validate(std::size_t joint_count, double weight_tolerance) const {
    const std::size_t nv = vertices.size();
    if (skin_weights.size() != nv) throw ValidationError("mesh: weight rows must match vertex count");
    if (vertex_colors.size() != nv) throw ValidationError("mesh: color count must match vertex count");
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        for (int idx : triangles[t]) {
            if (idx < 0 || static_cast<std::size_t>(idx) >= nv) {
                throw ValidationError("mesh: triangle " + std::to_string(t) + " index out of range");
            }
        }
    }
    for (std::size_t v = 0; v < nv; ++v) {
        double sum = 0.0;
        for (const auto& sw : skin_weights[v]) {
            if (sw.joint < 0 || static_cast<std::size_t>(sw.joint) >= joint_count) {
                throw ValidationError("mesh: vertex " + std::to_string(v) + " weight references unknown joint");
            }
            if (!(sw.weight >= 0.0)) throw ValidationError("mesh: vertex " + std::to_string(v) + " negative weight");
            sum += sw.weight;
        }
        if (std::abs(sum - 1.0) > weight_tolerance) {
            throw ValidationError("mesh: vertex " + std::to_string(v) + " weights sum to " + std::to_string(sum));
        }
    }
    for (std::size_t k = 0; k < shape_basis.size(); ++k) {
        if (shape_basis[k].size() != nv) {
            throw ValidationError("mesh: shape basis " + std::to_string(k) + " must have one row per vertex");
        }
    }
}

Mat3 axis_angle_to_matrix(const Vec3& axis_angle) {
    const double angle = axis_angle.norm();
    if (angle == 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

void CameraParams::validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) throw std::invalid_argument("camera: focal must be positive");
    if (width < 8 || height < 8) throw std::invalid_argument("camera: resolution must be at least 8x8");
    if (!rotation.allFinite() || !translation.allFinite()) throw std::invalid_argument("camera: non-finite extrinsics");
    const Mat3 rrt = rotation * rotation.transpose();
    if (!rrt.isApprox(Mat3::Identity(), 1e-6) || std::abs(rotation.determinant() - 1.0) > 1e-6) {
        throw std::invalid_argument("camera: rotation must be orthonormal with determinant +1");
    }
}

CameraParams CameraParams::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                                   int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitZ());
    right.normalize();
    const Vec3 true_up = right.cross(forward);
    CameraParams cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = true_up.transpose();
    cam.rotation.row(2) = (-forward).transpose();
    cam.translation = -(cam.rotation * eye);
    cam.focal = focal;
    cam.principal_point = Vec2(width / 2.0, height / 2.0);
    cam.width = width;
    cam.height = height;
    return cam;
}

CameraParams CameraParams::orbit(const Vec3& target, double radius, double azimuth_deg, double elevation_deg,
                                 double focal, int width, int height) {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    const Vec3 eye = target + radius * Vec3(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    return look_at(eye, target, Vec3::UnitY(), focal, width, height);
}

std::size_t NormalMap::covered_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

}  // namespace reimagine::body
