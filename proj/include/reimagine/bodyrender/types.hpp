#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace reimagine::body {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Triangle = std::array<int, 3>;

// Articulation: one axis-angle rotation per joint plus a root translation.
struct PoseParams {
    std::vector<Vec3> joint_rotations;
    Vec3 global_translation = Vec3::Zero();

    static PoseParams zero(std::size_t joints) { return {std::vector<Vec3>(joints, Vec3::Zero()), Vec3::Zero()}; }
    std::size_t joint_count() const { return joint_rotations.size(); }
    // Joint rotations flattened to 3J values (the translation is not included).
    std::vector<double> flat_rotations() const;
    void validate() const;
};

struct ShapeParams {
    std::vector<double> coefficients;
};

struct Skeleton {
    static constexpr int kNoParent = -1;

    std::vector<int> parent;
    std::vector<Vec3> rest_offset;

    std::size_t joint_count() const { return parent.size(); }
    // Throws ValidationError unless the parents form a tree rooted at joint 0.
    void validate() const;
    // Joint indices ordered so every parent precedes its children.
    std::vector<int> topological_order() const;
};

struct SkinWeight {
    int joint = 0;
    double weight = 0.0;
    bool operator==(const SkinWeight&) const = default;
};

struct RiggedMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<std::vector<SkinWeight>> skin_weights;
    std::vector<Vec3> vertex_colors;
    // shape_basis[k][v]: displacement of vertex v per unit of shape coefficient k.
    std::vector<std::vector<Vec3>> shape_basis;

    std::size_t vertex_count() const { return vertices.size(); }
    // Throws ValidationError on any broken invariant. Weight rows must sum to
    // one within `weight_tolerance`.
    void validate(std::size_t joint_count, double weight_tolerance = 1e-6) const;
};

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }
    static RigidTransform translate(const Vec3& t) { return {Mat3::Identity(), t}; }
    static RigidTransform rotate(const Mat3& r) { return {r, Vec3::Zero()}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Vec3 apply_direction(const Vec3& d) const { return rotation * d; }
    RigidTransform operator*(const RigidTransform& rhs) const {
        return {rotation * rhs.rotation, rotation * rhs.translation + translation};
    }
    RigidTransform inverse() const {
        const Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }
};

// Rodrigues rotation of an axis-angle vector.
Mat3 axis_angle_to_matrix(const Vec3& axis_angle);

// Skinned, posed triangle soup ready for rasterization.
struct PosedMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;
    std::vector<Triangle> triangles;
    std::vector<Vec3> colors;
};

// Pinhole camera. The camera looks down its local -z axis with +y up; image
// rows grow downward.
struct CameraParams {
    Mat3 rotation = Mat3::Identity();  // world -> camera
    Vec3 translation = Vec3::Zero();
    double focal = 1.0;
    Vec2 principal_point = Vec2::Zero();
    int width = 0;
    int height = 0;

    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    Vec3 center() const { return -(rotation.transpose() * translation); }
    void validate() const;

    // Camera on a sphere around `target`. Azimuth 0 sits on +z looking toward
    // -z; positive azimuth moves toward +x. Angles in degrees.
    static CameraParams orbit(const Vec3& target, double radius, double azimuth_deg, double elevation_deg,
                              double focal, int width, int height);
    static CameraParams look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                                int height);
};

struct NormalMap {
    int width = 0;
    int height = 0;
    std::vector<Vec3> normals;
    std::vector<std::uint8_t> mask;

    NormalMap() = default;
    NormalMap(int w, int h)
        : width(w), height(h), normals(static_cast<std::size_t>(w) * h, Vec3::Zero()),
          mask(static_cast<std::size_t>(w) * h, 0) {}
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    std::size_t covered_count() const;
};

}  // namespace reimagine::body
