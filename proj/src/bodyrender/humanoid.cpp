#include "reimagine/bodyrender/humanoid.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace reimagine::body {

namespace {

constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "pelvis",     "spine1",      "spine2",      "neck",      "head",       "left_shoulder",
    "left_elbow", "left_wrist",  "right_shoulder", "right_elbow", "right_wrist", "left_hip",
    "left_knee",  "left_ankle",  "right_hip",   "right_knee", "right_ankle"};

struct JointSpec {
    int parent;
    Vec3 offset;  // at unit bone-length scale
};

const std::array<JointSpec, kJointCount>& joint_specs() {
    static const std::array<JointSpec, kJointCount> specs = {{
        {Skeleton::kNoParent, {0.0, 0.0, 0.0}},
        {kPelvis, {0.0, 0.12, 0.0}},
        {kSpine1, {0.0, 0.22, 0.0}},
        {kSpine2, {0.0, 0.20, 0.0}},
        {kNeck, {0.0, 0.10, 0.0}},
        {kSpine2, {0.17, 0.16, 0.0}},
        {kLeftShoulder, {0.27, 0.0, 0.0}},
        {kLeftElbow, {0.24, 0.0, 0.0}},
        {kSpine2, {-0.17, 0.16, 0.0}},
        {kRightShoulder, {-0.27, 0.0, 0.0}},
        {kRightElbow, {-0.24, 0.0, 0.0}},
        {kPelvis, {0.09, -0.05, 0.0}},
        {kLeftHip, {0.0, -0.40, 0.0}},
        {kLeftKnee, {0.0, -0.40, 0.0}},
        {kPelvis, {-0.09, -0.05, 0.0}},
        {kRightHip, {0.0, -0.40, 0.0}},
        {kRightKnee, {0.0, -0.40, 0.0}},
    }};
    return specs;
}

// Capsule endpoints are a joint's rest position plus a fixed offset, all at
// unit bone-length scale, so both endpoints scale with (1 + beta0).
struct CapsuleSpec {
    int owner;
    int start_joint;
    Vec3 start_offset;
    int end_joint;
    Vec3 end_offset;
    double radius;
    bool blend_with_parent;
};

const std::vector<CapsuleSpec>& capsule_specs() {
    static const std::vector<CapsuleSpec> specs = {
        {kPelvis, kRightHip, {0, 0.02, 0}, kLeftHip, {0, 0.02, 0}, 0.10, false},
        {kPelvis, kPelvis, {0, 0, 0}, kSpine1, {0, 0, 0}, 0.12, false},
        {kSpine1, kSpine1, {0, 0, 0}, kSpine2, {0, 0, 0}, 0.13, true},
        {kSpine2, kSpine2, {0, 0, 0}, kNeck, {0, -0.03, 0}, 0.12, true},
        {kSpine2, kRightShoulder, {0.02, 0, 0}, kLeftShoulder, {-0.02, 0, 0}, 0.075, false},
        {kNeck, kNeck, {0, 0, 0}, kHead, {0, 0, 0}, 0.05, true},
        {kHead, kHead, {0, 0.05, 0.01}, kHead, {0, 0.15, 0.01}, 0.095, true},
        {kLeftShoulder, kLeftShoulder, {0, 0, 0}, kLeftElbow, {0, 0, 0}, 0.05, true},
        {kLeftElbow, kLeftElbow, {0, 0, 0}, kLeftWrist, {0, 0, 0}, 0.04, true},
        {kLeftWrist, kLeftWrist, {0, 0, 0}, kLeftWrist, {0.08, 0, 0}, 0.035, true},
        {kRightShoulder, kRightShoulder, {0, 0, 0}, kRightElbow, {0, 0, 0}, 0.05, true},
        {kRightElbow, kRightElbow, {0, 0, 0}, kRightWrist, {0, 0, 0}, 0.04, true},
        {kRightWrist, kRightWrist, {0, 0, 0}, kRightWrist, {-0.08, 0, 0}, 0.035, true},
        {kLeftHip, kLeftHip, {0, 0, 0}, kLeftKnee, {0, 0, 0}, 0.07, true},
        {kLeftKnee, kLeftKnee, {0, 0, 0}, kLeftAnkle, {0, 0, 0}, 0.055, true},
        {kLeftAnkle, kLeftAnkle, {0, -0.03, -0.02}, kLeftAnkle, {0, -0.05, 0.12}, 0.04, true},
        {kRightHip, kRightHip, {0, 0, 0}, kRightKnee, {0, 0, 0}, 0.07, true},
        {kRightKnee, kRightKnee, {0, 0, 0}, kRightAnkle, {0, 0, 0}, 0.055, true},
        {kRightAnkle, kRightAnkle, {0, -0.03, -0.02}, kRightAnkle, {0, -0.05, 0.12}, 0.04, true},
    };
    return specs;
}

// Fraction of a capsule's axis (from its start) over which weights blend
// toward the parent joint.
constexpr double kBlendSpan = 0.2;

std::pair<Vec3, Vec3> perpendicular_frame(const Vec3& axis) {
    const Vec3 helper = std::abs(axis.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    const Vec3 u = helper.cross(axis).normalized();
    const Vec3 w = axis.cross(u);  // u x w = axis
    return {u, w};
}

void append_capsule(const CapsuleSpec& spec, const std::array<Vec3, kJointCount>& unit_positions, double bone_scale,
                    double girth_scale, int detail, const Skeleton& skeleton, RiggedMesh& mesh) {
    const Vec3 start_unit = unit_positions[spec.start_joint] + spec.start_offset;
    const Vec3 end_unit = unit_positions[spec.end_joint] + spec.end_offset;
    const Vec3 axis_unit = end_unit - start_unit;
    const double length_unit = axis_unit.norm();
    const Vec3 axis = axis_unit / length_unit;
    const auto [u, w] = perpendicular_frame(axis);
    const int segments = 8 * detail;
    const int cap_rings = 2 * detail;
    const int body_rings = 2 * detail + 1;

    // Ring profile: (t along the bone in [0,1], axial cap offset, ring radius),
    // the last two in units of the capsule radius.
    struct Ring {
        double t;
        double cap_axial;
        double rho;
    };
    std::vector<Ring> rings;
    for (int i = 1; i <= cap_rings; ++i) {
        const double lat = (std::numbers::pi / 2.0) * (1.0 - static_cast<double>(i) / (cap_rings + 1)) ;
        rings.push_back({0.0, -std::sin(lat), std::cos(lat)});
    }
    for (int i = 0; i < body_rings; ++i) {
        rings.push_back({static_cast<double>(i) / (body_rings - 1), 0.0, 1.0});
    }
    for (int i = cap_rings; i >= 1; --i) {
        const double lat = (std::numbers::pi / 2.0) * (1.0 - static_cast<double>(i) / (cap_rings + 1));
        rings.push_back({1.0, std::sin(lat), std::cos(lat)});
    }

    const int parent = skeleton.parent[spec.owner];
    auto weights_at = [&](double t) {
        std::vector<SkinWeight> ws;
        if (spec.blend_with_parent && parent != Skeleton::kNoParent && t < kBlendSpan) {
            const double wp = 0.5 * (1.0 - t / kBlendSpan);
            ws.push_back({parent, wp});
            ws.push_back({spec.owner, 1.0 - wp});
        } else {
            ws.push_back({spec.owner, 1.0});
        }
        return ws;
    };
    auto push_vertex = [&](double t, const Vec3& radial_unit_dir) {
        // v = s * A + g * R, both terms exact at the built shape.
        const Vec3 along = start_unit + t * axis_unit;
        const Vec3 radial = spec.radius * radial_unit_dir;
        mesh.vertices.push_back(bone_scale * along + girth_scale * radial);
        mesh.shape_basis[0].push_back(along);
        mesh.shape_basis[1].push_back(radial);
        mesh.skin_weights.push_back(weights_at(t));
        mesh.vertex_colors.push_back(Vec3(0.7, 0.7, 0.7));
        return static_cast<int>(mesh.vertices.size() - 1);
    };

    const int start_pole = push_vertex(0.0, -axis);
    const int first_ring = static_cast<int>(mesh.vertices.size());
    for (const auto& ring : rings) {
        for (int j = 0; j < segments; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / segments;
            const Vec3 dir = ring.cap_axial * axis + ring.rho * (std::cos(phi) * u + std::sin(phi) * w);
            push_vertex(ring.t, dir);
        }
    }
    const int end_pole = push_vertex(1.0, axis);
    const int ring_count = static_cast<int>(rings.size());
    auto ring_vertex = [&](int r, int j) { return first_ring + r * segments + (j % segments); };

    for (int j = 0; j < segments; ++j) {
        mesh.triangles.push_back({start_pole, ring_vertex(0, j + 1), ring_vertex(0, j)});
    }
    for (int r = 0; r + 1 < ring_count; ++r) {
        for (int j = 0; j < segments; ++j) {
            const int a = ring_vertex(r, j), b = ring_vertex(r, j + 1);
            const int c = ring_vertex(r + 1, j + 1), d = ring_vertex(r + 1, j);
            mesh.triangles.push_back({a, b, c});
            mesh.triangles.push_back({a, c, d});
        }
    }
    for (int j = 0; j < segments; ++j) {
        mesh.triangles.push_back({ring_vertex(ring_count - 1, j), ring_vertex(ring_count - 1, j + 1), end_pole});
    }
}

}  // namespace

std::string_view joint_name(int joint) {
    if (joint < 0 || joint >= kJointCount) throw std::out_of_range("joint_name: bad joint index");
    return kJointNames[joint];
}

std::pair<Skeleton, RiggedMesh> build_procedural_humanoid(const ShapeParams& shape, int detail) {
    if (shape.coefficients.empty()) throw std::invalid_argument("build_procedural_humanoid: empty shape vector");
    if (detail < 1) throw std::invalid_argument("build_procedural_humanoid: detail must be >= 1");
    const double bone_scale = 1.0 + shape.coefficients[0];
    const double girth_scale = 1.0 + (shape.coefficients.size() > 1 ? shape.coefficients[1] : 0.0);

    Skeleton skeleton;
    const auto& specs = joint_specs();
    std::array<Vec3, kJointCount> unit_positions;
    for (int j = 0; j < kJointCount; ++j) {
        skeleton.parent.push_back(specs[j].parent);
        skeleton.rest_offset.push_back(bone_scale * specs[j].offset);
        unit_positions[j] = specs[j].offset + (specs[j].parent >= 0 ? unit_positions[specs[j].parent] : Vec3::Zero());
    }

    RiggedMesh mesh;
    mesh.shape_basis.resize(shape.coefficients.size());
    for (const auto& capsule : capsule_specs()) {
        append_capsule(capsule, unit_positions, bone_scale, girth_scale, detail, skeleton, mesh);
    }
    for (std::size_t k = 2; k < mesh.shape_basis.size(); ++k) {
        mesh.shape_basis[k].assign(mesh.vertices.size(), Vec3::Zero());
    }
    return {std::move(skeleton), std::move(mesh)};
}

PoseParams canonical_a_pose() {
    PoseParams pose = PoseParams::zero(kJointCount);
    const double lower = std::numbers::pi / 4.0;
    pose.joint_rotations[kLeftShoulder] = Vec3(0, 0, -lower);
    pose.joint_rotations[kRightShoulder] = Vec3(0, 0, lower);
    return pose;
}

namespace {

std::pair<Skeleton, RiggedMesh> single_joint_model(RiggedMesh mesh) {
    Skeleton skeleton;
    skeleton.parent = {Skeleton::kNoParent};
    skeleton.rest_offset = {Vec3::Zero()};
    mesh.skin_weights.assign(mesh.vertices.size(), {SkinWeight{0, 1.0}});
    mesh.vertex_colors.assign(mesh.vertices.size(), Vec3(1.0, 1.0, 1.0));
    mesh.shape_basis.assign(1, std::vector<Vec3>(mesh.vertices.size(), Vec3::Zero()));
    return {std::move(skeleton), std::move(mesh)};
}

}  // namespace

std::pair<Skeleton, RiggedMesh> make_icosphere(int subdivisions, double radius, const Vec3& center) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                               {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                               {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& v : verts) v.normalize();
    std::vector<Triangle> tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                  {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                  {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoints.find(key);
            if (it != midpoints.end()) return it->second;
            verts.push_back((verts[a] + verts[b]).normalized());
            const int idx = static_cast<int>(verts.size() - 1);
            midpoints.emplace(key, idx);
            return idx;
        };
        std::vector<Triangle> next;
        next.reserve(tris.size() * 4);
        for (const auto& t : tris) {
            const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }
    RiggedMesh mesh;
    for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
    mesh.triangles = std::move(tris);
    return single_joint_model(std::move(mesh));
}

std::pair<Skeleton, RiggedMesh> make_quad(double half, double z) {
    RiggedMesh mesh;
    mesh.vertices = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
    mesh.triangles = {{0, 1, 2}, {0, 2, 3}};
    return single_joint_model(std::move(mesh));
}

}  // namespace reimagine::body
