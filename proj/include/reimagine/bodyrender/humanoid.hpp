#pragma once

#include <array>
#include <string_view>
#include <utility>

#include "reimagine/bodyrender/types.hpp"

namespace reimagine::body {

// Joint layout of the procedural humanoid.
enum Joint : int {
    kPelvis = 0,
    kSpine1,
    kSpine2,
    kNeck,
    kHead,
    kLeftShoulder,
    kLeftElbow,
    kLeftWrist,
    kRightShoulder,
    kRightElbow,
    kRightWrist,
    kLeftHip,
    kLeftKnee,
    kLeftAnkle,
    kRightHip,
    kRightKnee,
    kRightAnkle,
    kJointCount
};

std::string_view joint_name(int joint);

// Capsule-per-bone humanoid. The body faces +z with +y up and its left side
// on +x; the pelvis sits at the origin. Shape coefficient 0 scales every bone
// length by (1 + beta0), coefficient 1 scales capsule radii by (1 + beta1);
// further coefficients are ignored. Vertices are linear in the two
// coefficients and shape_basis holds the exact per-coefficient directions.
// `detail` controls tessellation (8*detail segments around each capsule).
std::pair<Skeleton, RiggedMesh> build_procedural_humanoid(const ShapeParams& shape, int detail);

// A-pose used for canonical appearance renders (arms lowered 45 degrees).
PoseParams canonical_a_pose();

// Geometric primitives, skinned rigidly to joint 0 of a single-joint skeleton.
std::pair<Skeleton, RiggedMesh> make_icosphere(int subdivisions, double radius, const Vec3& center);
// Unit-facing quad in the plane z = `z` spanning [-half, half]^2, facing +z.
std::pair<Skeleton, RiggedMesh> make_quad(double half, double z);

}  // namespace reimagine::body
