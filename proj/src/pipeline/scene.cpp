#include "reimagine/pipeline/scene.hpp"

#include <cmath>
#include <numbers>

#include "reimagine/bodyrender/humanoid.hpp"
#include "reimagine/bodyrender/kinematics.hpp"
#include "reimagine/bodyrender/rasterizer.hpp"
#include "reimagine/codec/codec.hpp"
#include "reimagine/core/rng.hpp"

namespace reimagine::pipeline {

using body::Vec3;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Part part_of(int joint) {
    switch (joint) {
        case body::kNeck:
        case body::kHead:
        case body::kLeftWrist:
        case body::kRightWrist: return kSkin;
        case body::kLeftHip:
        case body::kLeftKnee:
        case body::kRightHip:
        case body::kRightKnee: return kPants;
        case body::kLeftAnkle:
        case body::kRightAnkle: return kShoes;
        default: return kShirt;
    }
}

}  // namespace

Subject make_subject(std::uint64_t seed, int index) {
    Rng rng(derive_seed(seed, 0x5375626aULL + static_cast<std::uint64_t>(index)));
    Subject s;
    s.index = index;
    s.shape.coefficients = {rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.2)};
    const double tone = rng.uniform(0.45, 0.95);
    s.palette[kSkin] = Vec3(tone, 0.8 * tone, 0.65 * tone);
    for (int p : {kShirt, kPants, kShoes}) {
        s.palette[p] = Vec3(rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0));
    }
    return s;
}

SubjectModel build_subject(const Subject& subject, int detail) {
    auto [skeleton, mesh] = body::build_procedural_humanoid(subject.shape, detail);
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        const auto& row = mesh.skin_weights[v];
        int best = row.front().joint;
        double w = row.front().weight;
        for (const auto& sw : row) {
            if (sw.weight > w) {
                w = sw.weight;
                best = sw.joint;
            }
        }
        mesh.vertex_colors[v] = subject.palette[part_of(best)];
    }
    return {std::move(skeleton), std::move(mesh)};
}

body::PoseParams walk_pose(double phase, double amplitude) {
    body::PoseParams p = body::PoseParams::zero(body::kJointCount);
    const double s = std::sin(kTwoPi * phase), c = std::cos(kTwoPi * phase);
    const double lower = 1.2;
    p.joint_rotations[body::kLeftHip] = Vec3(amplitude * s, 0, 0);
    p.joint_rotations[body::kRightHip] = Vec3(-amplitude * s, 0, 0);
    p.joint_rotations[body::kLeftKnee] = Vec3(-amplitude * 1.2 * std::max(0.0, c), 0, 0);
    p.joint_rotations[body::kRightKnee] = Vec3(-amplitude * 1.2 * std::max(0.0, -c), 0, 0);
    p.joint_rotations[body::kLeftShoulder] = Vec3(-0.8 * amplitude * s, 0, -lower);
    p.joint_rotations[body::kRightShoulder] = Vec3(0.8 * amplitude * s, 0, lower);
    p.joint_rotations[body::kLeftElbow] = Vec3(0, 0.3 + 0.2 * amplitude * (1 + s), 0);
    p.joint_rotations[body::kRightElbow] = Vec3(0, -0.3 - 0.2 * amplitude * (1 - s), 0);
    p.joint_rotations[body::kSpine1] = Vec3(0, 0.15 * amplitude * s, 0);
    return p;
}

body::PoseParams turn_pose(double phase, double amplitude) {
    body::PoseParams p = body::PoseParams::zero(body::kJointCount);
    const double s = std::sin(kTwoPi * phase);
    p.joint_rotations[body::kLeftShoulder] = Vec3(0, 0, -1.0);
    p.joint_rotations[body::kRightShoulder] = Vec3(0, 0, 1.0);
    p.joint_rotations[body::kSpine1] = Vec3(0, amplitude * s, 0);
    p.joint_rotations[body::kNeck] = Vec3(0, 0.5 * amplitude * s, 0);
    return p;
}

std::vector<body::PoseParams> pose_track(const PoseTrack& track, int frames) {
    std::vector<body::PoseParams> out;
    for (int k = 0; k < frames; ++k) {
        const double phase = track.phase_start + k * track.phase_step;
        if (track.generator == "walk") {
            out.push_back(walk_pose(phase, track.amplitude));
        } else if (track.generator == "turn") {
            out.push_back(turn_pose(phase, track.amplitude));
        } else {
            out.push_back(walk_pose(track.phase_start, track.amplitude));
        }
    }
    return out;
}

body::CameraParams view_camera(const CameraTrack& geometry, double azimuth_deg, int resolution) {
    return body::CameraParams::orbit(Vec3(0.0, -0.03, 0.0), geometry.radius, azimuth_deg, geometry.elevation,
                                     geometry.focal * resolution, resolution, resolution);
}

std::vector<body::CameraParams> camera_track(const CameraTrack& geometry, int resolution) {
    std::vector<body::CameraParams> out;
    for (int k = 0; k < geometry.frames; ++k) {
        out.push_back(view_camera(geometry, geometry.azimuth_start + k * geometry.azimuth_step, resolution));
    }
    return out;
}

Vec3 light_direction() { return Vec3(0.3, 0.5, 0.8).normalized(); }

RenderedView render_view(const SubjectModel& model, const body::PoseParams& pose, const body::CameraParams& camera) {
    const body::PosedMesh posed = body::pose_mesh(model.skeleton, model.mesh, pose);
    return {body::render_shaded(posed, camera, light_direction()),
            body::encode_normals_rgb(body::render_normal_map(posed, camera))};
}

Canonicals render_canonicals(const SubjectModel& model, const CameraTrack& geometry, int resolution) {
    const body::PoseParams a = body::canonical_a_pose();
    return {render_view(model, a, view_camera(geometry, 0.0, resolution)).shaded,
            render_view(model, a, view_camera(geometry, 180.0, resolution)).shaded};
}

generator::ConditionSet make_condition(const Canonicals& canonicals, const Subject& subject,
                                       const body::PoseParams& pose, const Image& normal_rgb, int patch) {
    generator::ConditionSet c;
    c.pose = pose;
    c.shape = subject.shape;
    c.front = codec::encode(canonicals.front, patch);
    c.back = codec::encode(canonicals.back, patch);
    c.normal_rgb = normal_rgb;
    return c;
}

}  // namespace reimagine::pipeline
