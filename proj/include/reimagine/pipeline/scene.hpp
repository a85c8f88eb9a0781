#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "reimagine/bodyrender/types.hpp"
#include "reimagine/core/image.hpp"
#include "reimagine/generator/flow.hpp"
#include "reimagine/pipeline/config.hpp"

namespace reimagine::pipeline {

// Body parts that get their own palette color.
enum Part : int { kSkin = 0, kShirt, kPants, kShoes, kPartCount };

struct Subject {
    int index = 0;
    body::ShapeParams shape;
    std::array<body::Vec3, kPartCount> palette;
};

// Shape and palette of subject `index`, drawn from its own stream of `seed`.
Subject make_subject(std::uint64_t seed, int index);

struct SubjectModel {
    body::Skeleton skeleton;
    body::RiggedMesh mesh;
};

// Procedural humanoid with the subject's shape baked in and vertices colored
// by the part of their dominant joint.
SubjectModel build_subject(const Subject& subject, int detail);

// Walk cycle at `phase` (cycles): opposed hip and shoulder swing, knee and
// elbow flexion, arms lowered from the rest pose.
body::PoseParams walk_pose(double phase, double amplitude);
// Arms lowered, torso twisting about the vertical axis.
body::PoseParams turn_pose(double phase, double amplitude);

std::vector<body::PoseParams> pose_track(const PoseTrack& track, int frames);

// Orbit camera around the body center.
body::CameraParams view_camera(const CameraTrack& geometry, double azimuth_deg, int resolution);
std::vector<body::CameraParams> camera_track(const CameraTrack& geometry, int resolution);

// Fixed world-space key light.
body::Vec3 light_direction();

struct RenderedView {
    Image shaded;
    Image normal_rgb;
};
RenderedView render_view(const SubjectModel& model, const body::PoseParams& pose, const body::CameraParams& camera);

// A-pose renders from the front (azimuth 0) and back (azimuth 180) cameras.
struct Canonicals {
    Image front;
    Image back;
};
Canonicals render_canonicals(const SubjectModel& model, const CameraTrack& geometry, int resolution);

generator::ConditionSet make_condition(const Canonicals& canonicals, const Subject& subject,
                                       const body::PoseParams& pose, const Image& normal_rgb, int patch);

}  // namespace reimagine::pipeline
