#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reimagine/bodyrender/types.hpp"
#include "reimagine/core/image.hpp"
#include "reimagine/generator/flow.hpp"
#include "reimagine/pipeline/config.hpp"
#include "reimagine/pipeline/scene.hpp"

namespace reimagine::pipeline {

struct SyntheticSample {
    int subject = 0;
    int pose_index = 0;
    int view_index = 0;
    double azimuth = 0.0;
    body::PoseParams pose;
    Image normal_rgb;
    Image target;
};

struct SubjectRecord {
    Subject subject;
    Canonicals canonicals;
};

struct Dataset {
    int resolution = 0;
    std::vector<SubjectRecord> subjects;
    std::vector<SyntheticSample> samples;
};

// Azimuth of view j out of v: 360 j / v degrees.
double view_azimuth(int view, int views);

// Renders every subject and (pose, view) tuple, then writes PPM images and
// manifest.json under `dir`. Poses are walk-cycle draws from the seed's
// stream; views orbit at view_azimuth.
Dataset build_synthetic_dataset(const ExperimentConfig& config);
void write_dataset(const Dataset& dataset, const ExperimentConfig& config, const std::filesystem::path& dir);

// Reads manifest.json and every image it references. Missing files throw
// IoError; inconsistent contents throw FormatError.
Dataset load_dataset(const std::filesystem::path& dir);

// Flow-matching examples: target latents with their conditions.
std::vector<generator::TrainingExample> training_examples(const Dataset& dataset, int patch);

}  // namespace reimagine::pipeline
