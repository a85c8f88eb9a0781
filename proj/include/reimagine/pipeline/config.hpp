#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "reimagine/generator/denoiser.hpp"
#include "reimagine/temporal/refine.hpp"

namespace reimagine::pipeline {

// One value of the key/value config dialect: integers, reals, booleans,
// double-quoted strings and flat numeric arrays.
struct ConfigValue {
    std::variant<std::int64_t, double, bool, std::string, std::vector<double>> value;
    int line = 0;
};

// section -> key -> value; top-level keys live in section "".
using ConfigDocument = std::map<std::string, std::map<std::string, ConfigValue>>;

// TOML-style text: `[section]` headers, `key = value` lines, `#` comments.
// Throws ParseError with the offending line. Section header lines are
// recorded in `header_lines` when given.
ConfigDocument parse_config_document(const std::string& text, std::map<std::string, int>* header_lines = nullptr);

struct DatasetConfig {
    int subjects = 2;
    int poses_per_subject = 32;
    int views_per_pose = 16;
    int resolution = 64;
    std::uint64_t seed = 1;
    std::string path = "dataset";  // relative to the output directory
};

struct CameraTrack {
    double radius = 3.2;
    double elevation = 5.0;
    double azimuth_start = 11.25;
    double azimuth_step = 22.5;
    int frames = 16;
    // Focal length in units of the image width.
    double focal = 1.4;
};

struct PoseTrack {
    std::string generator = "walk";  // walk, turn or static
    double phase_start = 0.05;
    double phase_step = 0.0625;  // walk cycles per frame
    double amplitude = 0.5;      // radians of hip swing
};

struct TrainConfig {
    int epochs = 40;
    int batch = 8;
    double learning_rate = 1e-3;
    int adapter_rank = 0;
    std::string base_weights;  // when set, training starts from these weights
};

struct ExperimentConfig {
    std::string out = "run";
    std::uint64_t seed = 7;
    int subject = 0;  // dataset subject used by generate and refine
    int detail = 2;
    DatasetConfig dataset;
    CameraTrack camera;
    PoseTrack pose;
    generator::ModelConfig model;
    TrainConfig train;
    int sample_steps = 20;
    temporal::RefineConfig refine;

    // Throws ValidationError on inconsistent settings.
    void validate() const;
};

// Unknown sections or keys and type mismatches throw ParseError; the parsed
// config is validated.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Canonical text form; parse_experiment_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);

}  // namespace reimagine::pipeline
