#pragma once

#include <cstdint>
#include <vector>

#include "reimagine/codec/codec.hpp"
#include "reimagine/generator/flow.hpp"

namespace reimagine::temporal {

enum class Regularizer { kNone, kSpectral, kMedian };

struct RefineConfig {
    // 1 means no injected noise; the restart time is 1 - strength.
    double strength = 0.7;
    int steps = 20;
    // Share of the restarted steps followed by a regularizer pass.
    double active_fraction = 0.35;
    double tau_t = 0.06;
    double tau_s = 0.12;
    bool anchor_first_frame = true;
    Regularizer regularizer = Regularizer::kSpectral;
    int median_window = 3;

    void validate() const;
};

// Integration times from 1 - strength down to 0: the restart time followed by
// the points of the uniform grid below it. Grid points within 1e-9 of the
// restart time are merged into it.
std::vector<double> restart_times(double strength, int steps);

// Number of leading steps that are regularized out of `active_steps`.
int regularized_steps(double active_fraction, int active_steps);

struct RefineResult {
    codec::LatentVideo latent;
    int steps = 0;
    int regularized = 0;
};

// Noises the video to the restart time framewise, then integrates the
// velocity field frame by frame (conditions[t] for frame t), applying the
// configured regularizer after each of the first regularized_steps steps.
RefineResult redenoise(const codec::LatentVideo& latent, const generator::VelocityModel& model,
                       const std::vector<generator::ConditionSet>& conditions, const RefineConfig& config,
                       std::uint64_t seed);

}  // namespace reimagine::temporal
