#include "reimagine/temporal/refine.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "reimagine/core/parallel.hpp"
#include "reimagine/core/rng.hpp"
#include "reimagine/temporal/spectral.hpp"

namespace reimagine::temporal {

void RefineConfig::validate() const {
    if (!(strength > 0.0 && strength <= 1.0)) throw std::invalid_argument("refine: strength must be in (0, 1]");
    if (steps < 1) throw std::invalid_argument("refine: steps must be >= 1");
    if (!(active_fraction >= 0.0 && active_fraction <= 1.0)) {
        throw std::invalid_argument("refine: active_fraction must be in [0, 1]");
    }
    if (!(tau_t > 0.0) || !(tau_s > 0.0)) throw std::invalid_argument("refine: tau_t and tau_s must be > 0");
    if (median_window < 1 || median_window % 2 == 0) {
        throw std::invalid_argument("refine: median_window must be odd and >= 1");
    }
}

std::vector<double> restart_times(double strength, int steps) {
    const double start = 1.0 - strength;
    std::vector<double> times;
    if (!(start > 0.0)) return times;
    times.push_back(start);
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(steps - i) / steps;
        if (t < start - 1e-9) times.push_back(t);
    }
    return times;
}

int regularized_steps(double active_fraction, int active_steps) {
    return static_cast<int>(std::ceil(active_fraction * active_steps - 1e-9));
}

RefineResult redenoise(const codec::LatentVideo& latent, const generator::VelocityModel& model,
                       const std::vector<generator::ConditionSet>& conditions, const RefineConfig& config,
                       std::uint64_t seed) {
    config.validate();
    const int frames = latent.frames();
    if (conditions.size() != static_cast<std::size_t>(frames)) {
        throw std::invalid_argument("redenoise: need one condition per frame (" + std::to_string(frames) + "), got " +
                                    std::to_string(conditions.size()));
    }
    RefineResult result{latent, 0, 0};
    const std::vector<double> times = restart_times(config.strength, config.steps);
    if (times.empty()) return result;
    result.steps = static_cast<int>(times.size()) - 1;
    const int active = regularized_steps(config.active_fraction, result.steps);

    // An anchored first frame is held at its input latent for the whole run
    // so regularization cannot drift the identity it anchors.
    const bool hold_first = config.anchor_first_frame && config.regularizer != Regularizer::kNone && active > 0;
    const codec::LatentImage first = latent.frame(0);

    const double start = times.front();
    Rng rng(seed);
    auto& x = result.latent.data.storage();
    for (auto& v : x) v = (1.0 - start) * v + start * rng.normal();
    if (hold_first) result.latent.set_frame(0, first);
    const int first_moving = hold_first ? 1 : 0;

    FrequencyMask mask;
    if (config.regularizer == Regularizer::kSpectral && active > 0) {
        mask = build_mask(frames, latent.grid_height(), latent.grid_width(), config.tau_t, config.tau_s);
    }
    for (int k = 0; k < result.steps; ++k) {
        const double t = times[k], dt = times[k + 1] - times[k];
        std::vector<codec::LatentImage> velocity(frames);
        parallel_for(frames - first_moving, [&](std::size_t i) {
            const std::size_t f = i + first_moving;
            const int fi = static_cast<int>(f);
            velocity[f] = {model.predict(result.latent.frame(fi).data, t, conditions[f]), latent.patch};
        });
        for (int f = first_moving; f < frames; ++f) {
            codec::LatentImage cur = result.latent.frame(f);
            require_same_shape(cur.data, velocity[f].data, "redenoise");
            for (std::size_t i = 0; i < cur.data.size(); ++i) cur.data[i] += dt * velocity[f].data[i];
            result.latent.set_frame(f, cur);
        }
        if (k >= active || config.regularizer == Regularizer::kNone) continue;
        if (config.regularizer == Regularizer::kSpectral) {
            result.latent = spectral_filter(result.latent, mask, config.anchor_first_frame);
        } else {
            const codec::LatentImage keep = result.latent.frame(0);
            result.latent = median_filter_baseline(result.latent, config.median_window);
            if (config.anchor_first_frame) result.latent.set_frame(0, keep);
        }
        ++result.regularized;
    }
    return result;
}

}  // namespace reimagine::temporal
