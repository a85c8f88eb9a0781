#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "reimagine/bodyrender/types.hpp"
#include "reimagine/codec/codec.hpp"
#include "reimagine/core/image.hpp"
#include "reimagine/core/tensor.hpp"

namespace reimagine::generator {

// Everything the velocity field is conditioned on for one frame.
struct ConditionSet {
    body::PoseParams pose;
    body::ShapeParams shape;
    codec::LatentImage front;
    codec::LatentImage back;
    Image normal_rgb;
};

struct TrainingExample {
    Tensor x0;
    ConditionSet cond;
};

struct ParamRef {
    std::string name;
    Tensor* tensor = nullptr;
    bool trainable = true;
};

// Re-evaluates fm_loss on a fixed batch and seed while parameter tensors are
// edited in place one at a time. The model must outlive the evaluator, and
// so must the batch unless an implementation copies it.
class LossEvaluator {
public:
    virtual ~LossEvaluator() = default;
    // `param` indexes parameters() and names the only tensor changed since
    // the evaluator was created.
    virtual double loss(std::size_t param) = 0;
};

// A velocity regressor v(x_t, t | C) with analytic parameter gradients.
class VelocityModel {
public:
    virtual ~VelocityModel() = default;

    virtual std::vector<ParamRef> parameters() = 0;
    virtual Tensor predict(const Tensor& x_t, double t, const ConditionSet& cond) const = 0;
    // Adds d/dparams of scale * sum((predict - target)^2) into `grads`
    // (aligned with parameters()) and returns sum((predict - target)^2).
    virtual double accumulate_gradient(const Tensor& x_t, double t, const ConditionSet& cond, const Tensor& target,
                                       double scale, std::vector<Tensor>& grads) const = 0;
    // The default recomputes fm_loss from scratch; models may cache work
    // that the edited tensor cannot affect.
    virtual std::unique_ptr<LossEvaluator> loss_evaluator(const std::vector<TrainingExample>& batch,
                                                          std::uint64_t seed) const;
};

// x_t = (1 - t) x0 + t eps.
Tensor interpolate(const Tensor& x0, const Tensor& eps, double t);
// v = eps - x0.
Tensor target_velocity(const Tensor& x0, const Tensor& eps);

// Draws (t, eps) for batch item `index` from the stream of `seed`.
struct FlowDraw {
    double t = 0.0;
    Tensor eps;
};
FlowDraw draw_flow_sample(std::uint64_t seed, std::size_t index, const std::vector<std::size_t>& shape);

// Mean squared velocity error over all entries of the batch.
double fm_loss(const VelocityModel& model, const std::vector<TrainingExample>& batch, std::uint64_t seed);
// Same loss; gradients (aligned with parameters()) are written to `grads`.
double fm_loss_and_gradient(VelocityModel& model, const std::vector<TrainingExample>& batch, std::uint64_t seed,
                            std::vector<Tensor>& grads);

class AdamOptimizer {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // Updates trainable parameters in place.
    void step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads, double learning_rate);

private:
    struct Moments {
        Tensor m, v;
        long steps = 0;
    };
    std::map<std::string, Moments> state_;
};

// One Adam step on fm_loss; returns the loss before the update. Non-finite
// gradients throw TrainingError naming the tensor.
double train_step(VelocityModel& model, AdamOptimizer& optimizer, const std::vector<TrainingExample>& batch,
                  double learning_rate, std::uint64_t seed);

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<std::size_t> sampled;  // flat indices over trainable entries
    std::size_t trainable_count = 0;
    // Entry with the largest relative error.
    std::string worst_name;
    double worst_analytic = 0.0, worst_numeric = 0.0;
};

// Central differences on a seeded sample of trainable entries. Relative error
// is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(VelocityModel& model, const std::vector<TrainingExample>& batch, double epsilon,
                           std::uint64_t seed, double fraction = 0.01, double floor = 1e-6);

// Descending time grid from 1 to 0.
struct FlowSchedule {
    std::vector<double> times;

    static FlowSchedule uniform(int steps);
    int steps() const { return static_cast<int>(times.size()) - 1; }
    void validate() const;
};

// Explicit Euler from pure noise at t = 1 down to t = 0.
Tensor sample(const VelocityModel& model, const ConditionSet& cond, const FlowSchedule& schedule,
              std::uint64_t seed, const std::vector<std::size_t>& shape);
// Euler from `x` at times[0] down to times.back().
Tensor integrate(const VelocityModel& model, const ConditionSet& cond, const std::vector<double>& times, Tensor x);

}  // namespace reimagine::generator
