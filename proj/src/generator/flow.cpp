#include "reimagine/generator/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "reimagine/core/errors.hpp"
#include "reimagine/core/parallel.hpp"
#include "reimagine/core/rng.hpp"

namespace reimagine::generator {

Tensor interpolate(const Tensor& x0, const Tensor& eps, double t) {
    require_same_shape(x0, eps, "interpolate");
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t must be in [0, 1]");
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * eps[i];
    return out;
}

Tensor target_velocity(const Tensor& x0, const Tensor& eps) {
    require_same_shape(x0, eps, "target_velocity");
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps[i] - x0[i];
    return out;
}

FlowDraw draw_flow_sample(std::uint64_t seed, std::size_t index, const std::vector<std::size_t>& shape) {
    Rng rng(derive_seed(seed, index));
    FlowDraw d;
    d.t = rng.uniform();
    d.eps = Tensor(shape);
    for (auto& v : d.eps.storage()) v = rng.normal();
    return d;
}

namespace {

std::size_t batch_entries(const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw std::invalid_argument("fm_loss: empty batch");
    std::size_t n = 0;
    for (const auto& ex : batch) n += ex.x0.size();
    return n;
}

}  // namespace

double fm_loss(const VelocityModel& model, const std::vector<TrainingExample>& batch, std::uint64_t seed) {
    const double inv = 1.0 / static_cast<double>(batch_entries(batch));
    std::vector<double> per_item(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        const auto& ex = batch[i];
        const FlowDraw d = draw_flow_sample(seed, i, ex.x0.shape());
        const Tensor pred = model.predict(interpolate(ex.x0, d.eps, d.t), d.t, ex.cond);
        const Tensor v = target_velocity(ex.x0, d.eps);
        require_same_shape(pred, v, "fm_loss");
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) s += (pred[k] - v[k]) * (pred[k] - v[k]);
        per_item[i] = s;
    });
    CompensatedSum total;
    for (double s : per_item) total.add(s);
    return total.value() * inv;
}

double fm_loss_and_gradient(VelocityModel& model, const std::vector<TrainingExample>& batch, std::uint64_t seed,
                            std::vector<Tensor>& grads) {
    const double inv = 1.0 / static_cast<double>(batch_entries(batch));
    const auto params = model.parameters();
    auto zeroed = [&] {
        std::vector<Tensor> g;
        g.reserve(params.size());
        for (const auto& p : params) g.emplace_back(p.tensor->shape(), 0.0);
        return g;
    };
    std::vector<std::vector<Tensor>> per_item_grads(batch.size());
    std::vector<double> per_item(batch.size());
    const VelocityModel& cmodel = model;
    parallel_for(batch.size(), [&](std::size_t i) {
        const auto& ex = batch[i];
        const FlowDraw d = draw_flow_sample(seed, i, ex.x0.shape());
        per_item_grads[i] = zeroed();
        per_item[i] = cmodel.accumulate_gradient(interpolate(ex.x0, d.eps, d.t), d.t, ex.cond,
                                                 target_velocity(ex.x0, d.eps), inv, per_item_grads[i]);
    });
    // Fixed-order reduction keeps results independent of the thread count.
    grads = std::move(per_item_grads[0]);
    for (std::size_t i = 1; i < batch.size(); ++i) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
            auto& dst = grads[p].storage();
            const auto& src = per_item_grads[i][p].storage();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    }
    CompensatedSum total;
    for (double s : per_item) total.add(s);
    return total.value() * inv;
}

namespace {

class RecomputedLoss : public LossEvaluator {
public:
    RecomputedLoss(const VelocityModel& model, const std::vector<TrainingExample>& batch, std::uint64_t seed)
        : model_(model), batch_(batch), seed_(seed) {}
    double loss(std::size_t) override { return fm_loss(model_, batch_, seed_); }

private:
    const VelocityModel& model_;
    const std::vector<TrainingExample>& batch_;
    std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<LossEvaluator> VelocityModel::loss_evaluator(const std::vector<TrainingExample>& batch,
                                                             std::uint64_t seed) const {
    return std::make_unique<RecomputedLoss>(*this, batch, seed);
}

void AdamOptimizer::step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads, double learning_rate) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be > 0");
    if (params.size() != grads.size()) throw std::invalid_argument("adam: gradient list does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        Tensor& w = *params[i].tensor;
        const Tensor& g = grads[i];
        require_same_shape(w, g, "adam");
        auto& st = state_[params[i].name];
        if (!st.m.same_shape(w)) st = {Tensor(w.shape(), 0.0), Tensor(w.shape(), 0.0), 0};
        ++st.steps;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.steps));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.steps));
        for (std::size_t k = 0; k < w.size(); ++k) {
            st.m[k] = beta1 * st.m[k] + (1.0 - beta1) * g[k];
            st.v[k] = beta2 * st.v[k] + (1.0 - beta2) * g[k] * g[k];
            const double mhat = st.m[k] / c1, vhat = st.v[k] / c2;
            w[k] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
        }
    }
}

double train_step(VelocityModel& model, AdamOptimizer& optimizer, const std::vector<TrainingExample>& batch,
                  double learning_rate, std::uint64_t seed) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train_step: learning rate must be > 0");
    std::vector<Tensor> grads;
    const double loss = fm_loss_and_gradient(model, batch, seed, grads);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        for (double g : grads[i].storage()) {
            if (!std::isfinite(g)) throw TrainingError(params[i].name, "non-finite gradient");
        }
    }
    optimizer.step(params, grads, learning_rate);
    return loss;
}

GradCheckReport grad_check(VelocityModel& model, const std::vector<TrainingExample>& batch, double epsilon,
                           std::uint64_t seed, double fraction, double floor) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be > 0");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("grad_check: fraction must be in (0, 1]");
    std::vector<Tensor> grads;
    fm_loss_and_gradient(model, batch, seed, grads);
    const auto params = model.parameters();

    // Flat index space over trainable entries.
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (param index, offset)
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        spans.emplace_back(i, total);
        total += params[i].tensor->size();
    }
    GradCheckReport report;
    report.trainable_count = total;
    if (total == 0) return report;
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * total)));

    // Partial Fisher-Yates from a stream independent of the loss draws.
    Rng rng(derive_seed(seed, 0x67726164ULL));
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(total - i)]);
    report.sampled.assign(pool.begin(), pool.begin() + k);
    std::sort(report.sampled.begin(), report.sampled.end());

    const auto evaluator = static_cast<const VelocityModel&>(model).loss_evaluator(batch, seed);
    for (std::size_t flat : report.sampled) {
        auto it = std::upper_bound(spans.begin(), spans.end(), flat,
                                   [](std::size_t v, const auto& s) { return v < s.second; });
        --it;
        const std::size_t pi = it->first, off = flat - it->second;
        double& w = (*params[pi].tensor)[off];
        const double keep = w;
        w = keep + epsilon;
        const double up = evaluator->loss(pi);
        w = keep - epsilon;
        const double down = evaluator->loss(pi);
        w = keep;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double analytic = grads[pi][off];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        const double rel = std::abs(analytic - numeric) / denom;
        if (rel >= report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_name = params[pi].name + "[" + std::to_string(off) + "]";
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

FlowSchedule FlowSchedule::uniform(int steps) {
    if (steps < 1) throw std::invalid_argument("FlowSchedule: steps must be >= 1");
    FlowSchedule s;
    s.times.resize(steps + 1);
    for (int i = 0; i <= steps; ++i) s.times[i] = static_cast<double>(steps - i) / steps;
    return s;
}

void FlowSchedule::validate() const {
    if (times.size() < 2) throw std::invalid_argument("FlowSchedule: need at least two times");
    if (times.front() != 1.0 || times.back() != 0.0) throw std::invalid_argument("FlowSchedule: must run from 1 to 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] < times[i - 1])) throw std::invalid_argument("FlowSchedule: times must strictly decrease");
    }
}

Tensor integrate(const VelocityModel& model, const ConditionSet& cond, const std::vector<double>& times, Tensor x) {
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const Tensor v = model.predict(x, times[k], cond);
        require_same_shape(v, x, "integrate");
        const double dt = times[k + 1] - times[k];
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
    }
    return x;
}

Tensor sample(const VelocityModel& model, const ConditionSet& cond, const FlowSchedule& schedule,
              std::uint64_t seed, const std::vector<std::size_t>& shape) {
    schedule.validate();
    Rng rng(seed);
    Tensor x(shape);
    for (auto& v : x.storage()) v = rng.normal();
    return integrate(model, cond, schedule.times, std::move(x));
}

}  // namespace reimagine::generator
