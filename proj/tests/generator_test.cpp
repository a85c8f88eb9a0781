#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "reimagine/core/errors.hpp"
#include "reimagine/core/rng.hpp"
#include "reimagine/generator/denoiser.hpp"

using namespace reimagine;
using namespace reimagine::generator;

namespace {

// Parameter-free velocity field given as a function of (x_t, t).
class FixedModel : public VelocityModel {
public:
    explicit FixedModel(std::function<Tensor(const Tensor&, double)> f) : f_(std::move(f)) {}
    std::vector<ParamRef> parameters() override { return {}; }
    Tensor predict(const Tensor& x_t, double t, const ConditionSet&) const override { return f_(x_t, t); }
    double accumulate_gradient(const Tensor& x_t, double t, const ConditionSet& cond, const Tensor& target, double,
                               std::vector<Tensor>&) const override {
        const Tensor p = predict(x_t, t, cond);
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
        return s;
    }

private:
    std::function<Tensor(const Tensor&, double)> f_;
};

// v = a * x_t + b with scalar a and per-entry b.
class LinearToy : public VelocityModel {
public:
    Tensor a{{1}, 0.5};
    Tensor b;

    explicit LinearToy(const std::vector<std::size_t>& shape) : b(shape, 0.0) {}
    std::vector<ParamRef> parameters() override { return {{"a", &a, true}, {"b", &b, true}}; }
    Tensor predict(const Tensor& x_t, double, const ConditionSet&) const override {
        Tensor out(x_t.shape());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[0] * x_t[i] + b[i];
        return out;
    }
    double accumulate_gradient(const Tensor& x_t, double t, const ConditionSet& cond, const Tensor& target,
                               double scale, std::vector<Tensor>& grads) const override {
        const Tensor p = predict(x_t, t, cond);
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double diff = p[i] - target[i];
            s += diff * diff;
            grads[0][0] += 2.0 * scale * diff * x_t[i];
            grads[1][i] += 2.0 * scale * diff;
        }
        return s;
    }
};

double gaussian_velocity_gain(double t) { return (2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t); }

Tensor scaled(const Tensor& x, double k) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = k * x[i];
    return out;
}

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double sd = 1.0) {
    Tensor t(shape);
    for (auto& v : t.storage()) v = sd * rng.normal();
    return t;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.width = 8;
    cfg.head_dim = 8;
    cfg.blocks = 1;
    cfg.mlp_hidden = 16;
    cfg.patch = 2;
    cfg.grid = 4;
    cfg.pose_tokens = 2;
    cfg.pose_hidden = 8;
    return cfg;
}

ConditionSet random_condition(const ModelConfig& cfg, Rng& rng) {
    ConditionSet c;
    c.pose = body::PoseParams::zero(static_cast<std::size_t>(cfg.joints));
    for (auto& r : c.pose.joint_rotations) r = body::Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.2;
    c.shape.coefficients.assign(static_cast<std::size_t>(cfg.shape_dim), 0.0);
    for (auto& s : c.shape.coefficients) s = 0.3 * rng.normal();
    c.front = codec::LatentImage{random_tensor(cfg.latent_shape(), rng, 0.5), cfg.patch};
    c.back = codec::LatentImage{random_tensor(cfg.latent_shape(), rng, 0.5), cfg.patch};
    c.normal_rgb = Image(cfg.resolution(), cfg.resolution(), 3);
    for (auto& v : c.normal_rgb.data) v = rng.uniform();
    return c;
}

std::vector<TrainingExample> random_batch(const ModelConfig& cfg, std::size_t n, Rng& rng) {
    std::vector<TrainingExample> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back({random_tensor(cfg.latent_shape(), rng, 0.5), random_condition(cfg, rng)});
    return batch;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

std::vector<TensorStorage> snapshot(DenoiserWeights& w) {
    std::vector<TensorStorage> out;
    for (const auto& p : w.parameters()) out.push_back(p.tensor->storage());
    return out;
}

}  // namespace

TEST_CASE("interpolate and target velocity") {
    Rng rng(1);
    const Tensor x0 = random_tensor({2, 3, 4}, rng), eps = random_tensor({2, 3, 4}, rng);
    CHECK(interpolate(x0, eps, 0.0).storage() == x0.storage());
    CHECK(interpolate(x0, eps, 1.0).storage() == eps.storage());
    const Tensor mid = interpolate(Tensor({5}, 0.0), Tensor({5}, 2.0), 0.5);
    for (double v : mid.storage()) CHECK(v == 1.0);

    const Tensor still = target_velocity(x0, x0);
    for (double v : still.storage()) CHECK(v == 0.0);
    CHECK(target_velocity(Tensor({2, 3, 4}, 0.0), eps).storage() == eps.storage());
    const Tensor v = target_velocity(x0, eps);
    const Tensor v3 = target_velocity(scaled(x0, 3.0), scaled(eps, 3.0));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v3[i] == doctest::Approx(3.0 * v[i]).epsilon(1e-14));

    CHECK_THROWS_AS(interpolate(x0, Tensor({2, 3}), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(x0, eps, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(target_velocity(x0, Tensor({24})), std::invalid_argument);
}

TEST_CASE("denoiser contracts") {
    const ModelConfig cfg = tiny_config();
    Rng rng(3);
    const ConditionSet cond = random_condition(cfg, rng);
    const Tensor x = random_tensor(cfg.latent_shape(), rng);

    SUBCASE("zero weights give the Gaussian-prior velocity") {
        const DenoiserWeights init = init_denoiser(cfg, 1);
        DenoiserWeights z = zeros_like(init);
        z.data_scale = init.data_scale;
        for (double t : {0.1, 0.4, 0.9}) {
            const Tensor out = denoise(z, x, t, cond);
            // Exact velocity for N(0, s^2) data: (t - (1-t) s^2) / ((1-t)^2 s^2 + t^2) x.
            const double s2 = cfg.data_std * cfg.data_std;
            const double gain = (t - (1 - t) * s2) / ((1 - t) * (1 - t) * s2 + t * t);
            for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == doctest::Approx(gain * x[i]).epsilon(1e-12));
        }
        const auto p = precondition(0.3, 1.0);
        CHECK(p.c_skip == doctest::Approx((2 * 0.3 - 1) / (0.49 + 0.09)).epsilon(1e-14));
        CHECK(p.c_out == doctest::Approx(1.0 / std::sqrt(0.58)).epsilon(1e-14));
        CHECK(p.c_in == doctest::Approx(1.0 / std::sqrt(0.58)).epsilon(1e-14));
        CHECK_THROWS_AS(init_denoiser([] { ModelConfig c; c.data_std = 0.0; return c; }(), 1), std::invalid_argument);
    }
    SUBCASE("scales apply per channel") {
        const DenoiserWeights init = init_denoiser(cfg, 1);
        DenoiserWeights z = zeros_like(init);
        const std::size_t channels = z.data_scale.size(), cells = x.size() / channels;
        for (std::size_t c = 0; c < channels; ++c) z.data_scale[c] = 0.05 * (c + 1);
        const double t = 0.3;
        const Tensor out = denoise(z, x, t, cond);
        for (std::size_t c = 0; c < channels; ++c) {
            const double gain = precondition(t, z.data_scale[c]).c_skip;
            for (std::size_t k = 0; k < cells; ++k) {
                REQUIRE(out[c * cells + k] == doctest::Approx(gain * x[c * cells + k]).epsilon(1e-12));
            }
        }
        z.data_scale[1] = 0.0;
        CHECK_THROWS_AS(denoise(z, x, t, cond), std::invalid_argument);
        z.data_scale = Tensor({channels + 1}, 0.5);
        CHECK_THROWS_AS(denoise(z, x, t, cond), std::invalid_argument);
    }
    SUBCASE("fitted scales are per-channel RMS with a floor") {
        DenoiserWeights w = init_denoiser(cfg, 1);
        const std::size_t channels = w.data_scale.size(), cells = x.size() / channels;
        Tensor a(cfg.latent_shape(), 0.0), b(cfg.latent_shape(), 0.0);
        for (std::size_t k = 0; k < cells; ++k) {
            a[k] = 3.0;
            b[k] = -4.0;
            a[cells + k] = 1e-6;
        }
        fit_data_scale(w, {a, b});
        CHECK(w.data_scale[0] == doctest::Approx(std::sqrt(12.5)).epsilon(1e-14));
        CHECK(w.data_scale[1] == 1e-3);
        CHECK(w.data_scale[channels - 1] == 1e-3);
        CHECK_THROWS_AS(fit_data_scale(w, {}), std::invalid_argument);
        CHECK_THROWS_AS(fit_data_scale(w, {Tensor({2, 2})}), std::invalid_argument);
        const auto params = w.parameters();
        const auto it = std::find_if(params.begin(), params.end(), [](const auto& p) { return p.name == "data_scale"; });
        REQUIRE(it != params.end());
        CHECK_FALSE(it->trainable);
    }
    SUBCASE("output shape follows x_t") {
        for (int patch : {1, 2, 4}) {
            ModelConfig c = tiny_config();
            c.patch = patch;
            c.grid = 3;
            Rng r(patch);
            const Tensor xt = random_tensor(c.latent_shape(), r);
            const Tensor out = denoise(init_denoiser(c, 2), xt, 0.5, random_condition(c, r));
            CHECK(out.shape() == xt.shape());
        }
    }
    SUBCASE("front and back are not interchangeable") {
        const DenoiserWeights w = init_denoiser(cfg, 4);
        ConditionSet swapped = cond;
        std::swap(swapped.front, swapped.back);
        CHECK(max_abs_diff(denoise(w, x, 0.3, cond), denoise(w, x, 0.3, swapped)) > 1e-6);
    }
    SUBCASE("timestep and pose change the output") {
        const DenoiserWeights w = init_denoiser(cfg, 5);
        CHECK(max_abs_diff(denoise(w, x, 0.3, cond), denoise(w, x, 0.7, cond)) > 1e-6);
        ConditionSet moved = cond;
        moved.pose.joint_rotations[3] += body::Vec3(0.5, 0.0, 0.0);
        CHECK(max_abs_diff(denoise(w, x, 0.3, cond), denoise(w, x, 0.3, moved)) > 1e-6);
    }
    SUBCASE("shape errors") {
        const DenoiserWeights w = init_denoiser(cfg, 6);
        CHECK_THROWS_AS(denoise(w, Tensor({12, 4, 5}), 0.5, cond), std::invalid_argument);
        ConditionSet bad = cond;
        bad.normal_rgb = Image(4, 4, 3);
        CHECK_THROWS_AS(denoise(w, x, 0.5, bad), std::invalid_argument);
        ModelConfig odd = cfg;
        odd.head_dim = 6;
        CHECK_THROWS_AS(init_denoiser(odd, 1), std::invalid_argument);
    }
}

TEST_CASE("default config size") {
    const DenoiserWeights w = init_denoiser(ModelConfig{}, 1);
    CHECK(w.blocks.size() == 4);
    CHECK(w.config.heads() == 1);
    CHECK(w.parameter_count() > 100000);
    CHECK(w.parameter_count() < 400000);
}

TEST_CASE("flow matching loss") {
    const std::vector<std::size_t> shape{4, 50, 50};
    Rng rng(9);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({random_tensor(shape, rng), {}});

    SUBCASE("oracle velocity has zero loss") {
        // Recovers eps - x0 from x_t given the item's x0; t is never 0 for these draws.
        for (const auto& ex : batch) {
            const Tensor x0 = ex.x0;
            FixedModel oracle([x0](const Tensor& xt, double t) {
                Tensor v(xt.shape());
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = (xt[i] - x0[i]) / t;
                return v;
            });
            CHECK(fm_loss(oracle, {ex}, 17) < 1e-20);
        }
    }
    SUBCASE("zero model on zero data measures the noise variance") {
        std::vector<TrainingExample> zeros;
        for (int i = 0; i < 4; ++i) zeros.push_back({Tensor(shape, 0.0), {}});
        FixedModel zero([](const Tensor& xt, double) { return Tensor(xt.shape(), 0.0); });
        CHECK(std::abs(fm_loss(zero, zeros, 5) - 1.0) < 0.05);
    }
    SUBCASE("determinism") {
        LinearToy toy(shape);
        CHECK(fm_loss(toy, batch, 3) == fm_loss(toy, batch, 3));
        CHECK(fm_loss(toy, batch, 3) != fm_loss(toy, batch, 4));
        std::vector<Tensor> g;
        CHECK(fm_loss_and_gradient(toy, batch, 3, g) == doctest::Approx(fm_loss(toy, batch, 3)).epsilon(1e-12));
    }
    SUBCASE("empty batch") {
        LinearToy toy(shape);
        CHECK_THROWS_AS(fm_loss(toy, {}, 1), std::invalid_argument);
    }
}

TEST_CASE("conditional expectation velocity minimizes the loss") {
    const std::vector<std::size_t> shape{1, 100, 100};
    Rng rng(21);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back({random_tensor(shape, rng), {}});
    auto oracle_with_gain = [](double factor) {
        return FixedModel([factor](const Tensor& x, double t) { return scaled(x, factor * gaussian_velocity_gain(t)); });
    };
    const double best = fm_loss(oracle_with_gain(1.0), batch, 8);
    CHECK(best < fm_loss(oracle_with_gain(1.1), batch, 8));
    CHECK(best < fm_loss(oracle_with_gain(0.9), batch, 8));
}

TEST_CASE("Gaussian velocity matches a Monte-Carlo regression") {
    // Slope of eps - x0 on x_t per t, against the closed form, across a t grid.
    Rng rng(33);
    std::vector<double> fitted, exact;
    for (double t = 0.05; t < 1.0; t += 0.1) {
        double sxy = 0.0, sxx = 0.0;
        for (int i = 0; i < 100000; ++i) {
            const double x0 = rng.normal(), eps = rng.normal();
            const double xt = (1.0 - t) * x0 + t * eps;
            sxy += xt * (eps - x0);
            sxx += xt * xt;
        }
        fitted.push_back(sxy / sxx);
        exact.push_back(gaussian_velocity_gain(t));
    }
    double mean = 0.0;
    for (double e : exact) mean += e / exact.size();
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        ss_res += (fitted[i] - exact[i]) * (fitted[i] - exact[i]);
        ss_tot += (exact[i] - mean) * (exact[i] - mean);
    }
    CHECK(1.0 - ss_res / ss_tot > 0.999);
}

TEST_CASE("Adam first step moves by the learning rate") {
    const std::vector<std::size_t> shape{1, 4, 4};
    Rng rng(2);
    std::vector<TrainingExample> batch{{random_tensor(shape, rng), {}}};
    LinearToy toy(shape);
    std::vector<Tensor> g;
    fm_loss_and_gradient(toy, batch, 11, g);
    const double a0 = toy.a[0];
    AdamOptimizer opt;
    const double lr = 0.01;
    train_step(toy, opt, batch, lr, 11);
    const double ga = g[0][0];
    CHECK(toy.a[0] == doctest::Approx(a0 - lr * ga / (std::abs(ga) + 1e-8)).epsilon(1e-12));
    CHECK(std::abs(toy.a[0] - (a0 - lr * (ga > 0 ? 1.0 : -1.0))) < 1e-6 * lr);
    for (std::size_t i = 0; i < toy.b.size(); ++i) {
        const double gb = g[1][i];
        CHECK(toy.b[i] == doctest::Approx(-lr * gb / (std::abs(gb) + 1e-8)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(train_step(toy, opt, batch, 0.0, 1), std::invalid_argument);
}

TEST_CASE("non-finite gradients name the tensor") {
    const std::vector<std::size_t> shape{1, 2, 2};
    Rng rng(2);
    std::vector<TrainingExample> batch{{random_tensor(shape, rng), {}}};
    LinearToy toy(shape);
    toy.b[1] = std::numeric_limits<double>::quiet_NaN();
    AdamOptimizer opt;
    try {
        train_step(toy, opt, batch, 0.01, 1);
        FAIL("expected a training error");
    } catch (const TrainingError& e) {
        CHECK(e.tensor() == "a");
    }
}

TEST_CASE("training lowers the loss") {
    const ModelConfig cfg = tiny_config();
    Rng rng(4);
    const auto batch = random_batch(cfg, 2, rng);
    DenoiserWeights w = init_denoiser(cfg, 7);
    DenoiserModel model(w);
    AdamOptimizer opt;
    const double before = fm_loss(model, batch, 99);
    for (int step = 0; step < 50; ++step) train_step(model, opt, batch, 3e-3, 99);
    CHECK(fm_loss(model, batch, 99) < before);
}

TEST_CASE("adapters") {
    const ModelConfig cfg = tiny_config();
    Rng rng(5);
    const auto batch = random_batch(cfg, 2, rng);
    DenoiserWeights w = init_denoiser(cfg, 8);
    const Tensor x = random_tensor(cfg.latent_shape(), rng);
    const Tensor base_out = denoise(w, x, 0.6, batch[0].cond);
    const std::size_t base_count = w.parameter_count();
    const auto base = snapshot(w);

    const int r = 2;
    attach_adapters(w, r, {"wq", "wv"}, 3);
    CHECK(w.parameter_count() == base_count + cfg.blocks * 2 * r * (cfg.width + cfg.width));
    CHECK(denoise(w, x, 0.6, batch[0].cond).storage() == base_out.storage());
    CHECK_THROWS_AS(attach_adapters(w, r, {"wq"}, 3), std::invalid_argument);

    SUBCASE("only adapters train") {
        DenoiserModel model(w);
        AdamOptimizer opt;
        for (int step = 0; step < 3; ++step) train_step(model, opt, batch, 1e-2, step);
        const auto params = w.parameters();
        std::size_t k = 0;
        bool adapters_moved = false;
        for (const auto& p : params) {
            const bool adapter = p.name.ends_with(".lora_down") || p.name.ends_with(".lora_up");
            if (adapter) {
                adapters_moved = adapters_moved || p.name.ends_with(".lora_up");
                continue;
            }
            CHECK_MESSAGE(p.tensor->storage() == base[k], p.name);
            ++k;
        }
        CHECK(adapters_moved);
        CHECK(w.blocks[0].wq.lora_up.storage() != TensorStorage(w.blocks[0].wq.lora_up.size(), 0.0));
    }
    SUBCASE("unfrozen tensors train alongside") {
        w.unfrozen.insert("out_proj.bias");
        DenoiserModel model(w);
        AdamOptimizer opt;
        const auto before = w.out_proj.bias.storage();
        train_step(model, opt, batch, 1e-2, 1);
        CHECK(w.out_proj.bias.storage() != before);
        CHECK(w.out_proj.weight.storage() == base[base.size() - 3]);
    }
    SUBCASE("detach restores the base model") {
        detach_adapters(w);
        CHECK(w.parameter_count() == base_count);
        CHECK(snapshot(w) == base);
        CHECK(denoise(w, x, 0.6, batch[0].cond).storage() == base_out.storage());
    }
    SUBCASE("rank limits") {
        DenoiserWeights fresh = init_denoiser(cfg, 8);
        CHECK_THROWS_AS(attach_adapters(fresh, 0, {"wq"}, 1), std::invalid_argument);
        CHECK_THROWS_AS(attach_adapters(fresh, cfg.width + 1, {"wq"}, 1), std::invalid_argument);
        CHECK_THROWS_AS(attach_adapters(fresh, 1, {"mlp"}, 1), std::invalid_argument);
    }
}

TEST_CASE("gradient check") {
    SUBCASE("tiny denoiser") {
        const ModelConfig cfg = tiny_config();
        Rng rng(6);
        const auto batch = random_batch(cfg, 2, rng);
        DenoiserWeights w = init_denoiser(cfg, 9);
        DenoiserModel model(w);
        const auto report = grad_check(model, batch, 1e-4, 12, 0.1);
        CHECK(report.sampled.size() == static_cast<std::size_t>(std::llround(0.1 * report.trainable_count)));
        CHECK_MESSAGE(report.max_relative_error < 1e-3, report.worst_name);
        CHECK(grad_check(model, batch, 1e-4, 12).max_relative_error < 1e-3);
    }
    SUBCASE("tiny denoiser with live adapters") {
        const ModelConfig cfg = tiny_config();
        Rng rng(7);
        const auto batch = random_batch(cfg, 1, rng);
        DenoiserWeights w = init_denoiser(cfg, 10);
        attach_adapters(w, 2, {"wq", "wk", "wv", "wo"}, 4);
        for (auto& b : w.blocks) {
            for (auto* l : {&b.wq, &b.wk, &b.wv, &b.wo}) {
                for (auto& v : l->lora_up.storage()) v = 0.3 * rng.normal();
            }
        }
        DenoiserModel model(w);
        const auto report = grad_check(model, batch, 1e-4, 3, 1.0);
        CHECK(report.trainable_count == 4u * 2u * 2u * 8u);
        CHECK_MESSAGE(report.max_relative_error < 1e-3, report.worst_name);
    }
    SUBCASE("linear model is exact") {
        const std::vector<std::size_t> shape{2, 3, 3};
        Rng rng(8);
        std::vector<TrainingExample> batch{{random_tensor(shape, rng), {}}, {random_tensor(shape, rng), {}}};
        LinearToy toy(shape);
        const auto report = grad_check(toy, batch, 1e-4, 1, 1.0);
        CHECK(report.trainable_count == 19);
        CHECK(report.max_relative_error < 1e-6);
    }
    SUBCASE("sampling is seeded") {
        const ModelConfig cfg = tiny_config();
        Rng rng(10);
        const auto batch = random_batch(cfg, 1, rng);
        DenoiserWeights w = init_denoiser(cfg, 11);
        DenoiserModel model(w);
        const auto a = grad_check(model, batch, 1e-4, 77);
        const auto b = grad_check(model, batch, 1e-4, 77);
        const auto c = grad_check(model, batch, 1e-4, 78);
        CHECK(a.sampled == b.sampled);
        CHECK(a.max_relative_error == b.max_relative_error);
        CHECK(a.sampled != c.sampled);
        CHECK_THROWS_AS(grad_check(model, batch, 0.0, 1), std::invalid_argument);
    }
    SUBCASE("cached loss evaluation agrees with a full recompute") {
        const ModelConfig cfg = tiny_config();
        Rng rng(12);
        const auto batch = random_batch(cfg, 2, rng);
        ModelConfig two = cfg;
        two.blocks = 2;
        DenoiserWeights w = init_denoiser(two, 12);
        DenoiserModel model(w);
        const auto evaluator = static_cast<const VelocityModel&>(model).loss_evaluator(batch, 5);
        const auto params = w.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            double& v = (*params[i].tensor)[0];
            const double keep = v;
            v += 0.05;
            CHECK_MESSAGE(evaluator->loss(i) == doctest::Approx(fm_loss(model, batch, 5)).epsilon(1e-12), params[i].name);
            v = keep;
        }
    }
}

TEST_CASE("sampler") {
    const std::vector<std::size_t> shape{3, 4, 5};
    const ConditionSet none;
    Rng rng(13);
    const Tensor target = random_tensor(shape, rng);

    SUBCASE("constant field lands on the target for any step count") {
        const std::uint64_t seed = 42;
        Rng noise_rng(seed);
        const Tensor eps = random_tensor(shape, noise_rng);
        const Tensor v = target_velocity(target, eps);
        FixedModel constant([v](const Tensor&, double) { return v; });
        for (int steps : {1, 2, 7, 20}) {
            CHECK(max_abs_diff(sample(constant, none, FlowSchedule::uniform(steps), seed, shape), target) < 1e-12);
        }
    }
    SUBCASE("zero field returns the initial noise") {
        Rng noise_rng(5);
        const Tensor eps = random_tensor(shape, noise_rng);
        FixedModel zero([](const Tensor& x, double) { return Tensor(x.shape(), 0.0); });
        CHECK(sample(zero, none, FlowSchedule::uniform(20), 5, shape).storage() == eps.storage());
    }
    SUBCASE("deterministic") {
        FixedModel field([](const Tensor& x, double t) { return scaled(x, std::sin(3.0 * t)); });
        CHECK(sample(field, none, FlowSchedule::uniform(9), 3, shape).storage() ==
              sample(field, none, FlowSchedule::uniform(9), 3, shape).storage());
    }
    SUBCASE("schedule validation") {
        CHECK_THROWS_AS(FlowSchedule::uniform(0), std::invalid_argument);
        const FlowSchedule s = FlowSchedule::uniform(4);
        CHECK(s.steps() == 4);
        CHECK(s.times == std::vector<double>{1.0, 0.75, 0.5, 0.25, 0.0});
        FixedModel zero([](const Tensor& x, double) { return x; });
        CHECK_THROWS_AS(sample(zero, none, FlowSchedule{{1.0, 0.5, 0.5, 0.0}}, 1, shape), std::invalid_argument);
        CHECK_THROWS_AS(sample(zero, none, FlowSchedule{{0.9, 0.0}}, 1, shape), std::invalid_argument);
    }
}

TEST_CASE("Gaussian oracle sampling recovers unit variance") {
    const std::vector<std::size_t> shape{1, 100, 100};
    FixedModel oracle([](const Tensor& x, double t) { return scaled(x, gaussian_velocity_gain(t)); });
    const Tensor out = sample(oracle, {}, FlowSchedule::uniform(200), 2024, shape);
    double mean = 0.0, sq = 0.0;
    for (double v : out.storage()) mean += v / out.size();
    for (double v : out.storage()) sq += (v - mean) * (v - mean);
    const double var = sq / (out.size() - 1);
    CHECK(std::abs(var - 1.0) < 0.05);
}
