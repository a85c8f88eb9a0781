#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "reimagine/generator/flow.hpp"
#include "reimagine/tokens/layers.hpp"
#include "reimagine/tokens/rope.hpp"
#include "reimagine/tokens/tokens.hpp"

namespace reimagine::generator {

struct ModelConfig {
    int width = 64;
    int head_dim = 64;
    int blocks = 4;
    int mlp_hidden = 128;
    int patch = 4;
    int grid = 16;  // latent grid is grid x grid
    int pose_tokens = 4;
    int pose_hidden = 128;
    int joints = 17;
    int shape_dim = 2;
    double rope_base = 10000.0;
    // Initial per-channel latent scale for the output preconditioning.
    double data_std = 0.5;
    // Blocks before which normal features are added to the noise tokens;
    // empty means {0, blocks / 2}.
    std::vector<int> injection_blocks;

    int latent_channels() const { return 3 * patch * patch; }
    int heads() const { return width / head_dim; }
    int resolution() const { return grid * patch; }
    std::vector<int> injection_points() const;
    tokens::RopeConfig rope() const { return tokens::RopeConfig::for_head(head_dim, rope_base); }
    std::vector<std::size_t> latent_shape() const {
        return {std::size_t(latent_channels()), std::size_t(grid), std::size_t(grid)};
    }
    void validate() const;
};

struct DenoiserBlock {
    tokens::LayerNorm ln1;
    tokens::Linear wq, wk, wv, wo;
    tokens::LayerNorm ln2;
    tokens::Linear mlp1, mlp2;
};

struct DenoiserWeights {
    ModelConfig config;
    tokens::PoseMlp pose;
    tokens::NormalEncoder normal;
    tokens::Linear image_proj;  // shared by front and back
    tokens::Linear noise_proj;
    tokens::Linear time1, time2;
    std::vector<DenoiserBlock> blocks;
    tokens::LayerNorm final_ln;
    tokens::Linear out_proj;
    // Per-channel latent RMS used by the preconditioning; never trained.
    Tensor data_scale;

    // While adapters are attached only adapter tensors and names listed in
    // `unfrozen` are trainable.
    bool adapters_attached = false;
    std::set<std::string> unfrozen;

    std::vector<ParamRef> parameters();
    std::size_t parameter_count() const;
};

DenoiserWeights init_denoiser(const ModelConfig& config, std::uint64_t seed);
// Same structure with every tensor zero.
DenoiserWeights zeros_like(const DenoiserWeights& weights);

// Adds low-rank pairs to the named attention matrices ("wq", "wk", "wv",
// "wo") of every block. The up factor starts at zero so outputs are unchanged.
void attach_adapters(DenoiserWeights& weights, int rank, const std::vector<std::string>& targets,
                     std::uint64_t seed);
void detach_adapters(DenoiserWeights& weights);

// Output preconditioning, per latent channel: v = c_skip x_t + c_out F(c_in x_t, ...),
// with coefficients from the exact velocity for N(0, s^2) latents, so a
// zero network F reproduces that Gaussian velocity and F's regression target
// has unit variance under it.
struct Preconditioning {
    double c_skip = 0.0, c_out = 1.0, c_in = 1.0;
};
Preconditioning precondition(double t, double data_std);

// Sets data_scale to the per-channel RMS of `latents`, floored at `floor`.
void fit_data_scale(DenoiserWeights& weights, const std::vector<Tensor>& latents, double floor = 1e-3);

// Sinusoidal timestep features (t scaled by 1000), width `dim`.
MatrixRM timestep_features(double t, int dim);

Tensor denoise(const DenoiserWeights& weights, const Tensor& x_t, double t, const ConditionSet& cond);

// Returns sum((denoise - target)^2) and adds gradients of scale times that
// into `grads`.
double denoise_backward(const DenoiserWeights& weights, const Tensor& x_t, double t, const ConditionSet& cond,
                        const Tensor& target, double scale, DenoiserWeights& grads);

class DenoiserModel : public VelocityModel {
public:
    explicit DenoiserModel(DenoiserWeights& weights) : weights_(weights) {}

    std::vector<ParamRef> parameters() override { return weights_.parameters(); }
    Tensor predict(const Tensor& x_t, double t, const ConditionSet& cond) const override;
    double accumulate_gradient(const Tensor& x_t, double t, const ConditionSet& cond, const Tensor& target,
                               double scale, std::vector<Tensor>& grads) const override;
    // Restarts from the cached input of the block that owns the edited tensor.
    std::unique_ptr<LossEvaluator> loss_evaluator(const std::vector<TrainingExample>& batch,
                                                  std::uint64_t seed) const override;

    DenoiserWeights& weights() { return weights_; }

private:
    DenoiserWeights& weights_;
};

}  // namespace reimagine::generator
