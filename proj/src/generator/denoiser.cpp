#include "reimagine/generator/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "reimagine/core/parallel.hpp"
#include "reimagine/core/rng.hpp"

namespace reimagine::generator {

using tokens::Linear;
using tokens::LayerNorm;

std::vector<int> ModelConfig::injection_points() const {
    if (!injection_blocks.empty()) return injection_blocks;
    std::vector<int> pts{0};
    if (blocks / 2 != 0) pts.push_back(blocks / 2);
    return pts;
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw std::invalid_argument(std::string("model config: ") + name + " must be >= 1");
    };
    positive(width, "width");
    positive(head_dim, "head_dim");
    positive(blocks, "blocks");
    positive(mlp_hidden, "mlp_hidden");
    positive(patch, "patch");
    positive(grid, "grid");
    positive(pose_hidden, "pose_hidden");
    positive(joints, "joints");
    if (pose_tokens < 0 || shape_dim < 0) throw std::invalid_argument("model config: negative token or shape count");
    if (width % head_dim != 0) throw std::invalid_argument("model config: width must be a multiple of head_dim");
    if (width % 2 != 0) throw std::invalid_argument("model config: width must be even");
    if (!(data_std > 0.0)) throw std::invalid_argument("model config: data_std must be > 0");
    rope().validate();
    for (int b : injection_points()) {
        if (b < 0 || b >= blocks) throw std::invalid_argument("model config: injection block out of range");
    }
}

namespace {

void add_linear(std::vector<ParamRef>& out, const std::string& name, Linear& l) {
    out.push_back({name + ".weight", &l.weight, true});
    if (l.has_bias()) out.push_back({name + ".bias", &l.bias, true});
    if (l.has_adapter()) {
        out.push_back({name + ".lora_down", &l.lora_down, true});
        out.push_back({name + ".lora_up", &l.lora_up, true});
    }
}

void add_norm(std::vector<ParamRef>& out, const std::string& name, LayerNorm& ln) {
    out.push_back({name + ".gain", &ln.gain, true});
    out.push_back({name + ".bias", &ln.bias, true});
}

void add_conv(std::vector<ParamRef>& out, const std::string& name, tokens::Conv2d& c) {
    out.push_back({name + ".weight", &c.weight, true});
    out.push_back({name + ".bias", &c.bias, true});
}

bool is_adapter(const std::string& name) {
    return name.ends_with(".lora_down") || name.ends_with(".lora_up");
}

Linear* attention_matrix(DenoiserBlock& b, const std::string& target) {
    if (target == "wq") return &b.wq;
    if (target == "wk") return &b.wk;
    if (target == "wv") return &b.wv;
    if (target == "wo") return &b.wo;
    throw std::invalid_argument("attach_adapters: unknown target '" + target + "' (expected wq, wk, wv or wo)");
}

}  // namespace

std::vector<ParamRef> DenoiserWeights::parameters() {
    std::vector<ParamRef> out;
    add_linear(out, "pose.layer1", pose.layer1);
    add_linear(out, "pose.layer2", pose.layer2);
    add_conv(out, "normal.conv1", normal.conv1);
    add_conv(out, "normal.conv2", normal.conv2);
    add_conv(out, "normal.conv3", normal.conv3);
    add_linear(out, "image_proj", image_proj);
    add_linear(out, "noise_proj", noise_proj);
    add_linear(out, "time.layer1", time1);
    add_linear(out, "time.layer2", time2);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string p = "block" + std::to_string(i);
        auto& b = blocks[i];
        add_norm(out, p + ".ln1", b.ln1);
        add_linear(out, p + ".attn.wq", b.wq);
        add_linear(out, p + ".attn.wk", b.wk);
        add_linear(out, p + ".attn.wv", b.wv);
        add_linear(out, p + ".attn.wo", b.wo);
        add_norm(out, p + ".ln2", b.ln2);
        add_linear(out, p + ".mlp.layer1", b.mlp1);
        add_linear(out, p + ".mlp.layer2", b.mlp2);
    }
    add_norm(out, "final_ln", final_ln);
    add_linear(out, "out_proj", out_proj);
    out.push_back({"data_scale", &data_scale, false});
    if (adapters_attached) {
        for (auto& p : out) p.trainable = is_adapter(p.name) || unfrozen.contains(p.name);
    }
    return out;
}

std::size_t DenoiserWeights::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : const_cast<DenoiserWeights*>(this)->parameters()) n += p.tensor->size();
    return n;
}

DenoiserWeights init_denoiser(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int d = config.width, c = config.latent_channels();
    DenoiserWeights w;
    w.config = config;
    w.pose = tokens::make_pose_mlp(3 * config.joints + config.shape_dim, config.pose_hidden,
                                   std::max(config.pose_tokens, 1), d, rng);
    w.pose.tokens = config.pose_tokens;
    w.normal = tokens::make_normal_encoder(config.patch, d, rng);
    w.image_proj = tokens::make_linear(c, d, true, rng);
    w.noise_proj = tokens::make_linear(c, d, true, rng);
    w.time1 = tokens::make_linear(d, d, true, rng);
    w.time2 = tokens::make_linear(d, d, true, rng);
    // Residual branches start small so the initial network is close to the identity path.
    const double residual_scale = 1.0 / std::sqrt(2.0 * config.blocks);
    for (int b = 0; b < config.blocks; ++b) {
        DenoiserBlock blk;
        blk.ln1 = tokens::make_layer_norm(d);
        blk.wq = tokens::make_linear(d, d, false, rng);
        blk.wk = tokens::make_linear(d, d, false, rng);
        blk.wv = tokens::make_linear(d, d, false, rng);
        blk.wo = tokens::make_linear(d, d, false, rng, residual_scale);
        blk.ln2 = tokens::make_layer_norm(d);
        blk.mlp1 = tokens::make_linear(d, config.mlp_hidden, true, rng);
        blk.mlp2 = tokens::make_linear(config.mlp_hidden, d, true, rng, residual_scale);
        w.blocks.push_back(std::move(blk));
    }
    w.final_ln = tokens::make_layer_norm(d);
    w.out_proj = tokens::make_linear(d, c, true, rng, 0.5);
    w.data_scale = Tensor({std::size_t(c)}, config.data_std);
    return w;
}

DenoiserWeights zeros_like(const DenoiserWeights& w) {
    DenoiserWeights z;
    z.config = w.config;
    z.pose = tokens::zeros_like(w.pose);
    z.normal = tokens::zeros_like(w.normal);
    z.image_proj = tokens::zeros_like(w.image_proj);
    z.noise_proj = tokens::zeros_like(w.noise_proj);
    z.time1 = tokens::zeros_like(w.time1);
    z.time2 = tokens::zeros_like(w.time2);
    for (const auto& b : w.blocks) {
        z.blocks.push_back({tokens::zeros_like(b.ln1), tokens::zeros_like(b.wq), tokens::zeros_like(b.wk),
                            tokens::zeros_like(b.wv), tokens::zeros_like(b.wo), tokens::zeros_like(b.ln2),
                            tokens::zeros_like(b.mlp1), tokens::zeros_like(b.mlp2)});
    }
    z.final_ln = tokens::zeros_like(w.final_ln);
    z.out_proj = tokens::zeros_like(w.out_proj);
    z.data_scale = Tensor(w.data_scale.shape(), 0.0);
    z.adapters_attached = w.adapters_attached;
    z.unfrozen = w.unfrozen;
    return z;
}

void attach_adapters(DenoiserWeights& weights, int rank, const std::vector<std::string>& targets,
                     std::uint64_t seed) {
    if (rank < 1) throw std::invalid_argument("attach_adapters: rank must be >= 1");
    if (targets.empty()) throw std::invalid_argument("attach_adapters: no target matrices");
    Rng rng(seed);
    for (auto& b : weights.blocks) {
        for (const auto& t : targets) {
            Linear& l = *attention_matrix(b, t);
            if (rank > std::min(l.in(), l.out())) {
                throw std::invalid_argument("attach_adapters: rank " + std::to_string(rank) +
                                            " exceeds matrix dimension " + std::to_string(std::min(l.in(), l.out())));
            }
            if (l.has_adapter()) throw std::invalid_argument("attach_adapters: '" + t + "' already has an adapter");
            l.lora_down = Tensor({std::size_t(l.in()), std::size_t(rank)});
            const double std = 1.0 / std::sqrt(static_cast<double>(l.in()));
            for (auto& v : l.lora_down.storage()) v = std * rng.normal();
            l.lora_up = Tensor({std::size_t(rank), std::size_t(l.out())}, 0.0);
        }
    }
    weights.adapters_attached = true;
}

void detach_adapters(DenoiserWeights& weights) {
    for (auto& b : weights.blocks) {
        for (Linear* l : {&b.wq, &b.wk, &b.wv, &b.wo}) {
            l->lora_down = Tensor();
            l->lora_up = Tensor();
        }
    }
    weights.adapters_attached = false;
}

Preconditioning precondition(double t, double data_std) {
    const double s2 = data_std * data_std;
    const double v = (1.0 - t) * (1.0 - t) * s2 + t * t;
    return {(t - (1.0 - t) * s2) / v, data_std / std::sqrt(v), 1.0 / std::sqrt(v)};
}

void fit_data_scale(DenoiserWeights& weights, const std::vector<Tensor>& latents, double floor) {
    if (!(floor > 0.0)) throw std::invalid_argument("fit_data_scale: floor must be > 0");
    if (latents.empty()) throw std::invalid_argument("fit_data_scale: no latents");
    const auto shape = weights.config.latent_shape();
    const std::size_t channels = shape[0], cells = shape[1] * shape[2];
    std::vector<CompensatedSum> sums(channels);
    for (const auto& x : latents) {
        if (x.shape() != shape) throw std::invalid_argument("fit_data_scale: latent shape does not match the model");
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t k = 0; k < cells; ++k) sums[c].add(x[c * cells + k] * x[c * cells + k]);
        }
    }
    const double n = static_cast<double>(latents.size() * cells);
    for (std::size_t c = 0; c < channels; ++c) weights.data_scale[c] = std::max(floor, std::sqrt(sums[c].value() / n));
}

MatrixRM timestep_features(double t, int dim) {
    const int half = dim / 2;
    MatrixRM f = MatrixRM::Zero(1, dim);
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        f(0, k) = std::sin(1000.0 * t * freq);
        f(0, k + half) = std::cos(1000.0 * t * freq);
    }
    return f;
}

namespace {

struct BlockCache {
    tokens::LayerNormCache ln1;
    MatrixRM h1, q, k, v, qd, kd, vd;
    std::vector<tokens::AttentionCache> heads;
    MatrixRM o, od;
    tokens::LayerNormCache ln2;
    MatrixRM h2, a, ad, g, gd;
};

struct Trace {
    tokens::PoseMlpCache pose;
    tokens::NormalEncoderCache normal;
    MatrixRM front_rows, back_rows, noise_rows;
    MatrixRM front_down, back_down, noise_down;
    MatrixRM time_feat, time_pre, time_hidden, time_d1, time_d2;
    MatrixRM features;
    std::vector<BlockCache> blocks;
    tokens::LayerNormCache final_ln;
    MatrixRM final_in, final_down;
    std::size_t noise_offset = 0, noise_count = 0;
    Eigen::RowVectorXd c_skip, c_out, c_in;  // per channel
    MatrixRM skip;                            // c_skip * x_t as rows
};

void check_inputs(const ModelConfig& cfg, const Tensor& x_t, const ConditionSet& cond) {
    const auto shape = cfg.latent_shape();
    if (x_t.shape() != shape) {
        throw std::invalid_argument("denoise: x_t has shape " + x_t.shape_string() + ", model expects " +
                                    Tensor(shape).shape_string());
    }
    if (cond.front.data.shape() != shape || cond.back.data.shape() != shape) {
        throw std::invalid_argument("denoise: front/back latents must match the model latent shape");
    }
    if (cond.front.patch != cfg.patch || cond.back.patch != cfg.patch) {
        throw std::invalid_argument("denoise: front/back latent patch differs from the model patch");
    }
    if (cond.normal_rgb.width != cfg.resolution() || cond.normal_rgb.height != cfg.resolution()) {
        throw std::invalid_argument("denoise: normal map must be " + std::to_string(cfg.resolution()) + " pixels square");
    }
}

tokens::RopeTable rope_for(const ModelConfig& cfg) {
    std::vector<tokens::PositionTriple> positions = tokens::pose_positions(cfg.pose_tokens);
    for (int c : {tokens::kFrontCondition, tokens::kBackCondition, tokens::kNoiseCondition}) {
        const auto g = tokens::grid_positions(cfg.grid, cfg.grid, c);
        positions.insert(positions.end(), g.begin(), g.end());
    }
    return tokens::RopeTable(positions, cfg.rope());
}

MatrixRM block_forward(const DenoiserBlock& b, const tokens::RopeTable& rope, int heads, int head_dim,
                       const MatrixRM& x, BlockCache* c) {
    BlockCache local;
    BlockCache& k = c ? *c : local;
    k.h1 = tokens::layer_norm_forward(b.ln1, x, &k.ln1);
    k.q = tokens::linear_forward(b.wq, k.h1, &k.qd);
    k.k = tokens::linear_forward(b.wk, k.h1, &k.kd);
    k.v = tokens::linear_forward(b.wv, k.h1, &k.vd);
    k.o.resize(x.rows(), x.cols());
    k.heads.resize(heads);
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index col = static_cast<Eigen::Index>(h) * head_dim;
        const MatrixRM qh = k.q.middleCols(col, head_dim), kh = k.k.middleCols(col, head_dim),
                       vh = k.v.middleCols(col, head_dim);
        k.o.middleCols(col, head_dim) = tokens::attention(qh, kh, vh, rope, c ? &k.heads[h] : nullptr);
    }
    MatrixRM x_mid = x + tokens::linear_forward(b.wo, k.o, &k.od);
    k.h2 = tokens::layer_norm_forward(b.ln2, x_mid, &k.ln2);
    k.a = tokens::linear_forward(b.mlp1, k.h2, &k.ad);
    k.g = tokens::gelu(k.a);
    return x_mid + tokens::linear_forward(b.mlp2, k.g, &k.gd);
}

MatrixRM block_backward(const DenoiserBlock& b, const tokens::RopeTable& rope, int heads, int head_dim,
                        const BlockCache& k, const MatrixRM& d_out, DenoiserBlock& g) {
    const MatrixRM d_g = tokens::linear_backward(b.mlp2, k.g, k.gd, d_out, g.mlp2);
    const MatrixRM d_a = tokens::gelu_backward(k.a, d_g);
    const MatrixRM d_h2 = tokens::linear_backward(b.mlp1, k.h2, k.ad, d_a, g.mlp1);
    const MatrixRM d_mid = d_out + tokens::layer_norm_backward(b.ln2, k.ln2, d_h2, g.ln2);
    const MatrixRM d_o = tokens::linear_backward(b.wo, k.o, k.od, d_mid, g.wo);
    MatrixRM dq(d_o.rows(), d_o.cols()), dk(d_o.rows(), d_o.cols()), dv(d_o.rows(), d_o.cols());
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index col = static_cast<Eigen::Index>(h) * head_dim;
        const MatrixRM vh = k.v.middleCols(col, head_dim);
        const MatrixRM doh = d_o.middleCols(col, head_dim);
        const auto ag = tokens::attention_backward(k.heads[h], vh, rope, doh);
        dq.middleCols(col, head_dim) = ag.dq;
        dk.middleCols(col, head_dim) = ag.dk;
        dv.middleCols(col, head_dim) = ag.dv;
    }
    MatrixRM d_h1 = tokens::linear_backward(b.wq, k.h1, k.qd, dq, g.wq);
    d_h1 += tokens::linear_backward(b.wk, k.h1, k.kd, dk, g.wk);
    d_h1 += tokens::linear_backward(b.wv, k.h1, k.vd, dv, g.wv);
    return d_mid + tokens::layer_norm_backward(b.ln1, k.ln1, d_h1, g.ln1);
}

// Blocks `from`..end and the output head. `x` is the token matrix entering
// block `from`, before any feature injection there. `block_inputs`, when
// given, receives x at every block entry and the final block output.
MatrixRM run_tail(const DenoiserWeights& w, const tokens::RopeTable& rope, std::size_t from, MatrixRM x, Trace& tr,
                  bool keep, std::vector<MatrixRM>* block_inputs) {
    const ModelConfig& cfg = w.config;
    const auto inject = cfg.injection_points();
    tr.blocks.resize(keep ? w.blocks.size() : 0);
    if (block_inputs) block_inputs->resize(w.blocks.size() + 1);
    for (std::size_t b = from; b < w.blocks.size(); ++b) {
        if (block_inputs) (*block_inputs)[b] = x;
        if (std::find(inject.begin(), inject.end(), static_cast<int>(b)) != inject.end()) {
            x.middleRows(tr.noise_offset, tr.noise_count) += tr.features;
        }
        x = block_forward(w.blocks[b], rope, cfg.heads(), cfg.head_dim, x, keep ? &tr.blocks[b] : nullptr);
    }
    if (block_inputs) (*block_inputs)[w.blocks.size()] = x;
    tr.final_in = tokens::layer_norm_forward(w.final_ln, x.middleRows(tr.noise_offset, tr.noise_count), &tr.final_ln);
    const MatrixRM f = tokens::linear_forward(w.out_proj, tr.final_in, &tr.final_down);
    return tr.skip + (f.array().rowwise() * tr.c_out.array()).matrix();
}

// Full forward pass; fills `trace` when backward will follow.
MatrixRM forward(const DenoiserWeights& w, const Tensor& x_t, double t, const ConditionSet& cond, Trace* trace,
                 std::vector<MatrixRM>* block_inputs = nullptr) {
    const ModelConfig& cfg = w.config;
    check_inputs(cfg, x_t, cond);
    Trace local;
    Trace& tr = trace ? *trace : local;
    const int d = cfg.width;

    MatrixRM pose_tokens(0, d);
    if (cfg.pose_tokens > 0) pose_tokens = tokens::embed_pose(cond.pose, cond.shape, w.pose, &tr.pose);

    tr.front_rows = tokens::latent_to_rows(cond.front);
    tr.back_rows = tokens::latent_to_rows(cond.back);
    const Eigen::Index channels = cfg.latent_channels();
    if (w.data_scale.size() != static_cast<std::size_t>(channels)) {
        throw std::invalid_argument("denoise: data_scale must hold one entry per latent channel");
    }
    tr.c_skip.resize(channels);
    tr.c_out.resize(channels);
    tr.c_in.resize(channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
        if (!(w.data_scale[c] > 0.0)) throw std::invalid_argument("denoise: data_scale entries must be > 0");
        const Preconditioning p = precondition(t, w.data_scale[c]);
        tr.c_skip[c] = p.c_skip;
        tr.c_out[c] = p.c_out;
        tr.c_in[c] = p.c_in;
    }
    const MatrixRM x_rows = tokens::latent_to_rows(codec::LatentImage{x_t, cfg.patch});
    tr.skip = (x_rows.array().rowwise() * tr.c_skip.array()).matrix();
    tr.noise_rows = (x_rows.array().rowwise() * tr.c_in.array()).matrix();
    const MatrixRM front = tokens::linear_forward(w.image_proj, tr.front_rows, &tr.front_down);
    const MatrixRM back = tokens::linear_forward(w.image_proj, tr.back_rows, &tr.back_down);
    MatrixRM noise = tokens::linear_forward(w.noise_proj, tr.noise_rows, &tr.noise_down);

    tr.time_feat = timestep_features(t, d);
    tr.time_pre = tokens::linear_forward(w.time1, tr.time_feat, &tr.time_d1);
    tr.time_hidden = tokens::gelu(tr.time_pre);
    const MatrixRM temb = tokens::linear_forward(w.time2, tr.time_hidden, &tr.time_d2);
    noise.rowwise() += temb.row(0);

    tr.features = tokens::encode_normal_features(cond.normal_rgb, w.normal, &tr.normal);

    tokens::TokenSequence seq = tokens::assemble(pose_tokens, front, back, noise);
    const tokens::RopeTable rope = rope_for(cfg);
    tr.noise_offset = seq.segment_offset(3);
    tr.noise_count = seq.segment_lengths[3];
    return run_tail(w, rope, 0, std::move(seq.tokens), tr, trace != nullptr, block_inputs);
}

Tensor rows_to_tensor(const MatrixRM& rows, const ModelConfig& cfg) {
    return tokens::rows_to_latent(rows, cfg.grid, cfg.grid, cfg.patch).data;
}

}  // namespace

Tensor denoise(const DenoiserWeights& weights, const Tensor& x_t, double t, const ConditionSet& cond) {
    return rows_to_tensor(forward(weights, x_t, t, cond, nullptr), weights.config);
}

double denoise_backward(const DenoiserWeights& w, const Tensor& x_t, double t, const ConditionSet& cond,
                        const Tensor& target, double scale, DenoiserWeights& g) {
    const ModelConfig& cfg = w.config;
    Trace tr;
    const MatrixRM out = forward(w, x_t, t, cond, &tr);
    require_same_shape(x_t, target, "denoise_backward");
    const MatrixRM diff = out - tokens::latent_to_rows(codec::LatentImage{target, cfg.patch});
    const double sq = diff.squaredNorm();

    const MatrixRM d_final = tokens::linear_backward(w.out_proj, tr.final_in, tr.final_down,
                                                     2.0 * scale * (diff.array().rowwise() * tr.c_out.array()).matrix(),
                                                     g.out_proj);
    const std::size_t n_total = tr.noise_offset + tr.noise_count;
    MatrixRM dx = MatrixRM::Zero(static_cast<Eigen::Index>(n_total), cfg.width);
    dx.middleRows(tr.noise_offset, tr.noise_count) = tokens::layer_norm_backward(w.final_ln, tr.final_ln, d_final,
                                                                                 g.final_ln);

    const tokens::RopeTable rope = rope_for(cfg);
    const auto inject = cfg.injection_points();
    MatrixRM d_features = MatrixRM::Zero(static_cast<Eigen::Index>(tr.noise_count), cfg.width);
    for (std::size_t b = w.blocks.size(); b-- > 0;) {
        dx = block_backward(w.blocks[b], rope, cfg.heads(), cfg.head_dim, tr.blocks[b], dx, g.blocks[b]);
        if (std::find(inject.begin(), inject.end(), static_cast<int>(b)) != inject.end()) {
            d_features += dx.middleRows(tr.noise_offset, tr.noise_count);
        }
    }

    const Eigen::Index np = cfg.pose_tokens, ng = static_cast<Eigen::Index>(cfg.grid) * cfg.grid;
    if (np > 0) tokens::embed_pose_backward(w.pose, tr.pose, dx.topRows(np), g.pose);
    tokens::linear_backward(w.image_proj, tr.front_rows, tr.front_down, dx.middleRows(np, ng), g.image_proj);
    tokens::linear_backward(w.image_proj, tr.back_rows, tr.back_down, dx.middleRows(np + ng, ng), g.image_proj);
    const MatrixRM d_noise = dx.middleRows(np + 2 * ng, ng);
    tokens::linear_backward(w.noise_proj, tr.noise_rows, tr.noise_down, d_noise, g.noise_proj);
    const MatrixRM d_temb = d_noise.colwise().sum();
    const MatrixRM d_hidden = tokens::linear_backward(w.time2, tr.time_hidden, tr.time_d2, d_temb, g.time2);
    tokens::linear_backward(w.time1, tr.time_feat, tr.time_d1, tokens::gelu_backward(tr.time_pre, d_hidden), g.time1);
    tokens::encode_normal_features_backward(w.normal, tr.normal, d_features, g.normal);
    return sq;
}

Tensor DenoiserModel::predict(const Tensor& x_t, double t, const ConditionSet& cond) const {
    return denoise(weights_, x_t, t, cond);
}

double DenoiserModel::accumulate_gradient(const Tensor& x_t, double t, const ConditionSet& cond, const Tensor& target,
                                          double scale, std::vector<Tensor>& grads) const {
    DenoiserWeights g = zeros_like(weights_);
    const double sq = denoise_backward(weights_, x_t, t, cond, target, scale, g);
    const auto refs = g.parameters();
    if (refs.size() != grads.size()) throw std::invalid_argument("accumulate_gradient: gradient list size mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        auto& dst = grads[i].storage();
        const auto& src = refs[i].tensor->storage();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    return sq;
}

namespace {

class PrefixCachedLoss : public LossEvaluator {
public:
    PrefixCachedLoss(const DenoiserWeights& w, const std::vector<TrainingExample>& batch, std::uint64_t seed)
        : w_(w), rope_(rope_for(w.config)) {
        std::size_t entries = 0;
        for (const auto& ex : batch) entries += ex.x0.size();
        if (entries == 0) throw std::invalid_argument("fm_loss: empty batch");
        inv_entries_ = 1.0 / static_cast<double>(entries);
        const std::size_t n_blocks = w.blocks.size();
        for (const auto& p : const_cast<DenoiserWeights&>(w).parameters()) {
            std::size_t from = kFull;
            if (p.name.starts_with("block")) {
                from = std::stoul(p.name.substr(5));
            } else if (p.name.starts_with("final_ln.") || p.name.starts_with("out_proj.")) {
                from = n_blocks;
            }
            start_.push_back(from);
        }
        items_.resize(batch.size());
        parallel_for(batch.size(), [&](std::size_t i) {
            const auto& ex = batch[i];
            const FlowDraw d = draw_flow_sample(seed, i, ex.x0.shape());
            Item& it = items_[i];
            it.cond = ex.cond;
            it.t = d.t;
            it.x_t = interpolate(ex.x0, d.eps, d.t);
            it.target = tokens::latent_to_rows(codec::LatentImage{target_velocity(ex.x0, d.eps), w.config.patch});
            forward(w_, it.x_t, it.t, it.cond, &it.trace, &it.block_inputs);
            it.trace.blocks.clear();
        });
    }

    double loss(std::size_t param) override {
        const std::size_t from = start_.at(param);
        std::vector<double> per_item(items_.size());
        parallel_for(items_.size(), [&](std::size_t i) {
            Item& it = items_[i];
            const MatrixRM out = from == kFull
                                     ? forward(w_, it.x_t, it.t, it.cond, nullptr)
                                     : run_tail(w_, rope_, from, it.block_inputs[from], it.trace, false, nullptr);
            per_item[i] = (out - it.target).squaredNorm();
        });
        CompensatedSum total;
        for (double s : per_item) total.add(s);
        return total.value() * inv_entries_;
    }

private:
    static constexpr std::size_t kFull = static_cast<std::size_t>(-1);

    struct Item {
        ConditionSet cond;
        double t = 0.0;
        Tensor x_t;
        MatrixRM target;
        Trace trace;
        std::vector<MatrixRM> block_inputs;
    };

    const DenoiserWeights& w_;
    tokens::RopeTable rope_;
    double inv_entries_ = 0.0;
    std::vector<std::size_t> start_;
    std::vector<Item> items_;
};

}  // namespace

std::unique_ptr<LossEvaluator> DenoiserModel::loss_evaluator(const std::vector<TrainingExample>& batch,
                                                             std::uint64_t seed) const {
    return std::make_unique<PrefixCachedLoss>(weights_, batch, seed);
}

}  // namespace reimagine::generator
