#include "reimagine/pipeline/run.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "reimagine/core/errors.hpp"
#include "reimagine/core/image_io.hpp"
#include "reimagine/core/parallel.hpp"
#include "reimagine/core/rng.hpp"
#include "reimagine/generator/denoiser.hpp"
#include "reimagine/metrics/metrics.hpp"
#include "reimagine/pipeline/container.hpp"
#include "reimagine/pipeline/dataset.hpp"
#include "reimagine/pipeline/scene.hpp"
#include "reimagine/temporal/refine.hpp"

namespace reimagine::pipeline {

namespace {

// Stream indices for the independent uses of the experiment seed.
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kStepStream = 0x73746570;
constexpr std::uint64_t kAdapterStream = 0x6c6f7261;
constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr std::uint64_t kRefineStream = 0x72656669;
constexpr std::uint64_t kProbeStream = 0x70726f62;
constexpr std::size_t kProbeSize = 256;

void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

void save_latent(const fs::path& path, const codec::LatentVideo& video) {
    save_tensors(path, {{"latent", video.data}});
}

codec::LatentVideo load_latent(const fs::path& path, int patch) {
    auto tensors = load_tensors(path);
    for (auto& t : tensors) {
        if (t.name != "latent") continue;
        if (t.tensor.rank() != 4 || t.tensor.dim(0) != std::size_t(3 * patch * patch)) {
            throw FormatError("'" + path.string() + "': latent must be " + std::to_string(3 * patch * patch) +
                              " x T x H x W");
        }
        return {std::move(t.tensor), patch};
    }
    throw FormatError("'" + path.string() + "' has no tensor named 'latent'");
}

generator::DenoiserWeights weights_for(const ExperimentConfig& config, const fs::path& path) {
    return load_weights(path, config.model);
}

}  // namespace

std::string frame_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.ppm", index);
    return buf;
}

void write_frames(const fs::path& dir, const std::vector<Image>& frames) {
    make_dirs(dir);
    for (std::size_t k = 0; k < frames.size(); ++k) write_ppm(dir / frame_name(static_cast<int>(k)), frames[k]);
}

std::vector<Image> read_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("frame directory '" + dir.string() + "' not found");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".ppm") ++files;
    }
    std::vector<Image> frames;
    for (int k = 0;; ++k) {
        const fs::path p = dir / frame_name(k);
        if (!fs::exists(p)) break;
        frames.push_back(read_ppm(p));
    }
    if (frames.empty()) throw IoError("no frames in '" + dir.string() + "'");
    if (frames.size() != files) throw IoError("frames in '" + dir.string() + "' are not numbered contiguously");
    return frames;
}

fs::path dataset_dir(const ExperimentConfig& config) { return fs::path(config.out) / config.dataset.path; }
fs::path weights_path(const ExperimentConfig& config) { return fs::path(config.out) / "weights.rimg"; }

void run_dataset(const ExperimentConfig& config) {
    const Dataset ds = build_synthetic_dataset(config);
    write_dataset(ds, config, dataset_dir(config));
}

TrainSummary run_train(const ExperimentConfig& config) {
    config.validate();
    const Dataset ds = load_dataset(dataset_dir(config));
    if (ds.resolution != config.model.resolution()) {
        throw ValidationError("dataset resolution " + std::to_string(ds.resolution) + " does not match the model's " +
                              std::to_string(config.model.resolution()));
    }
    const auto examples = training_examples(ds, config.model.patch);
    if (examples.empty()) throw ValidationError("dataset has no samples");

    const auto& tc = config.train;
    generator::DenoiserWeights weights = tc.base_weights.empty()
                                             ? generator::init_denoiser(config.model, derive_seed(config.seed, kInitStream))
                                             : weights_for(config, tc.base_weights);
    // Fine-tuning keeps the base model's latent scales.
    if (tc.base_weights.empty()) {
        std::vector<Tensor> latents;
        latents.reserve(examples.size());
        for (const auto& ex : examples) latents.push_back(ex.x0);
        generator::fit_data_scale(weights, latents);
    }
    if (tc.adapter_rank > 0) {
        generator::attach_adapters(weights, tc.adapter_rank, {"wq", "wk", "wv", "wo"},
                                   derive_seed(config.seed, kAdapterStream));
    }
    generator::DenoiserModel model(weights);
    generator::AdamOptimizer adam;

    // Fixed probe set and draws, so losses before and after are comparable.
    std::vector<generator::TrainingExample> probe;
    const std::size_t stride = (examples.size() + kProbeSize - 1) / kProbeSize;
    for (std::size_t i = 0; i < examples.size(); i += stride) probe.push_back(examples[i]);
    const std::uint64_t probe_seed = derive_seed(config.seed, kProbeStream);

    TrainSummary summary;
    summary.initial_loss = generator::fm_loss(model, probe, probe_seed);
    std::ostringstream log;
    log << "step,epoch,loss\n";
    log << std::setprecision(17);
    const auto started = std::chrono::steady_clock::now();
    const std::size_t n = examples.size();
    const std::size_t batch = std::min<std::size_t>(tc.batch, n);
    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(derive_seed(config.seed, kShuffleStream), epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t b = 0; b < n; b += batch) {
            std::vector<generator::TrainingExample> items;
            for (std::size_t i = b; i < std::min(n, b + batch); ++i) items.push_back(examples[order[i]]);
            const double loss = generator::train_step(model, adam, items, tc.learning_rate,
                                                      derive_seed(derive_seed(config.seed, kStepStream), summary.steps));
            summary.losses.push_back(loss);
            log << summary.steps << ',' << epoch << ',' << loss << '\n';
            ++summary.steps;
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        std::cerr << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << summary.losses.back() << " ("
                  << static_cast<long>(ms) << " ms)\n";
    }
    summary.final_loss = generator::fm_loss(model, probe, probe_seed);
    make_dirs(config.out);
    save_weights(weights_path(config), weights);
    write_text(fs::path(config.out) / "train_log.csv", log.str());
    return summary;
}

TrackScene build_track(const ExperimentConfig& config, int frames) {
    config.validate();
    CameraTrack geometry = config.camera;
    if (frames > 0) geometry.frames = frames;
    const int res = config.dataset.resolution;
    const Subject subject = make_subject(config.dataset.seed, config.subject);
    const SubjectModel body = build_subject(subject, config.detail);
    const Canonicals canon = render_canonicals(body, config.camera, res);
    const auto poses = pose_track(config.pose, geometry.frames);
    const auto cams = camera_track(geometry, res);
    TrackScene scene;
    scene.conditions.resize(geometry.frames);
    scene.reference.resize(geometry.frames);
    scene.normals.resize(geometry.frames);
    parallel_for(geometry.frames, [&](std::size_t k) {
        RenderedView view = render_view(body, poses[k], cams[k]);
        scene.conditions[k] = make_condition(canon, subject, poses[k], view.normal_rgb, config.model.patch);
        scene.reference[k] = std::move(view.shaded);
        scene.normals[k] = std::move(view.normal_rgb);
    });
    return scene;
}

GenerateResult run_generate(const ExperimentConfig& config, const fs::path& weights_file, const fs::path& out) {
    config.validate();
    generator::DenoiserWeights weights = weights_for(config, weights_file);
    const generator::DenoiserModel model(weights);
    TrackScene scene = build_track(config);
    const int frames = static_cast<int>(scene.conditions.size());
    const auto schedule = generator::FlowSchedule::uniform(config.sample_steps);
    const auto shape = config.model.latent_shape();
    std::vector<codec::LatentImage> latents(frames);
    const std::uint64_t base = derive_seed(config.seed, kSampleStream);
    parallel_for(frames, [&](std::size_t k) {
        latents[k] = {generator::sample(model, scene.conditions[k], schedule, derive_seed(base, k), shape),
                      config.model.patch};
    });
    GenerateResult result;
    result.latent.patch = config.model.patch;
    result.latent.data = Tensor({shape[0], std::size_t(frames), shape[1], shape[2]});
    for (int k = 0; k < frames; ++k) {
        result.latent.set_frame(k, latents[k]);
        result.frames.push_back(codec::decode(latents[k]));
    }
    result.reference = std::move(scene.reference);
    write_frames(out / "frames", result.frames);
    write_frames(out / "reference", result.reference);
    save_latent(out / "latents.rimg", result.latent);
    return result;
}

RefineOutput run_refine(const ExperimentConfig& config, const fs::path& weights_file, const fs::path& input,
                        const fs::path& out) {
    config.validate();
    const int patch = config.model.patch;
    RefineOutput result;
    if (fs::is_regular_file(input)) {
        result.pre = load_latent(input, patch);
    } else {
        result.pre = codec::encode_video(read_frames(input), patch);
    }
    const int frames = result.pre.frames();
    if (frames < 2) throw std::invalid_argument("refine: need at least 2 frames, got " + std::to_string(frames));
    if (result.pre.grid_height() != config.model.grid || result.pre.grid_width() != config.model.grid) {
        throw ValidationError("refine: input latent grid does not match the model");
    }
    generator::DenoiserWeights weights = weights_for(config, weights_file);
    const generator::DenoiserModel model(weights);
    const TrackScene scene = build_track(config, frames);
    const auto refined =
        temporal::redenoise(result.pre, model, scene.conditions, config.refine, derive_seed(config.seed, kRefineStream));
    result.post = refined.latent;
    result.steps = refined.steps;
    result.regularized = refined.regularized;
    result.frames = codec::decode_video(result.post);
    write_frames(out / "frames", result.frames);
    save_latent(out / "latents_pre.rimg", result.pre);
    save_latent(out / "latents_post.rimg", result.post);
    return result;
}

EvalReport evaluate(const std::vector<Image>& candidate, const std::vector<Image>& reference) {
    if (candidate.size() != reference.size()) {
        throw std::invalid_argument("eval: candidate has " + std::to_string(candidate.size()) +
                                    " frames, reference has " + std::to_string(reference.size()));
    }
    if (candidate.empty()) throw std::invalid_argument("eval: no frames");
    EvalReport report;
    report.frames.resize(candidate.size());
    parallel_for(candidate.size(), [&](std::size_t k) {
        report.frames[k] = {metrics::psnr(candidate[k], reference[k]), metrics::ssim(candidate[k], reference[k])};
    });
    CompensatedSum p, s;
    bool identical = false;
    for (const auto& f : report.frames) {
        // Compensation would turn inf - inf into NaN.
        if (std::isinf(f.psnr)) identical = true;
        else p.add(f.psnr);
        s.add(f.ssim);
    }
    report.mean_psnr = identical ? std::numeric_limits<double>::infinity() : p.value() / report.frames.size();
    report.mean_ssim = s.value() / report.frames.size();
    report.e_flow = candidate.size() > 1 ? metrics::flow_warp_error(candidate) : 0.0;
    return report;
}

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string report_csv(const EvalReport& r) {
    std::string out = "frame,psnr,ssim,e_flow\n";
    for (std::size_t k = 0; k < r.frames.size(); ++k) {
        out += std::to_string(k) + "," + format_metric(r.frames[k].psnr) + "," + format_metric(r.frames[k].ssim) + ",\n";
    }
    out += "mean," + format_metric(r.mean_psnr) + "," + format_metric(r.mean_ssim) + "," + format_metric(r.e_flow) + "\n";
    return out;
}

std::string report_table(const EvalReport& r) {
    std::ostringstream t;
    t << std::left << std::setw(8) << "frame" << std::right << std::setw(12) << "PSNR" << std::setw(12) << "SSIM"
      << "\n";
    for (std::size_t k = 0; k < r.frames.size(); ++k) {
        t << std::left << std::setw(8) << k << std::right << std::setw(12) << format_metric(r.frames[k].psnr)
          << std::setw(12) << format_metric(r.frames[k].ssim) << "\n";
    }
    t << std::left << std::setw(8) << "mean" << std::right << std::setw(12) << format_metric(r.mean_psnr)
      << std::setw(12) << format_metric(r.mean_ssim) << "\n";
    t << "E_flow " << format_metric(r.e_flow) << "\n";
    return t.str();
}

EvalReport run_eval(const fs::path& candidate, const fs::path& reference, const fs::path& out) {
    const EvalReport report = evaluate(read_frames(candidate), read_frames(reference));
    make_dirs(out);
    write_text(out / "report.csv", report_csv(report));
    return report;
}

const std::vector<Strategy>& ablation_strategies() {
    static const std::vector<Strategy> s = {
        {"IF", "if"}, {"RD", "rd"}, {"RD+Med", "rd_med"}, {"RD+3DFFT", "rd_fft"}};
    return s;
}

std::vector<std::vector<Image>> run_ablation_refines(const ExperimentConfig& config, const fs::path& weights,
                                                     const fs::path& generated, const fs::path& out) {
    std::vector<std::vector<Image>> sets;
    sets.push_back(read_frames(generated / "frames"));
    write_frames(out / "if" / "frames", sets.back());
    write_frames(out / "reference", read_frames(generated / "reference"));
    const temporal::Regularizer regs[] = {temporal::Regularizer::kNone, temporal::Regularizer::kMedian,
                                          temporal::Regularizer::kSpectral};
    for (int i = 0; i < 3; ++i) {
        ExperimentConfig c = config;
        c.refine.regularizer = regs[i];
        sets.push_back(run_refine(c, weights, generated / "frames", out / ablation_strategies()[i + 1].dir).frames);
    }
    return sets;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "strategy,psnr,ssim,e_flow\n";
    for (const auto& r : rows) {
        out += r.strategy + "," + format_metric(r.report.mean_psnr) + "," + format_metric(r.report.mean_ssim) + "," +
               format_metric(r.report.e_flow) + "\n";
    }
    return out;
}

std::vector<AblationRow> run_ablation_eval(const fs::path& dir) {
    const auto reference = read_frames(dir / "reference");
    std::vector<AblationRow> rows;
    for (const auto& s : ablation_strategies()) {
        rows.push_back({s.name, evaluate(read_frames(dir / s.dir / "frames"), reference)});
    }
    write_text(dir / "ablation.csv", ablation_csv(rows));
    return rows;
}

void run_render_pose(const ExperimentConfig& config, const fs::path& out) {
    write_frames(out / "normals", build_track(config).normals);
}

}  // namespace reimagine::pipeline
