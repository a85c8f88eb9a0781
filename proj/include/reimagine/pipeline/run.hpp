#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reimagine/codec/codec.hpp"
#include "reimagine/core/image.hpp"
#include "reimagine/generator/flow.hpp"
#include "reimagine/pipeline/config.hpp"

namespace reimagine::pipeline {

namespace fs = std::filesystem;

// Frame files are frame_0000.ppm, frame_0001.ppm, ... with no gaps.
std::string frame_name(int index);
void write_frames(const fs::path& dir, const std::vector<Image>& frames);
// Reads a contiguous frame sequence; an empty or gapped directory is an
// IoError.
std::vector<Image> read_frames(const fs::path& dir);

// Dataset directory of an experiment: dataset.path under config.out.
fs::path dataset_dir(const ExperimentConfig& config);
fs::path weights_path(const ExperimentConfig& config);

void run_dataset(const ExperimentConfig& config);

struct TrainSummary {
    int steps = 0;
    // fm_loss on a fixed probe subset of the dataset with fixed draws.
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> losses;  // per step, on that step's batch
};

// Trains on the experiment dataset and writes weights.rimg and
// train_log.csv (step, epoch, loss) to config.out.
TrainSummary run_train(const ExperimentConfig& config);

// Conditions and ground-truth renders of the experiment's camera/pose track
// for config.subject; `frames` overrides the track length when > 0.
struct TrackScene {
    std::vector<generator::ConditionSet> conditions;
    std::vector<Image> reference;
    std::vector<Image> normals;
};
TrackScene build_track(const ExperimentConfig& config, int frames = 0);

// Samples every track frame independently (frame k uses stream k of the
// seed) and writes frames/, reference/ and latents.rimg under `out`.
struct GenerateResult {
    std::vector<Image> frames;
    std::vector<Image> reference;
    codec::LatentVideo latent;
};
GenerateResult run_generate(const ExperimentConfig& config, const fs::path& weights, const fs::path& out);

// Refines a frame directory or a latent file (tensor "latent", C x T x H x W)
// and writes frames/, latents_pre.rimg and latents_post.rimg under `out`.
struct RefineOutput {
    std::vector<Image> frames;
    codec::LatentVideo pre, post;
    int steps = 0;
    int regularized = 0;
};
RefineOutput run_refine(const ExperimentConfig& config, const fs::path& weights, const fs::path& input,
                        const fs::path& out);

struct FrameScore {
    double psnr = 0.0;
    double ssim = 0.0;
};
struct EvalReport {
    std::vector<FrameScore> frames;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double e_flow = 0.0;
};
EvalReport evaluate(const std::vector<Image>& candidate, const std::vector<Image>& reference);
// Formats a value with 6 decimals; infinities print as "inf".
std::string format_metric(double v);
// CSV with one row per frame and a final "mean" row carrying E_flow.
std::string report_csv(const EvalReport& report);
std::string report_table(const EvalReport& report);
EvalReport run_eval(const fs::path& candidate, const fs::path& reference, const fs::path& out);

// The four temporal strategies, in report order.
struct Strategy {
    std::string name;  // IF, RD, RD+Med, RD+3DFFT
    std::string dir;   // subdirectory holding its frames
};
const std::vector<Strategy>& ablation_strategies();

// Refines `generated`/frames with each regularizer into sibling
// directories of `out`, returning the refined frame sets (IF first).
std::vector<std::vector<Image>> run_ablation_refines(const ExperimentConfig& config, const fs::path& weights,
                                                     const fs::path& generated, const fs::path& out);

struct AblationRow {
    std::string strategy;
    EvalReport report;
};
std::string ablation_csv(const std::vector<AblationRow>& rows);
// Evaluates `dir`/{if,rd,rd_med,rd_fft} against `dir`/reference and
// writes ablation.csv there.
std::vector<AblationRow> run_ablation_eval(const fs::path& dir);

// Normal maps of the track, written to `out`/normals.
void run_render_pose(const ExperimentConfig& config, const fs::path& out);

}  // namespace reimagine::pipeline
