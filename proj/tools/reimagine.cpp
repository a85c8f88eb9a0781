#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "reimagine/core/errors.hpp"
#include "reimagine/pipeline/config.hpp"
#include "reimagine/pipeline/run.hpp"

namespace fs = std::filesystem;
using namespace reimagine;
using namespace reimagine::pipeline;

namespace {

constexpr int kValidationExit = 2;
constexpr int kIoExit = 3;

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || text[0] == '-') {
        throw ValidationError(source + ": '" + text + "' is not an unsigned 64-bit seed");
    }
    return v;
}

temporal::Regularizer parse_regularizer(const std::string& name) {
    if (name == "none") return temporal::Regularizer::kNone;
    if (name == "spectral") return temporal::Regularizer::kSpectral;
    if (name == "median") return temporal::Regularizer::kMedian;
    throw ValidationError("unknown regularizer '" + name + "' (none, spectral, median)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pose- and view-conditioned human video synthesis on a procedural body"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, seed_text, out_dir;
    app.add_option("--config", config_path, "Experiment config file");
    app.add_option("--seed", seed_text, "Experiment seed (overrides REIMAGINE_SEED and the config)");
    app.add_option("--out", out_dir, "Output directory (overrides the config)");

    auto* dataset = app.add_subcommand("dataset", "Render the synthetic training set");
    auto* train = app.add_subcommand("train", "Train the generator on the dataset");
    std::string weights;
    auto* generate = app.add_subcommand("generate", "Sample one image per track frame");
    generate->add_option("--weights", weights, "Weights file (default <out>/weights.rimg)");

    auto* refine = app.add_subcommand("refine", "Re-denoise a generated sequence");
    std::string input, regularizer;
    bool ablation = false;
    refine->add_option("--weights", weights, "Weights file (default <out>/weights.rimg)");
    refine->add_option("--input", input, "Frame directory or latent file (default <out>/generate/frames)");
    refine->add_option("--regularizer", regularizer, "none, spectral or median (overrides the config)");
    refine->add_flag("--ablation", ablation, "Write IF, RD, RD+Med and RD+3DFFT sequences to <out>/ablation");

    auto* eval = app.add_subcommand("eval", "Score frames against a reference");
    std::string candidate, reference, ablation_dir;
    eval->add_option("--candidate", candidate, "Candidate frame directory");
    eval->add_option("--reference", reference, "Reference frame directory");
    eval->add_option("--ablation", ablation_dir, "Directory written by refine --ablation");

    auto* render_pose = app.add_subcommand("render-pose", "Render the track's normal maps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kValidationExit;
    }

    try {
        ExperimentConfig config;
        if (!config_path.empty()) config = load_experiment_config(config_path);
        if (const char* env = std::getenv("REIMAGINE_SEED")) config.seed = parse_seed(env, "REIMAGINE_SEED");
        if (!seed_text.empty()) config.seed = parse_seed(seed_text, "--seed");
        if (!out_dir.empty()) config.out = out_dir;
        if (!regularizer.empty()) config.refine.regularizer = parse_regularizer(regularizer);
        config.validate();
        const fs::path out = config.out;
        const fs::path weights_file = weights.empty() ? weights_path(config) : fs::path(weights);

        if (dataset->parsed()) {
            run_dataset(config);
            std::cout << "dataset written to " << dataset_dir(config).string() << "\n";
        } else if (train->parsed()) {
            const auto s = run_train(config);
            std::cout << "trained " << s.steps << " steps, probe loss " << s.initial_loss << " -> " << s.final_loss
                      << "\n";
        } else if (generate->parsed()) {
            const auto r = run_generate(config, weights_file, out / "generate");
            std::cout << "wrote " << r.frames.size() << " frames to " << (out / "generate").string() << "\n";
        } else if (refine->parsed()) {
            const fs::path generated = out / "generate";
            if (ablation) {
                run_ablation_refines(config, weights_file, generated, out / "ablation");
                std::cout << "wrote ablation sequences to " << (out / "ablation").string() << "\n";
            } else {
                const auto r = run_refine(config, weights_file, input.empty() ? generated / "frames" : fs::path(input),
                                          out / "refine");
                std::cout << "refined " << r.frames.size() << " frames: " << r.steps << " steps, " << r.regularized
                          << " regularized\n";
            }
        } else if (eval->parsed()) {
            if (!ablation_dir.empty()) {
                const auto rows = run_ablation_eval(ablation_dir);
                std::cout << ablation_csv(rows);
            } else {
                if (candidate.empty() || reference.empty()) {
                    throw ValidationError("eval needs --candidate and --reference, or --ablation");
                }
                std::cout << report_table(run_eval(candidate, reference, out));
            }
        } else if (render_pose->parsed()) {
            run_render_pose(config, out);
            std::cout << "wrote normal maps to " << (out / "normals").string() << "\n";
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    }
    return 0;
}
