#include "reimagine/pipeline/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "reimagine/codec/codec.hpp"
#include "reimagine/core/errors.hpp"
#include "reimagine/core/image_io.hpp"
#include "reimagine/core/parallel.hpp"
#include "reimagine/core/rng.hpp"

namespace reimagine::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string subject_dir(int s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subject_%03d", s);
    return buf;
}

std::string sample_stem(int pose, int view) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%03d_v%02d", pose, view);
    return buf;
}

json vec3(const body::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

body::Vec3 read_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw FormatError("manifest: " + what + " must be a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Image read_checked(const fs::path& path, int resolution) {
    Image img = read_ppm(path);
    if (img.width != resolution || img.height != resolution) {
        throw FormatError("dataset: '" + path.string() + "' is " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + ", manifest declares " + std::to_string(resolution));
    }
    return img;
}

}  // namespace

double view_azimuth(int view, int views) { return 360.0 * view / views; }

Dataset build_synthetic_dataset(const ExperimentConfig& config) {
    config.validate();
    const auto& dc = config.dataset;
    Dataset ds;
    ds.resolution = dc.resolution;
    std::vector<SubjectModel> models;
    for (int s = 0; s < dc.subjects; ++s) {
        const Subject subject = make_subject(dc.seed, s);
        models.push_back(build_subject(subject, config.detail));
        ds.subjects.push_back({subject, render_canonicals(models.back(), config.camera, dc.resolution)});
    }
    for (int s = 0; s < dc.subjects; ++s) {
        Rng rng(derive_seed(dc.seed, 0x706f7365ULL + static_cast<std::uint64_t>(s)));
        for (int p = 0; p < dc.poses_per_subject; ++p) {
            const double phase = rng.uniform();
            const double amplitude = config.pose.amplitude * rng.uniform(0.5, 1.0);
            const body::PoseParams pose = walk_pose(phase, amplitude);
            for (int v = 0; v < dc.views_per_pose; ++v) {
                SyntheticSample smp;
                smp.subject = s;
                smp.pose_index = p;
                smp.view_index = v;
                smp.azimuth = view_azimuth(v, dc.views_per_pose);
                smp.pose = pose;
                ds.samples.push_back(std::move(smp));
            }
        }
    }
    parallel_for(ds.samples.size(), [&](std::size_t i) {
        auto& smp = ds.samples[i];
        const auto cam = view_camera(config.camera, smp.azimuth, dc.resolution);
        RenderedView view = render_view(models[smp.subject], smp.pose, cam);
        smp.normal_rgb = std::move(view.normal_rgb);
        smp.target = std::move(view.shaded);
    });
    return ds;
}

void write_dataset(const Dataset& ds, const ExperimentConfig& config, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    json manifest;
    manifest["resolution"] = ds.resolution;
    manifest["seed"] = config.dataset.seed;
    manifest["views_per_pose"] = config.dataset.views_per_pose;
    json subjects = json::array();
    for (const auto& rec : ds.subjects) {
        const std::string sd = subject_dir(rec.subject.index);
        fs::create_directories(dir / sd, ec);
        if (ec) throw IoError("cannot create '" + (dir / sd).string() + "': " + ec.message());
        write_ppm(dir / sd / "front.ppm", rec.canonicals.front);
        write_ppm(dir / sd / "back.ppm", rec.canonicals.back);
        json palette = json::array();
        for (const auto& c : rec.subject.palette) palette.push_back(vec3(c));
        subjects.push_back({{"index", rec.subject.index},
                            {"shape", rec.subject.shape.coefficients},
                            {"palette", palette},
                            {"front", sd + "/front.ppm"},
                            {"back", sd + "/back.ppm"}});
    }
    manifest["subjects"] = subjects;
    json samples = json::array();
    for (const auto& smp : ds.samples) {
        const std::string base = subject_dir(smp.subject) + "/" + sample_stem(smp.pose_index, smp.view_index);
        write_ppm(dir / (base + "_normal.ppm"), smp.normal_rgb);
        write_ppm(dir / (base + "_target.ppm"), smp.target);
        samples.push_back({{"subject", smp.subject},
                           {"pose_index", smp.pose_index},
                           {"view_index", smp.view_index},
                           {"azimuth", smp.azimuth},
                           {"pose", smp.pose.flat_rotations()},
                           {"normal", base + "_normal.ppm"},
                           {"target", base + "_target.ppm"}});
    }
    manifest["samples"] = samples;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw IoError("cannot write '" + (dir / "manifest.json").string() + "'");
    f << manifest.dump(1) << "\n";
    if (!f) throw IoError("failed writing manifest");
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.json";
    std::ifstream f(mpath);
    if (!f) throw IoError("dataset manifest '" + mpath.string() + "' not found");
    json m;
    try {
        m = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    Dataset ds;
    try {
        ds.resolution = m.at("resolution").get<int>();
        for (const auto& js : m.at("subjects")) {
            SubjectRecord rec;
            rec.subject.index = js.at("index").get<int>();
            if (rec.subject.index != static_cast<int>(ds.subjects.size())) {
                throw FormatError("manifest: subjects must be listed in index order");
            }
            rec.subject.shape.coefficients = js.at("shape").get<std::vector<double>>();
            const auto& pal = js.at("palette");
            if (pal.size() != kPartCount) throw FormatError("manifest: palette must have " + std::to_string(kPartCount) + " colors");
            for (int p = 0; p < kPartCount; ++p) rec.subject.palette[p] = read_vec3(pal[p], "palette color");
            rec.canonicals.front = read_checked(dir / js.at("front").get<std::string>(), ds.resolution);
            rec.canonicals.back = read_checked(dir / js.at("back").get<std::string>(), ds.resolution);
            ds.subjects.push_back(std::move(rec));
        }
        for (const auto& js : m.at("samples")) {
            SyntheticSample smp;
            smp.subject = js.at("subject").get<int>();
            if (smp.subject < 0 || smp.subject >= static_cast<int>(ds.subjects.size())) {
                throw FormatError("manifest: sample refers to unknown subject " + std::to_string(smp.subject));
            }
            smp.pose_index = js.at("pose_index").get<int>();
            smp.view_index = js.at("view_index").get<int>();
            smp.azimuth = js.at("azimuth").get<double>();
            const auto flat = js.at("pose").get<std::vector<double>>();
            if (flat.size() % 3 != 0) throw FormatError("manifest: pose length must be a multiple of 3");
            smp.pose = body::PoseParams::zero(flat.size() / 3);
            for (std::size_t j = 0; j < flat.size() / 3; ++j) {
                smp.pose.joint_rotations[j] = body::Vec3(flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]);
            }
            smp.normal_rgb = read_checked(dir / js.at("normal").get<std::string>(), ds.resolution);
            smp.target = read_checked(dir / js.at("target").get<std::string>(), ds.resolution);
            ds.samples.push_back(std::move(smp));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    return ds;
}

std::vector<generator::TrainingExample> training_examples(const Dataset& ds, int patch) {
    std::vector<codec::LatentImage> fronts, backs;
    for (const auto& rec : ds.subjects) {
        fronts.push_back(codec::encode(rec.canonicals.front, patch));
        backs.push_back(codec::encode(rec.canonicals.back, patch));
    }
    std::vector<generator::TrainingExample> out(ds.samples.size());
    parallel_for(ds.samples.size(), [&](std::size_t i) {
        const auto& smp = ds.samples[i];
        auto& ex = out[i];
        ex.x0 = codec::encode(smp.target, patch).data;
        ex.cond.pose = smp.pose;
        ex.cond.shape = ds.subjects[smp.subject].subject.shape;
        ex.cond.front = fronts[smp.subject];
        ex.cond.back = backs[smp.subject];
        ex.cond.normal_rgb = smp.normal_rgb;
    });
    return out;
}

}  // namespace reimagine::pipeline
