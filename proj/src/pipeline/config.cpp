#include "reimagine/pipeline/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "reimagine/core/errors.hpp"

namespace reimagine::pipeline {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

bool parse_number(const std::string& s, ConfigValue& out) {
    if (s.empty()) return false;
    const bool is_int = s.find_first_of(".eE") == std::string::npos && s != "inf" && s != "nan";
    if (is_int) {
        std::int64_t v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return false;
        out.value = v;
        return true;
    }
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) return false;
    out.value = v;
    return true;
}

ConfigValue parse_value(const std::string& raw, int line) {
    const std::string s = trim(raw);
    ConfigValue out;
    out.line = line;
    if (s.empty()) throw ParseError("missing value", line);
    if (s == "true" || s == "false") {
        out.value = s == "true";
        return out;
    }
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"' || s.find('"', 1) != s.size() - 1) {
            throw ParseError("malformed string " + s, line);
        }
        out.value = s.substr(1, s.size() - 2);
        return out;
    }
    if (s.front() == '[') {
        if (s.back() != ']') throw ParseError("unterminated array " + s, line);
        std::vector<double> items;
        const std::string body = trim(s.substr(1, s.size() - 2));
        if (!body.empty()) {
            std::stringstream ss(body);
            std::string item;
            while (std::getline(ss, item, ',')) {
                ConfigValue v;
                if (!parse_number(trim(item), v)) throw ParseError("array items must be numbers: " + s, line);
                items.push_back(std::holds_alternative<std::int64_t>(v.value)
                                    ? static_cast<double>(std::get<std::int64_t>(v.value))
                                    : std::get<double>(v.value));
            }
        }
        out.value = std::move(items);
        return out;
    }
    if (!parse_number(s, out)) throw ParseError("cannot parse value " + s, line);
    return out;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

// Consumes the keys of one section, then rejects whatever is left.
class SectionReader {
public:
    SectionReader(const ConfigDocument& doc, const std::string& section) : section_(section) {
        const auto it = doc.find(section);
        if (it != doc.end()) entries_ = it->second;
    }
    ~SectionReader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        if (!entries_.empty()) {
            const auto& [key, v] = *entries_.begin();
            const std::string where = section_.empty() ? "top level" : "section [" + section_ + "]";
            throw ParseError("unknown key '" + key + "' in " + where, v.line);
        }
    }

    void get(const std::string& key, int& out) {
        if (auto v = take(key)) out = static_cast<int>(as_int(key, *v));
    }
    void get(const std::string& key, std::uint64_t& out) {
        if (auto v = take(key)) {
            const std::int64_t i = as_int(key, *v);
            if (i < 0) throw ParseError("'" + key + "' must be non-negative", v->line);
            out = static_cast<std::uint64_t>(i);
        }
    }
    void get(const std::string& key, double& out) {
        if (auto v = take(key)) {
            if (const auto* i = std::get_if<std::int64_t>(&v->value)) {
                out = static_cast<double>(*i);
            } else if (const auto* d = std::get_if<double>(&v->value)) {
                out = *d;
            } else {
                throw ParseError("'" + key + "' must be a number", v->line);
            }
        }
    }
    void get(const std::string& key, bool& out) {
        if (auto v = take(key)) {
            const auto* b = std::get_if<bool>(&v->value);
            if (!b) throw ParseError("'" + key + "' must be true or false", v->line);
            out = *b;
        }
    }
    void get(const std::string& key, std::string& out) {
        if (auto v = take(key)) {
            const auto* s = std::get_if<std::string>(&v->value);
            if (!s) throw ParseError("'" + key + "' must be a quoted string", v->line);
            out = *s;
        }
    }
    void get(const std::string& key, std::vector<int>& out) {
        if (auto v = take(key)) {
            const auto* a = std::get_if<std::vector<double>>(&v->value);
            if (!a) throw ParseError("'" + key + "' must be an array", v->line);
            out.clear();
            for (double x : *a) {
                if (x != std::floor(x)) throw ParseError("'" + key + "' must hold integers", v->line);
                out.push_back(static_cast<int>(x));
            }
        }
    }

private:
    std::optional<ConfigValue> take(const std::string& key) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        ConfigValue v = it->second;
        entries_.erase(it);
        return v;
    }
    static std::int64_t as_int(const std::string& key, const ConfigValue& v) {
        const auto* i = std::get_if<std::int64_t>(&v.value);
        if (!i) throw ParseError("'" + key + "' must be an integer", v.line);
        return *i;
    }

    std::string section_;
    std::map<std::string, ConfigValue> entries_;
};

temporal::Regularizer parse_regularizer(const std::string& s) {
    if (s == "none") return temporal::Regularizer::kNone;
    if (s == "spectral") return temporal::Regularizer::kSpectral;
    if (s == "median") return temporal::Regularizer::kMedian;
    throw ParseError("refine.regularizer must be none, spectral or median, got '" + s + "'");
}

std::string regularizer_name(temporal::Regularizer r) {
    switch (r) {
        case temporal::Regularizer::kNone: return "none";
        case temporal::Regularizer::kSpectral: return "spectral";
        case temporal::Regularizer::kMedian: return "median";
    }
    return "none";
}

}  // namespace

ConfigDocument parse_config_document(const std::string& text, std::map<std::string, int>* header_lines) {
    ConfigDocument doc;
    doc[""];
    std::string section;
    std::set<std::string> seen_sections;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError("malformed section header " + s, line);
            section = trim(s.substr(1, s.size() - 2));
            if (!valid_name(section)) throw ParseError("bad section name '" + section + "'", line);
            if (!seen_sections.insert(section).second) throw ParseError("duplicate section [" + section + "]", line);
            doc[section];
            if (header_lines) (*header_lines)[section] = line;
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", line);
        const std::string key = trim(s.substr(0, eq));
        if (!valid_name(key)) throw ParseError("bad key '" + key + "'", line);
        auto& entries = doc[section];
        if (entries.contains(key)) throw ParseError("duplicate key '" + key + "'", line);
        entries[key] = parse_value(s.substr(eq + 1), line);
    }
    return doc;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    std::map<std::string, int> header_lines;
    const ConfigDocument doc = parse_config_document(text, &header_lines);
    static const std::set<std::string> known{"", "dataset", "camera", "pose", "model", "train", "sample", "refine"};
    for (const auto& [name, entries] : doc) {
        if (!known.contains(name)) throw ParseError("unknown section [" + name + "]", header_lines[name]);
    }
    ExperimentConfig c;
    {
        SectionReader r(doc, "");
        r.get("out", c.out);
        r.get("seed", c.seed);
        r.get("subject", c.subject);
        r.get("detail", c.detail);
    }
    {
        SectionReader r(doc, "dataset");
        r.get("subjects", c.dataset.subjects);
        r.get("poses_per_subject", c.dataset.poses_per_subject);
        r.get("views_per_pose", c.dataset.views_per_pose);
        r.get("resolution", c.dataset.resolution);
        r.get("seed", c.dataset.seed);
        r.get("path", c.dataset.path);
    }
    {
        SectionReader r(doc, "camera");
        r.get("radius", c.camera.radius);
        r.get("elevation", c.camera.elevation);
        r.get("azimuth_start", c.camera.azimuth_start);
        r.get("azimuth_step", c.camera.azimuth_step);
        r.get("frames", c.camera.frames);
        r.get("focal", c.camera.focal);
    }
    {
        SectionReader r(doc, "pose");
        r.get("generator", c.pose.generator);
        r.get("phase_start", c.pose.phase_start);
        r.get("phase_step", c.pose.phase_step);
        r.get("amplitude", c.pose.amplitude);
    }
    {
        SectionReader r(doc, "model");
        r.get("width", c.model.width);
        r.get("head_dim", c.model.head_dim);
        r.get("blocks", c.model.blocks);
        r.get("mlp_hidden", c.model.mlp_hidden);
        r.get("patch", c.model.patch);
        r.get("pose_tokens", c.model.pose_tokens);
        r.get("pose_hidden", c.model.pose_hidden);
        r.get("rope_base", c.model.rope_base);
        r.get("data_std", c.model.data_std);
        r.get("injection_blocks", c.model.injection_blocks);
    }
    {
        SectionReader r(doc, "train");
        r.get("epochs", c.train.epochs);
        r.get("batch", c.train.batch);
        r.get("learning_rate", c.train.learning_rate);
        r.get("adapter_rank", c.train.adapter_rank);
        r.get("base_weights", c.train.base_weights);
    }
    {
        SectionReader r(doc, "sample");
        r.get("steps", c.sample_steps);
    }
    {
        SectionReader r(doc, "refine");
        std::string reg = regularizer_name(c.refine.regularizer);
        r.get("strength", c.refine.strength);
        r.get("steps", c.refine.steps);
        r.get("active_fraction", c.refine.active_fraction);
        r.get("tau_t", c.refine.tau_t);
        r.get("tau_s", c.refine.tau_s);
        r.get("anchor_first_frame", c.refine.anchor_first_frame);
        r.get("regularizer", reg);
        r.get("median_window", c.refine.median_window);
        c.refine.regularizer = parse_regularizer(reg);
    }
    if (c.model.patch >= 1 && c.dataset.resolution % c.model.patch == 0) {
        c.model.grid = c.dataset.resolution / c.model.patch;
    }
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("config: " + what); };
    if (dataset.subjects < 1 || dataset.poses_per_subject < 1 || dataset.views_per_pose < 1) {
        fail("dataset counts must be >= 1");
    }
    if (dataset.resolution < 8) fail("dataset.resolution must be >= 8");
    if (model.patch < 1 || dataset.resolution % model.patch != 0) {
        fail("dataset.resolution " + std::to_string(dataset.resolution) + " is not divisible by model.patch " +
             std::to_string(model.patch));
    }
    if (model.grid * model.patch != dataset.resolution) fail("model grid does not match the resolution");
    if (subject < 0 || subject >= dataset.subjects) fail("subject index out of range");
    if (detail < 1) fail("detail must be >= 1");
    if (camera.frames < 1) fail("camera.frames must be >= 1");
    if (!(camera.radius > 0.0) || !(camera.focal > 0.0)) fail("camera radius and focal must be > 0");
    if (pose.generator != "walk" && pose.generator != "turn" && pose.generator != "static") {
        fail("pose.generator must be walk, turn or static");
    }
    if (train.epochs < 0 || train.batch < 1) fail("train.epochs must be >= 0 and train.batch >= 1");
    if (!(train.learning_rate > 0.0)) fail("train.learning_rate must be > 0");
    if (train.adapter_rank < 0) fail("train.adapter_rank must be >= 0");
    if (sample_steps < 1) fail("sample.steps must be >= 1");
    try {
        model.validate();
        refine.validate();
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string to_text(const ExperimentConfig& c) {
    std::ostringstream o;
    o << std::setprecision(17);
    auto str = [](const std::string& s) { return "\"" + s + "\""; };
    o << "out = " << str(c.out) << "\nseed = " << c.seed << "\nsubject = " << c.subject << "\ndetail = " << c.detail
      << "\n\n[dataset]\nsubjects = " << c.dataset.subjects << "\nposes_per_subject = " << c.dataset.poses_per_subject
      << "\nviews_per_pose = " << c.dataset.views_per_pose << "\nresolution = " << c.dataset.resolution
      << "\nseed = " << c.dataset.seed << "\npath = " << str(c.dataset.path);
    auto real = [](double v) {
        std::ostringstream s;
        s << std::setprecision(17) << v;
        std::string t = s.str();
        if (t.find_first_of(".eE") == std::string::npos) t += ".0";
        return t;
    };
    o << "\n\n[camera]\nradius = " << real(c.camera.radius) << "\nelevation = " << real(c.camera.elevation)
      << "\nazimuth_start = " << real(c.camera.azimuth_start) << "\nazimuth_step = " << real(c.camera.azimuth_step)
      << "\nframes = " << c.camera.frames << "\nfocal = " << real(c.camera.focal);
    o << "\n\n[pose]\ngenerator = " << str(c.pose.generator) << "\nphase_start = " << real(c.pose.phase_start)
      << "\nphase_step = " << real(c.pose.phase_step) << "\namplitude = " << real(c.pose.amplitude);
    o << "\n\n[model]\nwidth = " << c.model.width << "\nhead_dim = " << c.model.head_dim
      << "\nblocks = " << c.model.blocks << "\nmlp_hidden = " << c.model.mlp_hidden << "\npatch = " << c.model.patch
      << "\npose_tokens = " << c.model.pose_tokens << "\npose_hidden = " << c.model.pose_hidden
      << "\nrope_base = " << real(c.model.rope_base) << "\ndata_std = " << real(c.model.data_std);
    if (!c.model.injection_blocks.empty()) {
        o << "\ninjection_blocks = [";
        for (std::size_t i = 0; i < c.model.injection_blocks.size(); ++i) {
            o << (i ? ", " : "") << c.model.injection_blocks[i];
        }
        o << "]";
    }
    o << "\n\n[train]\nepochs = " << c.train.epochs << "\nbatch = " << c.train.batch
      << "\nlearning_rate = " << real(c.train.learning_rate) << "\nadapter_rank = " << c.train.adapter_rank;
    if (!c.train.base_weights.empty()) o << "\nbase_weights = " << str(c.train.base_weights);
    o << "\n\n[sample]\nsteps = " << c.sample_steps;
    o << "\n\n[refine]\nstrength = " << real(c.refine.strength) << "\nsteps = " << c.refine.steps
      << "\nactive_fraction = " << real(c.refine.active_fraction) << "\ntau_t = " << real(c.refine.tau_t)
      << "\ntau_s = " << real(c.refine.tau_s)
      << "\nanchor_first_frame = " << (c.refine.anchor_first_frame ? "true" : "false")
      << "\nregularizer = " << str(regularizer_name(c.refine.regularizer))
      << "\nmedian_window = " << c.refine.median_window << "\n";
    return o.str();
}

}  // namespace reimagine::pipeline
