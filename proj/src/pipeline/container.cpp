#include "reimagine/pipeline/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "reimagine/core/errors.hpp"

namespace reimagine::pipeline {

namespace {

constexpr char kMagic[4] = {'R', 'I', 'M', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFloat32 = 0;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    const char* take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("RIMG: truncated while reading ") + what);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(*take(1, what)); }
    std::uint32_t u32(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
        return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_tensors(const std::vector<NamedTensor>& tensors) {
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        if (nt.tensor.rank() > 255) throw std::invalid_argument("RIMG: tensor rank above 255");
        put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
        out += nt.name;
        out.push_back(static_cast<char>(kFloat32));
        out.push_back(static_cast<char>(nt.tensor.rank()));
        for (std::size_t d : nt.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : nt.tensor.storage()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

std::vector<NamedTensor> parse_tensors(const std::string& bytes) {
    Reader r(bytes);
    if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) throw FormatError("RIMG: bad magic bytes");
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) throw FormatError("RIMG: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32("tensor count");
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32("name length");
        std::string name(r.take(len, "name"), len);
        if (r.u8("dtype") != kFloat32) throw FormatError("RIMG: tensor '" + name + "' has an unknown dtype");
        const std::uint8_t ndim = r.u8("ndim");
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = r.u32("dims");
        // Bound the element count by the bytes left before allocating.
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d != 0 && n > r.remaining() / 4 / d) throw FormatError("RIMG: tensor '" + name + "' payload truncated");
            n *= d;
        }
        Tensor t(shape);
        for (auto& v : t.storage()) v = static_cast<double>(std::bit_cast<float>(r.u32("payload")));
        out.push_back({std::move(name), std::move(t)});
    }
    if (!r.done()) throw FormatError("RIMG: trailing bytes after the last tensor");
    return out;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    const std::string bytes = serialize_tensors(tensors);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_tensors(ss.str());
}

void save_weights(const std::filesystem::path& path, generator::DenoiserWeights& weights) {
    std::vector<NamedTensor> out;
    for (const auto& p : weights.parameters()) out.push_back({p.name, *p.tensor});
    save_tensors(path, out);
}

generator::DenoiserWeights load_weights(const std::filesystem::path& path, const generator::ModelConfig& config) {
    const auto tensors = load_tensors(path);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& nt : tensors) {
        if (!by_name.emplace(nt.name, &nt.tensor).second) throw FormatError("weights: duplicate tensor '" + nt.name + "'");
    }
    generator::DenoiserWeights w = generator::init_denoiser(config, 0);
    // Adapter rank is read from the first adapter tensor.
    for (const auto& nt : tensors) {
        if (!nt.name.ends_with(".lora_down")) continue;
        if (nt.tensor.rank() != 2) throw FormatError("weights: adapter '" + nt.name + "' must be a matrix");
        std::vector<std::string> targets;
        for (const char* t : {"wq", "wk", "wv", "wo"}) {
            if (by_name.contains("block0.attn." + std::string(t) + ".lora_down")) targets.push_back(t);
        }
        generator::attach_adapters(w, static_cast<int>(nt.tensor.dim(1)), targets, 0);
        break;
    }
    const auto params = w.parameters();
    if (params.size() != tensors.size()) {
        throw FormatError("weights: file has " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    }
    for (const auto& p : params) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end()) throw FormatError("weights: missing tensor '" + p.name + "'");
        if (it->second->shape() != p.tensor->shape()) {
            throw FormatError("weights: tensor '" + p.name + "' has shape " + it->second->shape_string() +
                              ", model expects " + p.tensor->shape_string());
        }
        *p.tensor = *it->second;
    }
    return w;
}

}  // namespace reimagine::pipeline
