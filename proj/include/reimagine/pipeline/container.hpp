#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reimagine/core/tensor.hpp"
#include "reimagine/generator/denoiser.hpp"

namespace reimagine::pipeline {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// "RIMG" container: magic, u32 version (1), u32 tensor count, then per tensor
// u32 name length, name bytes, u8 dtype (0 = f32), u8 ndim, u32 dims, f32
// payload. All integers and floats little-endian. Values are stored as f32.
std::string serialize_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> parse_tensors(const std::string& bytes);

// I/O failures throw IoError; malformed contents throw FormatError.
void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

// Weights use the parameter names of DenoiserWeights::parameters().
void save_weights(const std::filesystem::path& path, generator::DenoiserWeights& weights);
// Fills weights built for `config`; names and shapes must match exactly
// (FormatError otherwise). Adapter tensors in the file attach adapters.
generator::DenoiserWeights load_weights(const std::filesystem::path& path, const generator::ModelConfig& config);

}  // namespace reimagine::pipeline
