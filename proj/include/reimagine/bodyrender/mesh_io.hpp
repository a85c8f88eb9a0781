#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "reimagine/bodyrender/types.hpp"

namespace reimagine::body {

// Rigged-mesh JSON document:
//   {
//     "joints":      [{"parent": -1, "rest_offset": [x, y, z]}, ...],
//     "vertices":    [[x, y, z], ...],
//     "triangles":   [[i, j, k], ...],
//     "weights":     [[[joint, weight], ...], ...],   one row per vertex
//     "colors":      [[r, g, b], ...],
//     "shape_basis": [[[dx, dy, dz], ...], ...]       one block per coefficient
//   }
// Loading throws ParseError for malformed documents (with line or field
// context) and ValidationError when a weight row is off by more than 1e-4 or
// the skeleton is not a tree.
std::pair<Skeleton, RiggedMesh> parse_rigged_mesh(const std::string& text);
std::pair<Skeleton, RiggedMesh> load_rigged_mesh(const std::filesystem::path& path);

std::string serialize_rigged_mesh(const Skeleton& skeleton, const RiggedMesh& mesh);
void save_rigged_mesh(const std::filesystem::path& path, const Skeleton& skeleton, const RiggedMesh& mesh);

}  // namespace reimagine::body
