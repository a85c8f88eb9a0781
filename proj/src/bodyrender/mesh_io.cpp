#include "reimagine/bodyrender/mesh_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "reimagine/core/errors.hpp"

namespace reimagine::body {

using nlohmann::json;

namespace {

constexpr double kLoadWeightTolerance = 1e-4;

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    return obj.at(key);
}

const json& array_field(const json& obj, const char* key, const std::string& where) {
    const json& a = field(obj, key, where);
    if (!a.is_array()) throw ParseError(where + "." + key + ": expected an array");
    return a;
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ParseError(where + ": expected a number");
    return j.get<double>();
}

int integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ParseError(where + ": expected an integer");
    return j.get<int>();
}

Vec3 vec3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw ParseError(where + ": expected a 3-vector");
    return {number(j[0], where + "[0]"), number(j[1], where + "[1]"), number(j[2], where + "[2]")};
}

std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::pair<Skeleton, RiggedMesh> parse_rigged_mesh(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
        throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
    if (!doc.is_object()) throw ParseError("rigged mesh: top level must be an object");

    Skeleton skeleton;
    const json& joints = array_field(doc, "joints", "root");
    for (std::size_t i = 0; i < joints.size(); ++i) {
        const std::string where = at("joints", i);
        skeleton.parent.push_back(integer(field(joints[i], "parent", where), where + ".parent"));
        skeleton.rest_offset.push_back(vec3(field(joints[i], "rest_offset", where), where + ".rest_offset"));
    }

    RiggedMesh mesh;
    const json& vertices = array_field(doc, "vertices", "root");
    for (std::size_t i = 0; i < vertices.size(); ++i) mesh.vertices.push_back(vec3(vertices[i], at("vertices", i)));

    const json& triangles = array_field(doc, "triangles", "root");
    for (std::size_t i = 0; i < triangles.size(); ++i) {
        const std::string where = at("triangles", i);
        if (!triangles[i].is_array() || triangles[i].size() != 3) throw ParseError(where + ": expected 3 indices");
        mesh.triangles.push_back({integer(triangles[i][0], where), integer(triangles[i][1], where),
                                  integer(triangles[i][2], where)});
    }

    const json& weights = array_field(doc, "weights", "root");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const std::string where = at("weights", i);
        if (!weights[i].is_array()) throw ParseError(where + ": expected a list of [joint, weight] pairs");
        std::vector<SkinWeight> row;
        for (std::size_t k = 0; k < weights[i].size(); ++k) {
            const json& pair = weights[i][k];
            const std::string pw = at(where, k);
            if (!pair.is_array() || pair.size() != 2) throw ParseError(pw + ": expected [joint, weight]");
            row.push_back({integer(pair[0], pw + "[0]"), number(pair[1], pw + "[1]")});
        }
        mesh.skin_weights.push_back(std::move(row));
    }

    const json& colors = array_field(doc, "colors", "root");
    for (std::size_t i = 0; i < colors.size(); ++i) mesh.vertex_colors.push_back(vec3(colors[i], at("colors", i)));

    const json& basis = array_field(doc, "shape_basis", "root");
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const std::string where = at("shape_basis", k);
        if (!basis[k].is_array()) throw ParseError(where + ": expected an array of 3-vectors");
        std::vector<Vec3> block;
        for (std::size_t v = 0; v < basis[k].size(); ++v) block.push_back(vec3(basis[k][v], at(where, v)));
        mesh.shape_basis.push_back(std::move(block));
    }

    skeleton.validate();
    mesh.validate(skeleton.joint_count(), kLoadWeightTolerance);
    return {std::move(skeleton), std::move(mesh)};
}

std::pair<Skeleton, RiggedMesh> load_rigged_mesh(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open rigged mesh '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_rigged_mesh(ss.str());
}

std::string serialize_rigged_mesh(const Skeleton& skeleton, const RiggedMesh& mesh) {
    json doc;
    doc["joints"] = json::array();
    for (std::size_t j = 0; j < skeleton.joint_count(); ++j) {
        doc["joints"].push_back({{"parent", skeleton.parent[j]}, {"rest_offset", to_json(skeleton.rest_offset[j])}});
    }
    doc["vertices"] = json::array();
    for (const auto& v : mesh.vertices) doc["vertices"].push_back(to_json(v));
    doc["triangles"] = json::array();
    for (const auto& t : mesh.triangles) doc["triangles"].push_back({t[0], t[1], t[2]});
    doc["weights"] = json::array();
    for (const auto& row : mesh.skin_weights) {
        json r = json::array();
        for (const auto& sw : row) r.push_back({sw.joint, sw.weight});
        doc["weights"].push_back(std::move(r));
    }
    doc["colors"] = json::array();
    for (const auto& c : mesh.vertex_colors) doc["colors"].push_back(to_json(c));
    doc["shape_basis"] = json::array();
    for (const auto& block : mesh.shape_basis) {
        json b = json::array();
        for (const auto& v : block) b.push_back(to_json(v));
        doc["shape_basis"].push_back(std::move(b));
    }
    return doc.dump(1);
}

void save_rigged_mesh(const std::filesystem::path& path, const Skeleton& skeleton, const RiggedMesh& mesh) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write rigged mesh '" + path.string() + "'");
    out << serialize_rigged_mesh(skeleton, mesh);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace reimagine::body
