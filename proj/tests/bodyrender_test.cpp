#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "reimagine/bodyrender/humanoid.hpp"
#include "reimagine/bodyrender/kinematics.hpp"
#include "reimagine/bodyrender/mesh_io.hpp"
#include "reimagine/bodyrender/rasterizer.hpp"
#include "reimagine/core/errors.hpp"
#include "reimagine/core/rng.hpp"

using namespace reimagine;
using namespace reimagine::body;

namespace {

std::vector<Vec3> joint_positions(const Skeleton& s, const PoseParams& p) {
    std::vector<Vec3> out;
    for (const auto& t : forward_kinematics(s, p)) out.push_back(t.translation);
    return out;
}

PoseParams random_pose(Rng& rng, std::size_t joints, double scale) {
    PoseParams p = PoseParams::zero(joints);
    for (auto& r : p.joint_rotations) r = scale * Vec3(rng.normal(), rng.normal(), rng.normal());
    p.global_translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.1;
    return p;
}

CameraParams front_camera(int res = 64) {
    return CameraParams::orbit(Vec3(0, -0.05, 0), 3.0, 0.0, 0.0, 1.4 * res, res, res);
}

}  // namespace

TEST_CASE("procedural humanoid: invariants, shape rule, determinism") {
    SUBCASE("weights sum to one at every vertex") {
        auto [skel, mesh] = build_procedural_humanoid({{0.0, 0.0}}, 1);
        CHECK(skel.joint_count() == 17);
        CHECK_NOTHROW(skel.validate());
        CHECK_NOTHROW(mesh.validate(skel.joint_count(), 1e-6));
        for (const auto& row : mesh.skin_weights) {
            double s = 0.0;
            for (const auto& w : row) {
                CHECK(w.weight >= 0.0);
                s += w.weight;
            }
            CHECK(std::abs(s - 1.0) <= 1e-6);
        }
    }
    SUBCASE("coefficient 0 scales every bone length by 1 + beta0") {
        auto [base, m0] = build_procedural_humanoid({{0.0, 0.0}}, 1);
        auto [scaled, m1] = build_procedural_humanoid({{0.1, 0.0}}, 1);
        const auto p0 = joint_positions(base, PoseParams::zero(17));
        const auto p1 = joint_positions(scaled, PoseParams::zero(17));
        for (int j = 1; j < 17; ++j) {
            const double l0 = (p0[j] - p0[base.parent[j]]).norm();
            const double l1 = (p1[j] - p1[scaled.parent[j]]).norm();
            CHECK(l1 == doctest::Approx(1.1 * l0).epsilon(1e-12));
        }
    }
    SUBCASE("coefficient 1 scales girth; extra coefficients are ignored") {
        auto [s0, m0] = build_procedural_humanoid({{0.0, 0.0}}, 1);
        auto [s1, m1] = build_procedural_humanoid({{0.0, 0.2, 5.0}}, 1);
        REQUIRE(m0.vertices.size() == m1.vertices.size());
        for (std::size_t v = 0; v < m0.vertices.size(); ++v) {
            const Vec3 expect = m0.vertices[v] + 0.2 * m0.shape_basis[1][v];
            CHECK((m1.vertices[v] - expect).norm() < 1e-12);
        }
    }
    SUBCASE("byte-identical rebuilds") {
        auto [sa, a] = build_procedural_humanoid({{0.0, 0.0}}, 2);
        auto [sb, b] = build_procedural_humanoid({{0.0, 0.0}}, 2);
        REQUIRE(a.vertices.size() == b.vertices.size());
        CHECK(std::memcmp(a.vertices.data(), b.vertices.data(), a.vertices.size() * sizeof(Vec3)) == 0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(build_procedural_humanoid({{}}, 1), std::invalid_argument);
        CHECK_THROWS_AS(build_procedural_humanoid({{0.0}}, 0), std::invalid_argument);
    }
}

TEST_CASE("rigged mesh file round trip and validation") {
    auto [skel, mesh] = build_procedural_humanoid({{0.05, -0.1}}, 1);
    const std::string text = serialize_rigged_mesh(skel, mesh);
    auto [skel2, mesh2] = parse_rigged_mesh(text);
    CHECK(skel2.parent == skel.parent);
    CHECK(skel2.rest_offset == skel.rest_offset);
    CHECK(mesh2.vertices == mesh.vertices);
    CHECK(mesh2.triangles == mesh.triangles);
    CHECK(mesh2.skin_weights == mesh.skin_weights);
    CHECK(mesh2.vertex_colors == mesh.vertex_colors);
    CHECK(mesh2.shape_basis == mesh.shape_basis);

    const std::string small_ok = R"({"joints":[{"parent":-1,"rest_offset":[0,0,0]},{"parent":0,"rest_offset":[0,1,0]}],
        "vertices":[[0,0,0],[1,0,0],[0,1,0]],"triangles":[[0,1,2]],
        "weights":[[[0,1.0]],[[0,0.5],[1,0.5]],[[1,1.0]]],
        "colors":[[1,1,1],[1,1,1],[1,1,1]],"shape_basis":[]})";
    CHECK_NOTHROW(parse_rigged_mesh(small_ok));

    SUBCASE("weight row summing to 0.8") {
        std::string bad = small_ok;
        bad.replace(bad.find("[[1,1.0]]"), 9, "[[1,0.8]]");
        CHECK_THROWS_AS(parse_rigged_mesh(bad), ValidationError);
    }
    SUBCASE("parent cycle") {
        const std::string bad = R"({"joints":[{"parent":-1,"rest_offset":[0,0,0]},{"parent":2,"rest_offset":[0,1,0]},
            {"parent":1,"rest_offset":[0,1,0]}],"vertices":[],"triangles":[],"weights":[],"colors":[],"shape_basis":[]})";
        CHECK_THROWS_AS(parse_rigged_mesh(bad), ValidationError);
    }
    SUBCASE("malformed JSON reports a line") {
        try {
            parse_rigged_mesh("{\n\"joints\": [\n  {\"parent\": -1,,}\n]}");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("wrong field type names the field") {
        std::string bad = small_ok;
        bad.replace(bad.find("[0,1,2]"), 7, "[0,\"x\",2]");
        try {
            parse_rigged_mesh(bad);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("triangles[0]") != std::string::npos);
        }
    }
}

TEST_CASE("forward kinematics") {
    auto [skel, mesh] = build_procedural_humanoid({{0.0, 0.0}}, 1);
    const auto rest = joint_positions(skel, PoseParams::zero(17));
    SUBCASE("identity pose gives cumulative rest offsets") {
        for (int j = 0; j < 17; ++j) {
            Vec3 acc = Vec3::Zero();
            for (int k = j; k != Skeleton::kNoParent; k = skel.parent[k]) acc += skel.rest_offset[k];
            CHECK((rest[j] - acc).norm() < 1e-15);
        }
    }
    SUBCASE("root rotation rotates every joint") {
        PoseParams p = PoseParams::zero(17);
        p.joint_rotations[0] = Vec3(0, 0, std::numbers::pi / 2);
        const auto rotated = joint_positions(skel, p);
        for (int j = 0; j < 17; ++j) {
            // Hand-applied rotation by +90 degrees about z: (x, y, z) -> (-y, x, z).
            const Vec3 expect(-rest[j].y(), rest[j].x(), rest[j].z());
            CHECK((rotated[j] - expect).norm() < 1e-12);
        }
    }
    SUBCASE("global translation shifts all joints") {
        PoseParams p = PoseParams::zero(17);
        p.global_translation = Vec3(1, 2, 3);
        const auto moved = joint_positions(skel, p);
        for (int j = 0; j < 17; ++j) CHECK((moved[j] - rest[j] - Vec3(1, 2, 3)).norm() < 1e-12);
    }
    CHECK_THROWS_AS(forward_kinematics(skel, PoseParams::zero(3)), std::invalid_argument);
}

TEST_CASE("linear blend skinning") {
    SUBCASE("identity transforms reproduce the rest mesh bit for bit") {
        auto [skel, mesh] = build_procedural_humanoid({{0.0, 0.0}}, 2);
        const auto posed = skin_mesh(mesh, std::vector<RigidTransform>(17), ShapeParams{{0.0, 0.0}});
        REQUIRE(posed.vertices.size() == mesh.vertices.size());
        CHECK(std::memcmp(posed.vertices.data(), mesh.vertices.data(), mesh.vertices.size() * sizeof(Vec3)) == 0);
    }
    RiggedMesh mesh;
    mesh.vertices = {Vec3(0.3, 1.5, 0.0)};
    mesh.vertex_colors = {Vec3::Ones()};
    SUBCASE("single bone rotated 90 degrees about x around its bind origin") {
        mesh.skin_weights = {{{1, 1.0}}};
        const Vec3 origin(0.0, 1.0, 0.0);
        const Mat3 rx = axis_angle_to_matrix(Vec3(std::numbers::pi / 2, 0, 0));
        std::vector<RigidTransform> ts(2);
        ts[1] = RigidTransform::translate(origin) * RigidTransform::rotate(rx) * RigidTransform::translate(-origin);
        const auto posed = skin_mesh(mesh, ts, {});
        // Relative vector (0.3, 0.5, 0) rotated about x by 90 degrees is (0.3, 0, 0.5).
        CHECK((posed.vertices[0] - Vec3(0.3, 1.0, 0.5)).norm() < 1e-12);
    }
    SUBCASE("two half weights average the displacements") {
        mesh.skin_weights = {{{0, 0.5}, {1, 0.5}}};
        std::vector<RigidTransform> ts = {RigidTransform::translate(Vec3(1, 0, 0)),
                                          RigidTransform::translate(Vec3(0, 1, 0))};
        const auto posed = skin_mesh(mesh, ts, {});
        CHECK((posed.vertices[0] - mesh.vertices[0] - Vec3(0.5, 0.5, 0)).norm() < 1e-15);
    }
    SUBCASE("a global rigid transform moves the skinned mesh rigidly") {
        auto [skel, body] = build_procedural_humanoid({{0.0, 0.0}}, 1);
        Rng rng(3);
        for (int trial = 0; trial < 5; ++trial) {
            const auto ts = skinning_transforms(skel, random_pose(rng, 17, 0.3));
            const RigidTransform g{axis_angle_to_matrix(Vec3(rng.normal(), rng.normal(), rng.normal())),
                                   Vec3(rng.normal(), rng.normal(), rng.normal())};
            std::vector<RigidTransform> moved;
            for (const auto& t : ts) moved.push_back(g * t);
            const auto a = skin_mesh(body, ts, {});
            const auto b = skin_mesh(body, moved, {});
            double worst = 0.0;
            for (std::size_t v = 0; v < a.vertices.size(); ++v) {
                worst = std::max(worst, (g.apply(a.vertices[v]) - b.vertices[v]).norm());
            }
            CHECK(worst < 1e-5);
        }
    }
}

TEST_CASE("normal map rendering") {
    SUBCASE("icosphere center pixel faces the camera") {
        auto [s, sphere] = make_icosphere(3, 0.5, Vec3::Zero());
        const auto posed = skin_mesh(sphere, std::vector<RigidTransform>(1), {});
        // Odd resolution puts the center pixel exactly on the optical axis.
        const auto cam = CameraParams::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 80.0, 65, 65);
        const auto map = render_normal_map(posed, cam);
        REQUIRE(map.mask[map.index(32, 32)]);
        CHECK((map.normals[map.index(32, 32)] - Vec3(0, 0, 1)).norm() < 1e-2);
        for (std::size_t i = 0; i < map.mask.size(); ++i) {
            if (map.mask[i]) {
                CHECK(std::abs(map.normals[i].norm() - 1.0) <= 1e-4);
            } else {
                CHECK(map.normals[i] == Vec3::Zero());
            }
        }
    }
    SUBCASE("flat quad has one exact normal") {
        auto [s, quad] = make_quad(0.5, 0.0);
        const auto posed = skin_mesh(quad, std::vector<RigidTransform>(1), {});
        const auto cam = CameraParams::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 80.0, 32, 32);
        const auto map = render_normal_map(posed, cam);
        CHECK(map.covered_count() > 100);
        for (std::size_t i = 0; i < map.mask.size(); ++i) {
            if (map.mask[i]) CHECK(map.normals[i] == Vec3(0, 0, 1));
        }
        // Seen from behind, the quad is culled.
        const auto back = CameraParams::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3::UnitY(), 80.0, 32, 32);
        CHECK(render_normal_map(posed, back).covered_count() == 0);
    }
    SUBCASE("empty mesh and bad cameras") {
        const auto map = render_normal_map(PosedMesh{}, front_camera());
        CHECK(map.covered_count() == 0);
        for (const auto& n : map.normals) CHECK(n == Vec3::Zero());
        auto cam = front_camera();
        cam.focal = 0.0;
        CHECK_THROWS_AS(render_normal_map(PosedMesh{}, cam), std::invalid_argument);
        auto tiny = front_camera(4);
        CHECK_THROWS_AS(render_normal_map(PosedMesh{}, tiny), std::invalid_argument);
    }
    SUBCASE("humanoid torso faces the front camera and renders deterministically") {
        auto [skel, body] = build_procedural_humanoid({{0.0, 0.0}}, 2);
        const auto posed = pose_mesh(skel, body, canonical_a_pose());
        const auto cam = front_camera();
        const auto a = render_normal_map(posed, cam);
        const auto b = render_normal_map(posed, cam);
        CHECK(a.mask == b.mask);
        CHECK(std::memcmp(a.normals.data(), b.normals.data(), a.normals.size() * sizeof(Vec3)) == 0);
        // Pixel over the chest.
        const Vec3 chest = cam.to_camera(Vec3(0.0, 0.25, 0.13));
        const int px = static_cast<int>(cam.principal_point.x() + cam.focal * chest.x() / -chest.z());
        const int py = static_cast<int>(cam.principal_point.y() - cam.focal * chest.y() / -chest.z());
        REQUIRE(a.mask[a.index(px, py)]);
        CHECK(a.normals[a.index(px, py)].z() > 0.8);
    }
    SUBCASE("opposite views of a mirror-symmetric body cover the same area") {
        auto [skel, body] = build_procedural_humanoid({{0.0, 0.0}}, 2);
        PosedMesh posed = pose_mesh(skel, body, canonical_a_pose());
        // Union with the z-mirrored copy (winding flipped) to get front/back symmetry.
        const int n = static_cast<int>(posed.vertices.size());
        const std::size_t nt = posed.triangles.size();
        for (int v = 0; v < n; ++v) {
            const Vec3 p = posed.vertices[v];
            posed.vertices.push_back(Vec3(p.x(), p.y(), -p.z()));
            posed.colors.push_back(posed.colors[v]);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            const auto tri = posed.triangles[t];
            posed.triangles.push_back({tri[0] + n, tri[2] + n, tri[1] + n});
        }
        posed.normals = vertex_normals(posed.vertices, posed.triangles);
        for (double az : {0.0, 90.0, 30.0}) {
            const auto c0 = CameraParams::orbit(Vec3(0, -0.05, 0), 3.0, az, 10.0, 180.0, 128, 128);
            const auto c1 = CameraParams::orbit(Vec3(0, -0.05, 0), 3.0, az + 180.0, 10.0, 180.0, 128, 128);
            const double n0 = static_cast<double>(render_normal_map(posed, c0).covered_count());
            const double n1 = static_cast<double>(render_normal_map(posed, c1).covered_count());
            CHECK(std::abs(n0 - n1) <= 0.01 * n0);
        }
    }
}

TEST_CASE("normal encoding") {
    NormalMap m(2, 1);
    m.normals[0] = Vec3(0, 0, 1);
    m.normals[1] = Vec3(-1, 0, 0);
    m.mask = {1, 1};
    const Image rgb = encode_normals_rgb(m);
    CHECK(rgb.at(0, 0, 0) == 0.5);
    CHECK(rgb.at(0, 0, 1) == 0.5);
    CHECK(rgb.at(0, 0, 2) == 1.0);
    CHECK(rgb.at(1, 0, 0) == 0.0);
    CHECK(rgb.at(1, 0, 1) == 0.5);
    CHECK(rgb.at(1, 0, 2) == 0.5);

    auto [skel, body] = build_procedural_humanoid({{0.0, 0.0}}, 1);
    const auto map = render_normal_map(pose_mesh(skel, body, canonical_a_pose()), front_camera());
    const auto back = decode_normals_rgb(encode_normals_rgb(map), map.mask);
    for (std::size_t i = 0; i < map.mask.size(); ++i) {
        if (map.mask[i]) CHECK((back.normals[i] - map.normals[i]).norm() < 1e-6);
    }
    const Image enc = encode_normals_rgb(map);
    for (std::size_t i = 0; i < map.mask.size(); ++i) {
        if (!map.mask[i]) CHECK(enc.data[3 * i] + enc.data[3 * i + 1] + enc.data[3 * i + 2] == 0.0);
    }
}

TEST_CASE("shaded rendering") {
    auto [s, quad] = make_quad(0.5, 0.0);
    auto posed = skin_mesh(quad, std::vector<RigidTransform>(1), {});
    const auto cam = CameraParams::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 80.0, 32, 32);
    SUBCASE("light facing the surface saturates white") {
        const Image img = render_shaded(posed, cam, Vec3(0, 0, 1));
        CHECK(img.at(16, 16, 0) == 1.0);
        CHECK(img.at(16, 16, 2) == 1.0);
        CHECK(img.at(0, 0, 0) == 0.0);
    }
    SUBCASE("antiparallel light leaves only ambient") {
        for (auto& c : posed.colors) c = Vec3(0.5, 0.25, 1.0);
        const Image img = render_shaded(posed, cam, Vec3(0, 0, -1));
        CHECK(img.at(16, 16, 0) == doctest::Approx(0.2 * 0.5));
        CHECK(img.at(16, 16, 1) == doctest::Approx(0.2 * 0.25));
        CHECK(img.at(16, 16, 2) == doctest::Approx(0.2 * 1.0));
    }
    SUBCASE("determinism and light validation") {
        auto [skel, body] = build_procedural_humanoid({{0.0, 0.0}}, 1);
        const auto hp = pose_mesh(skel, body, canonical_a_pose());
        const Vec3 l = Vec3(0.2, 0.8, 0.5).normalized();
        const Image a = render_shaded(hp, front_camera(), l);
        const Image b = render_shaded(hp, front_camera(), l);
        CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
        CHECK_THROWS_AS(render_shaded(hp, front_camera(), Vec3(0, 0, 2)), std::invalid_argument);
    }
}
