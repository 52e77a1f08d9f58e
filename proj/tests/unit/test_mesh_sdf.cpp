#include "test_support.hpp"

#include <fstream>
#include <sstream>

using namespace posehyp;
using namespace posehyp::testing;
using Catch::Approx;

namespace {

const char* cube_obj = R"(# unit cube
v -0.5 -0.5 -0.5
v  0.5 -0.5 -0.5
v  0.5  0.5 -0.5
v -0.5  0.5 -0.5
v -0.5 -0.5  0.5
v  0.5 -0.5  0.5
v  0.5  0.5  0.5
v -0.5  0.5  0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

std::string drop_last_face(const std::string& obj)
{
    const auto pos = obj.rfind("f ");
    return obj.substr(0, pos);
}

MeshPtr unit_icosphere(int subdivisions) { return std::make_shared<const TriangleMesh>(primitives::icosphere(1.0, subdivisions)); }

} // namespace

TEST_CASE("OBJ cube loads as a closed mesh", "[mesh_sdf]")
{
    std::istringstream in(cube_obj);
    const TriangleMesh mesh = parse_obj(in);
    CHECK(mesh.vertices().size() == 8);
    CHECK(mesh.triangles().size() == 12);
    CHECK(mesh.watertight());
}

TEST_CASE("open cube is rejected unless warn-only", "[mesh_sdf]")
{
    const std::string open = drop_last_face(cube_obj);
    std::istringstream in(open);
    CHECK_THROWS_AS(parse_obj(in), WatertightError);
    std::istringstream again(open);
    MeshLoadOptions opts;
    opts.require_watertight = false;
    const TriangleMesh mesh = parse_obj(again, opts);
    CHECK_FALSE(mesh.watertight());
    CHECK(mesh.triangles().size() == 11);
}

TEST_CASE("malformed mesh files raise format errors", "[mesh_sdf]")
{
    std::istringstream bad_index("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK_THROWS_AS(parse_obj(bad_index), Error);
    CHECK_THROWS_AS(parse_binary_stl(std::string(90, '\0')), FormatError);
    CHECK_THROWS_WITH(load_mesh("/nonexistent/thing.obj"), Catch::Matchers::ContainsSubstring("mesh not found"));
}

TEST_CASE("icosphere STL round trip keeps bounds within tessellation error", "[mesh_sdf]")
{
    const auto dir = scratch_dir("stl");
    const TriangleMesh sphere = primitives::icosphere(1.0, 3);
    write_binary_stl(sphere, dir / "sphere.stl");
    const TriangleMesh loaded = load_mesh(dir / "sphere.stl");
    CHECK(loaded.watertight());
    CHECK(loaded.vertices().size() == sphere.vertices().size());
    const double chord = chord_error(sphere, 1.0);
    for (int a = 0; a < 3; ++a) {
        CHECK(loaded.bounds().max[a] <= 1.0 + 1e-6);
        CHECK(loaded.bounds().max[a] >= 1.0 - chord - 1e-6);
        CHECK(loaded.bounds().min[a] >= -1.0 - 1e-6);
        CHECK(loaded.bounds().min[a] <= -1.0 + chord + 1e-6);
    }
}

TEST_CASE("mesh SDF matches the analytic sphere", "[mesh_sdf]")
{
    const auto mesh = unit_icosphere(3);
    const double chord = chord_error(*mesh, 1.0);

    const SdfSample out = mesh->signed_distance(Vec3(2, 0, 0));
    CHECK(out.value == Approx(1.0).margin(chord));
    CHECK(out.gradient.norm() == Approx(1.0).margin(1e-12));
    CHECK(out.gradient.dot(Vec3::UnitX()) > 0.99);

    CHECK(mesh->signed_distance(Vec3::Zero()).value == Approx(-1.0).margin(chord));

    const SdfSample on_vertex = mesh->signed_distance(mesh->vertices()[5]);
    CHECK(on_vertex.value == 0.0);
    CHECK(on_vertex.gradient.norm() == Approx(1.0).margin(1e-9));

    Rng rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p(u(rng), u(rng), u(rng));
        const SdfSample s = mesh->signed_distance(p);
        CHECK(s.value == Approx(p.norm() - 1.0).margin(chord + 1e-9));
        CHECK((s.value < 0.0) == mesh->contains(p));
    }
}

TEST_CASE("grid dimensions follow the padded bounding box", "[mesh_sdf]")
{
    const auto sphere = unit_icosphere(3);
    const SdfGrid grid = build_sdf_grid(sphere, {0.1, 0.05});
    for (int a = 0; a < 3; ++a) {
        const double span = sphere->bounds().extent()[a] + 0.1;
        CHECK(grid.dims()[a] == static_cast<std::uint32_t>(std::ceil(span / 0.1 - 1e-9)));
        CHECK(grid.dims()[a] == 21);
    }
    CHECK(grid.query(Vec3::Zero()).value == Approx(-1.0).margin(0.1));

    const auto box = std::make_shared<const TriangleMesh>(primitives::box(Vec3(0.2, 0.2, 0.2)));
    const SdfGrid box_grid = build_sdf_grid(box, {0.01, 0.05});
    CHECK(box_grid.dims() == std::array<std::uint32_t, 3>{30, 30, 30});

    CHECK_THROWS_AS(build_sdf_grid(box, {0.0, 0.05}), PreconditionError);
    CHECK_THROWS_AS(build_sdf_grid(box, {0.01, -1.0}), PreconditionError);
}

TEST_CASE("voxel budget overflow suggests a coarser resolution", "[mesh_sdf]")
{
    const auto box = std::make_shared<const TriangleMesh>(primitives::box(Vec3(0.2, 0.2, 0.2)));
    SdfGridParams params{0.01, 0.05, 1000};
    try {
        build_sdf_grid(box, params);
        FAIL("expected a capacity error");
    }
    catch (const CapacityError& e) {
        CHECK(e.suggested_resolution > 0.01);
        params.resolution = e.suggested_resolution;
        const SdfGrid coarse = build_sdf_grid(box, params);
        CHECK(coarse.num_voxels() <= 1000);
    }
}

TEST_CASE("grid voxels agree with the mesh and keep unit gradients", "[mesh_sdf]")
{
    const auto sphere = unit_icosphere(3);
    const double r = 0.05;
    const SdfGrid grid = build_sdf_grid(sphere, {r, 0.05});
    const auto [nx, ny, nz] = grid.dims();
    for (std::uint32_t k = 0; k < nz; ++k)
        for (std::uint32_t j = 0; j < ny; ++j)
            for (std::uint32_t i = 0; i < nx; ++i) {
                const auto& v = grid.voxels()[grid.linear_index(i, j, k)];
                const double gnorm = std::sqrt(double(v.gx) * v.gx + double(v.gy) * v.gy + double(v.gz) * v.gz);
                REQUIRE(gnorm == Approx(1.0).margin(1e-6));
                REQUIRE(v.value == Approx(sphere->signed_distance(grid.voxel_center(i, j, k)).value).margin(r));
                if (i + 1 < nx)
                    REQUIRE(std::abs(grid.voxels()[grid.linear_index(i + 1, j, k)].value - v.value) <= std::sqrt(3.0) * r);
                if (j + 1 < ny)
                    REQUIRE(std::abs(grid.voxels()[grid.linear_index(i, j + 1, k)].value - v.value) <= std::sqrt(3.0) * r);
                if (k + 1 < nz)
                    REQUIRE(std::abs(grid.voxels()[grid.linear_index(i, j, k + 1)].value - v.value) <= std::sqrt(3.0) * r);
            }
}

TEST_CASE("grid sign agrees with ray parity away from the surface", "[mesh_sdf]")
{
    const auto sphere = unit_icosphere(3);
    const double r = 0.05;
    const SdfGrid grid = build_sdf_grid(sphere, {r, 0.05});
    Rng rng(11);
    std::uniform_real_distribution<double> u(-1.3, 1.3);
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        const Vec3 p(u(rng), u(rng), u(rng));
        if (std::abs(sphere->signed_distance(p).value) <= std::sqrt(3.0) * r)
            continue;
        ++checked;
        REQUIRE((grid.query(p).value < 0.0) == sphere->contains(p));
    }
    CHECK(checked > 1000);
}

TEST_CASE("interpolated grid moves by h along its gradient", "[mesh_sdf]")
{
    const auto sphere = unit_icosphere(3);
    const double r = 0.05;
    const SdfGrid grid = build_sdf_grid(sphere, {r, 0.3});
    const TrilinearSdf smooth(grid);
    Rng rng(5);
    std::uniform_real_distribution<double> u(-1.25, 1.25);
    int checked = 0;
    for (int i = 0; i < 2000 && checked < 300; ++i) {
        const Vec3 p(u(rng), u(rng), u(rng));
        if (std::abs(sphere->signed_distance(p).value) < 2.0 * r || p.norm() < 2.0 * r)
            continue;
        const SdfSample s = smooth.query(p);
        for (double h : {r / 2.0, -r / 2.0}) {
            const Vec3 q = p + h * s.gradient.normalized();
            if (std::abs(sphere->signed_distance(q).value) < 2.0 * r || q.norm() < 2.0 * r)
                continue;
            REQUIRE(smooth.query(q).value - s.value == Approx(h).margin(0.3 * std::abs(h)));
        }
        ++checked;
    }
    CHECK(checked == 300);
}

TEST_CASE("batch queries: voxel centers, out-of-grid fallback, empty", "[mesh_sdf]")
{
    const auto sphere = unit_icosphere(3);
    const SdfGrid grid = build_sdf_grid(sphere, {0.1, 0.05});
    std::vector<Vec3> centers;
    std::vector<float> stored;
    for (std::uint32_t k = 0; k < grid.dims()[2]; k += 3)
        for (std::uint32_t j = 0; j < grid.dims()[1]; j += 2)
            for (std::uint32_t i = 0; i < grid.dims()[0]; ++i) {
                centers.push_back(grid.voxel_center(i, j, k));
                stored.push_back(grid.voxels()[grid.linear_index(i, j, k)].value);
            }
    const auto out = sdf_query_batch(grid, std::span<const Vec3>(centers));
    REQUIRE(out.size() == centers.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        REQUIRE(out[i].value == static_cast<double>(stored[i]));

    const auto fine = unit_icosphere(5);
    const SdfGrid fine_grid = build_sdf_grid(fine, {0.1, 0.05});
    const Vec3 far(fine->bounds().max.x() + 0.05 + 1.0, 0.0, 0.0);
    const std::vector<Vec3> far_pts{far, -far, Vec3(0, 0, far.x())};
    for (const auto& s : sdf_query_batch(fine_grid, std::span<const Vec3>(far_pts)))
        CHECK(s.value == Approx(far.x() - 1.0).margin(1e-3));

    CHECK(sdf_query_batch(grid, std::span<const Vec3>{}).empty());
}

TEST_CASE("batch query equals pointwise query", "[mesh_sdf]")
{
    const auto sphere = unit_icosphere(2);
    const SdfGrid grid = build_sdf_grid(sphere, {0.1, 0.05});
    Rng rng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i)
        pts.emplace_back(u(rng), u(rng), u(rng));
    const auto batch = sdf_query_batch(grid, std::span<const Vec3>(pts));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const SdfSample s = grid.query(pts[i]);
        REQUIRE(batch[i].value == s.value);
        REQUIRE(batch[i].gradient == s.gradient);
    }
}

TEST_CASE("SDF cache round trip and hit detection", "[mesh_sdf]")
{
    const auto dir = scratch_dir("sdf_cache");
    const auto sphere = unit_icosphere(2);
    const SdfGridParams params{0.1, 0.05};
    bool hit = true;
    const SdfGrid built = sdf_cache::load_or_build(sphere, params, dir, &hit);
    CHECK_FALSE(hit);
    const SdfGrid loaded = sdf_cache::load_or_build(sphere, params, dir, &hit);
    CHECK(hit);
    REQUIRE(loaded.dims() == built.dims());
    CHECK(loaded.origin() == built.origin());
    for (std::size_t i = 0; i < built.voxels().size(); ++i) {
        REQUIRE(loaded.voxels()[i].value == built.voxels()[i].value);
        REQUIRE(loaded.voxels()[i].gz == built.voxels()[i].gz);
    }
    // header layout
    std::ifstream in(sdf_cache::path_for(dir, *sphere, params), std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "SDFG");
    const auto size = std::filesystem::file_size(sdf_cache::path_for(dir, *sphere, params));
    CHECK(size == 4 + 2 + 24 + 8 + 12 + 16 * built.num_voxels());
}
