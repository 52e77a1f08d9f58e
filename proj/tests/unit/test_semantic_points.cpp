#include "test_support.hpp"

#include <set>

using namespace posehyp;
using namespace posehyp::testing;

TEST_CASE("free voxel grid marks each voxel once", "[semantic_points]")
{
    FreeVoxelGrid grid(0.1);
    Rng rng(1);
    std::uniform_real_distribution<double> inside(0.01, 0.09);
    std::vector<Vec3> pts;
    for (int i = 0; i < 1000; ++i)
        pts.emplace_back(inside(rng), inside(rng), inside(rng));
    grid.add_points(pts);
    REQUIRE(grid.size() == 1);
    CHECK(grid.centers().front().isApprox(Vec3(0.05, 0.05, 0.05)));

    grid.add_points(std::span<const Vec3>{});
    CHECK(grid.size() == 1);
}

TEST_CASE("points on a 2r lattice give one center each", "[semantic_points]")
{
    const double r = 0.05;
    FreeVoxelGrid grid(r, Vec3::Constant(-r / 2));
    std::vector<Vec3> pts;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 2; ++k)
                pts.emplace_back(2 * r * i, 2 * r * j, 2 * r * k);
    grid.add_points(pts);
    CHECK(grid.size() == pts.size());
    for (const auto& c : grid.centers()) {
        double best = 1e9;
        for (const auto& p : pts)
            best = std::min(best, (p - c).norm());
        CHECK(best < 1e-12);
    }
}

TEST_CASE("export does not depend on insertion order or duplication", "[semantic_points]")
{
    Rng rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 500; ++i)
        pts.emplace_back(u(rng), u(rng), u(rng));
    FreeVoxelGrid a(0.2), b(0.2);
    a.add_points(pts);
    auto shuffled = pts;
    shuffled.insert(shuffled.end(), pts.begin(), pts.begin() + 100);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    b.add_points(shuffled);
    CHECK(a.centers() == b.centers());

    std::set<FreeVoxelGrid::Key> distinct;
    for (const auto& p : pts)
        distinct.insert(a.key_of(p));
    CHECK(a.size() == distinct.size());
}

TEST_CASE("assembled observations keep class order and counts", "[semantic_points]")
{
    FreeVoxelGrid empty(0.1);
    const std::vector<KnownPoint> contacts{{Vec3(1, 0, 0), 0.0}, {Vec3(0, 1, 0), 0.0}, {Vec3(0, 0, 1), 0.0}};
    const SemanticPointSet x = assemble_observation(empty, contacts, {});
    CHECK(x.known.size() == 3);
    CHECK(x.free.empty());
    CHECK(x.occupied.empty());
    for (double v : x.known_values)
        CHECK(v == 0.0);
    CHECK(x.known[1] == Vec3(0, 1, 0));

    FreeVoxelGrid grid(0.1);
    grid.add(Vec3(0.35, 0, 0));
    grid.add(Vec3(-0.35, 0, 0));
    const std::vector<Vec3> occ{Vec3(5, 5, 5)};
    const SemanticPointSet y = assemble_observation(grid, contacts, occ);
    const SemanticPointSet z = assemble_observation(grid, contacts, occ);
    CHECK(y.size() == 6);
    CHECK(y.free == z.free);
    CHECK(y.free.front().x() < y.free.back().x());
    CHECK(y.occupied.size() == 1);
}

TEST_CASE("simulated scenes produce thousands of points and no occupied class", "[semantic_points]")
{
    Rng rng(0);
    const Scene scene = build_scene_suite("box", rng);
    const auto run = simulate_probes(scene);
    const auto& x = run.observations.back();
    CHECK(x.size() >= 1000);
    CHECK(x.size() < 100000);
    CHECK(x.occupied.empty());
    CHECK_FALSE(x.known.empty());
}

TEST_CASE("workspace boundary lattice", "[semantic_points]")
{
    const Workspace unit(Vec3::Zero(), Vec3::Ones());
    const auto pts = workspace_boundary_free_points(unit, 0.5);
    // brute-force count of distinct surface points of the 3x3x3 lattice
    std::set<std::array<long, 3>> expected;
    for (int i = 0; i <= 2; ++i)
        for (int j = 0; j <= 2; ++j)
            for (int k = 0; k <= 2; ++k)
                if (i % 2 == 0 || j % 2 == 0 || k % 2 == 0)
                    expected.insert({i, j, k});
    std::set<std::array<long, 3>> got;
    for (const auto& p : pts)
        got.insert({std::lround(p.x() * 2), std::lround(p.y() * 2), std::lround(p.z() * 2)});
    CHECK(pts.size() == got.size());
    CHECK(got == expected);
    CHECK(pts.size() == 26);

    const auto corners = workspace_boundary_free_points(unit, 3.0);
    CHECK(corners.size() == 8);
    for (const auto& c : corners)
        for (int a = 0; a < 3; ++a)
            CHECK((c[a] == 0.0 || c[a] == 1.0));

    CHECK_THROWS_AS(Workspace(Vec3::Zero(), Vec3::Zero()), PreconditionError);
}

TEST_CASE("observation JSON round trip", "[semantic_points]")
{
    ObservationFile obs;
    obs.points.free = {Vec3(0.1, 0.2, 0.3)};
    obs.points.known = {Vec3(1, 2, 3)};
    obs.points.known_values = {0.25};
    obs.r_free = 0.05;
    obs.workspace = Workspace(Vec3(-1, -1, -1), Vec3(1, 2, 3));
    const auto back = observation_from_json(nlohmann::json::parse(to_json(obs).dump()));
    CHECK(back.points.free == obs.points.free);
    CHECK(back.points.known == obs.points.known);
    CHECK(back.points.known_values == obs.points.known_values);
    CHECK(back.r_free == 0.05);
    CHECK(back.workspace.max == obs.workspace.max);

    CHECK_THROWS_AS(observation_from_json(nlohmann::json{{"free", {{1, 2}}}}), FormatError);
    CHECK_THROWS_AS(Semantics::known(std::numeric_limits<double>::infinity()), PreconditionError);
}
