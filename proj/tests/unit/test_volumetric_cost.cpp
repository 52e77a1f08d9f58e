#include "test_support.hpp"

using namespace posehyp;
using namespace posehyp::testing;
using Catch::Approx;

namespace {

SemanticPointSet single(SemanticClass kind, const Vec3& p, double v = 0.0)
{
    SemanticPointSet x;
    switch (kind) {
    case SemanticClass::free:
        x.free.push_back(p);
        break;
    case SemanticClass::occupied:
        x.occupied.push_back(p);
        break;
    case SemanticClass::known:
        x.known.push_back(p);
        x.known_values.push_back(v);
        break;
    }
    return x;
}

/// Points scattered around a unit sphere: free outside, occupied inside, known on it.
SemanticPointSet sphere_observation(Rng& rng, int n_free, int n_occ, int n_known)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SemanticPointSet x;
    auto dir = [&] { return sample_unit_vector(rng); };
    for (int i = 0; i < n_free; ++i)
        x.free.push_back(dir() * (0.9 + 0.4 * u(rng)));
    for (int i = 0; i < n_occ; ++i)
        x.occupied.push_back(dir() * (0.6 + 0.45 * u(rng)));
    for (int i = 0; i < n_known; ++i) {
        x.known.push_back(dir() * (0.97 + 0.06 * u(rng)));
        x.known_values.push_back(0.0);
    }
    return x;
}

double relative_gradient_error(const SemanticPointSet& x, const PoseParam& p, const TrilinearSdf& field, const CostConfig& cfg,
    double h)
{
    const RelaxedEval e = relaxed_cost_and_gradient(x, p, field, cfg);
    Vec9 fd;
    for (int i = 0; i < 9; ++i) {
        Vec9 a = p.vector(), b = p.vector();
        a[i] += h;
        b[i] -= h;
        const double fa = relaxed_cost_and_gradient(x, PoseParam::from_vector(a), field, cfg).potential;
        const double fb = relaxed_cost_and_gradient(x, PoseParam::from_vector(b), field, cfg).potential;
        fd[i] = (fa - fb) / (2 * h);
    }
    return (e.gradient - fd).norm() / std::max(fd.norm(), 1e-12);
}

} // namespace

TEST_CASE("ground-truth cost follows the indicator semantics", "[volumetric_cost]")
{
    const AnalyticSphere sphere{1.0};
    const CostConfig cfg;
    REQUIRE(cfg.c_max == 100000.0);
    const RigidTransform I;

    SemanticPointSet free_out;
    free_out.free = {Vec3(2, 0, 0), Vec3(0, 1.5, 0), Vec3(0, 0, -3)};
    CHECK(ground_truth_cost(free_out, I, sphere, cfg) == 0.0);
    CHECK(ground_truth_cost(single(SemanticClass::free, Vec3(0.5, 0, 0)), I, sphere, cfg) == 100000.0);
    CHECK(ground_truth_cost(single(SemanticClass::free, Vec3(1, 0, 0)), I, sphere, cfg) == 100000.0); // sdf == 0
    CHECK(ground_truth_cost(single(SemanticClass::occupied, Vec3(0.5, 0, 0)), I, sphere, cfg) == 0.0);
    CHECK(ground_truth_cost(single(SemanticClass::occupied, Vec3(1, 0, 0)), I, sphere, cfg) == 100000.0);
    CHECK(ground_truth_cost(single(SemanticClass::occupied, Vec3(1.2, 0, 0)), I, sphere, cfg) == 100000.0);
    CHECK(ground_truth_cost(single(SemanticClass::known, Vec3(0, 0, 1.02)), I, sphere, cfg) == Approx(0.02).margin(1e-15));
    CHECK(ground_truth_cost(single(SemanticClass::known, Vec3(0, 0, 1.5), 0.5), I, sphere, cfg) == 0.0);

    // the pose moves the object: world (3, 0, 0) is inside a sphere placed at (3, 0, 0)
    RigidTransform moved;
    moved.t = Vec3(3, 0, 0);
    CHECK(ground_truth_cost(single(SemanticClass::free, Vec3(3, 0, 0)), moved, sphere, cfg) == 100000.0);
    CHECK(ground_truth_cost(single(SemanticClass::free, Vec3(0, 0, 0)), moved, sphere, cfg) == 0.0);
}

TEST_CASE("relaxed per-point costs", "[volumetric_cost]")
{
    const HalfSpace plane;
    const CostConfig cfg;
    const PoseParam I;

    const RelaxedEval outside = relaxed_cost_and_gradient(single(SemanticClass::free, Vec3(0, 0, 0.05)), I, plane, cfg);
    CHECK(outside.cost == 0.0);
    CHECK(outside.gradient == Vec9::Zero());

    const auto inside_x = single(SemanticClass::free, Vec3(0, 0, -0.05));
    const RelaxedEval inside = relaxed_cost_and_gradient(inside_x, I, plane, cfg);
    CHECK(inside.cost == Approx(0.8).epsilon(1e-12));
    // one descent step moves the object down, i.e. the point along +grad sdf
    const PoseParam stepped = PoseParam::from_vector(I.vector() - 1e-3 * inside.gradient);
    CHECK(stepped.t.z() < 0.0);
    CHECK(relaxed_cost(inside_x, stepped, plane, cfg) < inside.cost);

    const RelaxedEval on_surface = relaxed_cost_and_gradient(single(SemanticClass::known, Vec3(0.3, 0.2, 0.0)), I, plane, cfg);
    CHECK(on_surface.cost == 0.0);
    CHECK(on_surface.gradient == Vec9::Zero());

    const RelaxedEval known = relaxed_cost_and_gradient(single(SemanticClass::known, Vec3(0, 0, 0.03), 0.01), I, plane, cfg);
    CHECK(known.cost == Approx(0.02).epsilon(1e-12));

    // an occupied point at sdf = d costs the same as a free point at sdf = -d
    for (double d : {0.004, 0.02, 0.3}) {
        const double occ = relaxed_cost(single(SemanticClass::occupied, Vec3(0, 0, d)), I, plane, cfg);
        const double fr = relaxed_cost(single(SemanticClass::free, Vec3(0, 0, -d)), I, plane, cfg);
        CHECK(occ == Approx(fr).epsilon(1e-12));
    }
}

TEST_CASE("relaxed cost is non-negative and zero at a consistent pose", "[volumetric_cost]")
{
    const AnalyticSphere sphere{1.0};
    Rng rng(8);
    SemanticPointSet x;
    for (int i = 0; i < 100; ++i)
        x.free.push_back(sample_unit_vector(rng) * 1.5);
    for (int i = 0; i < 20; ++i) {
        x.occupied.push_back(sample_unit_vector(rng) * 0.5);
        x.known.push_back(sample_unit_vector(rng));
        x.known_values.push_back(0.0);
    }
    const CostConfig cfg;
    CHECK(relaxed_cost(x, PoseParam{}, sphere, cfg) == Approx(0.0).margin(1e-12));
    for (int i = 0; i < 100; ++i)
        REQUIRE(relaxed_cost(x, random_param(rng, 0.5), sphere, cfg) >= 0.0);
}

TEST_CASE("analytic gradient matches finite differences on the interpolated SDF", "[volumetric_cost]")
{
    const auto mesh = std::make_shared<const TriangleMesh>(primitives::icosphere(1.0, 3));
    const SdfGrid grid = build_sdf_grid(mesh, {0.05, 0.3});
    const TrilinearSdf field(grid);
    Rng rng(21);
    const SemanticPointSet x = sphere_observation(rng, 150, 30, 60);
    CostConfig cfg;
    cfg.known_scale = 1.0;
    int passed = 0;
    const int trials = 30;
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < trials; ++i) {
        PoseParam p;
        p.t = 0.05 * Vec3(n(rng), n(rng), n(rng));
        p.r6 = transform_to_param(RigidTransform{sample_uniform_rotation(rng), Vec3::Zero()}).r6;
        p.r6 += 0.1 * Eigen::Matrix<double, 6, 1>::Random();
        if (relative_gradient_error(x, p, field, cfg, 1e-5) < 1e-3)
            ++passed;
    }
    CHECK(passed >= trials - 2);
}

TEST_CASE("rotation gradient on an asymmetric object", "[volumetric_cost]")
{
    const auto mesh = std::make_shared<const TriangleMesh>(primitives::drill_like());
    const SdfGrid grid = build_sdf_grid(mesh, {0.01, 0.05});
    const TrilinearSdf field(grid);
    Rng rng(5);
    SemanticPointSet x;
    for (const auto& p : mesh->sample_surface(80, rng)) {
        x.known.push_back(p + 0.01 * sample_unit_vector(rng));
        x.known_values.push_back(0.0);
    }
    std::uniform_real_distribution<double> u(-0.1, 0.15);
    for (int i = 0; i < 200; ++i)
        x.free.emplace_back(u(rng), 0.5 * u(rng), u(rng));
    const CostConfig cfg;
    int passed = 0;
    for (int i = 0; i < 20; ++i) {
        RigidTransform T{Eigen::AngleAxisd(0.2, sample_unit_vector(rng)).toRotationMatrix(), 0.01 * sample_unit_vector(rng)};
        if (relative_gradient_error(x, transform_to_param(T), field, cfg, 1e-6) < 1e-3)
            ++passed;
    }
    CHECK(passed >= 18);
}

TEST_CASE("annealing ramps the free-space scale", "[volumetric_cost]")
{
    CostConfig cfg;
    cfg.annealing = CostConfig::Annealing{1.0, 50};
    const HalfSpace plane;
    const auto x = single(SemanticClass::free, Vec3(0, 0, -0.05));
    double prev = 0.0;
    for (int it = 0; it <= 60; ++it) {
        const double c = relaxed_cost(x, PoseParam{}, plane, cfg, it);
        REQUIRE(c >= prev);
        REQUIRE(c <= 0.8 + 1e-12);
        prev = c;
    }
    CHECK(prev == Approx(0.8));
    CHECK(relaxed_cost(x, PoseParam{}, plane, cfg, 0) == Approx(0.04));
}

TEST_CASE("batch evaluation", "[volumetric_cost]")
{
    const AnalyticSphere sphere{1.0};
    Rng rng(2);
    const SemanticPointSet x = sphere_observation(rng, 50, 10, 10);
    const CostConfig cfg;
    std::vector<PoseParam> batch{random_param(rng)};
    const auto one = batch_relaxed_cost(x, std::span<const PoseParam>(batch), sphere, cfg);
    REQUIRE(one.size() == 1);
    CHECK(one[0].ok);
    CHECK(one[0].eval.cost == relaxed_cost_and_gradient(x, batch[0], sphere, cfg).cost);

    batch.push_back(batch[0]);
    PoseParam bad;
    bad.r6 << 1, 0, 0, 2, 0, 0;
    batch.push_back(bad);
    const auto many = batch_relaxed_cost(x, std::span<const PoseParam>(batch), sphere, cfg);
    CHECK(many[1].eval.cost == many[0].eval.cost);
    CHECK(many[1].eval.gradient == many[0].eval.gradient);
    CHECK_FALSE(many[2].ok);
    CHECK_FALSE(many[2].error.empty());
    CHECK_THROWS_AS(relaxed_cost(x, bad, sphere, cfg), DegenerateParameterError);
}

TEST_CASE("cost report subtotals add up", "[volumetric_cost]")
{
    const AnalyticSphere sphere{1.0};
    Rng rng(12);
    const SemanticPointSet x = sphere_observation(rng, 80, 20, 20);
    const CostConfig cfg;
    const PoseParam p = random_param(rng, 0.1);
    const CostReport r = cost_report(x, p, sphere, cfg);
    CHECK(r.total == Approx(r.free_cost + r.occupied_cost + r.known_cost).margin(1e-9));
    CHECK(r.total == Approx(relaxed_cost(x, p, sphere, cfg)).epsilon(1e-12));
    CHECK(r.free_violations.size() == x.free.size());
    const auto j = to_json(r);
    CHECK(j["known"]["points"] == 20);
}

TEST_CASE("invalid cost configs are rejected", "[volumetric_cost]")
{
    CostConfig cfg;
    cfg.epsilon = 0.01;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    cfg = {};
    cfg.sigma_f = 0.0;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
}
