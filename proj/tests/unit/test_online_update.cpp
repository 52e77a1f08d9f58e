#include "test_support.hpp"

#include <numbers>

using namespace posehyp;
using namespace posehyp::testing;
using Catch::Approx;

TEST_CASE("zero noise perturbation copies the center", "[online_update]")
{
    OnlineConfig cfg;
    cfg.sigma_t = 0.0;
    cfg.sigma_r = 0.0;
    const RigidTransform center{Eigen::AngleAxisd(0.7, Vec3(1, 1, 0).normalized()).toRotationMatrix(), Vec3(0.1, 0.2, 0.3)};
    Rng rng(1);
    const auto out = perturb_initialization(center, 5, cfg, rng);
    REQUIRE(out.size() == 5);
    for (const auto& p : out) {
        const RigidTransform T = param_to_transform(p);
        CHECK(T.t == center.t);
        CHECK((T.R - center.R).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS_AS(perturb_initialization(center, 0, cfg, rng), PreconditionError);
}

TEST_CASE("perturbation statistics", "[online_update]")
{
    const OnlineConfig cfg; // sigma_t 0.05, sigma_r 0.3
    const RigidTransform center{Eigen::AngleAxisd(1.0, Vec3::UnitY()).toRotationMatrix(), Vec3(0.2, 0.0, 0.1)};
    Rng rng(77);
    const int n = 10000;
    const auto out = perturb_initialization(center, n, cfg, rng);
    double angle_sum = 0.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& p : out) {
        const RigidTransform T = param_to_transform(p);
        angle_sum += rotation_angle(T.R, center.R);
        mean += T.t - center.t;
    }
    mean /= n;
    Mat3 cov = Mat3::Zero();
    for (const auto& p : out) {
        const Vec3 d = p.t - center.t - mean;
        cov += d * d.transpose();
    }
    cov /= n - 1;

    // |theta| for theta ~ N(0, s) is folded normal: mean s sqrt(2/pi), variance s^2 (1 - 2/pi)
    const double s = cfg.sigma_r;
    const double folded_mean = s * std::sqrt(2.0 / std::numbers::pi);
    const double folded_se = s * std::sqrt((1.0 - 2.0 / std::numbers::pi) / n);
    CHECK(std::abs(angle_sum / n - folded_mean) < 4.0 * folded_se);

    const double var = cfg.sigma_t * cfg.sigma_t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(cov(i, j) - (i == j ? var : 0.0)) < 0.05 * var);
}

TEST_CASE("online session on repeated observations", "[online_update]")
{
    Rng scene_rng(0);
    const Scene scene = build_scene_suite("box", scene_rng);
    const auto run = simulate_probes(scene);
    const SdfGrid grid = build_sdf_grid(scene.mesh, {scene.r_target, scene.padding});
    OnlineConfig cfg;
    cfg.workspace = scene.workspace;
    cfg.sigma_t = 0.0;
    cfg.sigma_r = 0.0;
    QdConfig qd;
    qd.n_qd = 30;
    qd.sgd_iterations = 100;
    const std::vector<SemanticPointSet> stream(4, run.observations[2]);
    const auto steps = run_session(std::span<const SemanticPointSet>(stream), grid, cfg, qd, CostConfig{}, 5);
    REQUIRE(steps.size() == 4);
    for (std::size_t i = 1; i < steps.size(); ++i)
        CHECK(steps[i].best_cost <= steps[i - 1].best_cost);

    const auto again = run_session(std::span<const SemanticPointSet>(stream), grid, cfg, qd, CostConfig{}, 5);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        CHECK(to_json(again[i].estimates).dump() == to_json(steps[i].estimates).dump());
        CHECK(again[i].best_cost == steps[i].best_cost);
    }
}

TEST_CASE("empty observation skips registration", "[online_update]")
{
    const AnalyticSphere sphere{0.05};
    OnlineConfig cfg;
    QdConfig qd;
    qd.n_qd = 5;
    qd.sgd_iterations = 10;
    SemanticPointSet some;
    some.known = {Vec3(0.2, 0, 0.05)};
    some.known_values = {0.0};
    const std::vector<SemanticPointSet> stream{SemanticPointSet{}, some, SemanticPointSet{}};
    const auto steps = run_session(std::span<const SemanticPointSet>(stream), sphere, cfg, qd, CostConfig{}, 1);
    CHECK(steps[0].skipped);
    CHECK(steps[0].estimates.empty());
    CHECK_FALSE(steps[1].skipped);
    CHECK_FALSE(steps[1].estimates.empty());
    CHECK(steps[2].skipped);
    CHECK(to_json(steps[2].estimates).dump() == to_json(steps[1].estimates).dump());

    const auto j = to_json(steps[1]);
    CHECK(j.contains("timing"));
    CHECK(j["counts"]["known"] == 1);
}
