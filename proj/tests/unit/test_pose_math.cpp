#include "test_support.hpp"

#include <numbers>

using namespace posehyp;
using namespace posehyp::testing;
using Catch::Approx;

namespace {

/// Simpson integral of f over [a, b].
template <typename F>
double simpson(F f, double a, double b, int n = 20000)
{
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i)
        s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
    auto one_way = [](const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
        double sum = 0.0;
        for (const auto& x : p) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& y : q)
                best = std::min(best, (x - y).squaredNorm());
            sum += best;
        }
        return sum / p.size();
    };
    return one_way(a, b) + one_way(b, a);
}

} // namespace

TEST_CASE("6D parameters map to rotations", "[pose_math]")
{
    PoseParam p;
    const RigidTransform I = param_to_transform(p);
    CHECK(I.R.isApprox(Mat3::Identity()));
    CHECK(I.t == Vec3::Zero());

    p.r6 << 2, 0, 0, 0, 3, 0;
    CHECK(param_to_transform(p).R.isApprox(Mat3::Identity()));

    p.r6 << 1, 0, 0, 1, 0, 0;
    CHECK_THROWS_AS(param_to_transform(p), DegenerateParameterError);
    p.r6 << 0, 0, 0, 0, 1, 0;
    CHECK_THROWS_AS(param_to_transform(p), DegenerateParameterError);
}

TEST_CASE("random 6D parameters give proper rotations, invariant to column scale", "[pose_math]")
{
    Rng rng(7);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int i = 0; i < 500; ++i) {
        PoseParam p = random_param(rng);
        const RigidTransform T = param_to_transform(p);
        REQUIRE((T.R.transpose() * T.R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        REQUIRE(T.R.determinant() == Approx(1.0).margin(1e-9));
        PoseParam q = p;
        q.r6.head<3>() *= scale(rng);
        q.r6.tail<3>() *= scale(rng);
        REQUIRE((param_to_transform(q).R - T.R).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(transform_to_param(T).r6.head<3>().isApprox(T.R.col(0)));
    }
}

TEST_CASE("Gram-Schmidt backward matches finite differences", "[pose_math]")
{
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const PoseParam p = random_param(rng);
        Mat3 W = Mat3::Random();
        const auto loss = [&](const PoseParam& q) { return (W.cwiseProduct(param_to_transform(q).R)).sum(); };
        const auto analytic = gram_schmidt_backward(p, W);
        for (int i = 0; i < 6; ++i) {
            PoseParam a = p, b = p;
            const double h = 1e-6;
            a.r6[i] += h;
            b.r6[i] -= h;
            REQUIRE(analytic[i] == Approx((loss(a) - loss(b)) / (2 * h)).margin(1e-6));
        }
    }
}

TEST_CASE("transform_points", "[pose_math]")
{
    const std::vector<Vec3> pts{Vec3(1, 2, 3), Vec3(-1, 0, 0.5)};
    CHECK(transform_points(RigidTransform{}, pts) == pts);

    RigidTransform shift;
    shift.t = Vec3(0.1, 0, 0);
    const std::vector<Vec3> origin{Vec3::Zero()};
    CHECK(transform_points(shift, origin).front() == Vec3(0.1, 0, 0));

    RigidTransform yaw;
    yaw.R = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
    const std::vector<Vec3> ex{Vec3::UnitX()};
    CHECK((transform_points(yaw, ex).front() - Vec3::UnitY()).norm() < 1e-12);
}

TEST_CASE("uniform pose sampling", "[pose_math]")
{
    const Workspace w(Vec3(-0.1, -0.3, 0.0), Vec3(0.5, 0.3, 0.4));
    Rng a(42), b(42);
    CHECK(sample_uniform_pose(w, a) == sample_uniform_pose(w, b));

    Rng rng(123);
    const int n = 10000;
    Vec3 sum = Vec3::Zero();
    double angle_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const PoseParam p = sample_uniform_pose(w, rng);
        REQUIRE(w.contains(p.t));
        sum += p.t;
        angle_sum += rotation_angle(Mat3::Identity(), param_to_transform(p).R);
    }
    const Vec3 mean = sum / n;
    const Vec3 center = 0.5 * (w.min + w.max);
    for (int k = 0; k < 3; ++k) {
        const double se = w.extent()[k] / std::sqrt(12.0) / std::sqrt(double(n));
        CHECK(std::abs(mean[k] - center[k]) < 3.0 * se);
    }

    // geodesic angle of a uniform rotation has density (1 - cos t) / pi on [0, pi]
    const double pi = std::numbers::pi;
    const double m1 = simpson([&](double t) { return t * (1 - std::cos(t)) / pi; }, 0.0, pi);
    const double m2 = simpson([&](double t) { return t * t * (1 - std::cos(t)) / pi; }, 0.0, pi);
    const double se = std::sqrt((m2 - m1 * m1) / n);
    CHECK(std::abs(angle_sum / n - m1) < 4.0 * se);
}

TEST_CASE("Chamfer transform distance", "[pose_math]")
{
    Rng rng(3);
    const auto mesh = primitives::box(Vec3(0.2, 0.1, 0.05));
    const auto pts = mesh.sample_surface(200, rng);
    RigidTransform A;
    A.R = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    A.t = Vec3(0.1, 0, 0);
    RigidTransform B;
    B.t = Vec3(0, 0.05, 0.02);

    CHECK(transform_distance(A, A, pts) == 0.0);
    CHECK(transform_distance(A, B, pts) == transform_distance(B, A, pts));

    const double oracle = brute_chamfer(transform_points(A, pts), transform_points(B, pts));
    CHECK(transform_distance(A, B, pts) == Approx(oracle).epsilon(1e-5));

    // flat grid shifted along its normal: every nearest neighbour is exactly d away
    std::vector<Vec3> plane;
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 30; ++j)
            plane.emplace_back(0.01 * i, 0.01 * j, 0.0);
    const double d = 0.003;
    RigidTransform up;
    up.t = Vec3(0, 0, d);
    CHECK(transform_distance(RigidTransform{}, up, plane) == Approx(2 * d * d).epsilon(1e-5));
    CHECK_THROWS_AS(transform_distance(A, B, std::span<const Vec3>{}), PreconditionError);
}

TEST_CASE("transform JSON forms", "[pose_math]")
{
    RigidTransform T;
    T.R = Eigen::AngleAxisd(1.1, Vec3(0, 1, 1).normalized()).toRotationMatrix();
    T.t = Vec3(0.1, -0.2, 0.3);
    const RigidTransform a = transform_from_json(nlohmann::json::parse(to_json(T).dump()));
    CHECK(a.R.isApprox(T.R, 1e-15));
    CHECK(a.t == T.t);
    const RigidTransform b = transform_from_json(to_json(transform_to_param(T)));
    CHECK(b.R.isApprox(T.R, 1e-12));
    CHECK_THROWS_AS(transform_from_json(nlohmann::json{{"R", {1, 2}}, {"t", {0, 0, 0}}}), FormatError);
}
