#pragma once

#include <posehyp/semantic_points.hpp>

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <span>

namespace posehyp {

/// Optimization parameterization of a pose: translation plus two unnormalized
/// rotation columns (a1, a2) mapped to SO(3) by Gram-Schmidt.
struct PoseParam {
    Vec3 t = Vec3::Zero();
    Eigen::Matrix<double, 6, 1> r6 = (Eigen::Matrix<double, 6, 1>() << 1, 0, 0, 0, 1, 0).finished();

    Vec3 a1() const { return r6.head<3>(); }
    Vec3 a2() const { return r6.tail<3>(); }

    Vec9 vector() const
    {
        Vec9 v;
        v << t, r6;
        return v;
    }
    static PoseParam from_vector(const Vec9& v)
    {
        PoseParam p;
        p.t = v.head<3>();
        p.r6 = v.tail<6>();
        return p;
    }
    bool operator==(const PoseParam&) const = default;
};

/// Object pose: maps object-frame points into the world, x_world = R x_obj + t.
struct RigidTransform {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return R * p + t; }
    /// World point into the object frame.
    Vec3 apply_inverse(const Vec3& p) const { return R.transpose() * (p - t); }
    RigidTransform inverse() const { return {R.transpose(), -R.transpose() * t}; }
    RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }

    Eigen::Matrix4d matrix() const
    {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = R;
        m.topRightCorner<3, 1>() = t;
        return m;
    }
};

inline constexpr double gram_schmidt_tolerance = 1e-8;

inline RigidTransform param_to_transform(const PoseParam& p)
{
    const Vec3 a1 = p.a1(), a2 = p.a2();
    const double n1 = a1.norm();
    if (!(n1 >= gram_schmidt_tolerance))
        throw DegenerateParameterError("rotation parameter: first column is (near) zero");
    const Vec3 b1 = a1 / n1;
    const Vec3 u = a2 - b1.dot(a2) * b1;
    const double nu = u.norm();
    if (!(nu >= gram_schmidt_tolerance))
        throw DegenerateParameterError("rotation parameter: columns are (near) parallel");
    const Vec3 b2 = u / nu;
    RigidTransform T;
    T.R.col(0) = b1;
    T.R.col(1) = b2;
    T.R.col(2) = b1.cross(b2);
    T.t = p.t;
    return T;
}

inline PoseParam transform_to_param(const RigidTransform& T)
{
    PoseParam p;
    p.t = T.t;
    p.r6 << T.R.col(0), T.R.col(1);
    return p;
}

/// Back-propagates dL/dR (3x3) through the Gram-Schmidt map to dL/dr6.
inline Eigen::Matrix<double, 6, 1> gram_schmidt_backward(const PoseParam& p, const Mat3& dR)
{
    const Vec3 a1 = p.a1(), a2 = p.a2();
    const double n1 = a1.norm();
    const Vec3 b1 = a1 / n1;
    const double proj = b1.dot(a2);
    const Vec3 u = a2 - proj * b1;
    const double nu = u.norm();
    const Vec3 b2 = u / nu;

    Vec3 g1 = dR.col(0);
    Vec3 g2 = dR.col(1);
    const Vec3 g3 = dR.col(2);
    // b3 = b1 x b2
    g1 += b2.cross(g3);
    g2 += g3.cross(b1);
    // b2 = u / |u|
    const Vec3 gu = (g2 - b2 * b2.dot(g2)) / nu;
    // u = a2 - (b1 . a2) b1
    const Vec3 ga2 = gu - b1 * b1.dot(gu);
    g1 -= proj * gu + a2 * b1.dot(gu);
    // b1 = a1 / |a1|
    const Vec3 ga1 = (g1 - b1 * b1.dot(g1)) / n1;

    Eigen::Matrix<double, 6, 1> out;
    out << ga1, ga2;
    return out;
}

inline std::vector<Vec3> transform_points(const RigidTransform& T, std::span<const Vec3> pts)
{
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const auto& p : pts)
        out.push_back(T.apply(p));
    return out;
}

/// Uniform rotation via a uniform unit quaternion (Shoemake's method).
template <typename Rng>
Mat3 sample_uniform_rotation(Rng& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
    const double s1 = std::sqrt(1.0 - u1), s2 = std::sqrt(u1);
    const double tau = 2.0 * std::numbers::pi;
    Eigen::Quaterniond q(s2 * std::cos(tau * u3), s1 * std::sin(tau * u2), s1 * std::cos(tau * u2), s2 * std::sin(tau * u3));
    return q.normalized().toRotationMatrix();
}

template <typename Rng>
PoseParam sample_uniform_pose(const Workspace& w, Rng& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RigidTransform T;
    T.R = sample_uniform_rotation(rng);
    for (int a = 0; a < 3; ++a)
        T.t[a] = w.min[a] + unit(rng) * (w.max[a] - w.min[a]);
    return transform_to_param(T);
}

/// Geodesic angle between two rotations.
inline double rotation_angle(const Mat3& a, const Mat3& b)
{
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

/// Points of one transformed copy, stored for repeated Chamfer evaluations.
struct TransformedCloud {
    std::vector<float> x, y, z;

    TransformedCloud() = default;
    TransformedCloud(const RigidTransform& T, std::span<const Vec3> body)
    {
        x.reserve(body.size());
        y.reserve(body.size());
        z.reserve(body.size());
        for (const auto& p : body) {
            const Vec3 q = T.apply(p);
            x.push_back(static_cast<float>(q.x()));
            y.push_back(static_cast<float>(q.y()));
            z.push_back(static_cast<float>(q.z()));
        }
    }
    std::size_t size() const { return x.size(); }
};

namespace detail {
    /// Mean over a of the squared distance to the nearest point of b.
    inline double mean_nearest_squared(const TransformedCloud& a, const TransformedCloud& b)
    {
        double sum = 0.0;
        const std::size_t nb = b.size();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const float px = a.x[i], py = a.y[i], pz = a.z[i];
            float best = std::numeric_limits<float>::max();
            for (std::size_t j = 0; j < nb; ++j) {
                const float dx = b.x[j] - px, dy = b.y[j] - py, dz = b.z[j] - pz;
                best = std::min(best, dx * dx + dy * dy + dz * dz);
            }
            sum += best;
        }
        return sum / static_cast<double>(a.size());
    }
} // namespace detail

/// Symmetric Chamfer distance between two transformed copies of the same body points.
inline double chamfer_distance(const TransformedCloud& a, const TransformedCloud& b)
{
    return detail::mean_nearest_squared(a, b) + detail::mean_nearest_squared(b, a);
}

/// Symmetric Chamfer distance (m^2) between {T1 x} and {T2 x}.
inline double transform_distance(const RigidTransform& T1, const RigidTransform& T2, std::span<const Vec3> surface_pts)
{
    require(!surface_pts.empty(), "transform distance needs surface points");
    return chamfer_distance(TransformedCloud(T1, surface_pts), TransformedCloud(T2, surface_pts));
}

// {"R": 9 row-major, "t": 3} or {"t": 3, "r6": 6}
inline nlohmann::json to_json(const RigidTransform& T)
{
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r.push_back(T.R(i, j));
    return {{"R", r}, {"t", {T.t.x(), T.t.y(), T.t.z()}}};
}

inline nlohmann::json to_json(const PoseParam& p)
{
    nlohmann::json r6 = nlohmann::json::array();
    for (int i = 0; i < 6; ++i)
        r6.push_back(p.r6[i]);
    return {{"t", {p.t.x(), p.t.y(), p.t.z()}}, {"r6", r6}};
}

/// Accepts either serialized form.
inline RigidTransform transform_from_json(const nlohmann::json& j)
{
    try {
        if (j.contains("r6")) {
            PoseParam p;
            p.t = detail::json_vec(j.at("t"));
            const auto& r6 = j.at("r6");
            if (!r6.is_array() || r6.size() != 6)
                throw FormatError("r6 must have 6 entries");
            for (int i = 0; i < 6; ++i)
                p.r6[i] = r6[i].get<double>();
            return param_to_transform(p);
        }
        RigidTransform T;
        const auto& r = j.at("R");
        if (!r.is_array() || r.size() != 9)
            throw FormatError("R must have 9 entries");
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k)
                T.R(i, k) = r[3 * i + k].get<double>();
        T.t = detail::json_vec(j.at("t"));
        return T;
    }
    catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad transform: ") + e.what());
    }
}

} // namespace posehyp
