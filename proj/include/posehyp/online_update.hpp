#pragma once

#include <posehyp/qd_registration.hpp>

#include <chrono>

namespace posehyp {

struct OnlineConfig {
    double sigma_t = 0.05;
    /// Standard deviation of the perturbation angle, radians.
    double sigma_r = 0.3;
    Workspace workspace{Vec3(-0.1, -0.3, -0.075), Vec3(0.5, 0.3, 0.625)};
    std::size_t estimate_size = 30;

    void validate() const
    {
        require(sigma_t >= 0.0 && sigma_r >= 0.0, "perturbation noise must be non-negative");
        require(estimate_size >= 2, "estimate set needs at least two transforms");
    }
};

/// Rotation exp(theta [e]x) about a unit axis (Rodrigues).
inline Mat3 axis_angle_rotation(const Vec3& axis, double theta)
{
    return Eigen::AngleAxisd(theta, axis.normalized()).toRotationMatrix();
}

template <typename Rng>
Vec3 sample_unit_vector(Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        const Vec3 v(normal(rng), normal(rng), normal(rng));
        const double n = v.norm();
        if (n > 1e-12)
            return v / n;
    }
}

/// n poses around `center`: t = center.t + N(0, sigma_t^2 I), R = exp(theta e) center.R
/// with theta ~ N(0, sigma_r) and e uniform on the sphere.
template <typename Rng>
std::vector<PoseParam> perturb_initialization(const RigidTransform& center, std::size_t n, const OnlineConfig& cfg, Rng& rng)
{
    require(n >= 1, "perturbation needs at least one sample");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<PoseParam> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RigidTransform T;
        const Vec3 dt(normal(rng), normal(rng), normal(rng));
        T.t = center.t + cfg.sigma_t * dt;
        const double theta = cfg.sigma_r * normal(rng);
        const Vec3 axis = sample_unit_vector(rng);
        T.R = axis_angle_rotation(axis, theta) * center.R;
        out.push_back(transform_to_param(T));
    }
    return out;
}

template <typename Rng>
std::vector<PoseParam> uniform_initialization(const Workspace& w, std::size_t n, Rng& rng)
{
    std::vector<PoseParam> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(sample_uniform_pose(w, rng));
    return out;
}

struct SessionStep {
    int probe = 0;
    EstimateSet estimates;
    /// No observation points yet; the previous estimate was carried forward.
    bool skipped = false;
    double best_cost = std::numeric_limits<double>::infinity();
    std::size_t free_points = 0, occupied_points = 0, known_points = 0;
    double wall_ms = 0.0;
};

/// Loop state between observation updates.
class OnlineSession {
public:
    OnlineSession(OnlineConfig cfg, QdConfig qd_cfg, CostConfig cost_cfg, std::uint64_t seed)
        : _cfg(std::move(cfg)), _qd(std::move(qd_cfg)), _cost(std::move(cost_cfg)), _rng(seed)
    {
        _cfg.validate();
        _qd.workspace = _cfg.workspace;
        _qd.estimate_size = _cfg.estimate_size;
    }

    const EstimateSet& current() const { return _current; }
    const std::vector<PoseParam>& next_initialization() const { return _init; }
    int probes_seen() const { return _probe; }
    Rng& rng() { return _rng; }

    /// One registration on the updated observation.
    template <SdfField Field>
    SessionStep update(const SemanticPointSet& x, const Field& field)
    {
        const auto start = std::chrono::steady_clock::now();
        SessionStep step;
        step.probe = _probe++;
        step.free_points = x.free.size();
        step.occupied_points = x.occupied.size();
        step.known_points = x.known.size();
        if (_init.empty())
            _init = uniform_initialization(_cfg.workspace, _cfg.estimate_size, _rng);

        if (x.empty()) {
            step.skipped = true;
            step.estimates = _current;
        }
        else {
            const auto carry = _current.params();
            auto result = qd_register(x, std::span<const PoseParam>(_init), std::span<const PoseParam>(carry), field, _cost, _qd, _rng);
            _current = std::move(result.estimates);
            step.estimates = _current;
            if (!_current.empty()) {
                // estimates are sorted by cost, so the first is the argmin
                const RigidTransform best = _current.items.front().transform;
                _init = perturb_initialization(best, _cfg.estimate_size, _cfg, _rng);
            }
        }
        if (!step.estimates.empty())
            step.best_cost = step.estimates.items.front().cost;
        step.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return step;
    }

private:
    OnlineConfig _cfg;
    QdConfig _qd;
    CostConfig _cost;
    Rng _rng;
    EstimateSet _current;
    std::vector<PoseParam> _init;
    int _probe = 0;
};

/// Runs the online loop over a stream of cumulative observations.
template <SdfField Field>
std::vector<SessionStep> run_session(std::span<const SemanticPointSet> stream, const Field& field, const OnlineConfig& cfg,
    const QdConfig& qd_cfg, const CostConfig& cost_cfg, std::uint64_t seed)
{
    OnlineSession session(cfg, qd_cfg, cost_cfg, seed);
    std::vector<SessionStep> out;
    for (const auto& x : stream)
        out.push_back(session.update(x, field));
    return out;
}

/// Session log record; wall time lives in its own field so the rest is reproducible.
inline nlohmann::json to_json(const SessionStep& s)
{
    return {
        {"probe", s.probe},
        {"skipped", s.skipped},
        {"counts", {{"free", s.free_points}, {"occupied", s.occupied_points}, {"known", s.known_points}}},
        {"best_cost", std::isfinite(s.best_cost) ? nlohmann::json(s.best_cost) : nlohmann::json(nullptr)},
        {"estimates", to_json(s.estimates)},
        {"timing", {{"wall_ms", s.wall_ms}}},
    };
}

} // namespace posehyp
