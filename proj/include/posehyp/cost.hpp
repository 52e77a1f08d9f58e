#pragma once

#include <posehyp/pose.hpp>
#include <posehyp/sdf_grid.hpp>

#include <json.hpp>

#include <optional>

namespace posehyp {

struct CostConfig {
    /// Free points aim for the epsilon level set (negative, meters).
    double epsilon = -0.01;
    /// Weight of free/occupied violations.
    double sigma_f = 20.0;
    /// Indicator penalty of the ground-truth cost.
    double c_max = 100000.0;
    /// Optional weight on known-value residuals; 1 reproduces the unweighted cost.
    double known_scale = 1.0;

    /// Linear ramp of sigma_f from start_scale to sigma_f over the first `iterations` steps.
    struct Annealing {
        double start_scale = 1.0;
        int iterations = 50;
    };
    std::optional<Annealing> annealing;

    /// Effective free/occupied scale at an optimizer iteration; iteration < 0 means final.
    double free_scale(int iteration) const
    {
        if (!annealing || iteration < 0 || iteration >= annealing->iterations)
            return sigma_f;
        const double f = static_cast<double>(iteration) / annealing->iterations;
        return annealing->start_scale + f * (sigma_f - annealing->start_scale);
    }

    void validate() const
    {
        require(epsilon < 0.0, "cost epsilon must be negative");
        require(sigma_f > 0.0, "sigma_f must be positive");
        require(c_max > 1.0, "c_max must be large");
        require(known_scale > 0.0, "known_scale must be positive");
        if (annealing)
            require(annealing->iterations > 0 && annealing->start_scale > 0.0, "annealing needs positive start and length");
    }
};

/// Discrete cost: c_max per free point with sdf <= 0 and per occupied point with
/// sdf >= 0, plus |v - sdf| for known points. `T` is the object pose.
template <SdfField Field>
double ground_truth_cost(const SemanticPointSet& x, const RigidTransform& T, const Field& field, const CostConfig& cfg)
{
    double cost = 0.0;
    for (std::size_t i = 0; i < x.known.size(); ++i)
        cost += std::abs(x.known_values[i] - field.query(T.apply_inverse(x.known[i])).value);
    for (const auto& p : x.occupied) {
        const Vec3 q = T.apply_inverse(p);
        if (field.certainly_outside(q) || field.query(q).value >= 0.0)
            cost += cfg.c_max;
    }
    for (const auto& p : x.free) {
        const Vec3 q = T.apply_inverse(p);
        if (!field.certainly_outside(q) && field.query(q).value <= 0.0)
            cost += cfg.c_max;
    }
    return cost;
}

/// Relaxed cost at one pose. `cost` is the sum of per-point gradient magnitudes;
/// `gradient` chains the per-point spatial gradients into the 9 pose parameters.
/// The spatial gradients are exactly the gradients of `potential`
/// (half-squared violations), which is what finite differences can verify.
struct RelaxedEval {
    double cost = 0.0;
    double potential = 0.0;
    Vec9 gradient = Vec9::Zero();
};

namespace detail {

    struct GradientAccumulator {
        Vec3 sum_g = Vec3::Zero();
        Mat3 moment = Mat3::Zero(); // sum of x_world * g^T

        void add(const Vec3& x_world, const Vec3& g)
        {
            sum_g += g;
            moment.noalias() += x_world * g.transpose();
        }
    };

    template <bool WithGradient, SdfField Field>
    RelaxedEval relaxed_impl(const SemanticPointSet& x, const PoseParam& param, const Field& field, const CostConfig& cfg,
        int iteration)
    {
        const RigidTransform T = param_to_transform(param);
        const Mat3 Rt = T.R.transpose();
        const Vec3 offset = -Rt * T.t;
        const double scale = cfg.free_scale(iteration);
        RelaxedEval out;
        GradientAccumulator acc;

        for (const auto& p : x.free) {
            const Vec3 q = Rt * p + offset;
            if (field.certainly_outside(q))
                continue;
            const SdfSample s = field.query(q);
            const double viol = cfg.epsilon - s.value;
            if (viol <= 0.0)
                continue;
            out.cost += scale * viol;
            out.potential += 0.5 * scale * viol * viol;
            if constexpr (WithGradient)
                acc.add(p, -scale * viol * s.gradient);
        }
        for (const auto& p : x.occupied) {
            const Vec3 q = Rt * p + offset;
            const SdfSample s = field.query(q);
            const double viol = cfg.epsilon + s.value;
            if (viol <= 0.0)
                continue;
            out.cost += scale * viol;
            out.potential += 0.5 * scale * viol * viol;
            if constexpr (WithGradient)
                acc.add(p, scale * viol * s.gradient);
        }
        for (std::size_t i = 0; i < x.known.size(); ++i) {
            const Vec3& p = x.known[i];
            const SdfSample s = field.query(Rt * p + offset);
            const double d = s.value - x.known_values[i];
            out.cost += cfg.known_scale * std::abs(d);
            out.potential += 0.5 * cfg.known_scale * d * d;
            if constexpr (WithGradient)
                acc.add(p, cfg.known_scale * d * s.gradient);
        }

        if constexpr (WithGradient) {
            // q = R^T (x - t):  dL/dt = -R sum(g),  dL/dR = sum((x - t) g^T)
            out.gradient.head<3>() = -T.R * acc.sum_g;
            const Mat3 dR = acc.moment - T.t * acc.sum_g.transpose();
            out.gradient.tail<6>() = gram_schmidt_backward(param, dR);
        }
        return out;
    }

} // namespace detail

template <SdfField Field>
RelaxedEval relaxed_cost_and_gradient(const SemanticPointSet& x, const PoseParam& param, const Field& field,
    const CostConfig& cfg, int iteration = -1)
{
    return detail::relaxed_impl<true>(x, param, field, cfg, iteration);
}

/// Cost only; skips gradient accumulation.
template <SdfField Field>
double relaxed_cost(const SemanticPointSet& x, const PoseParam& param, const Field& field, const CostConfig& cfg,
    int iteration = -1)
{
    return detail::relaxed_impl<false>(x, param, field, cfg, iteration).cost;
}

struct BatchEntry {
    bool ok = false;
    RelaxedEval eval;
    std::string error;
};

/// Elementwise relaxed_cost_and_gradient. Degenerate parameters yield ok == false
/// for that element only.
template <SdfField Field>
std::vector<BatchEntry> batch_relaxed_cost(const SemanticPointSet& x, std::span<const PoseParam> params,
    const Field& field, const CostConfig& cfg, int iteration = -1)
{
    std::vector<BatchEntry> out(params.size());
    parallel::parallel_for(params.size(), [&](std::size_t i) {
        try {
            out[i].eval = relaxed_cost_and_gradient(x, params[i], field, cfg, iteration);
            out[i].ok = true;
        }
        catch (const DegenerateParameterError& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

/// Per-class breakdown of the relaxed cost at a pose.
struct CostReport {
    double total = 0.0;
    double free_cost = 0.0;
    double occupied_cost = 0.0;
    double known_cost = 0.0;
    std::vector<double> free_violations;
    std::vector<double> occupied_violations;
    std::vector<double> known_residuals;
};

template <SdfField Field>
CostReport cost_report(const SemanticPointSet& x, const PoseParam& param, const Field& field, const CostConfig& cfg)
{
    const RigidTransform T = param_to_transform(param);
    CostReport r;
    for (const auto& p : x.free) {
        const Vec3 q = T.apply_inverse(p);
        const double viol = field.certainly_outside(q) ? 0.0 : std::max(0.0, cfg.epsilon - field.query(q).value);
        r.free_violations.push_back(viol);
        r.free_cost += cfg.sigma_f * viol;
    }
    for (const auto& p : x.occupied) {
        const double viol = std::max(0.0, cfg.epsilon + field.query(T.apply_inverse(p)).value);
        r.occupied_violations.push_back(viol);
        r.occupied_cost += cfg.sigma_f * viol;
    }
    for (std::size_t i = 0; i < x.known.size(); ++i) {
        const double d = field.query(T.apply_inverse(x.known[i])).value - x.known_values[i];
        r.known_residuals.push_back(d);
        r.known_cost += cfg.known_scale * std::abs(d);
    }
    r.total = r.free_cost + r.occupied_cost + r.known_cost;
    return r;
}

inline nlohmann::json to_json(const CostReport& r)
{
    auto count_nonzero = [](const std::vector<double>& v) {
        return std::count_if(v.begin(), v.end(), [](double x) { return x != 0.0; });
    };
    return {
        {"total", r.total},
        {"free", {{"cost", r.free_cost}, {"points", r.free_violations.size()}, {"violating", count_nonzero(r.free_violations)},
                     {"violations", r.free_violations}}},
        {"occupied", {{"cost", r.occupied_cost}, {"points", r.occupied_violations.size()},
                         {"violating", count_nonzero(r.occupied_violations)}, {"violations", r.occupied_violations}}},
        {"known", {{"cost", r.known_cost}, {"points", r.known_residuals.size()}, {"residuals", r.known_residuals}}},
    };
}

} // namespace posehyp
