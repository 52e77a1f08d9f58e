#pragma once

#include <posehyp/archive.hpp>
#include <posehyp/cma_es.hpp>
#include <posehyp/cost.hpp>

#include <functional>
#include <numbers>
#include <string>

namespace posehyp {

enum class QdMethod { cma_mega, cma_me, sgd_only };

inline std::string to_string(QdMethod m)
{
    switch (m) {
    case QdMethod::cma_mega:
        return "cma-mega";
    case QdMethod::cma_me:
        return "cma-me";
    case QdMethod::sgd_only:
        return "sgd-only";
    }
    return "?";
}

inline QdMethod qd_method_from_string(const std::string& s)
{
    if (s == "cma-mega")
        return QdMethod::cma_mega;
    if (s == "cma-me")
        return QdMethod::cma_me;
    if (s == "sgd-only")
        return QdMethod::sgd_only;
    throw ConfigError("unknown optimizer '" + s + "' (expected cma-mega, cma-me or sgd-only)");
}

struct QdConfig {
    QdMethod method = QdMethod::cma_mega;
    /// Archive half-width in standard deviations of the warm-start translations.
    double gamma = 3.0;
    int n_qd = 100;
    /// Branching candidates per QD iteration; 4 + floor(3 ln 9).
    int batch_size = 10;
    double sigma0 = 0.05;
    int sgd_iterations = 500;
    double sgd_lr = 0.01;
    /// The learning rate restarts at sgd_lr every this many iterations.
    int sgd_lr_period = 50;
    std::size_t estimate_size = 30;
    int bins = 20;
    /// 2: behavior is (x, y) translation; 3 adds z.
    int behavior_dims = 2;
    double sigma_floor = 0.005;
    /// Emitter restart after this many iterations without an archive change.
    int stale_restart = 50;
    /// Used to restart an emitter when the archive is empty.
    Workspace workspace{Vec3(-1, -1, -1), Vec3(1, 1, 1)};

    void validate() const
    {
        require(gamma > 0.0 && n_qd >= 0 && batch_size >= 2 && sigma0 > 0.0, "QD config values must be positive");
        require(sgd_iterations >= 0 && sgd_lr > 0.0 && sgd_lr_period > 0, "SGD config values must be positive");
        require(estimate_size > 0 && bins > 0 && sigma_floor > 0.0 && stale_restart > 0, "QD config values must be positive");
        require(behavior_dims == 2 || behavior_dims == 3, "behavior_dims must be 2 or 3");
    }
};

struct Solution {
    PoseParam param;
    double cost = 0.0;
};

struct Estimate {
    RigidTransform transform;
    PoseParam param;
    double cost = 0.0;
    std::size_t cell = 0;
};

struct EstimateSet {
    std::vector<Estimate> items;
    /// Fewer filled cells than requested estimates.
    bool shortfall = false;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }

    std::vector<RigidTransform> transforms() const
    {
        std::vector<RigidTransform> out;
        for (const auto& e : items)
            out.push_back(e.transform);
        return out;
    }
    std::vector<PoseParam> params() const
    {
        std::vector<PoseParam> out;
        for (const auto& e : items)
            out.push_back(e.param);
        return out;
    }
};

inline nlohmann::json to_json(const EstimateSet& set)
{
    nlohmann::json items = nlohmann::json::array();
    for (const auto& e : set.items) {
        nlohmann::json j = to_json(e.transform);
        j["r6"] = to_json(e.param)["r6"];
        j["cost"] = e.cost;
        j["cell"] = e.cell;
        items.push_back(j);
    }
    return {{"estimates", items}, {"shortfall", set.shortfall}};
}

inline EstimateSet estimate_set_from_json(const nlohmann::json& j)
{
    EstimateSet set;
    const auto& items = j.is_array() ? j : j.at("estimates");
    for (const auto& e : items) {
        Estimate est;
        est.transform = transform_from_json(e.contains("R") ? nlohmann::json{{"R", e["R"]}, {"t", e["t"]}} : e);
        est.param = transform_to_param(est.transform);
        est.cost = e.value("cost", 0.0);
        est.cell = e.value("cell", std::size_t{0});
        set.items.push_back(est);
    }
    set.shortfall = j.is_object() ? j.value("shortfall", false) : false;
    return set;
}

/// Called after every QD iteration with the iteration index and the archive.
using QdObserver = std::function<void(int, const Archive&)>;

namespace detail {

    inline bool is_valid(const PoseParam& p)
    {
        try {
            param_to_transform(p);
            return true;
        }
        catch (const DegenerateParameterError&) {
            return false;
        }
    }

    /// Orthonormal r6 for the same rotation.
    inline PoseParam normalized(const PoseParam& p) { return transform_to_param(param_to_transform(p)); }

    template <SdfField Field>
    std::vector<double> evaluate_costs(const SemanticPointSet& x, const std::vector<PoseParam>& params, const Field& field,
        const CostConfig& cfg)
    {
        std::vector<double> costs(params.size(), std::numeric_limits<double>::infinity());
        parallel::parallel_for(params.size(), [&](std::size_t i) {
            if (is_valid(params[i]))
                costs[i] = relaxed_cost(x, params[i], field, cfg);
        });
        return costs;
    }

    /// Improvement ranking: new cells first, then improved cells, then the rest;
    /// within a group by decreasing improvement. Returns (ranking, #accepted).
    inline std::pair<std::vector<int>, int> improvement_ranking(const std::vector<OfferResult>& results)
    {
        std::vector<int> order(results.size());
        std::iota(order.begin(), order.end(), 0);
        auto priority = [](OfferStatus s) { return s == OfferStatus::new_cell ? 2 : (s == OfferStatus::improved ? 1 : 0); };
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            const int pa = priority(results[a].status), pb = priority(results[b].status);
            if (pa != pb)
                return pa > pb;
            return results[a].improvement > results[b].improvement;
        });
        const int accepted = static_cast<int>(std::count_if(results.begin(), results.end(), [](const auto& r) { return r.accepted(); }));
        return {order, accepted};
    }

    inline PoseParam restart_point(const Archive& archive, const QdConfig& cfg, Rng& rng)
    {
        if (auto idx = archive.random_elite(rng))
            return archive.cell(*idx)->param;
        return sample_uniform_pose(cfg.workspace, rng);
    }

} // namespace detail

/// Adam on one pose with the relaxed gradient. The learning rate follows a cosine
/// decay that restarts at `sgd_lr` every `sgd_lr_period` iterations. Returns the
/// lowest-cost iterate seen (including the start).
template <SdfField Field>
Solution sgd_refine(const SemanticPointSet& x, const PoseParam& start, const Field& field, const CostConfig& cost_cfg,
    const QdConfig& cfg)
{
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    PoseParam p = start;
    if (!detail::is_valid(p))
        throw DegenerateParameterError("SGD start pose has degenerate rotation parameters");
    Vec9 m = Vec9::Zero(), v = Vec9::Zero();
    Solution best{p, std::numeric_limits<double>::infinity()};
    const bool annealed = cost_cfg.annealing.has_value();
    for (int k = 0; k < cfg.sgd_iterations; ++k) {
        const RelaxedEval e = relaxed_cost_and_gradient(x, p, field, cost_cfg, k);
        const double c = annealed ? relaxed_cost(x, p, field, cost_cfg) : e.cost;
        if (c < best.cost)
            best = {p, c};
        const int phase = k % cfg.sgd_lr_period;
        const double lr = cfg.sgd_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase / cfg.sgd_lr_period));
        m = beta1 * m + (1.0 - beta1) * e.gradient;
        v = beta2 * v + (1.0 - beta2) * e.gradient.cwiseProduct(e.gradient);
        const double bc1 = 1.0 - std::pow(beta1, k + 1), bc2 = 1.0 - std::pow(beta2, k + 1);
        const Vec9 step = lr * (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + adam_eps).matrix());
        PoseParam next = PoseParam::from_vector(p.vector() - step);
        if (!detail::is_valid(next))
            // keep the translation step, re-orthonormalize the rotation from the last valid pose
            next.r6 = detail::normalized(p).r6;
        p = next;
    }
    const double c = relaxed_cost(x, p, field, cost_cfg);
    if (c < best.cost)
        best = {p, c};
    return best;
}

/// Independent SGD refinement of every initial pose (evaluated in parallel).
template <SdfField Field>
std::vector<Solution> sgd_warm_start(const SemanticPointSet& x, std::span<const PoseParam> init, const Field& field,
    const CostConfig& cost_cfg, const QdConfig& cfg)
{
    require(!init.empty(), "SGD warm start needs at least one pose");
    std::vector<Solution> out(init.size());
    parallel::parallel_for(init.size(), [&](std::size_t i) { out[i] = sgd_refine(x, init[i], field, cost_cfg, cfg); });
    return out;
}

/// Archive spanning mean +- gamma * std (population std, floored) of the solutions'
/// translations along each behavior dimension. Cells start empty.
inline Archive size_archive(std::span<const Solution> solutions, const QdConfig& cfg)
{
    require(solutions.size() >= 2, "archive sizing needs at least two solutions");
    std::vector<double> lo, hi;
    for (int d = 0; d < cfg.behavior_dims; ++d) {
        double mean = 0.0;
        for (const auto& s : solutions)
            mean += s.param.t[d];
        mean /= static_cast<double>(solutions.size());
        double var = 0.0;
        for (const auto& s : solutions)
            var += (s.param.t[d] - mean) * (s.param.t[d] - mean);
        const double sd = std::max(std::sqrt(var / static_cast<double>(solutions.size())), cfg.sigma_floor);
        lo.push_back(mean - cfg.gamma * sd);
        hi.push_back(mean + cfg.gamma * sd);
    }
    return Archive(lo, hi, cfg.bins);
}

/// Gradient-arborescence QD (CMA-MEGA). CMA-ES adapts a distribution over
/// coefficients of the normalized objective gradient and the behavior gradients
/// (unit selectors of the translation components). Each iteration branches
/// `batch_size` candidates from the search point, offers them to the archive and
/// moves the search point by the recombined coefficient step.
template <SdfField Field>
void cma_mega(Archive& archive, const SemanticPointSet& x, const Field& field, const CostConfig& cost_cfg,
    const QdConfig& cfg, Rng& rng, const QdObserver& observe = {})
{
    if (cfg.n_qd <= 0)
        return;
    const int k = archive.dims();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(k + 1);
    CmaEs es(zero, cfg.sigma0, cfg.batch_size);
    PoseParam theta = detail::normalized(detail::restart_point(archive, cfg, rng));
    int stale = 0;

    for (int it = 0; it < cfg.n_qd; ++it) {
        const RelaxedEval e = relaxed_cost_and_gradient(x, theta, field, cost_cfg);
        archive.offer(theta, e.cost);

        Eigen::Matrix<double, Eigen::Dynamic, 9> jac = Eigen::Matrix<double, Eigen::Dynamic, 9>::Zero(k + 1, 9);
        const double gnorm = e.gradient.norm();
        if (gnorm > 0.0)
            jac.row(0) = -e.gradient.transpose() / gnorm;
        for (int d = 0; d < k; ++d)
            jac(d + 1, d) = 1.0;

        const auto coeffs = es.ask(rng);
        std::vector<PoseParam> candidates;
        candidates.reserve(coeffs.size());
        for (const auto& c : coeffs)
            candidates.push_back(PoseParam::from_vector(theta.vector() + jac.transpose() * c));
        const auto costs = detail::evaluate_costs(x, candidates, field, cost_cfg);
        std::vector<OfferResult> results;
        results.reserve(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i)
            results.push_back(archive.offer(candidates[i], costs[i]));

        const auto [ranking, accepted] = detail::improvement_ranking(results);
        es.tell(ranking, accepted);
        // the distribution mean is a step from theta; apply it and re-center at zero
        const Vec9 step = jac.transpose() * es.mean();
        es.set_mean(zero);
        const PoseParam moved = PoseParam::from_vector(theta.vector() + step);
        stale = accepted > 0 ? 0 : stale + 1;

        if (!detail::is_valid(moved) || es.sigma() < 1e-8 || stale >= cfg.stale_restart) {
            theta = detail::normalized(detail::restart_point(archive, cfg, rng));
            es.reset(zero, cfg.sigma0);
            stale = 0;
        }
        else {
            theta = detail::normalized(moved);
        }
        if (observe)
            observe(it, archive);
    }
}

/// Gradient-free variant (CMA-ME improvement emitter): CMA-ES samples directly in
/// the 9-dimensional parameter space.
template <SdfField Field>
void cma_me(Archive& archive, const SemanticPointSet& x, const Field& field, const CostConfig& cost_cfg,
    const QdConfig& cfg, Rng& rng, const QdObserver& observe = {})
{
    if (cfg.n_qd <= 0)
        return;
    auto start = [&] {
        Eigen::VectorXd v = detail::normalized(detail::restart_point(archive, cfg, rng)).vector();
        return v;
    };
    CmaEs es(start(), cfg.sigma0, cfg.batch_size);
    int stale = 0;
    for (int it = 0; it < cfg.n_qd; ++it) {
        const auto samples = es.ask(rng);
        std::vector<PoseParam> candidates;
        candidates.reserve(samples.size());
        for (const auto& s : samples)
            candidates.push_back(PoseParam::from_vector(Vec9(s)));
        const auto costs = detail::evaluate_costs(x, candidates, field, cost_cfg);
        std::vector<OfferResult> results;
        results.reserve(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i)
            results.push_back(archive.offer(candidates[i], costs[i]));
        const auto [ranking, accepted] = detail::improvement_ranking(results);
        es.tell(ranking, accepted);
        stale = accepted > 0 ? 0 : stale + 1;
        if (es.sigma() < 1e-8 || stale >= cfg.stale_restart) {
            es.reset(start(), cfg.sigma0);
            stale = 0;
        }
        if (observe)
            observe(it, archive);
    }
}

struct RegistrationResult {
    EstimateSet estimates;
    Archive archive;
    std::vector<Solution> warm_start;
};

/// Warm start -> archive sizing -> seeding with warm-start and carried-over poses
/// (re-scored on the current observation) -> QD -> the |init| lowest-cost cells.
template <SdfField Field>
RegistrationResult qd_register(const SemanticPointSet& x, std::span<const PoseParam> init,
    std::span<const PoseParam> carryover, const Field& field, const CostConfig& cost_cfg, const QdConfig& cfg, Rng& rng,
    const QdObserver& observe = {})
{
    cost_cfg.validate();
    cfg.validate();
    require(init.size() >= 2, "registration needs at least two initial poses");

    auto warm = sgd_warm_start(x, init, field, cost_cfg, cfg);
    Archive archive = size_archive(warm, cfg);

    std::vector<Solution> seeds = warm;
    for (const auto& p : carryover)
        if (detail::is_valid(p))
            seeds.push_back({p, relaxed_cost(x, p, field, cost_cfg)});
    double max_seed = -std::numeric_limits<double>::infinity();
    for (const auto& s : seeds)
        max_seed = std::max(max_seed, s.cost);
    archive.set_discovery_reference(max_seed);
    for (const auto& s : seeds)
        archive.offer(s.param, s.cost);

    switch (cfg.method) {
    case QdMethod::cma_mega:
        cma_mega(archive, x, field, cost_cfg, cfg, rng, observe);
        break;
    case QdMethod::cma_me:
        cma_me(archive, x, field, cost_cfg, cfg, rng, observe);
        break;
    case QdMethod::sgd_only:
        break;
    }

    RegistrationResult result{EstimateSet{}, archive, std::move(warm)};
    const auto order = archive.cells_by_cost();
    const std::size_t want = init.size();
    for (std::size_t i = 0; i < std::min(want, order.size()); ++i) {
        const Elite& e = *archive.cell(order[i]);
        result.estimates.items.push_back({param_to_transform(e.param), e.param, e.cost, order[i]});
    }
    result.estimates.shortfall = order.size() < want;
    return result;
}

} // namespace posehyp
