#pragma once

#include <posehyp/online_update.hpp>
#include <posehyp/plausibility.hpp>
#include <posehyp/toml_lite.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace posehyp {

struct EvaluationConfig {
    /// Suboptimality threshold; a number or an object key such as "sim-drill".
    std::string delta = "0.001";
    PlausibleGridSpec grid = PlausibleGridSpec::reduced();
    /// Plausible-set members used for PD (evenly strided subset beyond this).
    std::size_t pd_cap = 1000;
    std::size_t surface_points = 200;
};

struct RunConfig {
    std::string mesh;
    std::string scene;
    std::string output_dir = "posehyp_out";
    std::uint64_t seed = 0;
    std::string optimizer = "cma-mega";
    int threads = 0;
    CostConfig cost;
    QdConfig qd;
    OnlineConfig online;
    EvaluationConfig evaluation;

    void validate() const
    {
        cost.validate();
        qd.validate();
        online.validate();
        evaluation.grid.validate();
        qd_method_from_string(optimizer);
        parse_delta(evaluation.delta);
        require(evaluation.pd_cap >= 1 && evaluation.surface_points >= 1, "evaluation sizes must be positive");
        require(threads >= 0, "threads must be non-negative");
    }
};

namespace detail {

    inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
    {
        if (!j.is_object())
            throw ConfigError("config section '" + where + "' must be a table");
        for (const auto& [k, _] : j.items())
            if (!allowed.count(k))
                throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
    }

    template <typename T>
    void read_into(const nlohmann::json& j, const char* key, T& out)
    {
        if (j.contains(key))
            out = j.at(key).get<T>();
    }

    inline Vec3 read_vec(const nlohmann::json& j) { return json_vec(j); }

} // namespace detail

/// Builds a RunConfig from a parsed document. Unknown keys are errors.
inline RunConfig run_config_from_json(const nlohmann::json& j)
{
    using detail::read_into;
    RunConfig c;
    try {
        detail::reject_unknown(j, {"paths", "seed", "optimizer", "threads", "cost", "qd", "online", "evaluation"}, "");
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            detail::reject_unknown(p, {"mesh", "scene", "output_dir"}, "paths");
            read_into(p, "mesh", c.mesh);
            read_into(p, "scene", c.scene);
            read_into(p, "output_dir", c.output_dir);
        }
        read_into(j, "seed", c.seed);
        read_into(j, "optimizer", c.optimizer);
        read_into(j, "threads", c.threads);
        if (j.contains("cost")) {
            const auto& s = j["cost"];
            detail::reject_unknown(s, {"epsilon", "sigma_f", "c_max", "known_scale", "annealing"}, "cost");
            read_into(s, "epsilon", c.cost.epsilon);
            read_into(s, "sigma_f", c.cost.sigma_f);
            read_into(s, "c_max", c.cost.c_max);
            read_into(s, "known_scale", c.cost.known_scale);
            if (s.contains("annealing")) {
                const auto& a = s["annealing"];
                detail::reject_unknown(a, {"start_scale", "iterations"}, "cost.annealing");
                CostConfig::Annealing ann;
                read_into(a, "start_scale", ann.start_scale);
                read_into(a, "iterations", ann.iterations);
                c.cost.annealing = ann;
            }
        }
        if (j.contains("qd")) {
            const auto& s = j["qd"];
            detail::reject_unknown(s,
                {"gamma", "n_qd", "batch_size", "sigma0", "sgd_iterations", "sgd_lr", "sgd_lr_period", "estimate_size", "bins",
                    "behavior_dims", "sigma_floor", "stale_restart"},
                "qd");
            read_into(s, "gamma", c.qd.gamma);
            read_into(s, "n_qd", c.qd.n_qd);
            read_into(s, "batch_size", c.qd.batch_size);
            read_into(s, "sigma0", c.qd.sigma0);
            read_into(s, "sgd_iterations", c.qd.sgd_iterations);
            read_into(s, "sgd_lr", c.qd.sgd_lr);
            read_into(s, "sgd_lr_period", c.qd.sgd_lr_period);
            read_into(s, "estimate_size", c.qd.estimate_size);
            read_into(s, "bins", c.qd.bins);
            read_into(s, "behavior_dims", c.qd.behavior_dims);
            read_into(s, "sigma_floor", c.qd.sigma_floor);
            read_into(s, "stale_restart", c.qd.stale_restart);
            c.online.estimate_size = c.qd.estimate_size;
        }
        if (j.contains("online")) {
            const auto& s = j["online"];
            detail::reject_unknown(s, {"sigma_t", "sigma_r", "workspace"}, "online");
            read_into(s, "sigma_t", c.online.sigma_t);
            read_into(s, "sigma_r", c.online.sigma_r);
            if (s.contains("workspace"))
                c.online.workspace = workspace_from_json(s["workspace"]);
        }
        if (j.contains("evaluation")) {
            const auto& s = j["evaluation"];
            detail::reject_unknown(s, {"delta", "grid_lower", "grid_upper", "grid_cells", "rotations", "pd_cap", "surface_points"},
                "evaluation");
            if (s.contains("delta"))
                c.evaluation.delta = s["delta"].is_string() ? s["delta"].get<std::string>() : s["delta"].dump();
            if (s.contains("grid_lower"))
                c.evaluation.grid.lower = detail::read_vec(s["grid_lower"]);
            if (s.contains("grid_upper"))
                c.evaluation.grid.upper = detail::read_vec(s["grid_upper"]);
            if (s.contains("grid_cells")) {
                const auto& g = s["grid_cells"];
                if (g.is_number())
                    c.evaluation.grid.cells.fill(g.get<int>());
                else
                    c.evaluation.grid.cells = g.get<std::array<int, 3>>();
            }
            read_into(s, "rotations", c.evaluation.grid.rotations);
            read_into(s, "pd_cap", c.evaluation.pd_cap);
            read_into(s, "surface_points", c.evaluation.surface_points);
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses a TOML or JSON document: .json files as JSON, everything else as TOML
/// with a JSON fallback.
inline nlohmann::json parse_config_document(const std::filesystem::path& path)
{
    const std::string text = read_text_file(path);
    if (path.extension() == ".json") {
        try {
            return nlohmann::json::parse(text);
        }
        catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path.string() + ": " + e.what());
        }
    }
    try {
        return toml_lite::parse(text);
    }
    catch (const FormatError& toml_error) {
        try {
            return nlohmann::json::parse(text);
        }
        catch (const nlohmann::json::parse_error&) {
            throw FormatError(path.string() + ": " + toml_error.what());
        }
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(parse_config_document(path)); }

} // namespace posehyp
