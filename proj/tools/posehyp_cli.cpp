// posehyp command-line interface.

#include <posehyp/posehyp.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace posehyp;

namespace {

/// Bad input (usage, missing files, malformed documents): exit code 2.
struct UsageError : Error {
    using Error::Error;
};

struct Common {
    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = -1;
};

RunConfig resolve_config(const Common& c)
{
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
    if (const char* env = std::getenv("POSEHYP_OUTPUT_DIR"); env && *env)
        cfg.output_dir = env;
    if (const char* env = std::getenv("POSEHYP_THREADS"); env && *env) {
        try {
            cfg.threads = std::stoi(env);
        }
        catch (const std::exception&) {
            throw ConfigError("POSEHYP_THREADS must be an integer");
        }
    }
    if (!c.output_dir.empty())
        cfg.output_dir = c.output_dir;
    if (c.seed_set)
        cfg.seed = c.seed;
    if (c.threads >= 0)
        cfg.threads = c.threads;
    cfg.validate();
    parallel::set_num_threads(cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : 0u);
    return cfg;
}

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config_path, "Run config (TOML, or JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--output-dir", c.output_dir, "Output directory");
    cmd->add_option("--seed", c.seed, "Random seed")->each([&](const std::string&) { c.seed_set = true; });
    cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path)
{
    if (!fs::exists(path))
        throw UsageError("file not found: " + path.string());
    try {
        return nlohmann::json::parse(read_text_file(path));
    }
    catch (const nlohmann::json::parse_error& e) {
        throw UsageError(path.string() + ": malformed JSON: " + e.what());
    }
}

MeshPtr load_mesh_checked(const std::string& path)
{
    if (!fs::exists(path))
        throw UsageError("mesh not found: " + path);
    return std::make_shared<const TriangleMesh>(load_mesh(path));
}

/// Built-in scene id or a scene config file.
Scene resolve_scene(const std::string& spec, std::uint64_t seed)
{
    const auto ids = scene_ids();
    if (std::find(ids.begin(), ids.end(), spec) != ids.end()) {
        Rng rng(seed);
        Scene s = build_scene_suite(spec, rng);
        s.seed = seed;
        return s;
    }
    if (!fs::exists(spec)) {
        std::string known;
        for (const auto& k : ids)
            known += (known.empty() ? "" : ", ") + k;
        throw UsageError("scene '" + spec + "' is neither a built-in scene (" + known + ") nor an existing file");
    }
    return scene_from_json(parse_config_document(spec), fs::path(spec).parent_path());
}

SdfGrid scene_grid(const Scene& scene, const RunConfig& cfg)
{
    const SdfGridParams params{scene.r_target, scene.padding};
    return sdf_cache::load_or_build(scene.mesh, params, fs::path(cfg.output_dir) / "cache");
}

PlausibleSet cached_plausible_set(const Scene& scene, const SemanticPointSet& x, const SdfGrid& grid, double delta,
    const RunConfig& cfg)
{
    const std::uint64_t rot_seed = scene.seed;
    const auto key = plausible_cache::key(observation_hash(x, scene.truth, scene_hash(scene)), delta, rot_seed, cfg.evaluation.grid);
    const auto path = plausible_cache::path_for(fs::path(cfg.output_dir) / "cache", key);
    if (auto cached = plausible_cache::read(path, key))
        return *cached;
    Rng rng(rot_seed);
    auto set = compute_plausible_set(x, scene.truth, grid, delta, cfg.evaluation.grid, rng, scene.mesh->bounding_radius(), cfg.cost);
    plausible_cache::write(path, set, key);
    return set;
}

PdScore score_estimates(const Scene& scene, const PlausibleSet& set, const EstimateSet& est, const RunConfig& cfg,
    std::uint64_t trial_seed)
{
    Rng rng(trial_seed);
    const auto surface = scene.mesh->sample_surface(cfg.evaluation.surface_points, rng);
    const auto members = plausible_subset(set, cfg.evaluation.pd_cap);
    const auto transforms = est.transforms();
    return plausible_diversity(members, transforms, surface);
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------- build-sdf

int cmd_build_sdf(const Common& common, const std::string& mesh_path, double res, double pad)
{
    const RunConfig cfg = resolve_config(common);
    const MeshPtr mesh = load_mesh_checked(mesh_path);
    const SdfGridParams params{res, pad};
    bool hit = false;
    const SdfGrid grid = sdf_cache::load_or_build(mesh, params, fs::path(cfg.output_dir) / "cache", &hit);
    const auto path = sdf_cache::path_for(fs::path(cfg.output_dir) / "cache", *mesh, params);
    std::cout << (hit ? "cache hit: " : "built: ") << path.string() << '\n';
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : grid.voxels()) {
        lo = std::min<double>(lo, v.value);
        hi = std::max<double>(hi, v.value);
    }
    std::cout << "vertices " << mesh->vertices().size() << ", triangles " << mesh->triangles().size() << '\n'
              << "dims " << grid.dims()[0] << " x " << grid.dims()[1] << " x " << grid.dims()[2] << " (" << grid.num_voxels()
              << " voxels), resolution " << fmt(res) << ", padding " << fmt(pad) << '\n'
              << "origin " << fmt(grid.origin().x()) << ' ' << fmt(grid.origin().y()) << ' ' << fmt(grid.origin().z()) << '\n'
              << "sdf range [" << fmt(lo) << ", " << fmt(hi) << "]\n";
    return 0;
}

// ---------------------------------------------------------- simulate-probes

int cmd_simulate(const Common& common, const std::string& scene_spec, const std::string& out_path)
{
    const RunConfig cfg = resolve_config(common);
    const Scene scene = resolve_scene(scene_spec, cfg.seed);
    const auto run = simulate_probes(scene);
    const fs::path dir = out_path.empty() ? fs::path(cfg.output_dir) / "observations" : fs::path(out_path);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < run.observations.size(); ++i) {
        ObservationFile obs{run.observations[i], scene.r_free, scene.workspace};
        auto j = to_json(obs);
        write_json(dir / ("observation_probe" + std::to_string(i) + ".json"), j);
        const auto& r = run.results[i];
        std::cout << "probe " << i << ": " << (r.contact ? "contact" : "no contact") << ", " << r.swept.size()
                  << " swept voxels, |X| = " << run.observations[i].size() << '\n';
    }
    write_json(dir / "truth.json", to_json(scene.truth));
    std::cout << "wrote " << run.observations.size() << " observations to " << dir.string() << '\n';
    return 0;
}

// ----------------------------------------------------------------- register

struct RegisterArgs {
    std::string observation;
    std::string scene;
    std::string mesh;
    std::string init;
    std::string carryover;
    std::string out;
    std::string diagnostics;
    std::string archive;
    std::string optimizer;
    double res = 0.01, pad = 0.05;
};

std::vector<PoseParam> read_params(const std::string& path)
{
    return estimate_set_from_json(read_json(path)).params();
}

int cmd_register(const Common& common, const RegisterArgs& a)
{
    RunConfig cfg = resolve_config(common);
    if (!a.optimizer.empty())
        cfg.optimizer = a.optimizer;
    cfg.qd.method = qd_method_from_string(cfg.optimizer);
    ObservationFile obs;
    try {
        obs = observation_from_json(read_json(a.observation));
    }
    catch (const FormatError& e) {
        throw UsageError(e.what());
    }
    MeshPtr mesh;
    SdfGridParams params{a.res, a.pad};
    if (!a.mesh.empty()) {
        mesh = load_mesh_checked(a.mesh);
    }
    else if (!a.scene.empty()) {
        const Scene s = resolve_scene(a.scene, cfg.seed);
        mesh = s.mesh;
        params = {s.r_target, s.padding};
    }
    else {
        throw UsageError("register needs --mesh or --scene");
    }
    const SdfGrid grid = sdf_cache::load_or_build(mesh, params, fs::path(cfg.output_dir) / "cache");
    Rng rng(cfg.seed);
    cfg.qd.workspace = obs.workspace;
    const auto init = a.init.empty() ? uniform_initialization(obs.workspace, cfg.qd.estimate_size, rng) : read_params(a.init);
    const auto carry = a.carryover.empty() ? std::vector<PoseParam>{} : read_params(a.carryover);
    const auto result = qd_register(obs.points, std::span<const PoseParam>(init), std::span<const PoseParam>(carry), grid,
        cfg.cost, cfg.qd, rng);

    const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) / "estimates.json" : fs::path(a.out);
    write_json(out, to_json(result.estimates));
    std::cout << "wrote " << result.estimates.size() << " estimates to " << out.string()
              << (result.estimates.shortfall ? " (shortfall: fewer filled cells than requested)" : "") << '\n';
    if (!result.estimates.empty())
        std::cout << "best cost " << fmt(result.estimates.items.front().cost) << '\n';
    if (!a.archive.empty()) {
        std::ofstream csv(a.archive);
        result.archive.write_csv(csv);
    }
    if (!a.diagnostics.empty()) {
        nlohmann::json d = nlohmann::json::array();
        for (const auto& e : result.estimates.items) {
            auto j = to_json(cost_report(obs.points, e.param, grid, cfg.cost));
            j["cell"] = e.cell;
            d.push_back(j);
        }
        write_json(a.diagnostics, {{"reports", d}});
    }
    return 0;
}

// ---------------------------------------------------------------------- run

struct RunArgs {
    std::string scene;
    std::vector<std::string> optimizers;
    int seeds = 1;
    bool evaluate = false;
    std::string delta;
    int probes = -1;
};

int cmd_run(const Common& common, const RunArgs& a)
{
    RunConfig cfg = resolve_config(common);
    if (!a.delta.empty())
        cfg.evaluation.delta = a.delta;
    const double delta = parse_delta(cfg.evaluation.delta);
    const std::string scene_spec = a.scene.empty() ? cfg.scene : a.scene;
    if (scene_spec.empty())
        throw UsageError("run needs --scene (or paths.scene in the config)");
    // the scene (and its plausible sets) do not depend on the run seed
    const Scene scene = resolve_scene(scene_spec, 0);
    const auto run = simulate_probes(scene);
    const SdfGrid grid = scene_grid(scene, cfg);
    const std::size_t n_probes =
        a.probes < 0 ? run.observations.size() : std::min<std::size_t>(a.probes, run.observations.size());
    const auto optimizers = a.optimizers.empty() ? std::vector<std::string>{cfg.optimizer} : a.optimizers;

    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    std::ofstream csv(dir / "results.csv");
    csv << "probe,method,seed,coverage,plausibility,PD,wall_ms\n";

    std::vector<std::optional<PlausibleSet>> plausible(n_probes);
    for (const auto& opt : optimizers) {
        QdConfig qd = cfg.qd;
        qd.method = qd_method_from_string(opt);
        for (int k = 0; k < a.seeds; ++k) {
            const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
            const std::string tag = opt + "_seed" + std::to_string(seed);
            std::ofstream log(dir / ("session_" + tag + ".jsonl"));
            OnlineConfig online = cfg.online;
            online.workspace = scene.workspace;
            online.estimate_size = qd.estimate_size;
            OnlineSession session(online, qd, cfg.cost, seed);
            for (std::size_t p = 0; p < n_probes; ++p) {
                const auto step = session.update(run.observations[p], grid);
                write_json(dir / ("estimates_" + tag + "_probe" + std::to_string(p) + ".json"), to_json(step.estimates));
                nlohmann::json rec = to_json(step);
                rec["method"] = opt;
                rec["seed"] = seed;
                std::string cov, pl, pd;
                if (a.evaluate && !step.estimates.empty()) {
                    if (!plausible[p])
                        plausible[p] = cached_plausible_set(scene, run.observations[p], grid, delta, cfg);
                    const PdScore s = score_estimates(scene, *plausible[p], step.estimates, cfg, seed * 1000003ULL + p);
                    rec["score"] = to_json(s);
                    rec["plausible_set_size"] = plausible[p]->size();
                    cov = fmt(s.coverage);
                    pl = fmt(s.plausibility);
                    pd = fmt(s.plausible_diversity);
                }
                log << rec.dump() << '\n';
                log.flush();
                csv << p << ',' << opt << ',' << seed << ',' << cov << ',' << pl << ',' << pd << ',' << fmt(step.wall_ms) << '\n';
                csv.flush();
                std::cout << opt << " seed " << seed << " probe " << p << ": best cost "
                          << (std::isfinite(step.best_cost) ? fmt(step.best_cost) : "n/a") << (pd.empty() ? "" : ", PD " + pd)
                          << '\n';
            }
        }
    }
    std::cout << "results in " << dir.string() << '\n';
    return 0;
}

// ----------------------------------------------------------------- evaluate

int cmd_evaluate(const Common& common, const std::string& estimates_path, const std::string& scene_spec, int probe,
    const std::string& delta_arg, const std::string& out)
{
    RunConfig cfg = resolve_config(common);
    if (!delta_arg.empty())
        cfg.evaluation.delta = delta_arg;
    const double delta = parse_delta(cfg.evaluation.delta);
    EstimateSet est;
    try {
        est = estimate_set_from_json(read_json(estimates_path));
    }
    catch (const nlohmann::json::exception& e) {
        throw UsageError(estimates_path + ": malformed estimate file: " + e.what());
    }
    catch (const FormatError& e) {
        throw UsageError(e.what());
    }
    if (est.empty())
        throw UndefinedScoreError("estimate file is empty; plausible diversity is undefined");
    const Scene scene = resolve_scene(scene_spec, 0);
    const auto run = simulate_probes(scene);
    const std::size_t p = probe < 0 ? run.observations.size() - 1 : static_cast<std::size_t>(probe);
    if (p >= run.observations.size())
        throw UsageError("probe index out of range");
    const SdfGrid grid = scene_grid(scene, cfg);
    const PlausibleSet set = cached_plausible_set(scene, run.observations[p], grid, delta, cfg);
    const PdScore s = score_estimates(scene, set, est, cfg, cfg.seed);
    std::cout << "plausible set: " << set.size() << " of " << set.candidates << " candidates (delta " << fmt(delta) << ")\n"
              << "coverage            " << fmt(s.coverage) << '\n'
              << "plausibility        " << fmt(s.plausibility) << '\n'
              << "plausible diversity " << fmt(s.plausible_diversity) << '\n';
    nlohmann::json j = to_json(s);
    j["delta"] = delta;
    j["probe"] = p;
    j["plausible_set_size"] = set.size();
    j["estimates"] = est.size();
    write_json(out.empty() ? fs::path(cfg.output_dir) / "score.json" : fs::path(out), j);
    return 0;
}

// ------------------------------------------------------------- dump-archive

int cmd_dump_archive(const Common& common, const std::string& scene_spec, int probe, const std::string& optimizer,
    const std::string& out)
{
    RunConfig cfg = resolve_config(common);
    if (!optimizer.empty())
        cfg.optimizer = optimizer;
    const Scene scene = resolve_scene(scene_spec, 0);
    const auto run = simulate_probes(scene);
    const std::size_t p = probe < 0 ? run.observations.size() - 1 : static_cast<std::size_t>(probe);
    if (p >= run.observations.size())
        throw UsageError("probe index out of range");
    const SdfGrid grid = scene_grid(scene, cfg);
    QdConfig qd = cfg.qd;
    qd.method = qd_method_from_string(cfg.optimizer);
    qd.workspace = scene.workspace;
    Rng rng(cfg.seed);
    const auto init = uniform_initialization(scene.workspace, qd.estimate_size, rng);
    const auto result = qd_register(run.observations[p], std::span<const PoseParam>(init), {}, grid, cfg.cost, qd, rng);
    const fs::path path = out.empty() ? fs::path(cfg.output_dir) / "archive.csv" : fs::path(out);
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream csv(path);
    result.archive.write_csv(csv);
    std::cout << "wrote " << result.archive.filled() << " filled cells to " << path.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"posehyp: diverse rigid-pose hypotheses from free-space and contact points"};
    app.require_subcommand(1);
    Common common;

    auto* build = app.add_subcommand("build-sdf", "Precompute (or load) the voxel SDF of a mesh");
    std::string mesh_path;
    double res = 0.01, pad = 0.05;
    build->add_option("--mesh", mesh_path, "OBJ or binary STL mesh")->required();
    build->add_option("--res", res, "Voxel size (m)");
    build->add_option("--pad", pad, "Padding around the bounding box (m)");
    add_common(build, common);

    auto* sim = app.add_subcommand("simulate-probes", "Run a scene's probes and write cumulative observations");
    std::string sim_scene, sim_out;
    sim->add_option("--scene", sim_scene, "Built-in scene id or scene config file")->required();
    sim->add_option("--out", sim_out, "Output directory");
    add_common(sim, common);

    auto* reg = app.add_subcommand("register", "Estimate a pose set for one observation");
    RegisterArgs reg_args;
    reg->add_option("--observation", reg_args.observation, "Observation JSON")->required();
    reg->add_option("--mesh", reg_args.mesh, "Object mesh");
    reg->add_option("--scene", reg_args.scene, "Take the mesh and SDF resolution from a scene");
    reg->add_option("--res", reg_args.res, "SDF voxel size with --mesh (m)");
    reg->add_option("--pad", reg_args.pad, "SDF padding with --mesh (m)");
    reg->add_option("--init", reg_args.init, "Initial poses (estimate JSON); default uniform in the workspace");
    reg->add_option("--carryover", reg_args.carryover, "Previous estimates to seed the archive");
    reg->add_option("--optimizer", reg_args.optimizer, "cma-mega | cma-me | sgd-only");
    reg->add_option("--out", reg_args.out, "Estimate file");
    reg->add_option("--diagnostics", reg_args.diagnostics, "Write per-estimate cost breakdown JSON");
    reg->add_option("--archive", reg_args.archive, "Write the final archive as CSV");
    add_common(reg, common);

    auto* run = app.add_subcommand("run", "Probe a scene and register after every probe");
    RunArgs run_args;
    run->add_option("--scene", run_args.scene, "Built-in scene id or scene config file");
    run->add_option("--optimizer", run_args.optimizers, "cma-mega | cma-me | sgd-only (repeatable)");
    run->add_option("--seeds", run_args.seeds, "Number of consecutive seeds starting at --seed")->check(CLI::PositiveNumber);
    run->add_flag("--evaluate", run_args.evaluate, "Score each probe against the plausible set");
    run->add_option("--delta", run_args.delta, "Plausible-set threshold: number or key such as sim-drill");
    run->add_option("--probes", run_args.probes, "Only the first N probes");
    add_common(run, common);

    auto* eval = app.add_subcommand("evaluate", "Plausible Diversity of an estimate file");
    std::string eval_est, eval_scene, eval_delta, eval_out;
    int eval_probe = -1;
    eval->add_option("--estimates", eval_est, "Estimate JSON")->required();
    eval->add_option("--scene", eval_scene, "Built-in scene id or scene config file")->required();
    eval->add_option("--probe", eval_probe, "Observation after this probe (default: last)");
    eval->add_option("--delta", eval_delta, "Threshold: number or key such as sim-mustard");
    eval->add_option("--out", eval_out, "Score JSON");
    add_common(eval, common);

    auto* dump = app.add_subcommand("dump-archive", "Register once and write the archive heatmap CSV");
    std::string dump_scene, dump_opt, dump_out;
    int dump_probe = -1;
    dump->add_option("--scene", dump_scene, "Built-in scene id or scene config file")->required();
    dump->add_option("--probe", dump_probe, "Observation after this probe (default: last)");
    dump->add_option("--optimizer", dump_opt, "cma-mega | cma-me | sgd-only");
    dump->add_option("--out", dump_out, "CSV path");
    add_common(dump, common);

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (build->parsed())
            return cmd_build_sdf(common, mesh_path, res, pad);
        if (sim->parsed())
            return cmd_simulate(common, sim_scene, sim_out);
        if (reg->parsed())
            return cmd_register(common, reg_args);
        if (run->parsed())
            return cmd_run(common, run_args);
        if (eval->parsed())
            return cmd_evaluate(common, eval_est, eval_scene, eval_probe, eval_delta, eval_out);
        if (dump->parsed())
            return cmd_dump_archive(common, dump_scene, dump_probe, dump_opt, dump_out);
    }
    catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 2;
    }
    catch (const UndefinedScoreError& e) {
        std::cerr << "undefined score: " << e.what() << '\n';
        return 1;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
