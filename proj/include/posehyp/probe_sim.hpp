#pragma once

#include <posehyp/mesh.hpp>
#include <posehyp/pose.hpp>
#include <posehyp/primitives.hpp>

#include <json.hpp>

#include <filesystem>
#include <numbers>

namespace posehyp {

struct Probe {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitX();
    double max_travel = 0.5;
    double radius = 0.01;
};

struct Scene {
    std::string name;
    MeshPtr mesh;
    /// Ground-truth object pose.
    RigidTransform truth;
    Workspace workspace{Vec3(-0.1, -0.3, -0.075), Vec3(0.5, 0.3, 0.625)};
    std::vector<Probe> probes;
    double r_free = 0.025;
    double r_target = 0.01;
    double padding = 0.05;
    std::uint64_t seed = 0;
    /// Scatter surface points around each contact instead of a single point.
    bool contact_patch = false;
    int patch_points = 50;
    double patch_radius = 0.02;

    void validate() const
    {
        require(mesh != nullptr, "scene has no mesh");
        require(r_free > 0.0 && r_target > 0.0 && padding > 0.0, "scene resolutions must be positive");
        for (const auto& p : probes)
            require(std::abs(p.direction.norm() - 1.0) < 1e-9 && p.max_travel >= 0.0 && p.radius >= 0.0,
                "probe directions must be unit norm with non-negative travel and radius");
        require(workspace.contains(truth.t), "ground-truth pose must lie inside the workspace");
    }
};

struct ProbeResult {
    int probe = 0;
    std::optional<Vec3> contact;
    /// Extra surface points in contact-patch mode (includes the contact).
    std::vector<Vec3> patch;
    /// Free voxel centers swept by this probe.
    std::vector<Vec3> swept;
};

namespace detail {

    inline std::vector<Vec3> ray_offsets(const Vec3& dir, double radius)
    {
        std::vector<Vec3> out{Vec3::Zero()};
        if (radius <= 0.0)
            return out;
        const Vec3 helper = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
        const Vec3 u = dir.cross(helper).normalized();
        const Vec3 v = dir.cross(u);
        for (int k = 0; k < 8; ++k) {
            const double a = 2.0 * std::numbers::pi * k / 8.0;
            out.push_back(radius * (std::cos(a) * u + std::sin(a) * v));
        }
        return out;
    }

} // namespace detail

/// Straight-line probe: the center ray plus a ring of 8 parallel rays at the probe
/// radius. The first hit over all rays is the contact; every ray sweeps free space
/// up to (hit - radius) or the full travel. Swept voxels whose center lies inside
/// the object, and the voxel holding the contact, are not marked.
template <typename Rng>
ProbeResult execute_probe(const Scene& scene, std::size_t index, FreeVoxelGrid& free_grid, Rng& rng)
{
    require(index < scene.probes.size(), "probe index out of range");
    const Probe& probe = scene.probes[index];
    const TriangleMesh& mesh = *scene.mesh;
    const RigidTransform& T = scene.truth;
    if (mesh.contains(T.apply_inverse(probe.origin)))
        throw ConfigError("probe " + std::to_string(index) + " starts inside the object");

    ProbeResult result;
    result.probe = static_cast<int>(index);
    if (probe.max_travel <= 0.0)
        return result;

    const Vec3 dir_obj = T.R.transpose() * probe.direction;
    const auto offsets = detail::ray_offsets(probe.direction, probe.radius);
    double t_hit = std::numeric_limits<double>::infinity();
    Vec3 hit_point = Vec3::Zero();
    for (const auto& off : offsets) {
        const Vec3 o = probe.origin + off;
        if (auto h = mesh.index().first_hit(T.apply_inverse(o), dir_obj, 0.0, probe.max_travel); h && h->t < t_hit) {
            t_hit = h->t;
            hit_point = o + h->t * probe.direction;
        }
    }
    const bool contact = std::isfinite(t_hit);
    const double travel = contact ? std::max(0.0, t_hit - probe.radius) : probe.max_travel;

    std::optional<FreeVoxelGrid::Key> contact_key;
    if (contact) {
        result.contact = hit_point;
        contact_key = free_grid.key_of(hit_point);
        if (scene.contact_patch) {
            result.patch.push_back(hit_point);
            // nearby surface samples of the posed object
            const auto samples = mesh.sample_surface(static_cast<std::size_t>(scene.patch_points) * 40, rng);
            for (const auto& s : samples) {
                if (static_cast<int>(result.patch.size()) >= scene.patch_points)
                    break;
                const Vec3 w = T.apply(s);
                if ((w - hit_point).norm() <= scene.patch_radius)
                    result.patch.push_back(w);
            }
        }
    }

    const double step = free_grid.resolution() / 4.0;
    const PointTag tag{PointTag::Source::probe, static_cast<int>(index)};
    std::set<FreeVoxelGrid::Key> swept;
    for (const auto& off : offsets) {
        const Vec3 o = probe.origin + off;
        const int n = static_cast<int>(std::floor(travel / step + 1e-9));
        for (int i = 0; i <= n; ++i) {
            const Vec3 p = o + std::min(i * step, travel) * probe.direction;
            swept.insert(free_grid.key_of(p));
        }
    }
    for (const auto& k : swept) {
        if (contact_key && k == *contact_key)
            continue;
        const Vec3 c = free_grid.center_of(k);
        if (mesh.signed_distance(T.apply_inverse(c)).value <= 0.0)
            continue;
        free_grid.add(c, tag);
        result.swept.push_back(c);
    }
    return result;
}

/// Cumulative observation after each probe of a scene.
struct ProbeRun {
    std::vector<ProbeResult> results;
    std::vector<SemanticPointSet> observations;
};

/// Free voxel grid whose centers include the workspace boundary lattice.
inline FreeVoxelGrid scene_free_grid(const Scene& scene)
{
    return FreeVoxelGrid(scene.r_free, scene.workspace.min - Vec3::Constant(0.5 * scene.r_free));
}

/// Runs all probes in order. The grid starts with the workspace boundary as free space.
inline ProbeRun simulate_probes(const Scene& scene)
{
    scene.validate();
    Rng rng(scene.seed);
    FreeVoxelGrid grid = scene_free_grid(scene);
    grid.add_points(workspace_boundary_free_points(scene.workspace, scene.r_free), PointTag{PointTag::Source::boundary, -1});
    std::vector<KnownPoint> known;
    ProbeRun run;
    for (std::size_t i = 0; i < scene.probes.size(); ++i) {
        auto r = execute_probe(scene, i, grid, rng);
        const PointTag tag{PointTag::Source::probe, static_cast<int>(i)};
        if (!r.patch.empty()) {
            for (const auto& p : r.patch)
                known.push_back({p, 0.0, tag});
        }
        else if (r.contact) {
            known.push_back({*r.contact, 0.0, tag});
        }
        run.observations.push_back(assemble_observation(grid, known, {}));
        run.results.push_back(std::move(r));
    }
    return run;
}

inline std::vector<std::string> scene_ids() { return {"box", "cylinder", "sphere", "drill-like"}; }

namespace detail {

    inline Probe probe_toward(const Vec3& origin, const Vec3& dir, double travel)
    {
        return Probe{origin, dir.normalized(), travel, 0.01};
    }

} // namespace detail

/// Built-in scenes: object resting at (0.2, 0, z) in the default workspace, probed
/// from the front (+x), the sides (+-y) and above (-z). Early probes are the
/// least informative.
template <typename Rng>
Scene build_scene_suite(const std::string& id, Rng& rng)
{
    Scene s;
    s.name = id;
    s.seed = rng();
    using detail::probe_toward;
    const Vec3 px = Vec3::UnitX(), py = Vec3::UnitY(), pz = Vec3::UnitZ();
    if (id == "box") {
        // 0.12 x 0.08 x 0.16, bottom at z = 0
        s.mesh = std::make_shared<const TriangleMesh>(primitives::box(Vec3(0.12, 0.08, 0.16)));
        s.truth.t = Vec3(0.2, 0.0, 0.08);
        s.probes = {
            probe_toward({-0.08, 0.0, 0.08}, px, 0.5),
            probe_toward({-0.08, 0.12, 0.08}, px, 0.55),
            probe_toward({0.2, 0.28, 0.08}, -py, 0.5),
            probe_toward({0.2, 0.0, 0.6}, -pz, 0.55),
            probe_toward({-0.08, -0.02, 0.03}, px, 0.5),
            probe_toward({0.18, -0.28, 0.11}, py, 0.5),
            probe_toward({0.32, 0.12, 0.6}, -pz, 0.6),
            probe_toward({-0.08, -0.12, 0.12}, px, 0.55),
        };
    }
    else if (id == "cylinder") {
        // radius 0.04, height 0.16, axis along z
        s.mesh = std::make_shared<const TriangleMesh>(primitives::cylinder(0.04, 0.16, 72));
        s.truth.t = Vec3(0.2, 0.0, 0.08);
        s.probes = {
            probe_toward({-0.08, 0.0, 0.08}, px, 0.5),
            probe_toward({0.2, 0.28, 0.06}, -py, 0.5),
            probe_toward({0.2, 0.0, 0.6}, -pz, 0.55),
            probe_toward({-0.08, 0.1, 0.1}, px, 0.55),
            probe_toward({0.2, -0.28, 0.12}, py, 0.5),
            probe_toward({-0.08, -0.1, 0.05}, px, 0.55),
            probe_toward({0.3, 0.0, 0.6}, -pz, 0.6),
            probe_toward({-0.08, 0.02, 0.14}, px, 0.5),
        };
    }
    else if (id == "sphere") {
        s.mesh = std::make_shared<const TriangleMesh>(primitives::icosphere(0.06, 3));
        s.truth.t = Vec3(0.2, 0.0, 0.06);
        s.probes = {
            probe_toward({-0.08, 0.0, 0.06}, px, 0.5),
            probe_toward({0.2, 0.28, 0.06}, -py, 0.5),
            probe_toward({0.2, 0.0, 0.6}, -pz, 0.6),
            probe_toward({-0.08, 0.1, 0.06}, px, 0.55),
            probe_toward({0.2, -0.28, 0.04}, py, 0.5),
            probe_toward({-0.08, 0.0, 0.16}, px, 0.55),
        };
    }
    else if (id == "drill-like") {
        // barrel along +x, handle down; spans x [-0.06, 0.13], z [-0.1, 0.09]
        s.mesh = std::make_shared<const TriangleMesh>(primitives::drill_like());
        s.truth.t = Vec3(0.2, 0.0, 0.1);
        s.probes = {
            probe_toward({-0.08, 0.0, 0.165}, px, 0.55),
            probe_toward({-0.08, 0.0, 0.05}, px, 0.55),
            probe_toward({0.2, 0.28, 0.17}, -py, 0.5),
            probe_toward({0.21, 0.0, 0.6}, -pz, 0.6),
            probe_toward({0.2, -0.28, 0.05}, py, 0.5),
            probe_toward({-0.08, 0.1, 0.1}, px, 0.55),
            probe_toward({0.3, 0.0, 0.6}, -pz, 0.6),
            probe_toward({-0.08, 0.0, 0.015}, px, 0.55),
        };
    }
    else {
        std::string known;
        for (const auto& k : scene_ids())
            known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown scene '" + id + "' (available: " + known + ")");
    }
    s.validate();
    return s;
}

/// Scene config (JSON object; TOML files are converted before this step):
///   name, mesh (path) or scene (built-in id), truth {t, quaternion [w,x,y,z]},
///   workspace {min, max}, probes [{origin, direction, max_travel, radius}],
///   r_free, r_target, padding, seed, contact_patch.
/// Keys absent from the config keep the built-in scene's values.
inline Scene scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
    static const std::set<std::string> allowed{"name", "mesh", "scene", "truth", "workspace", "probes", "r_free", "r_target",
        "padding", "seed", "contact_patch", "patch_points", "patch_radius"};
    if (!j.is_object())
        throw FormatError("scene config must be an object");
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k))
            throw ConfigError("unknown scene key '" + k + "'");
    try {
        const std::uint64_t seed = j.value("seed", std::uint64_t{0});
        Scene s;
        if (j.contains("scene")) {
            Rng rng(seed);
            s = build_scene_suite(j.at("scene").get<std::string>(), rng);
        }
        s.seed = seed;
        if (j.contains("mesh")) {
            std::filesystem::path p = j.at("mesh").get<std::string>();
            if (p.is_relative() && !base_dir.empty())
                p = base_dir / p;
            s.mesh = std::make_shared<const TriangleMesh>(load_mesh(p));
            s.name = p.stem().string();
        }
        s.name = j.value("name", s.name);
        if (j.contains("truth")) {
            const auto& t = j.at("truth");
            s.truth.t = detail::json_vec(t.at("t"));
            if (t.contains("quaternion")) {
                const auto& q = t.at("quaternion");
                if (!q.is_array() || q.size() != 4)
                    throw FormatError("quaternion must be [w, x, y, z]");
                s.truth.R = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>())
                                .normalized()
                                .toRotationMatrix();
            }
        }
        if (j.contains("workspace"))
            s.workspace = workspace_from_json(j.at("workspace"));
        if (j.contains("probes")) {
            s.probes.clear();
            for (const auto& p : j.at("probes")) {
                Probe probe;
                probe.origin = detail::json_vec(p.at("origin"));
                probe.direction = detail::json_vec(p.at("direction")).normalized();
                probe.max_travel = p.value("max_travel", probe.max_travel);
                probe.radius = p.value("radius", probe.radius);
                s.probes.push_back(probe);
            }
        }
        s.r_free = j.value("r_free", s.r_free);
        s.r_target = j.value("r_target", s.r_target);
        s.padding = j.value("padding", s.padding);
        s.contact_patch = j.value("contact_patch", s.contact_patch);
        s.patch_points = j.value("patch_points", s.patch_points);
        s.patch_radius = j.value("patch_radius", s.patch_radius);
        s.validate();
        return s;
    }
    catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad scene config: ") + e.what());
    }
}

inline std::uint64_t scene_hash(const Scene& s)
{
    Fnv1a h;
    h.update_value(s.mesh->content_hash());
    h.update(s.truth.R.data(), 9 * sizeof(double));
    h.update(s.truth.t.data(), 3 * sizeof(double));
    h.update(s.workspace.min.data(), 3 * sizeof(double));
    h.update(s.workspace.max.data(), 3 * sizeof(double));
    for (const auto& p : s.probes) {
        h.update(p.origin.data(), 3 * sizeof(double));
        h.update(p.direction.data(), 3 * sizeof(double));
        h.update_value(p.max_travel);
        h.update_value(p.radius);
    }
    h.update_value(s.r_free);
    h.update_value(s.r_target);
    h.update_value(s.padding);
    h.update_value(s.seed);
    h.update_value(s.contact_patch);
    return h.digest();
}

} // namespace posehyp
