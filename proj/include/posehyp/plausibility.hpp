#pragma once

#include <posehyp/cost.hpp>
#include <posehyp/mesh.hpp>
#include <posehyp/qd_registration.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace posehyp {

/// Translation offsets around T* (inclusive linspace per axis) and the number of
/// random rotations combined with each offset.
struct PlausibleGridSpec {
    Vec3 lower{-0.1, -0.2, 0.0};
    Vec3 upper{0.15, 0.2, 0.1};
    std::array<int, 3> cells{15, 15, 15};
    std::size_t rotations = 10000;

    static PlausibleGridSpec reduced()
    {
        PlausibleGridSpec s;
        s.cells = {9, 9, 9};
        s.rotations = 2000;
        return s;
    }

    void validate() const
    {
        for (int a = 0; a < 3; ++a)
            require(cells[a] >= 1 && lower[a] <= upper[a], "plausible grid needs >= 1 cell and lower <= upper per axis");
        require(rotations >= 1, "plausible grid needs at least one rotation");
    }

    std::vector<Vec3> offsets() const
    {
        std::array<std::vector<double>, 3> axis;
        for (int a = 0; a < 3; ++a) {
            for (int i = 0; i < cells[a]; ++i)
                axis[a].push_back(cells[a] == 1 ? lower[a] : lower[a] + (upper[a] - lower[a]) * i / (cells[a] - 1));
        }
        std::vector<Vec3> out;
        for (double z : axis[2])
            for (double y : axis[1])
                for (double x : axis[0])
                    out.emplace_back(x, y, z);
        return out;
    }
};

/// Members are (rotation index, translation index) pairs into the two tables.
/// The last entry of each table is T*, and (R*, t*) is always a member.
struct PlausibleSet {
    std::vector<Mat3> rotations;
    std::vector<Vec3> translations;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> members;
    double delta = 0.0;
    double baseline_cost = 0.0;
    std::size_t candidates = 0;

    std::size_t size() const { return members.size(); }
    bool empty() const { return members.empty(); }
    RigidTransform transform(std::size_t i) const { return {rotations[members[i].first], translations[members[i].second]}; }

    std::vector<RigidTransform> transforms() const
    {
        std::vector<RigidTransform> out;
        out.reserve(members.size());
        for (std::size_t i = 0; i < members.size(); ++i)
            out.push_back(transform(i));
        return out;
    }
};

namespace detail {

    /// Ground-truth cost with early exit once it reaches `bound`. Free points are
    /// passed pre-filtered to those that can reach the object.
    template <SdfField Field>
    double bounded_ground_truth_cost(const SemanticPointSet& x, std::span<const Vec3> free, const RigidTransform& T,
        const Field& field, const CostConfig& cfg, double bound)
    {
        double cost = 0.0;
        const Mat3 Rt = T.R.transpose();
        for (std::size_t i = 0; i < x.known.size(); ++i) {
            cost += std::abs(x.known_values[i] - field.query(Rt * (x.known[i] - T.t)).value);
            if (cost >= bound)
                return cost;
        }
        for (const auto& p : x.occupied) {
            const Vec3 q = Rt * (p - T.t);
            if (field.certainly_outside(q) || field.query(q).value >= 0.0) {
                cost += cfg.c_max;
                if (cost >= bound)
                    return cost;
            }
        }
        for (const auto& p : free) {
            const Vec3 q = Rt * (p - T.t);
            if (!field.certainly_outside(q) && field.query(q).value <= 0.0) {
                cost += cfg.c_max;
                if (cost >= bound)
                    return cost;
            }
        }
        return cost;
    }

} // namespace detail

/// Brute-force plausible set: every offset of T*.t combined with every rotation in
/// `rotations` is kept when C(X, T) - C(X, T*) < delta. `object_radius` bounds the
/// object around its frame origin (used to skip free points that cannot be inside).
template <SdfField Field>
PlausibleSet compute_plausible_set(const SemanticPointSet& x, const RigidTransform& truth, const Field& field,
    double delta, const PlausibleGridSpec& spec, std::vector<Mat3> rotations, double object_radius,
    const CostConfig& cost_cfg = {})
{
    require(delta > 0.0, "plausible set delta must be positive");
    spec.validate();
    PlausibleSet set;
    set.delta = delta;
    set.baseline_cost = ground_truth_cost(x, truth, field, cost_cfg);
    set.rotations = std::move(rotations);
    set.rotations.push_back(truth.R);
    for (const auto& off : spec.offsets())
        set.translations.push_back(truth.t + off);
    set.translations.push_back(truth.t);

    const std::size_t n_rot = set.rotations.size() - 1, n_trans = set.translations.size() - 1;
    set.candidates = n_rot * n_trans;
    const double bound = set.baseline_cost + delta;
    const double reach = object_radius * (1.0 + 1e-9) + 1e-9;

    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> per_translation(n_trans);
    parallel::parallel_for(n_trans, [&](std::size_t ti) {
        const Vec3& t = set.translations[ti];
        std::vector<Vec3> near;
        for (const auto& p : x.free)
            if ((p - t).squaredNorm() <= reach * reach)
                near.push_back(p);
        for (std::size_t ri = 0; ri < n_rot; ++ri) {
            const RigidTransform T{set.rotations[ri], t};
            if (detail::bounded_ground_truth_cost(x, near, T, field, cost_cfg, bound) - set.baseline_cost < delta)
                per_translation[ti].emplace_back(static_cast<std::uint32_t>(ri), static_cast<std::uint32_t>(ti));
        }
    });
    for (auto& m : per_translation)
        set.members.insert(set.members.end(), m.begin(), m.end());
    set.members.emplace_back(static_cast<std::uint32_t>(n_rot), static_cast<std::uint32_t>(n_trans));
    return set;
}

/// Same with spec.rotations uniform random rotations drawn from rng.
template <SdfField Field, typename Rng>
PlausibleSet compute_plausible_set(const SemanticPointSet& x, const RigidTransform& truth, const Field& field,
    double delta, const PlausibleGridSpec& spec, Rng& rng, double object_radius, const CostConfig& cost_cfg = {})
{
    std::vector<Mat3> rotations;
    rotations.reserve(spec.rotations);
    for (std::size_t i = 0; i < spec.rotations; ++i)
        rotations.push_back(sample_uniform_rotation(rng));
    return compute_plausible_set(x, truth, field, delta, spec, std::move(rotations), object_radius, cost_cfg);
}

struct PdScore {
    double coverage = 0.0;
    double plausibility = 0.0;
    double plausible_diversity = 0.0;
};

inline nlohmann::json to_json(const PdScore& s)
{
    return {{"coverage", s.coverage}, {"plausibility", s.plausibility}, {"plausible_diversity", s.plausible_diversity}};
}

/// Coverage = mean over P of the distance to the nearest estimate; plausibility =
/// mean over estimates of the distance to the nearest member of P.
inline PdScore plausible_diversity(std::span<const RigidTransform> plausible, std::span<const RigidTransform> estimates,
    std::span<const Vec3> surface_pts)
{
    if (plausible.empty() || estimates.empty())
        throw UndefinedScoreError("plausible diversity is undefined for an empty plausible or estimate set");
    require(!surface_pts.empty(), "plausible diversity needs surface points");
    std::vector<TransformedCloud> p_clouds(plausible.size()), e_clouds(estimates.size());
    parallel::parallel_for(plausible.size(), [&](std::size_t i) { p_clouds[i] = TransformedCloud(plausible[i], surface_pts); });
    for (std::size_t j = 0; j < estimates.size(); ++j)
        e_clouds[j] = TransformedCloud(estimates[j], surface_pts);

    const std::size_t np = plausible.size(), ne = estimates.size();
    std::vector<double> d(np * ne);
    parallel::parallel_for(np, [&](std::size_t i) {
        for (std::size_t j = 0; j < ne; ++j)
            d[i * ne + j] = chamfer_distance(p_clouds[i], e_clouds[j]);
    });
    PdScore s;
    for (std::size_t i = 0; i < np; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ne; ++j)
            m = std::min(m, d[i * ne + j]);
        s.coverage += m;
    }
    s.coverage /= static_cast<double>(np);
    for (std::size_t j = 0; j < ne; ++j) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < np; ++i)
            m = std::min(m, d[i * ne + j]);
        s.plausibility += m;
    }
    s.plausibility /= static_cast<double>(ne);
    s.plausible_diversity = s.coverage + s.plausibility;
    return s;
}

/// At most `cap` members, evenly strided over the membership list; T* (last) is kept.
inline std::vector<RigidTransform> plausible_subset(const PlausibleSet& set, std::size_t cap)
{
    require(cap >= 1, "subset cap must be positive");
    if (set.size() <= cap)
        return set.transforms();
    std::vector<RigidTransform> out;
    out.reserve(cap);
    for (std::size_t k = 0; k + 1 < cap; ++k)
        out.push_back(set.transform(k * (set.size() - 1) / (cap - 1)));
    out.push_back(set.transform(set.size() - 1));
    return out;
}

/// Suboptimality thresholds per object.
inline const std::map<std::string, double>& plausible_deltas()
{
    static const std::map<std::string, double> table{
        {"real-drill", 0.001},
        {"real-mustard", 0.0003},
        {"sim-drill", 0.001},
        {"sim-mustard", 0.0003},
        {"sim-hammer", 0.001},
        {"sim-cracker-box", 0.0005},
        {"sim-spam-can", 0.0003},
        {"sim-clamp", 0.0007},
    };
    return table;
}

/// A numeric literal or a key of plausible_deltas().
inline double parse_delta(const std::string& s)
{
    const auto& table = plausible_deltas();
    if (auto it = table.find(s); it != table.end())
        return it->second;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    }
    catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || !(v > 0.0)) {
        std::string keys;
        for (const auto& [k, _] : table)
            keys += (keys.empty() ? "" : ", ") + k;
        throw ConfigError("delta must be a positive number or one of: " + keys);
    }
    return v;
}

// Cache file: "PLST", u16 version, u64 key, f64 delta, f64 baseline, u64 candidates,
// u32 #rotations, u32 #translations, u64 #members, rotations 9 x f64 (row-major),
// translations 3 x f64, members 2 x u32.
namespace plausible_cache {

    inline constexpr std::uint16_t version = 1;

    inline std::uint64_t key(std::uint64_t scene_hash, double delta, std::uint64_t seed, const PlausibleGridSpec& spec)
    {
        Fnv1a h;
        h.update_value(scene_hash);
        h.update_value(delta);
        h.update_value(seed);
        h.update(spec.lower.data(), 3 * sizeof(double));
        h.update(spec.upper.data(), 3 * sizeof(double));
        h.update(spec.cells.data(), 3 * sizeof(int));
        h.update_value(static_cast<std::uint64_t>(spec.rotations));
        h.update_value(version);
        return h.digest();
    }

    inline std::filesystem::path path_for(const std::filesystem::path& dir, std::uint64_t key)
    {
        char name[64];
        std::snprintf(name, sizeof(name), "plausible_%016llx.plst", static_cast<unsigned long long>(key));
        return dir / name;
    }

    inline void write(const std::filesystem::path& path, const PlausibleSet& set, std::uint64_t cache_key)
    {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out)
                throw Error("cannot write plausible-set cache " + path.string());
            auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
            out.write("PLST", 4);
            put(version);
            put(cache_key);
            put(set.delta);
            put(set.baseline_cost);
            put(static_cast<std::uint64_t>(set.candidates));
            put(static_cast<std::uint32_t>(set.rotations.size()));
            put(static_cast<std::uint32_t>(set.translations.size()));
            put(static_cast<std::uint64_t>(set.members.size()));
            for (const auto& R : set.rotations)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        put(R(i, j));
            for (const auto& t : set.translations)
                for (int i = 0; i < 3; ++i)
                    put(t[i]);
            for (const auto& [r, t] : set.members) {
                put(r);
                put(t);
            }
        }
        std::filesystem::rename(tmp, path);
    }

    /// nullopt when the file is missing or does not match `cache_key`.
    inline std::optional<PlausibleSet> read(const std::filesystem::path& path, std::uint64_t cache_key)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            return std::nullopt;
        auto get = [&](auto& v) {
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            if (!in)
                throw FormatError("truncated plausible-set cache " + path.string());
        };
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "PLST", 4) != 0)
            throw FormatError(path.string() + ": not a plausible-set cache");
        std::uint16_t ver = 0;
        std::uint64_t stored_key = 0, candidates = 0, n_members = 0;
        std::uint32_t n_rot = 0, n_trans = 0;
        PlausibleSet set;
        get(ver);
        if (ver != version)
            return std::nullopt;
        get(stored_key);
        if (stored_key != cache_key)
            return std::nullopt;
        get(set.delta);
        get(set.baseline_cost);
        get(candidates);
        get(n_rot);
        get(n_trans);
        get(n_members);
        set.candidates = candidates;
        set.rotations.resize(n_rot);
        for (auto& R : set.rotations)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    get(R(i, j));
        set.translations.resize(n_trans);
        for (auto& t : set.translations)
            for (int i = 0; i < 3; ++i)
                get(t[i]);
        set.members.resize(n_members);
        for (auto& [r, t] : set.members) {
            get(r);
            get(t);
            if (r >= n_rot || t >= n_trans)
                throw FormatError("plausible-set cache member out of range");
        }
        return set;
    }

} // namespace plausible_cache

/// Hash of everything the plausible set depends on besides delta, seed and grid.
inline std::uint64_t observation_hash(const SemanticPointSet& x, const RigidTransform& truth, std::uint64_t mesh_hash)
{
    Fnv1a h;
    h.update_value(mesh_hash);
    h.update(truth.R.data(), 9 * sizeof(double));
    h.update(truth.t.data(), 3 * sizeof(double));
    for (const auto& p : x.free)
        h.update(p.data(), 3 * sizeof(double));
    h.update_string("|occ|");
    for (const auto& p : x.occupied)
        h.update(p.data(), 3 * sizeof(double));
    h.update_string("|known|");
    for (std::size_t i = 0; i < x.known.size(); ++i) {
        h.update(x.known[i].data(), 3 * sizeof(double));
        h.update_value(x.known_values[i]);
    }
    return h.digest();
}

} // namespace posehyp
