#pragma once

#include <posehyp/common.hpp>

#include <json.hpp>

#include <array>
#include <cmath>
#include <map>
#include <set>
#include <span>

namespace posehyp {

enum class SemanticClass { free, occupied, known };

/// Per-point semantics: FREE (sdf > 0), OCCUPIED (sdf < 0) or KNOWN(v) (sdf == v).
struct Semantics {
    SemanticClass kind = SemanticClass::free;
    double value = 0.0;

    static Semantics free() { return {SemanticClass::free, 0.0}; }
    static Semantics occupied() { return {SemanticClass::occupied, 0.0}; }
    static Semantics known(double v)
    {
        require(std::isfinite(v), "known SDF value must be finite");
        return {SemanticClass::known, v};
    }
    bool operator==(const Semantics&) const = default;
};

/// Where a point came from. Diagnostic only; never affects cost.
struct PointTag {
    enum class Source { unknown, probe, boundary, camera_ray } source = Source::unknown;
    int probe = -1;
    bool operator==(const PointTag&) const = default;
};

struct Workspace {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Ones();

    Workspace() = default;
    Workspace(const Vec3& lo, const Vec3& hi) : min(lo), max(hi)
    {
        require((min.array() < max.array()).all(), "workspace must satisfy min < max on every axis");
    }
    Vec3 extent() const { return max - min; }
    bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
};

/// Observation X partitioned by class. Free points are voxel centers.
struct SemanticPointSet {
    std::vector<Vec3> free;
    std::vector<Vec3> occupied;
    std::vector<Vec3> known;
    std::vector<double> known_values;
    std::vector<PointTag> free_tags;
    std::vector<PointTag> occupied_tags;
    std::vector<PointTag> known_tags;

    std::size_t size() const { return free.size() + occupied.size() + known.size(); }
    bool empty() const { return size() == 0; }
};

/// Integer-keyed voxel set. Marking is idempotent; export yields one center per voxel
/// in key order, so the result does not depend on insertion order.
class FreeVoxelGrid {
public:
    using Key = std::array<std::int64_t, 3>;

    FreeVoxelGrid(double resolution, const Vec3& origin = Vec3::Zero()) : _resolution(resolution), _origin(origin)
    {
        require(resolution > 0.0, "free voxel resolution must be positive");
    }

    double resolution() const { return _resolution; }
    const Vec3& origin() const { return _origin; }
    std::size_t size() const { return _voxels.size(); }

    Key key_of(const Vec3& p) const
    {
        Key k;
        for (int a = 0; a < 3; ++a)
            k[a] = static_cast<std::int64_t>(std::floor((p[a] - _origin[a]) / _resolution));
        return k;
    }

    Vec3 center_of(const Key& k) const
    {
        return _origin + _resolution * Vec3(k[0] + 0.5, k[1] + 0.5, k[2] + 0.5);
    }

    bool contains(const Key& k) const { return _voxels.count(k) > 0; }

    /// Marks the voxel of p. Returns true when the voxel was not marked before.
    bool add(const Vec3& p, PointTag tag = {}) { return _voxels.emplace(key_of(p), tag).second; }

    void add_points(std::span<const Vec3> points, PointTag tag = {})
    {
        for (const auto& p : points)
            add(p, tag);
    }

    std::vector<Vec3> centers() const
    {
        std::vector<Vec3> out;
        out.reserve(_voxels.size());
        for (const auto& [k, tag] : _voxels)
            out.push_back(center_of(k));
        return out;
    }

    const std::map<Key, PointTag>& voxels() const { return _voxels; }

private:
    double _resolution;
    Vec3 _origin;
    std::map<Key, PointTag> _voxels;
};

struct KnownPoint {
    Vec3 point;
    double value = 0.0;
    PointTag tag{};
};

/// Builds X: free points by voxel key, known points in insertion order, then occupied.
inline SemanticPointSet assemble_observation(const FreeVoxelGrid& free_grid, std::span<const KnownPoint> contacts,
    std::span<const Vec3> occupied)
{
    SemanticPointSet x;
    x.free.reserve(free_grid.size());
    for (const auto& [k, tag] : free_grid.voxels()) {
        x.free.push_back(free_grid.center_of(k));
        x.free_tags.push_back(tag);
    }
    for (const auto& c : contacts) {
        require(std::isfinite(c.value), "known SDF value must be finite");
        x.known.push_back(c.point);
        x.known_values.push_back(c.value);
        x.known_tags.push_back(c.tag);
    }
    x.occupied.assign(occupied.begin(), occupied.end());
    x.occupied_tags.assign(occupied.size(), PointTag{});
    return x;
}

/// Lattice points tiling the six faces of the workspace at spacing <= r_free.
/// Each axis is split into max(1, ceil(extent / r_free)) equal steps.
inline std::vector<Vec3> workspace_boundary_free_points(const Workspace& w, double r_free)
{
    require((w.min.array() < w.max.array()).all(), "workspace must satisfy min < max on every axis");
    require(r_free > 0.0, "free voxel resolution must be positive");
    std::array<int, 3> steps{};
    for (int a = 0; a < 3; ++a)
        steps[a] = std::max(1, static_cast<int>(std::ceil(w.extent()[a] / r_free - 1e-9)));
    std::vector<Vec3> out;
    for (int k = 0; k <= steps[2]; ++k)
        for (int j = 0; j <= steps[1]; ++j)
            for (int i = 0; i <= steps[0]; ++i) {
                const bool on_face = i == 0 || i == steps[0] || j == 0 || j == steps[1] || k == 0 || k == steps[2];
                if (!on_face)
                    continue;
                const Vec3 f(double(i) / steps[0], double(j) / steps[1], double(k) / steps[2]);
                out.push_back(w.min + f.cwiseProduct(w.extent()));
            }
    return out;
}

// Observation file: {"free": [[x,y,z]...], "occupied": [...], "known": [[x,y,z,v]...],
//                    "r_free": r, "workspace": {"min": [...], "max": [...]}}
struct ObservationFile {
    SemanticPointSet points;
    double r_free = 0.025;
    Workspace workspace;
};

namespace detail {
    inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

    inline Vec3 json_vec(const nlohmann::json& j)
    {
        if (!j.is_array() || j.size() != 3)
            throw FormatError("expected a 3-element array");
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    }
} // namespace detail

inline nlohmann::json to_json(const Workspace& w)
{
    return {{"min", detail::vec_json(w.min)}, {"max", detail::vec_json(w.max)}};
}

inline Workspace workspace_from_json(const nlohmann::json& j)
{
    try {
        return Workspace(detail::json_vec(j.at("min")), detail::json_vec(j.at("max")));
    }
    catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad workspace: ") + e.what());
    }
}

inline nlohmann::json to_json(const ObservationFile& obs)
{
    nlohmann::json j;
    j["free"] = nlohmann::json::array();
    for (const auto& p : obs.points.free)
        j["free"].push_back(detail::vec_json(p));
    j["occupied"] = nlohmann::json::array();
    for (const auto& p : obs.points.occupied)
        j["occupied"].push_back(detail::vec_json(p));
    j["known"] = nlohmann::json::array();
    for (std::size_t i = 0; i < obs.points.known.size(); ++i) {
        const auto& p = obs.points.known[i];
        j["known"].push_back({p.x(), p.y(), p.z(), obs.points.known_values[i]});
    }
    j["r_free"] = obs.r_free;
    j["workspace"] = to_json(obs.workspace);
    return j;
}

inline ObservationFile observation_from_json(const nlohmann::json& j)
{
    ObservationFile obs;
    try {
        for (const auto& p : j.at("free"))
            obs.points.free.push_back(detail::json_vec(p));
        for (const auto& p : j.value("occupied", nlohmann::json::array()))
            obs.points.occupied.push_back(detail::json_vec(p));
        for (const auto& p : j.at("known")) {
            if (!p.is_array() || p.size() != 4)
                throw FormatError("known entries must be [x, y, z, v]");
            obs.points.known.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
            obs.points.known_values.push_back(p[3].get<double>());
        }
        obs.r_free = j.at("r_free").get<double>();
        obs.workspace = workspace_from_json(j.at("workspace"));
    }
    catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad observation file: ") + e.what());
    }
    obs.points.free_tags.assign(obs.points.free.size(), {});
    obs.points.occupied_tags.assign(obs.points.occupied.size(), {});
    obs.points.known_tags.assign(obs.points.known.size(), {});
    return obs;
}

} // namespace posehyp
