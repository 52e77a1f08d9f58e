#pragma once

#include <posehyp/bvh.hpp>
#include <posehyp/common.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>

namespace posehyp {

/// Signed distance and its unit gradient at a query point (object frame).
struct SdfSample {
    double value = 0.0;
    Vec3 gradient = Vec3::Zero();
};

/// Immutable triangle mesh with a BVH for closest-point and ray queries.
/// Triangles are expected counter-clockwise seen from outside.
class TriangleMesh {
public:
    TriangleMesh() = default;

    TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
        : _vertices(std::move(vertices)), _triangles(std::move(triangles))
    {
        if (_triangles.empty())
            throw FormatError("mesh has no triangles");
        for (const auto& t : _triangles)
            for (auto v : t)
                if (v >= _vertices.size())
                    throw FormatError("triangle index out of range");
        for (const auto& v : _vertices)
            _bounds.extend(v);
        _watertight = _check_closed();
        _bvh = std::make_shared<const Bvh>(_vertices, _triangles);
        _cumulative_area.reserve(_triangles.size());
        double total = 0.0;
        for (std::size_t i = 0; i < _triangles.size(); ++i) {
            total += 0.5 * _raw_normal(i).norm();
            _cumulative_area.push_back(total);
        }
    }

    const std::vector<Vec3>& vertices() const { return _vertices; }
    const std::vector<Triangle>& triangles() const { return _triangles; }
    const Aabb& bounds() const { return _bounds; }
    const Bvh& index() const { return *_bvh; }
    bool watertight() const { return _watertight; }
    double area() const { return _cumulative_area.empty() ? 0.0 : _cumulative_area.back(); }

    /// Largest vertex distance from the object-frame origin.
    double bounding_radius() const
    {
        double r = 0.0;
        for (const auto& v : _vertices)
            r = std::max(r, v.norm());
        return r;
    }

    Vec3 triangle_normal(std::size_t i) const
    {
        const Vec3 n = _raw_normal(i);
        const double len = n.norm();
        return len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
    }

    /// Ray-parity inside test. A fixed ray direction is used; when the ray grazes an
    /// edge or vertex (barycentric within 1e-9) the direction is jittered and retried.
    bool contains(const Vec3& p) const
    {
        if (!_bounds.contains(p))
            return false;
        Vec3 dir = Vec3(0.5471, 0.3134, 0.7762).normalized();
        std::mt19937_64 jitter(0x5eed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        int crossings = 0;
        for (int attempt = 0; attempt < 16; ++attempt) {
            crossings = 0;
            bool grazing = false;
            _bvh->for_each_hit(p, dir, 0.0, std::numeric_limits<double>::infinity(), [&](const RayHit& h) {
                constexpr double tol = 1e-9;
                if (h.u < tol || h.v < tol || 1.0 - h.u - h.v < tol || h.t < tol)
                    grazing = true;
                ++crossings;
            });
            if (!grazing)
                break;
            dir = (dir + 0.1 * Vec3(u(jitter), u(jitter), u(jitter))).normalized();
        }
        return (crossings % 2) == 1;
    }

    /// Exact signed distance: magnitude to the closest surface point, negative inside.
    /// The gradient is the normalized offset from the closest point, flipped inside; a
    /// query exactly on the surface returns the closest triangle's normal.
    SdfSample signed_distance(const Vec3& p) const
    {
        const auto closest = _bvh->closest_point(p);
        const double dist = std::sqrt(closest.squared_distance);
        if (dist < 1e-12)
            return {0.0, triangle_normal(closest.triangle)};
        const double sign = contains(p) ? -1.0 : 1.0;
        return {sign * dist, sign * (p - closest.point) / dist};
    }

    /// Area-weighted triangle choice plus uniform barycentric coordinates.
    template <typename Rng>
    std::vector<Vec3> sample_surface(std::size_t n, Rng& rng) const
    {
        std::vector<Vec3> out;
        out.reserve(n);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double total = area();
        for (std::size_t i = 0; i < n; ++i) {
            const double pick = unit(rng) * total;
            auto it = std::upper_bound(_cumulative_area.begin(), _cumulative_area.end(), pick);
            const auto tri = static_cast<std::size_t>(
                std::min<std::ptrdiff_t>(it - _cumulative_area.begin(), _cumulative_area.size() - 1));
            const double r1 = std::sqrt(unit(rng));
            const double r2 = unit(rng);
            const auto& t = _triangles[tri];
            out.push_back((1.0 - r1) * _vertices[t[0]] + r1 * (1.0 - r2) * _vertices[t[1]] + r1 * r2 * _vertices[t[2]]);
        }
        return out;
    }

    std::uint64_t content_hash() const
    {
        Fnv1a h;
        for (const auto& v : _vertices)
            h.update(v.data(), 3 * sizeof(double));
        for (const auto& t : _triangles)
            h.update(t.data(), sizeof(Triangle));
        return h.digest();
    }

private:
    Vec3 _raw_normal(std::size_t i) const
    {
        const auto& t = _triangles[i];
        return (_vertices[t[1]] - _vertices[t[0]]).cross(_vertices[t[2]] - _vertices[t[0]]);
    }

    bool _check_closed() const
    {
        std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
        for (const auto& t : _triangles)
            for (int k = 0; k < 3; ++k) {
                const auto a = t[k], b = t[(k + 1) % 3];
                ++edges[{std::min(a, b), std::max(a, b)}];
            }
        return std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.second == 2; });
    }

    std::vector<Vec3> _vertices;
    std::vector<Triangle> _triangles;
    Aabb _bounds;
    bool _watertight = false;
    std::shared_ptr<const Bvh> _bvh;
    std::vector<double> _cumulative_area;
};

using MeshPtr = std::shared_ptr<const TriangleMesh>;

/// Exact mesh SDF as a field. Slow; used for ground truth and symmetry checks.
class MeshSdf {
public:
    explicit MeshSdf(MeshPtr mesh) : _mesh(std::move(mesh)) {}

    SdfSample query(const Vec3& p) const { return _mesh->signed_distance(p); }
    /// True when p is guaranteed to have sdf > 0 without a full query.
    bool certainly_outside(const Vec3& p) const { return !_mesh->bounds().contains(p); }
    const TriangleMesh& mesh() const { return *_mesh; }

private:
    MeshPtr _mesh;
};

struct MeshLoadOptions {
    /// When false an open mesh only produces a warning on stderr.
    bool require_watertight = true;
};

namespace detail {

    inline TriangleMesh finish_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
        const MeshLoadOptions& opts, const std::string& name)
    {
        TriangleMesh mesh(std::move(vertices), std::move(triangles));
        if (!mesh.watertight()) {
            if (opts.require_watertight)
                throw WatertightError(name + ": mesh is not closed (some edge is not shared by exactly two triangles)");
            std::cerr << "warning: " << name << ": mesh is not watertight; inside/outside signs may be wrong\n";
        }
        return mesh;
    }

} // namespace detail

inline TriangleMesh parse_obj(std::istream& in, const MeshLoadOptions& opts = {}, const std::string& name = "obj")
{
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#')
            continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z()))
                throw FormatError(name + ": bad vertex on line " + std::to_string(line_no));
            vertices.push_back(v);
        }
        else if (tag == "f") {
            std::vector<std::uint32_t> face;
            std::string tok;
            while (ls >> tok) {
                long idx = 0;
                try {
                    idx = std::stol(tok.substr(0, tok.find('/')));
                }
                catch (const std::exception&) {
                    throw FormatError(name + ": bad face index on line " + std::to_string(line_no));
                }
                if (idx < 0)
                    idx = static_cast<long>(vertices.size()) + idx + 1;
                if (idx < 1 || static_cast<std::size_t>(idx) > vertices.size())
                    throw FormatError(name + ": face index out of range on line " + std::to_string(line_no));
                face.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            if (face.size() < 3)
                throw FormatError(name + ": face with fewer than 3 vertices on line " + std::to_string(line_no));
            for (std::size_t k = 1; k + 1 < face.size(); ++k)
                triangles.push_back({face[0], face[k], face[k + 1]});
        }
    }
    if (vertices.empty() || triangles.empty())
        throw FormatError(name + ": no geometry found");
    return detail::finish_mesh(std::move(vertices), std::move(triangles), opts, name);
}

inline TriangleMesh parse_binary_stl(const std::string& bytes, const MeshLoadOptions& opts = {}, const std::string& name = "stl")
{
    if (bytes.size() < 84)
        throw FormatError(name + ": truncated STL header");
    std::uint32_t count = 0;
    std::memcpy(&count, bytes.data() + 80, 4);
    if (bytes.size() != 84 + 50ull * count)
        throw FormatError(name + ": STL size does not match triangle count (ASCII STL is not supported)");
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::map<std::array<float, 3>, std::uint32_t> welded;
    for (std::uint32_t i = 0; i < count; ++i) {
        const char* rec = bytes.data() + 84 + 50ull * i + 12;
        Triangle tri{};
        for (int k = 0; k < 3; ++k) {
            std::array<float, 3> xyz{};
            std::memcpy(xyz.data(), rec + 12 * k, 12);
            auto [it, inserted] = welded.emplace(xyz, static_cast<std::uint32_t>(vertices.size()));
            if (inserted)
                vertices.emplace_back(xyz[0], xyz[1], xyz[2]);
            tri[k] = it->second;
        }
        triangles.push_back(tri);
    }
    if (triangles.empty())
        throw FormatError(name + ": no triangles");
    return detail::finish_mesh(std::move(vertices), std::move(triangles), opts, name);
}

/// Loads ASCII OBJ or binary STL, chosen by extension.
inline TriangleMesh load_mesh(const std::filesystem::path& path, const MeshLoadOptions& opts = {})
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("mesh not found: " + path.string());
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj")
        return parse_obj(in, opts, path.string());
    if (ext == ".stl") {
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse_binary_stl(bytes, opts, path.string());
    }
    throw FormatError(path.string() + ": unsupported mesh format (expected .obj or .stl)");
}

inline void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path)
{
    std::ofstream out(path);
    out.precision(17);
    for (const auto& v : mesh.vertices())
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles())
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void write_binary_stl(const TriangleMesh& mesh, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    char header[80] = {};
    out.write(header, 80);
    const auto count = static_cast<std::uint32_t>(mesh.triangles().size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (std::size_t i = 0; i < mesh.triangles().size(); ++i) {
        float rec[12];
        const Vec3 n = mesh.triangle_normal(i);
        for (int a = 0; a < 3; ++a)
            rec[a] = static_cast<float>(n[a]);
        for (int k = 0; k < 3; ++k)
            for (int a = 0; a < 3; ++a)
                rec[3 + 3 * k + a] = static_cast<float>(mesh.vertices()[mesh.triangles()[i][k]][a]);
        out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
        const std::uint16_t attr = 0;
        out.write(reinterpret_cast<const char*>(&attr), 2);
    }
}

} // namespace posehyp
