#pragma once

#include <posehyp/mesh.hpp>

#include <cmath>
#include <map>
#include <numbers>

namespace posehyp::primitives {

/// Axis-aligned box centered at the origin.
inline TriangleMesh box(const Vec3& extents)
{
    const Vec3 h = 0.5 * extents;
    std::vector<Vec3> v;
    for (int i = 0; i < 8; ++i)
        v.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
    std::vector<Triangle> t = {
        {0, 2, 1}, {1, 2, 3}, // -z
        {4, 5, 6}, {5, 7, 6}, // +z
        {0, 1, 4}, {1, 5, 4}, // -y
        {2, 6, 3}, {3, 6, 7}, // +y
        {0, 4, 2}, {2, 4, 6}, // -x
        {1, 3, 5}, {3, 7, 5}, // +x
    };
    return TriangleMesh(std::move(v), std::move(t));
}

/// Subdivided icosahedron with all vertices on the sphere of the given radius.
inline TriangleMesh icosphere(double radius, int subdivisions)
{
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
        {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
        {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1},
    };
    for (auto& x : v)
        x.normalize();
    std::vector<Triangle> t = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = mid.find(key);
            if (it != mid.end())
                return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const auto idx = static_cast<std::uint32_t>(v.size() - 1);
            mid.emplace(key, idx);
            return idx;
        };
        std::vector<Triangle> next;
        next.reserve(4 * t.size());
        for (const auto& f : t) {
            const auto a = midpoint(f[0], f[1]);
            const auto b = midpoint(f[1], f[2]);
            const auto c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        t = std::move(next);
    }
    for (auto& x : v)
        x *= radius;
    return TriangleMesh(std::move(v), std::move(t));
}

/// Closed cylinder along z, centered at the origin. With `segments` a multiple of k the
/// mesh maps onto itself under yaw rotations by 2*pi/k.
inline TriangleMesh cylinder(double radius, double height, int segments)
{
    const auto n = static_cast<std::uint32_t>(segments);
    std::vector<Vec3> v;
    for (int ring = 0; ring < 2; ++ring)
        for (std::uint32_t i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * i / n;
            v.emplace_back(radius * std::cos(a), radius * std::sin(a), ring == 0 ? -0.5 * height : 0.5 * height);
        }
    v.emplace_back(0, 0, -0.5 * height);
    v.emplace_back(0, 0, 0.5 * height);
    const std::uint32_t bc = 2 * n, tc = 2 * n + 1;
    std::vector<Triangle> t;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t j = (i + 1) % n;
        t.push_back({i, j, n + j});
        t.push_back({i, n + j, n + i});
        t.push_back({tc, n + i, n + j});
        t.push_back({bc, j, i});
    }
    return TriangleMesh(std::move(v), std::move(t));
}

namespace detail {

    inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c)
    {
        return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    }

    /// Ear clipping for a simple counter-clockwise polygon.
    inline std::vector<Triangle> triangulate(const std::vector<Eigen::Vector2d>& poly)
    {
        std::vector<std::uint32_t> remaining(poly.size());
        std::iota(remaining.begin(), remaining.end(), 0u);
        std::vector<Triangle> out;
        while (remaining.size() > 3) {
            bool clipped = false;
            const std::size_t m = remaining.size();
            for (std::size_t k = 0; k < m; ++k) {
                const auto a = remaining[(k + m - 1) % m], b = remaining[k], c = remaining[(k + 1) % m];
                if (cross2(poly[a], poly[b], poly[c]) <= 1e-15)
                    continue;
                bool ear = true;
                for (auto q : remaining) {
                    if (q == a || q == b || q == c)
                        continue;
                    if (cross2(poly[a], poly[b], poly[q]) >= 0 && cross2(poly[b], poly[c], poly[q]) >= 0
                        && cross2(poly[c], poly[a], poly[q]) >= 0) {
                        ear = false;
                        break;
                    }
                }
                if (!ear)
                    continue;
                out.push_back({a, b, c});
                remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(k));
                clipped = true;
                break;
            }
            if (!clipped)
                throw PreconditionError("polygon is not simple or not counter-clockwise");
        }
        out.push_back({remaining[0], remaining[1], remaining[2]});
        return out;
    }

} // namespace detail

/// Prism from a simple counter-clockwise polygon in the xy plane, extruded along z.
inline TriangleMesh extruded_polygon(const std::vector<Eigen::Vector2d>& poly, double thickness)
{
    const auto n = static_cast<std::uint32_t>(poly.size());
    require(n >= 3, "polygon needs at least 3 vertices");
    std::vector<Vec3> v;
    for (int layer = 0; layer < 2; ++layer)
        for (const auto& p : poly)
            v.emplace_back(p.x(), p.y(), layer == 0 ? -0.5 * thickness : 0.5 * thickness);
    std::vector<Triangle> t;
    for (const auto& f : detail::triangulate(poly)) {
        t.push_back({n + f[0], n + f[1], n + f[2]});
        t.push_back({f[0], f[2], f[1]});
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t j = (i + 1) % n;
        t.push_back({i, j, n + j});
        t.push_back({i, n + j, n + i});
    }
    return TriangleMesh(std::move(v), std::move(t));
}

/// Power-drill silhouette (battery base, handle, barrel, chuck) extruded 6 cm.
/// Upright along +z with the barrel pointing along +x; no rotational symmetry.
inline TriangleMesh drill_like()
{
    const std::vector<Eigen::Vector2d> profile = {
        {-0.05, -0.10}, {0.05, -0.10}, {0.05, -0.07}, {0.015, -0.07},
        {0.01, 0.04}, {0.10, 0.04}, {0.10, 0.055}, {0.13, 0.055},
        {0.13, 0.075}, {0.10, 0.075}, {0.10, 0.09}, {-0.06, 0.09},
        {-0.06, 0.04}, {-0.03, 0.04}, {-0.035, -0.07}, {-0.05, -0.07},
    };
    TriangleMesh flat = extruded_polygon(profile, 0.06);
    // profile y becomes height (z), extrusion becomes depth (y)
    const Mat3 rot = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitX()).toRotationMatrix();
    std::vector<Vec3> v;
    for (const auto& p : flat.vertices())
        v.push_back(rot * p);
    return TriangleMesh(std::move(v), flat.triangles());
}

} // namespace posehyp::primitives
