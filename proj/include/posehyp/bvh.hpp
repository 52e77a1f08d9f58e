#pragma once

#include <posehyp/common.hpp>

#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>

namespace posehyp {

using Triangle = std::array<std::uint32_t, 3>;

/// Closest point on triangle (a, b, c) to p. Voronoi-region walk from Ericson,
/// "Real-Time Collision Detection", 5.1.5.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0)
        return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3)
        return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0)
        return a + (d1 / (d1 - d3)) * ab;

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6)
        return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0)
        return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

struct RayHit {
    double t;
    double u;
    double v;
    std::uint32_t triangle;
};

/// Moller-Trumbore. Returns the hit for t > t_min, or nothing when parallel or missed.
inline std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
    const Vec3& c, double t_min = 0.0)
{
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-300)
        return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 tv = origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0)
        return std::nullopt;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0)
        return std::nullopt;
    const double t = e2.dot(qv) * inv;
    if (t <= t_min)
        return std::nullopt;
    return RayHit{t, u, v, 0};
}

/// Bounding volume hierarchy over mesh triangles for closest-point and ray queries.
class Bvh {
public:
    struct ClosestResult {
        Vec3 point;
        double squared_distance;
        std::uint32_t triangle;
    };

    Bvh() = default;

    Bvh(std::span<const Vec3> vertices, std::span<const Triangle> triangles)
        : _vertices(vertices.begin(), vertices.end()), _triangles(triangles.begin(), triangles.end())
    {
        if (_triangles.empty())
            return;
        _order.resize(_triangles.size());
        std::iota(_order.begin(), _order.end(), 0u);
        _centroids.reserve(_triangles.size());
        for (const auto& t : _triangles)
            _centroids.push_back((_vertices[t[0]] + _vertices[t[1]] + _vertices[t[2]]) / 3.0);
        _nodes.reserve(2 * _triangles.size());
        _build(0, static_cast<std::uint32_t>(_triangles.size()));
        _centroids.clear();
        _centroids.shrink_to_fit();
    }

    bool empty() const { return _nodes.empty(); }

    ClosestResult closest_point(const Vec3& p) const
    {
        ClosestResult best{Vec3::Zero(), std::numeric_limits<double>::infinity(), 0};
        if (_nodes.empty())
            return best;
        std::uint32_t stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& node = _nodes[stack[--top]];
            if (node.box.squared_distance(p) >= best.squared_distance)
                continue;
            if (node.count > 0) {
                for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
                    const auto tri_index = _order[k];
                    const auto& t = _triangles[tri_index];
                    const Vec3 q = closest_point_on_triangle(p, _vertices[t[0]], _vertices[t[1]], _vertices[t[2]]);
                    const double d2 = (q - p).squaredNorm();
                    if (d2 < best.squared_distance)
                        best = {q, d2, tri_index};
                }
                continue;
            }
            const Node& l = _nodes[node.left];
            const Node& r = _nodes[node.right];
            const double dl = l.box.squared_distance(p);
            const double dr = r.box.squared_distance(p);
            // push the farther child first so the nearer one is popped next
            if (dl < dr) {
                stack[top++] = node.right;
                stack[top++] = node.left;
            }
            else {
                stack[top++] = node.left;
                stack[top++] = node.right;
            }
        }
        return best;
    }

    /// Visits every triangle hit with t in (t_min, t_max).
    template <typename Visitor>
    void for_each_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max, Visitor&& visit) const
    {
        if (_nodes.empty())
            return;
        const Vec3 inv_dir = dir.cwiseInverse();
        std::uint32_t stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& node = _nodes[stack[--top]];
            if (!_slab(node.box, origin, inv_dir, t_min, t_max))
                continue;
            if (node.count > 0) {
                for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
                    const auto tri_index = _order[k];
                    const auto& t = _triangles[tri_index];
                    auto hit = intersect_triangle(origin, dir, _vertices[t[0]], _vertices[t[1]], _vertices[t[2]], t_min);
                    if (hit && hit->t < t_max) {
                        hit->triangle = tri_index;
                        visit(*hit);
                    }
                }
                continue;
            }
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }

    std::optional<RayHit> first_hit(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const
    {
        std::optional<RayHit> best;
        for_each_hit(origin, dir, t_min, t_max, [&](const RayHit& h) {
            if (!best || h.t < best->t)
                best = h;
        });
        return best;
    }

private:
    struct Node {
        Aabb box;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        std::uint32_t first = 0;
        std::uint32_t count = 0;
    };

    std::uint32_t _build(std::uint32_t begin, std::uint32_t end)
    {
        const auto index = static_cast<std::uint32_t>(_nodes.size());
        _nodes.emplace_back();
        Aabb box, centroid_box;
        for (std::uint32_t k = begin; k < end; ++k) {
            const auto& t = _triangles[_order[k]];
            for (auto v : t)
                box.extend(_vertices[v]);
            centroid_box.extend(_centroids[_order[k]]);
        }
        _nodes[index].box = box;
        const std::uint32_t n = end - begin;
        // depth stays below the stack size: median split halves the range each level
        if (n <= 4) {
            _nodes[index].first = begin;
            _nodes[index].count = n;
            return index;
        }
        int axis = 0;
        centroid_box.extent().maxCoeff(&axis);
        const std::uint32_t mid = begin + n / 2;
        std::nth_element(_order.begin() + begin, _order.begin() + mid, _order.begin() + end,
            [&](std::uint32_t a, std::uint32_t b) { return _centroids[a][axis] < _centroids[b][axis]; });
        const auto left = _build(begin, mid);
        const auto right = _build(mid, end);
        _nodes[index].left = left;
        _nodes[index].right = right;
        return index;
    }

    static bool _slab(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_min, double t_max)
    {
        for (int a = 0; a < 3; ++a) {
            double t0 = (box.min[a] - origin[a]) * inv_dir[a];
            double t1 = (box.max[a] - origin[a]) * inv_dir[a];
            if (std::isnan(t0) || std::isnan(t1)) {
                // ray parallel to the slab and origin on its plane
                if (origin[a] < box.min[a] || origin[a] > box.max[a])
                    return false;
                continue;
            }
            if (t0 > t1)
                std::swap(t0, t1);
            t_min = std::max(t_min, t0);
            t_max = std::min(t_max, t1);
            if (t_max < t_min)
                return false;
        }
        return true;
    }

    std::vector<Vec3> _vertices;
    std::vector<Triangle> _triangles;
    std::vector<std::uint32_t> _order;
    std::vector<Vec3> _centroids;
    std::vector<Node> _nodes;
};

} // namespace posehyp
