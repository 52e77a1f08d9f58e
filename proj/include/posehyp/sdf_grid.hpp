#pragma once

#include <posehyp/mesh.hpp>

#include <cmath>
#include <concepts>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>

namespace posehyp {

/// Anything that answers signed distance queries in the object frame.
template <typename F>
concept SdfField = requires(const F& f, const Vec3& p) {
    { f.query(p) } -> std::same_as<SdfSample>;
    { f.certainly_outside(p) } -> std::convertible_to<bool>;
};

struct SdfGridParams {
    double resolution = 0.01;
    double padding = 0.05;
    std::size_t max_voxels = 20'000'000;
};

/// Voxelized SDF over the mesh bounding box inflated by `padding` on every side.
/// Each voxel stores the mesh SDF at its center and a unit gradient from central
/// differences of neighbouring values. Queries outside the grid fall back to the mesh.
class SdfGrid {
public:
    struct Voxel {
        float value;
        float gx, gy, gz;
    };

    SdfGrid() = default;

    /// Assembles a grid from stored data (cache load).
    SdfGrid(const Vec3& origin, double resolution, std::array<std::uint32_t, 3> dims, std::vector<Voxel> voxels,
        double padding, MeshPtr fallback)
        : _origin(origin), _resolution(resolution), _dims(dims), _voxels(std::move(voxels)), _padding(padding),
          _fallback(std::move(fallback))
    {
        if (_voxels.size() != num_voxels())
            throw FormatError("voxel count does not match dims");
        _inv_resolution = 1.0 / _resolution;
    }

    const Vec3& origin() const { return _origin; }
    double resolution() const { return _resolution; }
    double padding() const { return _padding; }
    const std::array<std::uint32_t, 3>& dims() const { return _dims; }
    std::size_t num_voxels() const { return std::size_t{_dims[0]} * _dims[1] * _dims[2]; }
    const std::vector<Voxel>& voxels() const { return _voxels; }
    const MeshPtr& fallback() const { return _fallback; }

    /// x fastest, then y, then z.
    std::size_t linear_index(std::uint32_t i, std::uint32_t j, std::uint32_t k) const
    {
        return (std::size_t{k} * _dims[1] + j) * _dims[0] + i;
    }

    Vec3 voxel_center(std::uint32_t i, std::uint32_t j, std::uint32_t k) const
    {
        return _origin + _resolution * Vec3(i + 0.5, j + 0.5, k + 0.5);
    }

    Aabb bounds() const
    {
        Aabb b;
        b.min = _origin;
        b.max = _origin + _resolution * Vec3(_dims[0], _dims[1], _dims[2]);
        return b;
    }

    /// Linear voxel index containing p, or npos when p is outside the grid.
    std::size_t locate(const Vec3& p) const
    {
        const double fx = (p.x() - _origin.x()) * _inv_resolution;
        const double fy = (p.y() - _origin.y()) * _inv_resolution;
        const double fz = (p.z() - _origin.z()) * _inv_resolution;
        if (!(fx >= 0.0 && fy >= 0.0 && fz >= 0.0 && fx < _dims[0] && fy < _dims[1] && fz < _dims[2]))
            return npos;
        return linear_index(static_cast<std::uint32_t>(fx), static_cast<std::uint32_t>(fy), static_cast<std::uint32_t>(fz));
    }

    /// Nearest-voxel lookup; out-of-grid points use the exact mesh SDF.
    SdfSample query(const Vec3& p) const
    {
        const std::size_t idx = locate(p);
        if (idx == npos)
            return _fallback->signed_distance(p);
        const Voxel& v = _voxels[idx];
        return {v.value, Vec3(v.gx, v.gy, v.gz)};
    }

    /// Outside the padded box the mesh is at least `padding` away.
    bool certainly_outside(const Vec3& p) const { return locate(p) == npos; }

    /// Trilinear interpolation of voxel-center values. The gradient is the exact
    /// derivative of the interpolant (not renormalized), so it is finite-difference
    /// consistent. Coordinates are clamped to the hull of voxel centers.
    SdfSample query_trilinear(const Vec3& p) const
    {
        if (locate(p) == npos)
            return _fallback->signed_distance(p);
        double f[3];
        std::uint32_t i0[3];
        double slope[3];
        for (int a = 0; a < 3; ++a) {
            double c = (p[a] - _origin[a]) * _inv_resolution - 0.5;
            slope[a] = _inv_resolution;
            const double hi = static_cast<double>(_dims[a] - 1);
            if (c <= 0.0) {
                c = 0.0;
                slope[a] = 0.0;
            }
            else if (c >= hi) {
                c = hi;
                slope[a] = 0.0;
            }
            const auto base = static_cast<std::uint32_t>(std::min(std::floor(c), std::max(hi - 1.0, 0.0)));
            i0[a] = base;
            f[a] = c - base;
        }
        auto val = [&](int dx, int dy, int dz) {
            const auto x = std::min(i0[0] + dx, _dims[0] - 1);
            const auto y = std::min(i0[1] + dy, _dims[1] - 1);
            const auto z = std::min(i0[2] + dz, _dims[2] - 1);
            return static_cast<double>(_voxels[linear_index(x, y, z)].value);
        };
        const double c000 = val(0, 0, 0), c100 = val(1, 0, 0), c010 = val(0, 1, 0), c110 = val(1, 1, 0);
        const double c001 = val(0, 0, 1), c101 = val(1, 0, 1), c011 = val(0, 1, 1), c111 = val(1, 1, 1);
        const double x = f[0], y = f[1], z = f[2];
        const double c00 = c000 * (1 - x) + c100 * x;
        const double c10 = c010 * (1 - x) + c110 * x;
        const double c01 = c001 * (1 - x) + c101 * x;
        const double c11 = c011 * (1 - x) + c111 * x;
        const double c0 = c00 * (1 - y) + c10 * y;
        const double c1 = c01 * (1 - y) + c11 * y;
        SdfSample s;
        s.value = c0 * (1 - z) + c1 * z;
        const double dx0 = (c100 - c000) * (1 - y) + (c110 - c010) * y;
        const double dx1 = (c101 - c001) * (1 - y) + (c111 - c011) * y;
        s.gradient.x() = (dx0 * (1 - z) + dx1 * z) * slope[0];
        s.gradient.y() = ((c10 - c00) * (1 - z) + (c11 - c01) * z) * slope[1];
        s.gradient.z() = (c1 - c0) * slope[2];
        return s;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    Vec3 _origin = Vec3::Zero();
    double _resolution = 1.0;
    double _inv_resolution = 1.0;
    std::array<std::uint32_t, 3> _dims{0, 0, 0};
    std::vector<Voxel> _voxels;
    double _padding = 0.0;
    MeshPtr _fallback;
};

/// View of an SdfGrid that answers queries by trilinear interpolation.
class TrilinearSdf {
public:
    explicit TrilinearSdf(const SdfGrid& grid) : _grid(&grid) {}
    SdfSample query(const Vec3& p) const { return _grid->query_trilinear(p); }
    bool certainly_outside(const Vec3& p) const { return _grid->certainly_outside(p); }

private:
    const SdfGrid* _grid;
};

static_assert(SdfField<SdfGrid>);
static_assert(SdfField<TrilinearSdf>);
static_assert(SdfField<MeshSdf>);

/// Computes the voxel grid. Throws CapacityError (with a coarser suggested
/// resolution) when the grid would exceed params.max_voxels.
inline SdfGrid build_sdf_grid(MeshPtr mesh, const SdfGridParams& params)
{
    require(params.resolution > 0.0, "SDF grid resolution must be positive");
    require(params.padding > 0.0, "SDF grid padding must be positive");
    require(mesh != nullptr, "SDF grid needs a mesh");
    const Aabb box = mesh->bounds();
    const Vec3 origin = box.min - Vec3::Constant(params.padding);
    const Vec3 span = box.extent() + Vec3::Constant(2.0 * params.padding);
    std::array<std::uint32_t, 3> dims{};
    double count = 1.0;
    for (int a = 0; a < 3; ++a) {
        // tolerance keeps 0.3 / 0.01 from rounding up to 31
        const double cells = std::ceil(span[a] / params.resolution - 1e-9);
        dims[a] = static_cast<std::uint32_t>(std::max(1.0, cells));
        count *= dims[a];
    }
    if (count > static_cast<double>(params.max_voxels)) {
        const double suggested = params.resolution * std::cbrt(count / static_cast<double>(params.max_voxels)) * 1.05;
        throw CapacityError("SDF grid of " + std::to_string(static_cast<long long>(count)) + " voxels exceeds budget of "
                + std::to_string(params.max_voxels) + "; try resolution >= " + std::to_string(suggested),
            suggested);
    }

    const std::size_t n = static_cast<std::size_t>(count);
    std::vector<double> values(n);
    auto center = [&](std::uint32_t i, std::uint32_t j, std::uint32_t k) {
        return Vec3(origin + params.resolution * Vec3(i + 0.5, j + 0.5, k + 0.5));
    };
    auto lin = [&](std::uint32_t i, std::uint32_t j, std::uint32_t k) { return (std::size_t{k} * dims[1] + j) * dims[0] + i; };

    parallel::parallel_for(dims[2], [&](std::size_t k) {
        for (std::uint32_t j = 0; j < dims[1]; ++j)
            for (std::uint32_t i = 0; i < dims[0]; ++i)
                values[lin(i, j, static_cast<std::uint32_t>(k))] = mesh->signed_distance(center(i, j, static_cast<std::uint32_t>(k))).value;
    });

    std::vector<SdfGrid::Voxel> voxels(n);
    parallel::parallel_for(dims[2], [&](std::size_t kk) {
        const auto k = static_cast<std::uint32_t>(kk);
        for (std::uint32_t j = 0; j < dims[1]; ++j)
            for (std::uint32_t i = 0; i < dims[0]; ++i) {
                const std::uint32_t idx[3] = {i, j, k};
                Vec3 g;
                for (int a = 0; a < 3; ++a) {
                    std::uint32_t lo[3] = {i, j, k}, hi[3] = {i, j, k};
                    double h = 2.0;
                    if (idx[a] > 0)
                        lo[a] = idx[a] - 1;
                    else
                        h = 1.0;
                    if (idx[a] + 1 < dims[a])
                        hi[a] = idx[a] + 1;
                    else
                        h -= 1.0;
                    g[a] = h > 0.0 ? (values[lin(hi[0], hi[1], hi[2])] - values[lin(lo[0], lo[1], lo[2])]) / (h * params.resolution) : 0.0;
                }
                const double len = g.norm();
                if (len > 1e-12)
                    g /= len;
                else
                    // symmetric neighbourhood (e.g. the medial axis); use the exact direction
                    g = mesh->signed_distance(center(i, j, k)).gradient.normalized();
                const double v = values[lin(i, j, k)];
                voxels[lin(i, j, k)] = {static_cast<float>(v), static_cast<float>(g.x()), static_cast<float>(g.y()),
                    static_cast<float>(g.z())};
            }
    });
    // float rounding can perturb unit norm by ~1e-7; renormalize in float
    for (auto& v : voxels) {
        const float len = std::sqrt(v.gx * v.gx + v.gy * v.gy + v.gz * v.gz);
        v.gx /= len;
        v.gy /= len;
        v.gz /= len;
    }
    return SdfGrid(origin, params.resolution, dims, std::move(voxels), params.padding, std::move(mesh));
}

/// Evaluates `field` at every point, preserving order.
template <SdfField Field>
std::vector<SdfSample> sdf_query_batch(const Field& field, std::span<const Vec3> points)
{
    std::vector<SdfSample> out(points.size());
    parallel::parallel_for(points.size(), [&](std::size_t i) { out[i] = field.query(points[i]); });
    return out;
}

// Cache file: "SDFG", u16 version, origin 3xf64, resolution f64, dims 3xu32,
// values f32 (x fastest), then gradients 3xf32 per voxel. Little-endian host assumed.
namespace sdf_cache {

    inline constexpr std::uint16_t version = 1;

    inline std::uint64_t key(const TriangleMesh& mesh, const SdfGridParams& params)
    {
        Fnv1a h;
        h.update_value(mesh.content_hash());
        h.update_value(params.resolution);
        h.update_value(params.padding);
        return h.digest();
    }

    inline std::filesystem::path path_for(const std::filesystem::path& dir, const TriangleMesh& mesh, const SdfGridParams& params)
    {
        char name[32];
        std::snprintf(name, sizeof(name), "sdf_%016llx.sdfg", static_cast<unsigned long long>(key(mesh, params)));
        return dir / name;
    }

    inline void write(const SdfGrid& grid, const std::filesystem::path& path)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw Error("cannot write SDF cache: " + path.string());
        out.write("SDFG", 4);
        out.write(reinterpret_cast<const char*>(&version), 2);
        out.write(reinterpret_cast<const char*>(grid.origin().data()), 24);
        const double res = grid.resolution();
        out.write(reinterpret_cast<const char*>(&res), 8);
        out.write(reinterpret_cast<const char*>(grid.dims().data()), 12);
        for (const auto& v : grid.voxels())
            out.write(reinterpret_cast<const char*>(&v.value), 4);
        for (const auto& v : grid.voxels()) {
            const float g[3] = {v.gx, v.gy, v.gz};
            out.write(reinterpret_cast<const char*>(g), 12);
        }
    }

    inline SdfGrid read(const std::filesystem::path& path, MeshPtr fallback, double padding)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error("cannot open SDF cache: " + path.string());
        char magic[4];
        std::uint16_t ver = 0;
        Vec3 origin;
        double res = 0;
        std::array<std::uint32_t, 3> dims{};
        in.read(magic, 4);
        in.read(reinterpret_cast<char*>(&ver), 2);
        in.read(reinterpret_cast<char*>(origin.data()), 24);
        in.read(reinterpret_cast<char*>(&res), 8);
        in.read(reinterpret_cast<char*>(dims.data()), 12);
        if (!in || std::memcmp(magic, "SDFG", 4) != 0 || ver != version)
            throw FormatError(path.string() + ": not an SDF cache file");
        const std::size_t n = std::size_t{dims[0]} * dims[1] * dims[2];
        std::vector<float> values(n), grads(3 * n);
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(4 * n));
        in.read(reinterpret_cast<char*>(grads.data()), static_cast<std::streamsize>(12 * n));
        if (!in)
            throw FormatError(path.string() + ": truncated SDF cache");
        std::vector<SdfGrid::Voxel> voxels(n);
        for (std::size_t i = 0; i < n; ++i)
            voxels[i] = {values[i], grads[3 * i], grads[3 * i + 1], grads[3 * i + 2]};
        return SdfGrid(origin, res, dims, std::move(voxels), padding, std::move(fallback));
    }

    /// Loads the cached grid for (mesh, params) or builds and stores it.
    /// `hit` reports whether the cache was used.
    inline SdfGrid load_or_build(MeshPtr mesh, const SdfGridParams& params, const std::filesystem::path& dir, bool* hit = nullptr)
    {
        const auto path = path_for(dir, *mesh, params);
        if (std::filesystem::exists(path)) {
            if (hit)
                *hit = true;
            return read(path, std::move(mesh), params.padding);
        }
        if (hit)
            *hit = false;
        SdfGrid grid = build_sdf_grid(mesh, params);
        std::filesystem::create_directories(dir);
        write(grid, path);
        return grid;
    }

} // namespace sdf_cache

} // namespace posehyp
