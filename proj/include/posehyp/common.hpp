#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace posehyp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// All stochastic routines take this engine explicitly so runs are reproducible per seed.
using Rng = std::mt19937_64;

// Error hierarchy. Every module throws one of these; the CLI maps them to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : Error {
    using Error::Error;
};
struct WatertightError : Error {
    using Error::Error;
};
struct PreconditionError : Error {
    using Error::Error;
};
struct CapacityError : Error {
    CapacityError(const std::string& what, double suggested)
        : Error(what), suggested_resolution(suggested) {}
    double suggested_resolution;
};
struct DegenerateParameterError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct UndefinedScoreError : Error {
    using Error::Error;
};

inline void require(bool cond, const char* what)
{
    if (!cond)
        throw PreconditionError(what);
}

struct Aabb {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p)
    {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    void extend(const Aabb& o)
    {
        min = min.cwiseMin(o.min);
        max = max.cwiseMax(o.max);
    }
    bool empty() const { return (min.array() > max.array()).any(); }
    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }

    double squared_distance(const Vec3& p) const
    {
        const Vec3 d = (min - p).cwiseMax(Vec3::Zero()).cwiseMax(p - max);
        return d.squaredNorm();
    }
};

namespace parallel {

    inline std::atomic<unsigned>& thread_limit()
    {
        static std::atomic<unsigned> limit{0};
        return limit;
    }

    /// Worker count used by parallel_for. 0 means hardware concurrency.
    inline void set_num_threads(unsigned n) { thread_limit() = n; }

    inline unsigned num_threads()
    {
        unsigned n = thread_limit();
        if (n == 0)
            n = std::max(1u, std::thread::hardware_concurrency());
        return n;
    }

    /// Calls fn(i) for i in [0, n). Each index is visited exactly once, so writes to
    /// per-index output slots are race-free and the result is independent of scheduling.
    template <typename Fn>
    void parallel_for(std::size_t n, Fn&& fn)
    {
        const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(num_threads(), n));
        if (workers <= 1) {
            for (std::size_t i = 0; i < n; ++i)
                fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++)
                    fn(i);
            });
        }
        for (auto& t : pool)
            t.join();
    }

} // namespace parallel

/// FNV-1a, used for cache keys only.
class Fnv1a {
public:
    void update(const void* data, std::size_t size)
    {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            _state ^= bytes[i];
            _state *= 0x100000001b3ULL;
        }
    }
    template <typename T>
    void update_value(const T& v) { update(&v, sizeof(T)); }
    void update_string(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t digest() const { return _state; }

private:
    std::uint64_t _state = 0xcbf29ce484222325ULL;
};

} // namespace posehyp
