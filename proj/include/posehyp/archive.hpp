#pragma once

#include <posehyp/pose.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>

namespace posehyp {

struct Elite {
    PoseParam param;
    double cost = 0.0;
};

enum class OfferStatus { rejected, improved, new_cell };

struct OfferResult {
    OfferStatus status = OfferStatus::rejected;
    /// incumbent - cost for filled cells; (seeded max cost - cost) for a new cell.
    double improvement = 0.0;
    std::size_t cell = 0;

    bool accepted() const { return status != OfferStatus::rejected; }
};

/// MAP-Elites grid over the translation components of the pose (x, y and
/// optionally z). Each cell keeps the lowest cost ever offered to it. Behavior
/// values outside the range are clipped into the boundary cells.
class Archive {
public:
    Archive(std::vector<double> lower, std::vector<double> upper, int bins)
        : _lower(std::move(lower)), _upper(std::move(upper)), _bins(bins)
    {
        require(_lower.size() == _upper.size() && !_lower.empty() && _lower.size() <= 3, "archive needs 1-3 behavior dims");
        require(bins > 0, "archive needs at least one bin per dimension");
        for (std::size_t d = 0; d < _lower.size(); ++d)
            require(std::isfinite(_lower[d]) && std::isfinite(_upper[d]) && _lower[d] < _upper[d],
                "archive ranges must be finite and non-degenerate");
        std::size_t n = 1;
        for (std::size_t d = 0; d < _lower.size(); ++d)
            n *= static_cast<std::size_t>(bins);
        _cells.resize(n);
    }

    int dims() const { return static_cast<int>(_lower.size()); }
    int bins() const { return _bins; }
    double lower(int d) const { return _lower[d]; }
    double upper(int d) const { return _upper[d]; }
    std::size_t num_cells() const { return _cells.size(); }
    std::size_t filled() const { return _filled; }
    const std::optional<Elite>& cell(std::size_t i) const { return _cells[i]; }

    std::size_t offers() const { return _offers; }
    std::size_t insertions() const { return _insertions; }

    int bin_of(int d, double value) const
    {
        const double f = (value - _lower[d]) / (_upper[d] - _lower[d]);
        const auto b = static_cast<long>(std::floor(f * _bins));
        return static_cast<int>(std::clamp<long>(b, 0, _bins - 1));
    }

    std::size_t cell_index(const PoseParam& p) const
    {
        std::size_t idx = 0;
        for (int d = dims() - 1; d >= 0; --d)
            idx = idx * _bins + static_cast<std::size_t>(bin_of(d, p.t[d]));
        return idx;
    }

    /// Per-dimension bin coordinates of a linear cell index (x first).
    std::array<int, 3> cell_coords(std::size_t idx) const
    {
        std::array<int, 3> c{0, 0, 0};
        for (int d = 0; d < dims(); ++d) {
            c[d] = static_cast<int>(idx % _bins);
            idx /= _bins;
        }
        return c;
    }

    /// Reference for scoring discoveries of empty cells; normally the max seeded cost.
    void set_discovery_reference(double cost) { _discovery_reference = cost; }

    OfferResult offer(const PoseParam& p, double cost)
    {
        ++_offers;
        OfferResult r;
        r.cell = cell_index(p);
        auto& slot = _cells[r.cell];
        if (!std::isfinite(cost)) {
            r.improvement = -std::numeric_limits<double>::infinity();
            return r;
        }
        _max_seen = std::max(_max_seen, cost);
        if (!slot) {
            const double ref = std::isnan(_discovery_reference) ? _max_seen : _discovery_reference;
            slot = Elite{p, cost};
            ++_filled;
            ++_insertions;
            r.status = OfferStatus::new_cell;
            r.improvement = ref - cost;
            return r;
        }
        r.improvement = slot->cost - cost;
        if (cost < slot->cost) {
            slot = Elite{p, cost};
            ++_insertions;
            r.status = OfferStatus::improved;
        }
        return r;
    }

    /// Filled cell indices sorted by cost (ties by index).
    std::vector<std::size_t> cells_by_cost() const
    {
        std::vector<std::size_t> idx;
        idx.reserve(_filled);
        for (std::size_t i = 0; i < _cells.size(); ++i)
            if (_cells[i])
                idx.push_back(i);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return _cells[a]->cost < _cells[b]->cost; });
        return idx;
    }

    /// Mean cost of the k lowest-cost cells (all cells when fewer are filled).
    double mean_best_cost(std::size_t k) const
    {
        const auto order = cells_by_cost();
        const std::size_t m = std::min(k, order.size());
        if (m == 0)
            return std::numeric_limits<double>::infinity();
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            s += _cells[order[i]]->cost;
        return s / static_cast<double>(m);
    }

    double best_cost() const
    {
        double b = std::numeric_limits<double>::infinity();
        for (const auto& c : _cells)
            if (c)
                b = std::min(b, c->cost);
        return b;
    }

    template <typename Rng>
    std::optional<std::size_t> random_elite(Rng& rng) const
    {
        if (_filled == 0)
            return std::nullopt;
        std::uniform_int_distribution<std::size_t> pick(0, _filled - 1);
        std::size_t target = pick(rng);
        for (std::size_t i = 0; i < _cells.size(); ++i)
            if (_cells[i] && target-- == 0)
                return i;
        return std::nullopt;
    }

    /// CSV: cell_x, cell_y, cost, t0..t2, r6_0..r6_5 (one row per filled cell).
    void write_csv(std::ostream& out) const
    {
        out << "cell_x,cell_y,cost,t0,t1,t2,r6_0,r6_1,r6_2,r6_3,r6_4,r6_5\n";
        out.precision(17);
        for (std::size_t i = 0; i < _cells.size(); ++i) {
            if (!_cells[i])
                continue;
            const auto c = cell_coords(i);
            const auto& e = *_cells[i];
            out << c[0] << ',' << c[1] << ',' << e.cost;
            for (int k = 0; k < 3; ++k)
                out << ',' << e.param.t[k];
            for (int k = 0; k < 6; ++k)
                out << ',' << e.param.r6[k];
            out << '\n';
        }
    }

private:
    std::vector<double> _lower, _upper;
    int _bins;
    std::vector<std::optional<Elite>> _cells;
    std::size_t _filled = 0;
    std::size_t _offers = 0;
    std::size_t _insertions = 0;
    double _max_seen = -std::numeric_limits<double>::infinity();
    double _discovery_reference = std::numeric_limits<double>::quiet_NaN();
};

} // namespace posehyp
