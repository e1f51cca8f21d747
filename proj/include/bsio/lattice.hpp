#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bsio/geometry.hpp"
#include "bsio/numeric.hpp"

namespace bsio {

using CellIndex = std::array<std::int64_t, kMaxDim>;

namespace detail {

inline double to_little_endian(double x) {
    if constexpr (std::endian::native == std::endian::little) {
        return x;
    } else {
        std::uint64_t u;
        std::memcpy(&u, &x, 8);
        u = ((u & 0x00000000000000ffull) << 56) | ((u & 0x000000000000ff00ull) << 40) |
            ((u & 0x0000000000ff0000ull) << 24) | ((u & 0x00000000ff000000ull) << 8) |
            ((u & 0x000000ff00000000ull) >> 8) | ((u & 0x0000ff0000000000ull) >> 24) |
            ((u & 0x00ff000000000000ull) >> 40) | ((u & 0xff00000000000000ull) >> 56);
        double y;
        std::memcpy(&y, &u, 8);
        return y;
    }
}
inline double from_little_endian(double x) { return to_little_endian(x); }

} // namespace detail

// A function sampled at the midpoints of a regular lattice over a half-open
// cube box.  The sample at multi-index k stands for the constant value of
// the function on the cell [corner + h k, corner + h (k+1)); the function is
// identically zero outside the box.  All quadrature in the library is the
// midpoint rule on these cells.
class LatticeFunction {
public:
    LatticeFunction() = default;

    LatticeFunction(Cube box, double h) : box_(box), h_(h) {
        if (!(h > 0)) throw validation_error("LatticeFunction: spacing must be positive");
        const double ratio = box.side / h;
        n_ = static_cast<std::int64_t>(std::llround(ratio));
        if (n_ < 1 || std::abs(ratio - static_cast<double>(n_)) > 1e-9)
            throw validation_error("LatticeFunction: box side must be an integer multiple of h");
        std::int64_t total = 1;
        for (int i = 0; i < box.dim(); ++i) total *= n_;
        values_.assign(static_cast<std::size_t>(total), 0.0);
    }

    static LatticeFunction sample(Cube box, double h, const std::function<double(const Vec&)>& fn) {
        LatticeFunction f(box, h);
        f.for_each_cell([&](const CellIndex& idx, const Vec& x) {
            f.at(idx) = fn(x);
        });
        return f;
    }

    static LatticeFunction indicator(Cube support, double h) {
        LatticeFunction f(support, h);
        std::fill(f.values_.begin(), f.values_.end(), 1.0);
        return f;
    }

    const Cube& box() const { return box_; }
    double spacing() const { return h_; }
    int dim() const { return box_.dim(); }
    std::int64_t cells_per_axis() const { return n_; }
    std::int64_t cell_count() const { return static_cast<std::int64_t>(values_.size()); }
    double cell_volume() const { return std::pow(h_, dim()); }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    std::int64_t flat(const CellIndex& idx) const {
        std::int64_t f = 0;
        for (int i = 0; i < dim(); ++i) f = f * n_ + idx[static_cast<std::size_t>(i)];
        return f;
    }

    double& at(const CellIndex& idx) { return values_[static_cast<std::size_t>(flat(idx))]; }
    double at(const CellIndex& idx) const { return values_[static_cast<std::size_t>(flat(idx))]; }

    Vec center(const CellIndex& idx) const {
        Vec x = box_.corner;
        for (int i = 0; i < dim(); ++i)
            x[i] += (static_cast<double>(idx[static_cast<std::size_t>(i)]) + 0.5) * h_;
        return x;
    }

    // Cell containing x, or nullopt outside the box.
    std::optional<CellIndex> cell_of(const Vec& x) const {
        CellIndex idx{};
        for (int i = 0; i < dim(); ++i) {
            const double t = (x[i] - box_.corner[i]) / h_;
            const auto k = static_cast<std::int64_t>(std::floor(t));
            if (k < 0 || k >= n_) return std::nullopt;
            idx[static_cast<std::size_t>(i)] = k;
        }
        return idx;
    }

    double value_at(const Vec& x) const {
        const auto idx = cell_of(x);
        return idx ? at(*idx) : 0.0;
    }

    void for_each_cell(const std::function<void(const CellIndex&, const Vec&)>& fn) const {
        CellIndex idx{};
        walk(idx, 0, fn);
    }

    // Per-axis half-open index range [lo, hi) of cells whose center lies in
    // q (intersected with the box).  Exact for lattice-aligned cubes.
    struct AxisRange { std::int64_t lo = 0, hi = 0; };
    std::array<AxisRange, kMaxDim> cell_range(const Cube& q) const {
        constexpr double eps = 1e-9;
        std::array<AxisRange, kMaxDim> r{};
        for (int i = 0; i < dim(); ++i) {
            const double a = (q.corner[i] - box_.corner[i]) / h_ - 0.5;
            const double b = (q.corner[i] + q.side - box_.corner[i]) / h_ - 0.5;
            auto lo = static_cast<std::int64_t>(std::ceil(a - eps));
            auto hi = static_cast<std::int64_t>(std::ceil(b - eps));
            lo = std::clamp<std::int64_t>(lo, 0, n_);
            hi = std::clamp<std::int64_t>(hi, 0, n_);
            r[static_cast<std::size_t>(i)] = {lo, hi};
        }
        return r;
    }

    double sum() const { return pairwise_sum(values_); }
    double integral() const { return sum() * cell_volume(); }

    double sup_norm() const {
        double m = 0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    double lp_norm(double p) const {
        if (!(p > 0)) throw validation_error("lp_norm: exponent must be positive");
        std::vector<double> terms(values_.size());
        for (std::size_t i = 0; i < values_.size(); ++i)
            terms[i] = std::pow(std::abs(values_[i]), p);
        return std::pow(pairwise_sum(terms) * cell_volume(), 1.0 / p);
    }

    // Same spacing and corners differing by integer multiples of h.
    bool aligned_with(const LatticeFunction& o) const {
        if (dim() != o.dim() || h_ != o.h_) return false;
        for (int i = 0; i < dim(); ++i) {
            const double t = (o.box_.corner[i] - box_.corner[i]) / h_;
            if (std::abs(t - std::round(t)) > 1e-9) return false;
        }
        return true;
    }

    LatticeFunction& scale(double t) {
        for (double& v : values_) v *= t;
        return *this;
    }

    LatticeFunction& abs_inplace() {
        for (double& v : values_) v = std::abs(v);
        return *this;
    }

    // f += g on the overlap; g must be aligned and its box contained in f's.
    LatticeFunction& accumulate(const LatticeFunction& g, double weight = 1.0) {
        if (!aligned_with(g)) throw validation_error("accumulate: incompatible lattices");
        g.for_each_cell([&](const CellIndex& gi, const Vec& x) {
            const auto idx = cell_of(x);
            if (!idx) throw validation_error("accumulate: summand extends outside the target box");
            at(*idx) += weight * g.at(gi);
        });
        return *this;
    }

    struct NonzeroCell { CellIndex idx; Vec center; double value; };
    std::vector<NonzeroCell> nonzero_cells() const {
        std::vector<NonzeroCell> out;
        for_each_cell([&](const CellIndex& idx, const Vec& x) {
            const double v = at(idx);
            if (v != 0.0) out.push_back({idx, x, v});
        });
        return out;
    }

    void save_binary(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw validation_error("save_binary: cannot open " + path);
        auto put = [&](double x) {
            const double le = detail::to_little_endian(x);
            out.write(reinterpret_cast<const char*>(&le), 8);
        };
        put(static_cast<double>(dim()));
        for (int i = 0; i < dim(); ++i) put(box_.corner[i]);
        put(box_.side);
        put(h_);
        for (double v : values_) put(v);
        if (!out) throw error("save_binary: write failed for " + path);
    }

    static LatticeFunction load_binary(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw validation_error("load_binary: cannot open " + path);
        auto get = [&]() {
            double x;
            in.read(reinterpret_cast<char*>(&x), 8);
            if (!in) throw validation_error("load_binary: truncated file " + path);
            return detail::from_little_endian(x);
        };
        const int d = static_cast<int>(std::llround(get()));
        if (d < 1 || d > kMaxDim) throw validation_error("load_binary: bad dimension header");
        Vec corner(d);
        for (int i = 0; i < d; ++i) corner[i] = get();
        const double side = get();
        const double h = get();
        LatticeFunction f(Cube(corner, side), h);
        for (double& v : f.values_) v = get();
        return f;
    }

    // Two-column CSV of cell centers and samples; one-dimensional data only.
    void save_csv(const std::string& path) const {
        if (dim() != 1) throw validation_error("save_csv: CSV export is for d = 1");
        std::ofstream out(path);
        if (!out) throw validation_error("save_csv: cannot open " + path);
        out.precision(17);
        out << "x,value\n";
        for (std::int64_t k = 0; k < n_; ++k)
            out << box_.corner[0] + (static_cast<double>(k) + 0.5) * h_ << ","
                << values_[static_cast<std::size_t>(k)] << "\n";
    }

    static LatticeFunction load_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw validation_error("load_csv: cannot open " + path);
        std::string line;
        std::getline(in, line); // header
        std::vector<double> xs, vs;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw validation_error("load_csv: malformed row");
            xs.push_back(std::stod(line.substr(0, comma)));
            vs.push_back(std::stod(line.substr(comma + 1)));
        }
        if (xs.size() < 1) throw validation_error("load_csv: no samples");
        const double h = xs.size() > 1 ? xs[1] - xs[0] : 1.0;
        Vec corner(1);
        corner[0] = xs[0] - h / 2.0;
        LatticeFunction f(Cube(corner, h * static_cast<double>(xs.size())), h);
        std::copy(vs.begin(), vs.end(), f.values_.begin());
        return f;
    }

private:
    void walk(CellIndex& idx, int axis, const std::function<void(const CellIndex&, const Vec&)>& fn) const {
        if (axis == dim()) {
            fn(idx, center(idx));
            return;
        }
        for (std::int64_t k = 0; k < n_; ++k) {
            idx[static_cast<std::size_t>(axis)] = k;
            walk(idx, axis + 1, fn);
        }
    }

    Cube box_;
    double h_ = 1.0;
    std::int64_t n_ = 1;
    std::vector<double> values_;
};

// Midpoint-rule approximation of the average of f over q: cells whose center
// lies in q, times h^d, divided by |q|.  Exact for lattice-aligned data.
inline double average(const LatticeFunction& f, const Cube& q) {
    if (q.dim() != f.dim()) throw validation_error("average: dimension mismatch");
    if (q.side < f.spacing() * (1.0 - 1e-12))
        throw validation_error("average: cube under-resolved (side smaller than one cell)");
    const auto r = f.cell_range(q);
    SumBuffer terms;
    CellIndex idx{};
    std::function<void(int)> loop = [&](int axis) {
        if (axis == f.dim()) {
            terms.add(f.at(idx));
            return;
        }
        for (std::int64_t k = r[static_cast<std::size_t>(axis)].lo; k < r[static_cast<std::size_t>(axis)].hi; ++k) {
            idx[static_cast<std::size_t>(axis)] = k;
            loop(axis + 1);
        }
    };
    loop(0);
    return terms.total() * f.cell_volume() / q.volume();
}

namespace detail {

// q must sit on f's lattice: corner offsets integer multiples of h and side
// an integer number of cells.
inline std::int64_t aligned_cells(const LatticeFunction& f, const Cube& q, const char* who) {
    for (int i = 0; i < f.dim(); ++i) {
        const double t = (q.corner[i] - f.box().corner[i]) / f.spacing();
        if (std::abs(t - std::round(t)) > 1e-9)
            throw validation_error(std::string(who) + ": cube is not lattice-aligned");
    }
    const double s = q.side / f.spacing();
    const auto n = static_cast<std::int64_t>(std::llround(s));
    if (std::abs(s - static_cast<double>(n)) > 1e-9 || n < 1)
        throw validation_error(std::string(who) + ": cube side is not a whole number of cells");
    return n;
}

} // namespace detail

// Martingale difference of f on the dyadic cube q: piecewise constant on the
// 2^d children, value <f>_child - <f>_q.  Returned on the box q itself.
inline LatticeFunction martingale_difference(const LatticeFunction& f, const Cube& q) {
    const std::int64_t n = detail::aligned_cells(f, q, "martingale_difference");
    if (n % 2 != 0)
        throw validation_error("martingale_difference: children are not resolvable on the lattice");
    LatticeFunction delta(q, f.spacing());
    const double avg_q = average(f, q);
    const int d = f.dim();
    const double half = q.side / 2.0;
    for (int mask = 0; mask < (1 << d); ++mask) {
        Cube child(q.corner, half);
        for (int i = 0; i < d; ++i)
            if (mask & (1 << i)) child.corner[i] += half;
        const double diff = average(f, child) - avg_q;
        const auto r = delta.cell_range(child);
        CellIndex idx{};
        std::function<void(int)> loop = [&](int axis) {
            if (axis == d) {
                delta.at(idx) = diff;
                return;
            }
            for (std::int64_t k = r[static_cast<std::size_t>(axis)].lo; k < r[static_cast<std::size_t>(axis)].hi; ++k) {
                idx[static_cast<std::size_t>(axis)] = k;
                loop(axis + 1);
            }
        };
        loop(0);
    }
    return delta;
}

namespace detail {

// Prefix sums of |f| (or of f itself) for O(1) block sums by
// inclusion-exclusion.
class AbsPrefix {
public:
    explicit AbsPrefix(const LatticeFunction& f, bool absolute = true)
        : d_(f.dim()), n_(f.cells_per_axis()) {
        std::array<std::int64_t, kMaxDim> dims{};
        std::int64_t total = 1;
        for (int i = 0; i < d_; ++i) { dims[static_cast<std::size_t>(i)] = n_ + 1; total *= (n_ + 1); }
        p_.assign(static_cast<std::size_t>(total), 0.0);
        f.for_each_cell([&](const CellIndex& idx, const Vec&) {
            CellIndex shifted{};
            for (int i = 0; i < d_; ++i) shifted[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i)] + 1;
            p_[static_cast<std::size_t>(flat(shifted))] = absolute ? std::abs(f.at(idx)) : f.at(idx);
        });
        // Running sums along each axis in turn.
        for (int axis = 0; axis < d_; ++axis) {
            CellIndex idx{};
            sweep(idx, 0, axis);
        }
    }

    // Sum of |f| over cells with lo <= k < hi per axis.
    double block_sum(const CellIndex& lo, const CellIndex& hi) const {
        double s = 0;
        for (int corner = 0; corner < (1 << d_); ++corner) {
            CellIndex c{};
            int sign = 1;
            for (int i = 0; i < d_; ++i) {
                if (corner & (1 << i)) {
                    c[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)];
                    sign = -sign;
                } else {
                    c[static_cast<std::size_t>(i)] = hi[static_cast<std::size_t>(i)];
                }
            }
            s += sign * p_[static_cast<std::size_t>(flat(c))];
        }
        return s;
    }

private:
    std::int64_t flat(const CellIndex& idx) const {
        std::int64_t f = 0;
        for (int i = 0; i < d_; ++i) f = f * (n_ + 1) + idx[static_cast<std::size_t>(i)];
        return f;
    }
    void sweep(CellIndex& idx, int axis, int sum_axis) {
        if (axis == d_) {
            if (idx[static_cast<std::size_t>(sum_axis)] == 0) return;
            CellIndex prev = idx;
            prev[static_cast<std::size_t>(sum_axis)] -= 1;
            p_[static_cast<std::size_t>(flat(idx))] += p_[static_cast<std::size_t>(flat(prev))];
            return;
        }
        for (std::int64_t k = 0; k <= n_; ++k) {
            idx[static_cast<std::size_t>(axis)] = k;
            sweep(idx, axis + 1, sum_axis);
        }
    }

    int d_;
    std::int64_t n_;
    std::vector<double> p_;
};

} // namespace detail

// Tight bounding box of the nonzero cells, as a cube on the lattice, or
// nullopt when f vanishes identically.  A cube rather than a true box: the
// extent is the largest axis span, anchored at the minimal corner, which is
// all the separation checks need.
inline std::optional<Cube> support_box(const LatticeFunction& f) {
    const int d = f.dim();
    CellIndex lo{}, hi{};
    bool any = false;
    f.for_each_cell([&](const CellIndex& idx, const Vec&) {
        if (f.at(idx) == 0.0) return;
        if (!any) {
            lo = idx;
            hi = idx;
            any = true;
            return;
        }
        for (int i = 0; i < d; ++i) {
            lo[static_cast<std::size_t>(i)] = std::min(lo[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
            hi[static_cast<std::size_t>(i)] = std::max(hi[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
        }
    });
    if (!any) return std::nullopt;
    std::int64_t span = 1;
    for (int i = 0; i < d; ++i)
        span = std::max(span, hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)] + 1);
    Vec corner = f.box().corner;
    for (int i = 0; i < d; ++i)
        corner[i] += static_cast<double>(lo[static_cast<std::size_t>(i)]) * f.spacing();
    return Cube(corner, static_cast<double>(span) * f.spacing());
}

struct MaximalOptions {
    bool half_shifts = true; // also sample the partitions translated by half a side
};

// Sampled Hardy-Littlewood maximal function: at each lattice point, the
// largest average of |f| over the sampled cubes containing it.  Sampled
// cubes are the dyadic tilings of the box at every level from single cells
// up, plus (optionally) the same tilings shifted by half a side per axis.
// This is a lower estimate of the full maximal function.
inline LatticeFunction maximal_function(const LatticeFunction& f, MaximalOptions opts = {}) {
    const int d = f.dim();
    const std::int64_t n = f.cells_per_axis();
    detail::AbsPrefix prefix(f);
    LatticeFunction m(f.box(), f.spacing());

    for (std::int64_t w = 1; w <= n; w *= 2) {
        std::vector<std::int64_t> shifts{0};
        if (opts.half_shifts && w >= 2) shifts.push_back(w / 2);
        for (std::int64_t shift_amt : shifts) {
            // In every axis independently, blocks start at shift + j*w.
            std::vector<std::int64_t> starts;
            for (std::int64_t s = shift_amt; s + w <= n; s += w) starts.push_back(s);
            if (starts.empty()) continue;
            CellIndex lo{}, hi{};
            std::function<void(int)> loop = [&](int axis) {
                if (axis == d) {
                    const double avg = prefix.block_sum(lo, hi) / static_cast<double>([&] {
                        std::int64_t cells = 1;
                        for (int i = 0; i < d; ++i) cells *= w;
                        return cells;
                    }());
                    CellIndex idx = lo;
                    std::function<void(int)> assign = [&](int ax) {
                        if (ax == d) {
                            double& v = m.at(idx);
                            v = std::max(v, avg);
                            return;
                        }
                        for (std::int64_t k = lo[static_cast<std::size_t>(ax)]; k < hi[static_cast<std::size_t>(ax)]; ++k) {
                            idx[static_cast<std::size_t>(ax)] = k;
                            assign(ax + 1);
                        }
                    };
                    assign(0);
                    return;
                }
                for (std::int64_t s : starts) {
                    lo[static_cast<std::size_t>(axis)] = s;
                    hi[static_cast<std::size_t>(axis)] = s + w;
                    loop(axis + 1);
                }
            };
            loop(0);
        }
    }
    return m;
}

} // namespace bsio
