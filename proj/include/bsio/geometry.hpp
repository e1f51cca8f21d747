#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "bsio/errors.hpp"

namespace bsio {

// Points live in dimension 1..3; everything is value-semantic and cheap to
// copy.  All cubes in the library are half-open, [corner, corner + side)^d,
// so that equal-level cubes tile space with no overlap and no gap.
inline constexpr int kMaxDim = 3;

struct Vec {
    std::array<double, kMaxDim> c{};
    int d = 1;

    Vec() = default;
    explicit Vec(int dim) : d(dim) {
        if (dim < 1 || dim > kMaxDim) throw validation_error("Vec: dimension out of range");
    }
    Vec(int dim, std::initializer_list<double> xs) : Vec(dim) {
        int i = 0;
        for (double x : xs) {
            if (i >= dim) break;
            c[static_cast<std::size_t>(i++)] = x;
        }
    }

    double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

    Vec operator+(const Vec& o) const {
        Vec r(d);
        for (int i = 0; i < d; ++i) r[i] = (*this)[i] + o[i];
        return r;
    }
    Vec operator-(const Vec& o) const {
        Vec r(d);
        for (int i = 0; i < d; ++i) r[i] = (*this)[i] - o[i];
        return r;
    }
    Vec operator*(double t) const {
        Vec r(d);
        for (int i = 0; i < d; ++i) r[i] = (*this)[i] * t;
        return r;
    }

    double norm2() const {
        double s = 0;
        for (int i = 0; i < d; ++i) s += (*this)[i] * (*this)[i];
        return s;
    }
    double norm() const { return std::sqrt(norm2()); }
};

inline double dist(const Vec& a, const Vec& b) { return (a - b).norm(); }

// Constant vector (v, v, ..., v).
inline Vec splat(int d, double v) {
    Vec r(d);
    for (int i = 0; i < d; ++i) r[i] = v;
    return r;
}

// Identifies a cube inside a named dyadic grid: side = 2^level, corner =
// shift + 2^level * index.
struct GridRef {
    std::string label;
    int level = 0;
    std::array<std::int64_t, kMaxDim> index{};
};

struct Cube {
    Vec corner;
    double side = 1.0;
    std::optional<GridRef> grid_ref;

    Cube() = default;
    Cube(Vec corner_, double side_) : corner(corner_), side(side_) {
        if (!(side > 0)) throw validation_error("Cube: side must be positive");
    }

    int dim() const { return corner.d; }
    double volume() const { return std::pow(side, corner.d); }
    double diameter() const { return side * std::sqrt(static_cast<double>(corner.d)); }

    Vec center() const {
        Vec r = corner;
        for (int i = 0; i < corner.d; ++i) r[i] += side / 2.0;
        return r;
    }

    // Half-open membership.
    bool contains(const Vec& x) const {
        for (int i = 0; i < corner.d; ++i)
            if (!(x[i] >= corner[i] && x[i] < corner[i] + side)) return false;
        return true;
    }

    // [b, b+s) subset of [a, a+S) per axis; exact on the doubles.
    bool contains_cube(const Cube& q) const {
        for (int i = 0; i < corner.d; ++i) {
            if (!(q.corner[i] >= corner[i])) return false;
            if (!(q.corner[i] + q.side <= corner[i] + side)) return false;
        }
        return true;
    }

    bool intersects(const Cube& q) const {
        for (int i = 0; i < corner.d; ++i) {
            if (q.corner[i] + q.side <= corner[i]) return false;
            if (corner[i] + side <= q.corner[i]) return false;
        }
        return true;
    }

    Cube translated(const Vec& t) const {
        Cube r = *this;
        r.corner = corner + t;
        r.grid_ref.reset();
        return r;
    }

    bool same_extent(const Cube& q) const {
        if (side != q.side) return false;
        for (int i = 0; i < corner.d; ++i)
            if (corner[i] != q.corner[i]) return false;
        return true;
    }
};

// Compact "[corner; side]" rendering for error messages and reports.
inline std::string cube_to_string(const Cube& q) {
    std::string s = "[(";
    for (int i = 0; i < q.dim(); ++i) {
        if (i) s += ", ";
        s += std::to_string(q.corner[i]);
    }
    s += "); side ";
    s += std::to_string(q.side);
    s += "]";
    return s;
}

// Euclidean gap between two cubes (0 if they touch or overlap).
inline double cube_distance(const Cube& a, const Cube& b) {
    double s = 0;
    for (int i = 0; i < a.dim(); ++i) {
        const double lo = std::max(a.corner[i], b.corner[i]);
        const double hi = std::min(a.corner[i] + a.side, b.corner[i] + b.side);
        if (lo > hi) s += (lo - hi) * (lo - hi);
    }
    return std::sqrt(s);
}

// A shifted dyadic system.  Level k holds the cubes
//   [shift + 2^k m, shift + 2^k (m+1)),  m integer per axis,
// so cubes of one level tile space and any two cubes of the system are
// nested or disjoint.  Corners are computed with ldexp and stay exact as
// long as the shift is a dyadic rational of moderate scale, which is the
// only way grids are used here.
class DyadicGrid {
public:
    DyadicGrid() : shift_(1) {}
    DyadicGrid(int dim, Vec shift, std::string label)
        : shift_(shift), label_(std::move(label)) {
        if (shift.d != dim) throw validation_error("DyadicGrid: shift dimension mismatch");
    }
    static DyadicGrid standard(int dim) { return DyadicGrid(dim, Vec(dim), "std"); }

    int dim() const { return shift_.d; }
    const std::string& label() const { return label_; }
    const Vec& shift() const { return shift_; }

    Cube cube(int level, std::array<std::int64_t, kMaxDim> index) const {
        Cube q;
        q.corner = Vec(dim());
        q.side = std::ldexp(1.0, level);
        for (int i = 0; i < dim(); ++i)
            q.corner[i] = shift_[i] + std::ldexp(static_cast<double>(index[static_cast<std::size_t>(i)]), level);
        q.grid_ref = GridRef{label_, level, index};
        return q;
    }

    // The unique level-k cube containing x.
    Cube containing(const Vec& x, int level) const {
        std::array<std::int64_t, kMaxDim> idx{};
        for (int i = 0; i < dim(); ++i)
            idx[static_cast<std::size_t>(i)] =
                static_cast<std::int64_t>(std::floor(std::ldexp(x[i] - shift_[i], -level)));
        return cube(level, idx);
    }

    // True when q matches a cube of this system exactly.
    bool owns(const Cube& q) const {
        const int level = static_cast<int>(std::lround(std::log2(q.side)));
        if (std::ldexp(1.0, level) != q.side) return false;
        for (int i = 0; i < dim(); ++i) {
            const double m = std::ldexp(q.corner[i] - shift_[i], -level);
            if (m != std::floor(m)) return false;
        }
        return true;
    }

    Cube parent(const Cube& q) const { return containing(q.center(), level_of(q) + 1); }

    int level_of(const Cube& q) const {
        const int level = static_cast<int>(std::lround(std::log2(q.side)));
        if (std::ldexp(1.0, level) != q.side)
            throw validation_error("DyadicGrid: cube side is not a power of two");
        return level;
    }

private:
    Vec shift_;
    std::string label_ = "std";
};

// Largest grid cube contained in `target`, ties broken by lexicographically
// smallest corner.  A cube of side L always contains a grid cube of side
// > L/4, so the scan over at most four levels below floor(log2 L) cannot
// come back empty.
inline Cube largest_dyadic_subcube(const DyadicGrid& grid, const Cube& target) {
    if (grid.dim() != target.dim())
        throw validation_error("largest_dyadic_subcube: dimension mismatch");
    const int k_hi = static_cast<int>(std::floor(std::log2(target.side)));
    for (int k = k_hi; k >= k_hi - 3; --k) {
        const double s = std::ldexp(1.0, k);
        std::array<std::int64_t, kMaxDim> idx{};
        bool fits = true;
        for (int i = 0; i < target.dim(); ++i) {
            const double lo = target.corner[i] - grid.shift()[i];
            const std::int64_t m = static_cast<std::int64_t>(std::ceil(lo / s));
            const double corner = grid.shift()[i] + std::ldexp(static_cast<double>(m), k);
            if (!(corner >= target.corner[i] && corner + s <= target.corner[i] + target.side)) {
                fits = false;
                break;
            }
            idx[static_cast<std::size_t>(i)] = m;
        }
        if (fits) return grid.cube(k, idx);
    }
    throw error("largest_dyadic_subcube: no grid cube fits (unreachable for valid input)");
}

} // namespace bsio
