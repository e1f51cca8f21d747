#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bsio/lattice.hpp"
#include "bsio/numeric.hpp"

namespace bsio {

struct SymbolParams {
    double constant_value = 1.0; // constant family
    double beta = 0.5;           // power family exponent
    double log_floor = 30.0;     // truncation depth L of the log family
    std::optional<Vec> center;   // log singular point / step threshold; box-derived if absent
    int haar_depth = 4;          // generations of the random dyadic family
    std::uint64_t seed = 1;      // coefficient draws of the random dyadic family
};

inline const std::vector<std::string>& symbol_ids() {
    static const std::vector<std::string> ids = {"constant",      "step", "linear",
                                                 "power",         "log_truncated",
                                                 "random_dyadic_bmo"};
    return ids;
}

namespace detail {

// Adds one Haar layer per dyadic generation: every subcube of that
// generation gets an independent coefficient in [-1, 1] weighting the
// first-axis half split.  Coefficients are drawn cube by cube in row-major
// order within each generation, so the result is a pure function of seed,
// box, depth, and spacing.
inline void add_dyadic_haar_layers(LatticeFunction& b, int depth, std::uint64_t seed) {
    const int d = b.dim();
    const Cube& box = b.box();
    Rng rng(seed);
    for (int gen = 0; gen < depth; ++gen) {
        const std::int64_t per_axis = std::int64_t{1} << gen;
        const double side = box.side / static_cast<double>(per_axis);
        std::array<std::int64_t, kMaxDim> pos{};
        std::function<void(int)> walk = [&](int axis) {
            if (axis == d) {
                Vec corner(d);
                for (int i = 0; i < d; ++i)
                    corner[i] = box.corner[i] + side * static_cast<double>(pos[static_cast<std::size_t>(i)]);
                const Cube q(corner, side);
                const double coeff = rng.uniform(-1.0, 1.0);
                const double mid = q.corner[0] + 0.5 * side;
                const auto range = b.cell_range(q);
                CellIndex idx{};
                std::function<void(int)> cells = [&](int ax) {
                    if (ax == d) {
                        const Vec x = b.center(idx);
                        b.at(idx) += x[0] < mid ? -coeff : coeff;
                        return;
                    }
                    const auto& r = range[static_cast<std::size_t>(ax)];
                    for (std::int64_t k = r.lo; k < r.hi; ++k) {
                        idx[static_cast<std::size_t>(ax)] = k;
                        cells(ax + 1);
                    }
                };
                cells(0);
                return;
            }
            for (std::int64_t k = 0; k < per_axis; ++k) {
                pos[static_cast<std::size_t>(axis)] = k;
                walk(axis + 1);
            }
        };
        walk(0);
    }
}

} // namespace detail

// Samples one of the named symbol families onto the lattice (box, h):
//   constant          : the fixed value everywhere
//   step              : 1 below the first-axis threshold (params.center, else box midpoint)
//   linear            : first coordinate of x
//   power             : |x|^beta, distance taken from the coordinate origin
//   log_truncated     : max(log |x - x0|, -L)
//   random_dyadic_bmo : sum of first-axis Haar layers with coefficients
//                       uniform in [-1, 1], haar_depth generations
inline LatticeFunction make_symbol(const std::string& id, const Cube& box, double h,
                                   const SymbolParams& params = {}) {
    if (id == "constant") {
        return LatticeFunction::sample(box, h, [&](const Vec&) { return params.constant_value; });
    }
    if (id == "step") {
        const double mid = params.center ? (*params.center)[0] : box.corner[0] + 0.5 * box.side;
        return LatticeFunction::sample(box, h, [&](const Vec& x) { return x[0] < mid ? 1.0 : 0.0; });
    }
    if (id == "linear") {
        return LatticeFunction::sample(box, h, [&](const Vec& x) { return x[0]; });
    }
    if (id == "power") {
        if (!(params.beta > 0))
            throw validation_error("make_symbol: power exponent must be positive");
        const double beta = params.beta;
        return LatticeFunction::sample(box, h,
                                       [beta](const Vec& x) { return std::pow(x.norm(), beta); });
    }
    if (id == "log_truncated") {
        if (!(params.log_floor > 0))
            throw validation_error("make_symbol: log truncation depth must be positive");
        Vec x0 = params.center.value_or(box.corner);
        if (x0.d != box.dim())
            throw validation_error("make_symbol: log center has the wrong dimension");
        const double floor_value = -params.log_floor;
        return LatticeFunction::sample(box, h, [&, x0, floor_value](const Vec& x) {
            const double r = dist(x, x0);
            return r > 0 ? std::max(std::log(r), floor_value) : floor_value;
        });
    }
    if (id == "random_dyadic_bmo") {
        if (params.haar_depth < 1)
            throw validation_error("make_symbol: haar depth must be at least one");
        const double finest = box.side / std::exp2(static_cast<double>(params.haar_depth - 1));
        if (finest < 2.0 * h - 1e-12 * box.side)
            throw validation_error("make_symbol: haar depth exceeds the lattice resolution");
        LatticeFunction b(box, h);
        detail::add_dyadic_haar_layers(b, params.haar_depth, params.seed);
        return b;
    }
    std::string known;
    for (const auto& s : symbol_ids()) known += (known.empty() ? "" : ", ") + s;
    throw validation_error("make_symbol: unknown symbol id '" + id + "' (known: " + known + ")");
}

} // namespace bsio
