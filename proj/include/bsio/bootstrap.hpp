#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "bsio/geometry.hpp"
#include "bsio/kernel.hpp"

namespace bsio {

// Joint diagnostics of the kernel over two of the three cubes, with the
// remaining argument either swept over a small grid (oscillation) or pinned
// at its anchor (absolute / signed).
struct PairDiagnostics {
    int free_slot = 0;               // 0 = x, 1 = y, 2 = z
    double oscillation_integral = 0; // max over the sweep of II |K - K(anchors)|
    double absolute_integral = 0;    // II |K| with the free argument at its anchor
    double signed_integral = 0;      // II K likewise
};

// A separated triple of equal-sided cubes with anchor points, built around a
// base cube Q1 so that the kernel is a single sign-stable bump across
// Q0 x Q1 x Q2.
struct CubeTriple {
    Cube q0, q1, q2;
    Vec c0, c1, c2;
    double separation = 0;        // the parameter A
    double kernel_at_anchors = 0; // K(c0, c1, c2)
    double anchor_gauge = 0;      // |K(c0,c1,c2)| * A^{2d} * |Q1|^2
    double max_anchor_distance = 0;
    std::array<PairDiagnostics, 3> pairs{}; // integrated over {x,z}, {x,y}, {y,z}

    double oscillation_integral() const { return pairs[0].oscillation_integral; }
    double absolute_integral() const { return pairs[0].absolute_integral; }
};

struct BootstrapOptions {
    int quadrature_cells = 16; // midpoint cells per axis for the pair integrals
    int sweep_grid = 3;        // free-argument sweep points per axis
    ProbeOptions probe{};
};

namespace detail {

inline std::vector<Vec> midpoint_grid(const Cube& q, int n) {
    const int d = q.dim();
    const double step = q.side / static_cast<double>(n);
    std::vector<Vec> pts;
    std::array<int, kMaxDim> idx{};
    auto emit = [&]() {
        Vec p = q.corner;
        for (int i = 0; i < d; ++i)
            p[i] += (static_cast<double>(idx[static_cast<std::size_t>(i)]) + 0.5) * step;
        pts.push_back(p);
    };
    std::function<void(int)> loop = [&](int axis) {
        if (axis == d) {
            emit();
            return;
        }
        for (int k = 0; k < n; ++k) {
            idx[static_cast<std::size_t>(axis)] = k;
            loop(axis + 1);
        }
    };
    loop(0);
    return pts;
}

} // namespace detail

// Builds the separated triple around q1.  The other two cubes start as
// translates of q1 to the non-degeneracy witness points at scale A side/4,
// get replaced by their largest subcubes in the respective grids, and all
// three are then cut down to a common side.  Anchors are the witness points
// when the final cubes still contain them, centers otherwise; the base
// anchor is always the center of q1.
inline CubeTriple bootstrap_cubes(const KernelSpec& kernel, const Cube& q1, double separation,
                                  const std::pair<DyadicGrid, DyadicGrid>& grids,
                                  BootstrapOptions opts = {}) {
    if (!(separation >= 3.0))
        throw validation_error("bootstrap_cubes: separation must be at least 3");
    if (q1.dim() != kernel.dimension())
        throw validation_error("bootstrap_cubes: cube dimension does not match the kernel");
    if (grids.first.dim() != q1.dim() || grids.second.dim() != q1.dim())
        throw validation_error("bootstrap_cubes: grid dimension mismatch");
    if (opts.quadrature_cells < 4)
        throw validation_error("bootstrap_cubes: quadrature under-resolved (need >= 4 cells per axis)");
    if (opts.sweep_grid < 1)
        throw validation_error("bootstrap_cubes: sweep grid must be positive");

    const int d = q1.dim();
    const Vec center1 = q1.center();
    const double probe_scale = separation * q1.side / 4.0;
    const ProbeResult probe = probe_nondegeneracy(kernel, center1, probe_scale, 1, opts.probe);

    Cube cube0 = largest_dyadic_subcube(grids.first, q1.translated(probe.x - center1));
    Cube cube2 = largest_dyadic_subcube(grids.second, q1.translated(probe.z - center1));
    Cube cube1 = q1;

    const double target = std::min({cube0.side, cube1.side, cube2.side});
    auto shrink_grid_cube = [&](Cube& q, const DyadicGrid& grid, const Vec& witness) {
        if (q.side <= target * (1.0 + 1e-12)) return;
        const int level = static_cast<int>(std::lround(std::log2(target)));
        if (std::ldexp(1.0, level) != target)
            throw validation_error("bootstrap_cubes: cube sides cannot be equalized on the given grids");
        const Vec inside = q.contains(witness) ? witness : q.center();
        q = grid.containing(inside, level);
    };
    shrink_grid_cube(cube0, grids.first, probe.x);
    shrink_grid_cube(cube2, grids.second, probe.z);
    while (cube1.side > target * (1.0 + 1e-12)) cube1 = Cube(center1, cube1.side / 2.0);
    if (std::abs(cube1.side - target) > 1e-9 * target)
        throw validation_error("bootstrap_cubes: base cube side cannot be equalized to " +
                               std::to_string(target));

    CubeTriple triple;
    triple.q0 = cube0;
    triple.q1 = cube1;
    triple.q2 = cube2;
    triple.separation = separation;
    triple.c0 = cube0.contains(probe.x) ? probe.x : cube0.center();
    triple.c1 = center1;
    triple.c2 = cube2.contains(probe.z) ? probe.z : cube2.center();
    if (!cube0.contains(triple.c0) || !cube1.contains(triple.c1) || !cube2.contains(triple.c2))
        throw error("bootstrap_cubes: anchor landed outside its cube (internal invariant)");

    triple.kernel_at_anchors = kernel.eval(triple.c0, triple.c1, triple.c2);
    triple.anchor_gauge = std::abs(triple.kernel_at_anchors) *
                          detail::ipow(separation, 2 * d) *
                          detail::ipow(cube1.volume(), 2);
    triple.max_anchor_distance = std::max({dist(triple.c0, triple.c1),
                                           dist(triple.c0, triple.c2),
                                           dist(triple.c1, triple.c2)});

    const std::array<const Cube*, 3> cubes{&triple.q0, &triple.q1, &triple.q2};
    const std::array<const Vec*, 3> anchors{&triple.c0, &triple.c1, &triple.c2};
    const double anchor_value = triple.kernel_at_anchors;

    auto pair_diagnostics = [&](int slot_a, int slot_b, int slot_free) {
        PairDiagnostics diag;
        diag.free_slot = slot_free;
        const auto pts_a = detail::midpoint_grid(*cubes[static_cast<std::size_t>(slot_a)], opts.quadrature_cells);
        const auto pts_b = detail::midpoint_grid(*cubes[static_cast<std::size_t>(slot_b)], opts.quadrature_cells);
        const double cell_a = std::pow(cubes[static_cast<std::size_t>(slot_a)]->side / opts.quadrature_cells,
                                       static_cast<double>(d));
        const double cell_b = std::pow(cubes[static_cast<std::size_t>(slot_b)]->side / opts.quadrature_cells,
                                       static_cast<double>(d));
        const double weight = cell_a * cell_b;

        auto integrate = [&](const Vec& free_point, bool subtract_anchor, bool absolute) {
            SumBuffer acc;
            std::array<const Vec*, 3> args{};
            args[static_cast<std::size_t>(slot_free)] = &free_point;
            for (const Vec& pa : pts_a) {
                args[static_cast<std::size_t>(slot_a)] = &pa;
                for (const Vec& pb : pts_b) {
                    args[static_cast<std::size_t>(slot_b)] = &pb;
                    double v = kernel.eval(*args[0], *args[1], *args[2]);
                    if (subtract_anchor) v -= anchor_value;
                    acc.add(absolute ? std::abs(v) : v);
                }
            }
            return acc.total() * weight;
        };

        for (const Vec& p : detail::midpoint_grid(*cubes[static_cast<std::size_t>(slot_free)], opts.sweep_grid))
            diag.oscillation_integral = std::max(diag.oscillation_integral, integrate(p, true, true));
        const Vec& pinned = *anchors[static_cast<std::size_t>(slot_free)];
        diag.absolute_integral = integrate(pinned, false, true);
        diag.signed_integral = integrate(pinned, false, false);
        return diag;
    };

    triple.pairs[0] = pair_diagnostics(0, 2, 1);
    triple.pairs[1] = pair_diagnostics(0, 1, 2);
    triple.pairs[2] = pair_diagnostics(1, 2, 0);
    return triple;
}

struct CalibrationResult {
    double separation = 0;
    CubeTriple triple;
    int doublings = 0;
};

// Doubles the separation parameter until the oscillation of the kernel over
// Q0 x Q2 is at most a quarter of its absolute mass, which forces the signed
// and absolute pair integrals to agree within a factor of two.
inline CalibrationResult calibrate_separation(const KernelSpec& kernel, const Cube& q1,
                                              const std::pair<DyadicGrid, DyadicGrid>& grids,
                                              double start = 32.0, double cap = 4096.0,
                                              BootstrapOptions opts = {}) {
    if (!(start >= 3.0)) throw validation_error("calibrate_separation: start must be at least 3");
    if (!(cap >= start)) throw validation_error("calibrate_separation: cap below the starting value");
    CalibrationResult result;
    for (double a = start; a <= cap * (1.0 + 1e-12); a *= 2.0) {
        result.triple = bootstrap_cubes(kernel, q1, a, grids, opts);
        result.separation = a;
        if (result.triple.oscillation_integral() <= 0.25 * result.triple.absolute_integral())
            return result;
        ++result.doublings;
    }
    throw resource_error("calibrate_separation: oscillation still above a quarter of the "
                         "absolute mass at the separation cap " + std::to_string(cap));
}

} // namespace bsio
