#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bsio/bootstrap.hpp"
#include "bsio/norms.hpp"
#include "bsio/sparse.hpp"

namespace bsio {

struct FactorizeOptions {
    int quadrature_blocks = 16;     // midpoint blocks per axis for the far-cube direction
    double threshold_factor = 1e-3; // safety factor in the denominator floor A^{-2d} sup|g| sup|g|
};

struct FactorizationBounds {
    double ratio_h1 = 0;          // ||h1||_inf / (A^{2d} ||f||_inf)
    double ratio_h0 = 0;          // ||h0||_inf / (A^{2d} ||f||_inf)
    double ratio_err = 0;         // ||f_tilde||_inf / (omega(1/A) ||f||_inf)
    double mean_f_tilde = 0;      // integral of f_tilde over the middle cube
    double mean_via_exchange = 0; // the same mass read off the image-cube bump
    double mean_agreement = 0;    // |difference| relative to the L1 mass of f_tilde
    std::array<double, 3> g_comparability{}; // <|g_i|>_{Q^i} / ||g_i||_inf
    std::array<double, 2> min_denominator{}; // measured minima on the two division supports
};

// The two-step exchange that rewrites a zero-mean bump f on the middle cube
// as operator images against the test functions g0, g1, g2 plus a leftover
// bump f_tilde of smaller sup norm.  The far-cube direction integrates over
// fixed midpoint blocks; the image and middle directions stay at the native
// lattice, so the reconstruction identity holds to rounding, not quadrature.
struct Factorization {
    Cube q0, q1, q2;         // image, middle, far cube (the g supports)
    LatticeFunction h1;      // f over the first denominator, on the middle cube
    LatticeFunction w_tilde; // image-cube bump produced by the first exchange
    LatticeFunction h0;      // w_tilde over the second denominator, on the image cube
    LatticeFunction f_tilde; // leftover bump back on the middle cube
    LatticeFunction d1, d0;  // the two denominators (operator images of the g pairs)
    double separation = 0;
    double sup_f = 0;
    double h1_sup = 0, h0_sup = 0;
    double shrink_ratio = 0; // ||f_tilde||_inf / ||f||_inf
    double residual_sup = 0; // sup defect of the pointwise reconstruction identity
    FactorizationBounds bounds;

    // z-integrated kernel values over (image cells) x (middle cells),
    // row-major in the image cube, shared with the symbol pairings below.
    std::vector<double> kernel_cache;
    std::vector<Vec> x_nodes, y_nodes;
    std::vector<double> g0_vals, g1_vals;
};

namespace detail {

// Cell centers of a lattice in flat order.
inline std::vector<Vec> lattice_nodes(const LatticeFunction& g) {
    std::vector<Vec> nodes(static_cast<std::size_t>(g.cell_count()));
    g.for_each_cell([&](const CellIndex& idx, const Vec& x) {
        nodes[static_cast<std::size_t>(g.flat(idx))] = x;
    });
    return nodes;
}

inline double mean_abs(const LatticeFunction& g) {
    SumBuffer s;
    for (double v : g.values()) s.add(std::abs(v));
    return s.total() / static_cast<double>(g.cell_count());
}

} // namespace detail

inline Factorization factorize(const KernelSpec& kernel, const LatticeFunction& f,
                               const LatticeFunction& g0, const LatticeFunction& g1,
                               const LatticeFunction& g2, double separation,
                               FactorizeOptions opts = {}) {
    const int d = kernel.dimension();
    if (f.dim() != d || g0.dim() != d || g1.dim() != d || g2.dim() != d)
        throw validation_error("factorize: dimension mismatch");
    if (opts.quadrature_blocks < 1)
        throw validation_error("factorize: quadrature blocks must be positive");
    if (!(opts.threshold_factor > 0) || !(opts.threshold_factor < 1))
        throw validation_error("factorize: threshold factor must lie in (0, 1)");
    if (!(separation >= 3.0)) throw validation_error("factorize: separation must be at least 3");

    const double h = f.spacing();
    for (const LatticeFunction* g : {&g0, &g1, &g2})
        if (std::abs(g->spacing() - h) > 1e-12 * h)
            throw validation_error("factorize: g functions must share the lattice spacing of f");

    Factorization out;
    out.q0 = g0.box();
    out.q1 = g1.box();
    out.q2 = g2.box();
    out.separation = separation;
    out.sup_f = f.sup_norm();

    const double sup_g0 = g0.sup_norm(), sup_g1 = g1.sup_norm(), sup_g2 = g2.sup_norm();
    if (!(sup_g0 > 0) || !(sup_g1 > 0) || !(sup_g2 > 0))
        throw validation_error("factorize: test functions g must be nonzero");
    out.bounds.g_comparability = {detail::mean_abs(g0) / sup_g0, detail::mean_abs(g1) / sup_g1,
                                  detail::mean_abs(g2) / sup_g2};

    // The kernel is singular only where x nears y and z together, so the
    // guard floors the summed distance from the g0 cube to the other two.
    const double sep_floor = 0.5 * out.q1.side;
    if (cube_distance(out.q0, out.q1) + cube_distance(out.q0, out.q2) < sep_floor)
        throw validation_error("factorize: g0 cube sits too close to the singular diagonal; "
                               "its distances to the g1 and g2 cubes sum below half the "
                               "middle cube side");

    out.h1 = LatticeFunction(out.q1, h);
    out.f_tilde = LatticeFunction(out.q1, h);
    out.d1 = LatticeFunction(out.q1, h);
    out.w_tilde = LatticeFunction(out.q0, h);
    out.h0 = LatticeFunction(out.q0, h);
    out.d0 = LatticeFunction(out.q0, h);
    out.x_nodes = detail::lattice_nodes(out.w_tilde);
    out.y_nodes = detail::lattice_nodes(out.h1);
    const auto n0 = out.w_tilde.cell_count();
    const auto n1 = out.h1.cell_count();
    out.g0_vals.assign(g0.values().begin(), g0.values().end());
    out.g1_vals.assign(g1.values().begin(), g1.values().end());
    out.kernel_cache.assign(static_cast<std::size_t>(n0 * n1), 0.0);

    if (out.sup_f == 0.0) return out; // zero input: every output is identically zero

    const auto support = support_box(f);
    if (!support || !out.q1.contains_cube(*support))
        throw validation_error("factorize: input support must lie in the middle cube");
    if (std::abs(f.integral()) > 1e-10 * out.sup_f * out.q1.volume())
        throw validation_error("factorize: f must have zero mean on the middle cube");
    if (n0 * n1 > (std::int64_t{1} << 24))
        throw resource_error("factorize: kernel cache would exceed the size budget; "
                             "coarsen the lattice or shrink the cubes");

    const LatticeFunction f_local =
        LatticeFunction::sample(out.q1, h, [&](const Vec& x) { return f.value_at(x); });

    const auto z_nodes = detail::midpoint_grid(out.q2, opts.quadrature_blocks);
    std::vector<double> g2_at_z(z_nodes.size());
    for (std::size_t i = 0; i < z_nodes.size(); ++i) g2_at_z[i] = g2.value_at(z_nodes[i]);
    const double z_weight = detail::ipow(out.q2.side / static_cast<double>(opts.quadrature_blocks), d);
    const double cell_vol = f_local.cell_volume();

    for (std::int64_t i0 = 0; i0 < n0; ++i0) {
        if (out.g0_vals[static_cast<std::size_t>(i0)] == 0.0) continue;
        const Vec& x = out.x_nodes[static_cast<std::size_t>(i0)];
        for (std::int64_t i1 = 0; i1 < n1; ++i1) {
            const Vec& y = out.y_nodes[static_cast<std::size_t>(i1)];
            SumBuffer sz;
            for (std::size_t iz = 0; iz < z_nodes.size(); ++iz)
                if (g2_at_z[iz] != 0.0) sz.add(kernel.eval(x, y, z_nodes[iz]) * g2_at_z[iz]);
            out.kernel_cache[static_cast<std::size_t>(i0 * n1 + i1)] = sz.total() * z_weight;
        }
    }
    const auto cache_at = [&](std::int64_t i0, std::int64_t i1) {
        return out.kernel_cache[static_cast<std::size_t>(i0 * n1 + i1)];
    };

    const double denominator_scale =
        opts.threshold_factor / detail::ipow(separation, 2 * d) * sup_g2;

    for (std::int64_t i1 = 0; i1 < n1; ++i1) {
        SumBuffer s;
        for (std::int64_t i0 = 0; i0 < n0; ++i0) {
            const double gv = out.g0_vals[static_cast<std::size_t>(i0)];
            if (gv != 0.0) s.add(cache_at(i0, i1) * gv);
        }
        out.d1.values()[static_cast<std::size_t>(i1)] = s.total() * cell_vol;
    }
    const double threshold1 = denominator_scale * sup_g0;
    double min_d1 = std::numeric_limits<double>::infinity();
    for (std::int64_t i1 = 0; i1 < n1; ++i1)
        if (f_local.values()[static_cast<std::size_t>(i1)] != 0.0)
            min_d1 = std::min(min_d1, std::abs(out.d1.values()[static_cast<std::size_t>(i1)]));
    out.bounds.min_denominator[0] = min_d1;
    if (!(min_d1 >= threshold1))
        throw validation_error(
            "factorize: A too small / degenerate configuration (min |denominator| = " +
            std::to_string(min_d1) + " on the middle cube, threshold " +
            std::to_string(threshold1) + ")");
    for (std::int64_t i1 = 0; i1 < n1; ++i1) {
        const double fv = f_local.values()[static_cast<std::size_t>(i1)];
        if (fv != 0.0)
            out.h1.values()[static_cast<std::size_t>(i1)] =
                fv / out.d1.values()[static_cast<std::size_t>(i1)];
    }
    out.h1_sup = out.h1.sup_norm();

    for (std::int64_t i0 = 0; i0 < n0; ++i0) {
        const double gv = out.g0_vals[static_cast<std::size_t>(i0)];
        if (gv == 0.0) continue;
        SumBuffer sw, sd;
        for (std::int64_t i1 = 0; i1 < n1; ++i1) {
            const double c = cache_at(i0, i1);
            const double hv = out.h1.values()[static_cast<std::size_t>(i1)];
            const double g1v = out.g1_vals[static_cast<std::size_t>(i1)];
            if (hv != 0.0) sw.add(c * hv);
            if (g1v != 0.0) sd.add(c * g1v);
        }
        out.w_tilde.values()[static_cast<std::size_t>(i0)] = gv * sw.total() * cell_vol;
        out.d0.values()[static_cast<std::size_t>(i0)] = sd.total() * cell_vol;
    }
    const double threshold0 = denominator_scale * sup_g1;
    double min_d0 = std::numeric_limits<double>::infinity();
    for (std::int64_t i0 = 0; i0 < n0; ++i0)
        if (out.w_tilde.values()[static_cast<std::size_t>(i0)] != 0.0)
            min_d0 = std::min(min_d0, std::abs(out.d0.values()[static_cast<std::size_t>(i0)]));
    out.bounds.min_denominator[1] = std::isfinite(min_d0) ? min_d0 : 0.0;
    if (std::isfinite(min_d0) && !(min_d0 >= threshold0))
        throw validation_error(
            "factorize: A too small / degenerate configuration (min |denominator| = " +
            std::to_string(min_d0) + " on the image cube, threshold " +
            std::to_string(threshold0) + ")");
    for (std::int64_t i0 = 0; i0 < n0; ++i0) {
        const double wv = out.w_tilde.values()[static_cast<std::size_t>(i0)];
        if (wv != 0.0)
            out.h0.values()[static_cast<std::size_t>(i0)] =
                wv / out.d0.values()[static_cast<std::size_t>(i0)];
    }
    out.h0_sup = out.h0.sup_norm();

    for (std::int64_t i1 = 0; i1 < n1; ++i1) {
        const double g1v = out.g1_vals[static_cast<std::size_t>(i1)];
        if (g1v == 0.0) continue;
        SumBuffer s;
        for (std::int64_t i0 = 0; i0 < n0; ++i0) {
            const double hv = out.h0.values()[static_cast<std::size_t>(i0)];
            if (hv != 0.0) s.add(cache_at(i0, i1) * hv);
        }
        out.f_tilde.values()[static_cast<std::size_t>(i1)] = g1v * s.total() * cell_vol;
    }
    out.shrink_ratio = out.f_tilde.sup_norm() / out.sup_f;

    double residual = 0;
    for (std::int64_t i1 = 0; i1 < n1; ++i1) {
        const double fv = f_local.values()[static_cast<std::size_t>(i1)];
        const double hv = out.h1.values()[static_cast<std::size_t>(i1)];
        const double dv = out.d1.values()[static_cast<std::size_t>(i1)];
        residual = std::max(residual, std::abs(fv - hv * dv));
    }
    for (std::int64_t i0 = 0; i0 < n0; ++i0) {
        const double wv = out.w_tilde.values()[static_cast<std::size_t>(i0)];
        const double hv = out.h0.values()[static_cast<std::size_t>(i0)];
        const double dv = out.d0.values()[static_cast<std::size_t>(i0)];
        residual = std::max(residual, std::abs(wv - hv * dv));
    }
    out.residual_sup = residual;

    const double scale = detail::ipow(separation, 2 * d) * out.sup_f;
    out.bounds.ratio_h1 = out.h1_sup / scale;
    out.bounds.ratio_h0 = out.h0_sup / scale;
    const double omega_inv_a = kernel.modulus()(1.0 / separation);
    out.bounds.ratio_err =
        omega_inv_a > 0 ? out.shrink_ratio / omega_inv_a : std::numeric_limits<double>::infinity();

    out.bounds.mean_f_tilde = out.f_tilde.integral();
    out.bounds.mean_via_exchange = out.w_tilde.integral();
    SumBuffer mass;
    for (double v : out.f_tilde.values()) mass.add(std::abs(v));
    const double l1 = mass.total() * cell_vol;
    out.bounds.mean_agreement =
        l1 > 0 ? std::abs(out.bounds.mean_f_tilde - out.bounds.mean_via_exchange) / l1 : 0.0;
    return out;
}

inline Factorization factorize(const KernelSpec& kernel, const LatticeFunction& f,
                               const CubeTriple& triple, FactorizeOptions opts = {}) {
    const double h = f.spacing();
    return factorize(kernel, f, LatticeFunction::indicator(triple.q0, h),
                     LatticeFunction::indicator(triple.q1, h),
                     LatticeFunction::indicator(triple.q2, h), triple.separation, opts);
}

// The two commutator pairings hiding in the chain, with the bump pairings on
// each side.  Because every piece of the factorization was built from the
// same z-integrated kernel values, the exchange identity
//   <b, f> = -P1 - P2 + <b, f_tilde>
// holds to rounding; identity_residual measures its relative defect.
struct ChainPairings {
    double bump = 0;      // <b, f>
    double pairing_1 = 0; // symbol against the first exchange, paired on the image cube
    double pairing_2 = 0; // symbol against the second exchange, paired on the middle cube
    double leftover = 0;  // <b, f_tilde>
    double identity_residual = 0;
};

inline ChainPairings chain_pairings(const LatticeFunction& b, const LatticeFunction& f,
                                    const Factorization& fac) {
    if (!b.box().contains_cube(fac.q0) || !b.box().contains_cube(fac.q1))
        throw validation_error("chain_pairings: symbol box does not cover the factorization cubes");
    const auto n0 = static_cast<std::int64_t>(fac.x_nodes.size());
    const auto n1 = static_cast<std::int64_t>(fac.y_nodes.size());
    const double cell_vol = fac.h1.cell_volume();

    std::vector<double> bx(static_cast<std::size_t>(n0)), by(static_cast<std::size_t>(n1));
    for (std::int64_t i0 = 0; i0 < n0; ++i0)
        bx[static_cast<std::size_t>(i0)] = b.value_at(fac.x_nodes[static_cast<std::size_t>(i0)]);
    for (std::int64_t i1 = 0; i1 < n1; ++i1)
        by[static_cast<std::size_t>(i1)] = b.value_at(fac.y_nodes[static_cast<std::size_t>(i1)]);

    ChainPairings cp;
    {
        SumBuffer s;
        for (std::int64_t i1 = 0; i1 < n1; ++i1) {
            const double fv = f.value_at(fac.y_nodes[static_cast<std::size_t>(i1)]);
            if (fv != 0.0) s.add(by[static_cast<std::size_t>(i1)] * fv);
        }
        cp.bump = s.total() * cell_vol;
    }
    {
        SumBuffer s;
        for (std::int64_t i1 = 0; i1 < n1; ++i1) {
            const double fv = fac.f_tilde.values()[static_cast<std::size_t>(i1)];
            if (fv != 0.0) s.add(by[static_cast<std::size_t>(i1)] * fv);
        }
        cp.leftover = s.total() * cell_vol;
    }

    SumBuffer p1, p2;
    for (std::int64_t i0 = 0; i0 < n0; ++i0) {
        const double g0v = fac.g0_vals[static_cast<std::size_t>(i0)];
        if (g0v == 0.0) continue;
        const double bxv = bx[static_cast<std::size_t>(i0)];
        const double h0v = fac.h0.values()[static_cast<std::size_t>(i0)];
        SumBuffer row1, row2;
        for (std::int64_t i1 = 0; i1 < n1; ++i1) {
            const double c = fac.kernel_cache[static_cast<std::size_t>(i0 * n1 + i1)];
            if (c == 0.0) continue;
            const double diff = bxv - by[static_cast<std::size_t>(i1)];
            const double h1v = fac.h1.values()[static_cast<std::size_t>(i1)];
            const double g1v = fac.g1_vals[static_cast<std::size_t>(i1)];
            if (h1v != 0.0) row1.add(c * h1v * diff);
            if (h0v != 0.0 && g1v != 0.0) row2.add(c * g1v * diff);
        }
        p1.add(g0v * row1.total());
        if (h0v != 0.0) p2.add(-h0v * row2.total());
    }
    cp.pairing_1 = p1.total() * cell_vol * cell_vol;
    cp.pairing_2 = p2.total() * cell_vol * cell_vol;

    const double defect = cp.bump + cp.pairing_1 + cp.pairing_2 - cp.leftover;
    const double scale = std::max({std::abs(cp.bump), std::abs(cp.pairing_1),
                                   std::abs(cp.pairing_2), std::abs(cp.leftover)});
    cp.identity_residual = scale > 0 ? std::abs(defect) / scale : 0.0;
    return cp;
}

// Lower-bound certificate for the symbol oscillation on a cube: the bump
// f = sign(b - <b>) - mean has zero mean, sup norm at most 2, and pairs with
// b to exactly |Q| osc(b; Q); the chain converts that mass into the two
// commutator pairings plus a shrunken leftover.
//   constant = |Q| osc / (|P1| + |P2|)
// NaN when b is constant on the cube (0/0: nothing to bound), +inf when both
// pairings vanish.  gamma < 1 confines the image-side test function to that
// fraction of the image cube.
struct OscillationBound {
    double oscillation = 0;
    double bump = 0;
    double pairing_1 = 0;
    double pairing_2 = 0;
    double leftover = 0;
    double identity_residual = 0;
    double constant = std::numeric_limits<double>::quiet_NaN();
    double shrink_ratio = 0;
    double gamma = 1;
    CubeTriple triple;
    Factorization chain;
};

inline OscillationBound oscillation_lower_bound(const LatticeFunction& b, const KernelSpec& kernel,
                                                const Cube& q1, double separation,
                                                double gamma = 1.0, FactorizeOptions opts = {}) {
    if (!b.box().contains_cube(q1))
        throw validation_error("oscillation_lower_bound: symbol box does not cover the cube");
    if (!(gamma > 0.0) || gamma > 1.0)
        throw validation_error("oscillation_lower_bound: gamma must lie in (0, 1]");
    OscillationBound res;
    res.gamma = gamma;
    res.oscillation = oscillation(b, q1);

    const double h = b.spacing();
    const double avg = average(b, q1);
    LatticeFunction f = LatticeFunction::sample(q1, h, [&](const Vec& x) {
        const double v = b.value_at(x);
        return v > avg ? 1.0 : (v < avg ? -1.0 : 0.0);
    });
    const double mean_sign = f.sum() / static_cast<double>(f.cell_count());
    for (double& v : f.values()) v -= mean_sign;
    if (!(res.oscillation > 0) || !(f.sup_norm() > 0)) return res; // constant symbol sentinel

    const DyadicGrid grid = DyadicGrid::standard(b.dim());
    res.triple = bootstrap_cubes(kernel, q1, separation, {grid, grid});
    if (!b.box().contains_cube(res.triple.q0) || !b.box().contains_cube(res.triple.q2))
        throw validation_error(
            "oscillation_lower_bound: symbol box does not cover the bootstrap cubes");

    LatticeFunction g0(res.triple.q0, h);
    const auto keep = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::ceil(gamma * static_cast<double>(g0.cell_count()) - 1e-12)),
        1, g0.cell_count());
    for (std::int64_t i = 0; i < keep; ++i) g0.values()[static_cast<std::size_t>(i)] = 1.0;

    res.chain = factorize(kernel, f, g0, LatticeFunction::indicator(q1, h),
                          LatticeFunction::indicator(res.triple.q2, h), separation, opts);
    const ChainPairings cp = chain_pairings(b, f, res.chain);
    res.bump = cp.bump;
    res.pairing_1 = cp.pairing_1;
    res.pairing_2 = cp.pairing_2;
    res.leftover = cp.leftover;
    res.identity_residual = cp.identity_residual;
    res.shrink_ratio = res.chain.shrink_ratio;
    res.constant =
        q1.volume() * res.oscillation / (std::abs(cp.pairing_1) + std::abs(cp.pairing_2));
    return res;
}

// ---------------------------------------------------------------------------
// Super-diagonal ledger

struct LedgerConfig {
    double p = 4, q = 4, r = 1;
    double s = 2;           // must satisfy 1/s = 1/r - 1/p - 1/q
    double separation = 32; // A
    FactorizeOptions chain{};
    StoppingOptions stopping{};
    ReflectParams reflect{};
};

struct LedgerRow {
    Cube home, image, far_cube;
    std::int64_t image_cells = 0; // major cells carrying the image-side test function
    double sup_piece = 0;
    double bump = 0;     // <b, f_P>
    double leftover = 0; // <b, f_tilde_P>
    double pairing_1 = 0, pairing_2 = 0;
    double shrink_ratio = 0;
    double identity_residual = 0;
    std::array<double, 3> alpha{}; // admissibility caps by slot (0 = image side)
    double alpha_product = 1;      // computed through the summed exponent
};

struct SuperdiagLedger {
    std::vector<LedgerRow> rows;
    std::vector<StackedEntry> entries; // up to two per row, in row order
    SparseReport source_report;        // sparseness of the stopping family
    SparseReport image_report;         // disjointness check of the reflected majors
    double sup_ratio = 0;              // from the sparse decomposition
    double dual_class_norm = 0;        // ||f||_{s'} as validated
    double bump_sum = 0;               // sum |<b, f_P>|
    double leftover_sum = 0;           // sum |<b, f_tilde_P>|
    double modulus_at_inverse_separation = 0;
    double error_ratio = 0; // leftover_sum / (omega(1/A) bump_sum)
    std::array<double, 3> stack_overlap{}; // max stacked value / max single cap, by slot
    std::array<double, 3> lemma_ratio{};   // stacked norm / disjoint-sum norm, by slot
    SuperdiagEstimate estimate;
    std::int64_t skipped_pieces = 0;
};

namespace detail {

inline CellIndex shift_cell(const CellIndex& c, const CellIndex& offset, int d, int sign) {
    CellIndex out{};
    for (int i = 0; i < d; ++i)
        out[static_cast<std::size_t>(i)] =
            c[static_cast<std::size_t>(i)] + sign * offset[static_cast<std::size_t>(i)];
    return out;
}

inline std::vector<CellIndex> cells_of_cube(const Cube& q, double h, const Vec& origin,
                                            const char* who) {
    std::vector<CellIndex> cells;
    cells.reserve(static_cast<std::size_t>(cube_cell_count(q, h, who)));
    for_each_cube_cell(q, h, origin, [&](const CellIndex& c) { cells.push_back(c); });
    return cells;
}

} // namespace detail

// The whole super-diagonal lower-bound pipeline: sparse decomposition of f,
// one bootstrap triple per stopping cube, pairwise-disjoint majors on the
// image side, one factorization chain per piece, and the stacked-collection
// estimate over the resulting rescaled pairings.
inline SuperdiagLedger build_superdiag_ledger(const LatticeFunction& b, const KernelSpec& kernel,
                                              const LatticeFunction& f, const Cube& root,
                                              const LedgerConfig& cfg = {}) {
    if (classify_exponents(cfg.p, cfg.q, cfg.r) != ExponentRegime::super_diagonal)
        throw validation_error("build_superdiag_ledger: exponents are not super-diagonal");
    if (!(cfg.r >= 1.0))
        throw validation_error("build_superdiag_ledger: output exponent below one is out of scope");
    const double s_expected = super_diagonal_s(cfg.p, cfg.q, cfg.r);
    if (std::abs(cfg.s - s_expected) > 1e-9 * s_expected)
        throw validation_error(
            "build_superdiag_ledger: symbol exponent does not match the scaling relation");
    if (!(cfg.s > 1.0))
        throw validation_error("build_superdiag_ledger: symbol exponent must exceed one");
    if (!b.box().contains_cube(root))
        throw validation_error("build_superdiag_ledger: symbol box does not cover the root cube");

    SuperdiagLedger ledger;
    const int d = kernel.dimension();
    const double h = f.spacing();
    const double s_dual = cfg.s / (cfg.s - 1.0);

    ledger.dual_class_norm = f.lp_norm(s_dual);
    if (ledger.dual_class_norm > 1.0 + 1e-9)
        throw validation_error("build_superdiag_ledger: f violates the dual-class normalization "
                               "(unit dual-exponent norm)");

    SparseDecomposition dec = sparse_decompose(f, root, cfg.stopping);
    const SparseFamily& family = dec.stopping.family;
    ledger.source_report = verify_sparse(family);
    ledger.sup_ratio = dec.sup_ratio;

    const DyadicGrid grid = DyadicGrid::standard(d);
    BootstrapOptions light;
    light.quadrature_cells = 8;
    light.sweep_grid = 1;
    std::vector<CubeTriple> triples;
    std::vector<Cube> images;
    triples.reserve(family.entries.size());
    for (const auto& entry : family.entries) {
        triples.push_back(bootstrap_cubes(kernel, entry.cube, cfg.separation, {grid, grid}, light));
        images.push_back(triples.back().q0);
    }
    ReflectParams reflect = cfg.reflect;
    reflect.max_dist_factor = std::max(reflect.max_dist_factor, 2.0 * cfg.separation);
    const SparseFamily reflected = reflect_family(family, grid, images, reflect);
    ledger.image_report = verify_sparse(reflected);

    const double a0 = s_dual * (1.0 - 1.0 / cfg.r) - 1.0;
    const double a1 = s_dual / cfg.p;
    const double a2 = s_dual / cfg.q;

    for (const SparsePiece& piece : dec.pieces) {
        const auto i = static_cast<std::size_t>(piece.entry);
        const double sup_piece = piece.part.sup_norm();
        const auto& major = reflected.entries[i].major;
        if (!(sup_piece > 0) || major.empty()) {
            ++ledger.skipped_pieces;
            continue;
        }
        const CubeTriple& triple = triples[i];
        if (!b.box().contains_cube(triple.q0) || !b.box().contains_cube(triple.q2))
            throw validation_error(
                "build_superdiag_ledger: symbol box does not cover a bootstrap cube");

        const CellIndex off0 =
            detail::cube_origin_cell(triple.q0, h, f.box().corner, "build_superdiag_ledger");
        LatticeFunction g0(triple.q0, h);
        for (const CellIndex& c : major)
            g0.at(detail::shift_cell(c, off0, d, -1)) = 1.0;

        Factorization fac =
            factorize(kernel, piece.part, g0, LatticeFunction::indicator(piece.cube, h),
                      LatticeFunction::indicator(triple.q2, h), cfg.separation, cfg.chain);
        const ChainPairings cp = chain_pairings(b, piece.part, fac);

        LedgerRow row;
        row.home = piece.cube;
        row.image = triple.q0;
        row.far_cube = triple.q2;
        row.image_cells = static_cast<std::int64_t>(major.size());
        row.sup_piece = sup_piece;
        row.bump = cp.bump;
        row.leftover = cp.leftover;
        row.pairing_1 = cp.pairing_1;
        row.pairing_2 = cp.pairing_2;
        row.shrink_ratio = fac.shrink_ratio;
        row.identity_residual = cp.identity_residual;
        row.alpha = {std::pow(sup_piece, a0), std::pow(sup_piece, a1), std::pow(sup_piece, a2)};
        row.alpha_product = std::pow(sup_piece, a0 + a1 + a2);
        ledger.bump_sum += std::abs(cp.bump);
        ledger.leftover_sum += std::abs(cp.leftover);

        const CellIndex off1 =
            detail::cube_origin_cell(piece.cube, h, f.box().corner, "build_superdiag_ledger");
        const auto far_cells =
            detail::cells_of_cube(triple.q2, h, f.box().corner, "build_superdiag_ledger");

        StackedEntry first;
        first.pairing = cp.pairing_1 * (row.alpha[1] / fac.h1_sup) * row.alpha[2] * row.alpha[0];
        first.sup = row.alpha;
        first.support[0] = major;
        for (const auto& cell : fac.h1.nonzero_cells())
            first.support[1].push_back(detail::shift_cell(cell.idx, off1, d, +1));
        first.support[2] = far_cells;
        ledger.entries.push_back(std::move(first));

        if (fac.h0_sup > 0) {
            StackedEntry second;
            second.pairing =
                cp.pairing_2 * row.alpha[1] * row.alpha[2] * (row.alpha[0] / fac.h0_sup);
            second.sup = row.alpha;
            for (const auto& cell : fac.h0.nonzero_cells())
                second.support[0].push_back(detail::shift_cell(cell.idx, off0, d, +1));
            second.support[1] =
                detail::cells_of_cube(piece.cube, h, f.box().corner, "build_superdiag_ledger");
            second.support[2] = far_cells;
            ledger.entries.push_back(std::move(second));
        }
        ledger.rows.push_back(std::move(row));
    }

    if (ledger.entries.empty())
        throw validation_error("build_superdiag_ledger: no usable pieces");

    const double cell_vol = std::pow(h, d);
    const std::array<double, 3> slot_exponents = {
        std::abs(cfg.r - 1.0) <= 1e-12 ? std::numeric_limits<double>::infinity()
                                       : cfg.r / (cfg.r - 1.0),
        cfg.p, cfg.q};
    for (std::size_t slot = 0; slot < 3; ++slot) {
        std::unordered_map<std::uint64_t, double> stack;
        double single = 0;
        SumBuffer disjoint_power;
        for (const auto& e : ledger.entries) {
            single = std::max(single, e.sup[slot]);
            for (const auto& cell : e.support[slot])
                stack[detail::pack_cell(cell, d)] += e.sup[slot];
            if (std::isfinite(slot_exponents[slot]))
                disjoint_power.add(std::pow(e.sup[slot], slot_exponents[slot]) *
                                   static_cast<double>(e.support[slot].size()) * cell_vol);
        }
        double peak = 0;
        for (const auto& [cell, v] : stack) peak = std::max(peak, v);
        ledger.stack_overlap[slot] = single > 0 ? peak / single : 0.0;

        double stacked_norm = 0, disjoint_norm = 0;
        if (std::isfinite(slot_exponents[slot])) {
            SumBuffer lhs;
            for (const auto& [cell, v] : stack) lhs.add(std::pow(v, slot_exponents[slot]));
            stacked_norm = std::pow(lhs.total() * cell_vol, 1.0 / slot_exponents[slot]);
            disjoint_norm = std::pow(disjoint_power.total(), 1.0 / slot_exponents[slot]);
        } else {
            stacked_norm = peak;
            disjoint_norm = single;
        }
        ledger.lemma_ratio[slot] = disjoint_norm > 0 ? stacked_norm / disjoint_norm : 0.0;
    }

    ledger.modulus_at_inverse_separation = kernel.modulus()(1.0 / cfg.separation);
    ledger.error_ratio =
        ledger.bump_sum > 0 && ledger.modulus_at_inverse_separation > 0
            ? ledger.leftover_sum / (ledger.modulus_at_inverse_separation * ledger.bump_sum)
            : 0.0;
    ledger.estimate = superdiag_offsupport_est(ledger.entries, cfg.p, cfg.q, cfg.r, h, d);
    return ledger;
}

} // namespace bsio
