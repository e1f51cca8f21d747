#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bsio/bootstrap.hpp"
#include "bsio/kernel.hpp"
#include "bsio/lattice.hpp"
#include "bsio/sparse.hpp"

namespace bsio {

// ---------------------------------------------------------------------------
// Exponent arithmetic

enum class ExponentRegime { sub_diagonal, diagonal, super_diagonal };

inline double sigma_exponent(const std::vector<double>& exponents) {
    if (exponents.empty()) throw validation_error("sigma_exponent: empty exponent list");
    double inv = 0;
    for (double p : exponents) {
        if (!(p > 0)) throw validation_error("sigma_exponent: exponents must be positive");
        inv += 1.0 / p;
    }
    return 1.0 / inv;
}

// Compares 1/r with 1/p + 1/q: larger means the output space is smaller
// than the bilinear Holder scale.
inline ExponentRegime classify_exponents(double p, double q, double r) {
    if (!(p > 0) || !(q > 0) || !(r > 0))
        throw validation_error("classify_exponents: exponents must be positive");
    const double lhs = 1.0 / r;
    const double rhs = 1.0 / p + 1.0 / q;
    if (std::abs(lhs - rhs) <= 1e-12) return ExponentRegime::diagonal;
    return lhs > rhs ? ExponentRegime::super_diagonal : ExponentRegime::sub_diagonal;
}

inline const char* regime_name(ExponentRegime r) {
    switch (r) {
    case ExponentRegime::sub_diagonal: return "sub-diagonal";
    case ExponentRegime::diagonal: return "diagonal";
    case ExponentRegime::super_diagonal: return "super-diagonal";
    }
    return "?";
}

// The symbol integrability forced by 1/r = 1/s + 1/p + 1/q.
inline double super_diagonal_s(double p, double q, double r) {
    if (classify_exponents(p, q, r) != ExponentRegime::super_diagonal)
        throw validation_error("super_diagonal_s: exponents are not super-diagonal");
    return 1.0 / (1.0 / r - 1.0 / p - 1.0 / q);
}

// ---------------------------------------------------------------------------
// Symbol-side functionals

// Mean absolute deviation of b from its average over q, exact on the cells
// whose centers lie in q.
inline double oscillation(const LatticeFunction& b, const Cube& q) {
    if (q.dim() != b.dim()) throw validation_error("oscillation: dimension mismatch");
    const auto range = b.cell_range(q);
    std::int64_t count = 1;
    for (int i = 0; i < b.dim(); ++i) {
        const auto& r = range[static_cast<std::size_t>(i)];
        count *= std::max<std::int64_t>(0, r.hi - r.lo);
    }
    if (count < 1) throw validation_error("oscillation: cube under-resolved on the lattice");

    SumBuffer sum;
    CellIndex idx{};
    std::function<void(int, const std::function<void(const CellIndex&)>&)> loop =
        [&](int axis, const std::function<void(const CellIndex&)>& fn) {
            if (axis == b.dim()) {
                fn(idx);
                return;
            }
            const auto& r = range[static_cast<std::size_t>(axis)];
            for (std::int64_t k = r.lo; k < r.hi; ++k) {
                idx[static_cast<std::size_t>(axis)] = k;
                loop(axis + 1, fn);
            }
        };
    loop(0, [&](const CellIndex& c) { sum.add(b.at(c)); });
    const double avg = sum.total() / static_cast<double>(count);

    SumBuffer dev;
    loop(0, [&](const CellIndex& c) { dev.add(std::abs(b.at(c) - avg)); });
    return dev.total() / static_cast<double>(count);
}

// Deterministic cube sample: dyadic side lengths 2^k for k in [k_min, k_max],
// corners marching by side/stride (never finer than one cell), everything
// inside the host box.  Coarse scales are generated first so a count cap
// truncates the fine end.
struct CubeSampler {
    int k_min = -5;
    int k_max = 0;
    int stride = 2;
    std::int64_t cap = 512;

    std::vector<Cube> cubes(const Cube& box, double h) const {
        if (k_min > k_max) throw validation_error("CubeSampler: empty side range");
        if (stride < 1) throw validation_error("CubeSampler: stride must be positive");
        std::vector<Cube> out;
        const int d = box.dim();
        for (int k = k_max; k >= k_min; --k) {
            const double side = std::ldexp(1.0, k);
            if (side > box.side * (1.0 + 1e-12)) continue;
            if (side < h * (1.0 - 1e-12)) break;
            const auto step_cells = std::max<std::int64_t>(
                1, std::llround(side / (static_cast<double>(stride) * h)));
            const double step = static_cast<double>(step_cells) * h;
            const auto per_axis = static_cast<std::int64_t>(
                std::floor((box.side - side) / step + 1e-9)) + 1;
            std::array<std::int64_t, kMaxDim> idx{};
            std::function<void(int)> emit = [&](int axis) {
                if (static_cast<std::int64_t>(out.size()) >= cap) return;
                if (axis == d) {
                    Vec corner = box.corner;
                    for (int i = 0; i < d; ++i)
                        corner[i] += static_cast<double>(idx[static_cast<std::size_t>(i)]) * step;
                    out.push_back(Cube(corner, side));
                    return;
                }
                for (std::int64_t j = 0; j < per_axis; ++j) {
                    idx[static_cast<std::size_t>(axis)] = j;
                    emit(axis + 1);
                }
            };
            emit(0);
            if (static_cast<std::int64_t>(out.size()) >= cap) break;
        }
        return out;
    }
};

struct SupEstimate {
    double value = 0;
    Cube witness;
    std::int64_t cubes_sampled = 0;
};

// Sampled lower estimate of sup over cubes of the oscillation.
inline SupEstimate bmo_norm_est(const LatticeFunction& b, const CubeSampler& sampler) {
    SupEstimate est;
    for (const Cube& q : sampler.cubes(b.box(), b.spacing())) {
        ++est.cubes_sampled;
        const double v = oscillation(b, q);
        if (v > est.value) {
            est.value = v;
            est.witness = q;
        }
    }
    return est;
}

// Sampled lower estimate of sup over cubes of side^{-alpha} oscillation.
inline SupEstimate holder_seminorm_est(const LatticeFunction& b, double alpha,
                                       const CubeSampler& sampler) {
    if (!(alpha > 0) || alpha > 1.0)
        throw validation_error("holder_seminorm_est: exponent must lie in (0, 1]");
    SupEstimate est;
    for (const Cube& q : sampler.cubes(b.box(), b.spacing())) {
        ++est.cubes_sampled;
        const double v = std::pow(q.side, -alpha) * oscillation(b, q);
        if (v > est.value) {
            est.value = v;
            est.witness = q;
        }
    }
    return est;
}

// ||b - c||_{L^s(domain)} by lattice quadrature.
inline double dot_ls_objective(const LatticeFunction& b, double s, const Cube& domain, double c) {
    const auto range = b.cell_range(domain);
    SumBuffer acc;
    CellIndex idx{};
    std::function<void(int)> loop = [&](int axis) {
        if (axis == b.dim()) {
            acc.add(std::pow(std::abs(b.at(idx) - c), s));
            return;
        }
        const auto& r = range[static_cast<std::size_t>(axis)];
        for (std::int64_t k = r.lo; k < r.hi; ++k) {
            idx[static_cast<std::size_t>(axis)] = k;
            loop(axis + 1);
        }
    };
    loop(0);
    return std::pow(acc.total() * b.cell_volume(), 1.0 / s);
}

struct DotLsResult {
    double value = 0;
    double witness = 0; // the minimizing constant
};

// inf over real constants c of ||b - c||_{L^s(domain)}: the objective is
// convex for s >= 1 and its minimizer lies between the extremes of b, so a
// golden-section search converges unconditionally.
inline DotLsResult dot_ls_norm(const LatticeFunction& b, double s, const Cube& domain) {
    if (!(s >= 1.0))
        throw validation_error("dot_ls_norm: nonconvex objective out of v1 scope (s < 1)");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    const auto range = b.cell_range(domain);
    CellIndex idx{};
    std::int64_t count = 0;
    std::function<void(int)> scan = [&](int axis) {
        if (axis == b.dim()) {
            lo = std::min(lo, b.at(idx));
            hi = std::max(hi, b.at(idx));
            ++count;
            return;
        }
        const auto& r = range[static_cast<std::size_t>(axis)];
        for (std::int64_t k = r.lo; k < r.hi; ++k) {
            idx[static_cast<std::size_t>(axis)] = k;
            scan(axis + 1);
        }
    };
    scan(0);
    if (count < 1) throw validation_error("dot_ls_norm: domain under-resolved on the lattice");
    if (lo >= hi) return {0.0, lo};

    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    const double tol = 1e-8 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    double a = lo, d = hi;
    double m1 = d - golden * (d - a);
    double m2 = a + golden * (d - a);
    double f1 = dot_ls_objective(b, s, domain, m1);
    double f2 = dot_ls_objective(b, s, domain, m2);
    while (d - a > tol) {
        if (f1 <= f2) {
            d = m2;
            m2 = m1;
            f2 = f1;
            m1 = d - golden * (d - a);
            f1 = dot_ls_objective(b, s, domain, m1);
        } else {
            a = m1;
            m1 = m2;
            f1 = f2;
            m2 = a + golden * (d - a);
            f2 = dot_ls_objective(b, s, domain, m2);
        }
    }
    const double c = (a + d) / 2.0;
    return {dot_ls_objective(b, s, domain, c), c};
}

// sup over lambda of lambda |{|u| > lambda}|^{1/r}, exact on lattice data:
// the supremum is approached at the sample values, so sorting settles it.
inline double weak_lr_quasinorm(const LatticeFunction& u, double r) {
    if (!(r > 0)) throw validation_error("weak_lr_quasinorm: exponent must be positive");
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(u.cell_count()));
    for (double v : u.values())
        if (v != 0.0) vals.push_back(std::abs(v));
    std::sort(vals.begin(), vals.end(), std::greater<>());
    double best = 0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i + 1 < vals.size() && vals[i + 1] == vals[i]) continue;
        const double measure = static_cast<double>(i + 1) * u.cell_volume();
        best = std::max(best, vals[i] * std::pow(measure, 1.0 / r));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Off-support norms

// Sampling plan for the off-support estimators.  Base cubes play the Q1
// role; the other two cubes come from the kernel bootstrap at the given
// separation, so the distance invariant holds by construction.
struct OffSupportConfig {
    double p = 2, q = 2, r = 1;
    std::optional<double> s;       // super-diagonal symbol exponent
    double separation = 32;        // A
    double gamma = 0.75;           // major-subset fraction for the weak variant
    int slot = 1;                  // which input the commutator weight reads
    int function_draws = 2;        // random draws per triple beyond the indicator draw
    int quadrature_blocks = 16;    // coarse integration blocks per axis and cube
    std::uint64_t seed = 1;
    CubeSampler base_sampler{};
};

namespace detail {

// A cube cut into equal blocks of whole lattice cells, carrying exact block
// averages of the symbol.  Test functions in the off-support estimators are
// block-constant, so the symbol enters the pairing only through these
// averages and the quadrature error sits in the kernel factor alone.
struct BlockGrid {
    std::vector<Vec> centers;
    std::vector<double> symbol_avg;
    double block_volume = 0;
    std::int64_t count = 0;
};

inline BlockGrid make_block_grid(const LatticeFunction& b, const AbsPrefix& prefix,
                                 const Cube& q, int target_blocks) {
    const std::int64_t n = aligned_cells(b, q, "off-support blocks");
    std::int64_t nb = std::min<std::int64_t>(std::max(1, target_blocks), n);
    while (n % nb != 0) --nb;
    const std::int64_t w = n / nb;
    const int d = b.dim();

    CellIndex origin{};
    for (int i = 0; i < d; ++i)
        origin[static_cast<std::size_t>(i)] =
            std::llround((q.corner[i] - b.box().corner[i]) / b.spacing());

    BlockGrid grid;
    grid.block_volume = std::pow(static_cast<double>(w) * b.spacing(), d);
    std::int64_t cells_per_block = 1;
    for (int i = 0; i < d; ++i) cells_per_block *= w;

    std::array<std::int64_t, kMaxDim> idx{};
    std::function<void(int)> emit = [&](int axis) {
        if (axis == d) {
            CellIndex lo{}, hi{};
            Vec center(d);
            for (int i = 0; i < d; ++i) {
                lo[static_cast<std::size_t>(i)] =
                    origin[static_cast<std::size_t>(i)] + idx[static_cast<std::size_t>(i)] * w;
                hi[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)] + w;
                center[i] = q.corner[i] +
                            (static_cast<double>(idx[static_cast<std::size_t>(i)]) + 0.5) *
                                static_cast<double>(w) * b.spacing();
            }
            grid.centers.push_back(center);
            grid.symbol_avg.push_back(prefix.block_sum(lo, hi) / static_cast<double>(cells_per_block));
            return;
        }
        for (std::int64_t j = 0; j < nb; ++j) {
            idx[static_cast<std::size_t>(axis)] = j;
            emit(axis + 1);
        }
    };
    emit(0);
    grid.count = static_cast<std::int64_t>(grid.centers.size());
    return grid;
}

// Per x-block integral of (b(x) - b(input)) K f1 f2 over the two input
// cubes; the symbol difference uses exact block averages.
inline std::vector<double> commutator_block_profile(const KernelSpec& kernel, int slot,
                                                    const BlockGrid& g0, const BlockGrid& g1,
                                                    const BlockGrid& g2,
                                                    std::span<const double> f1,
                                                    std::span<const double> f2) {
    std::vector<double> phi(static_cast<std::size_t>(g0.count));
    for (std::int64_t i0 = 0; i0 < g0.count; ++i0) {
        SumBuffer acc;
        for (std::int64_t i1 = 0; i1 < g1.count; ++i1) {
            const double v1 = f1[static_cast<std::size_t>(i1)];
            if (v1 == 0.0) continue;
            for (std::int64_t i2 = 0; i2 < g2.count; ++i2) {
                const double v2 = f2[static_cast<std::size_t>(i2)];
                if (v2 == 0.0) continue;
                const double weight =
                    slot == 1 ? g0.symbol_avg[static_cast<std::size_t>(i0)] -
                                    g1.symbol_avg[static_cast<std::size_t>(i1)]
                              : g0.symbol_avg[static_cast<std::size_t>(i0)] -
                                    g2.symbol_avg[static_cast<std::size_t>(i2)];
                acc.add(weight *
                        kernel.eval(g0.centers[static_cast<std::size_t>(i0)],
                                    g1.centers[static_cast<std::size_t>(i1)],
                                    g2.centers[static_cast<std::size_t>(i2)]) *
                        v1 * v2);
            }
        }
        phi[static_cast<std::size_t>(i0)] = acc.total() * g1.block_volume * g2.block_volume;
    }
    return phi;
}

} // namespace detail

struct OffSupportWitness {
    Cube q1;
    int draw = -1; // 0 = indicator functions, >= 1 = random draw index
};

struct OffSupportEstimate {
    double value = 0;
    OffSupportWitness witness;
    std::int64_t triples = 0;
    std::int64_t skipped = 0; // triples whose cubes left the symbol box
};

namespace detail {

inline double offsupport_normalization(const Cube& q0, double p, double q, double r) {
    const double inv_r_dual = 1.0 - 1.0 / r;
    return std::pow(q0.volume(), -(1.0 / p + 1.0 / q + inv_r_dual));
}

inline OffSupportEstimate offsupport_core(const LatticeFunction& b, const KernelSpec& kernel,
                                          const OffSupportConfig& cfg, bool weak_variant) {
    if (!(cfg.separation >= 3.0))
        throw validation_error("off-support estimate: separation must be at least 3");
    if (cfg.slot != 1 && cfg.slot != 2)
        throw validation_error("off-support estimate: slot must be 1 or 2");
    if (weak_variant && !(cfg.gamma > 0.0 && cfg.gamma < 1.0))
        throw validation_error("off-support estimate: gamma must lie in (0, 1)");
    classify_exponents(cfg.p, cfg.q, cfg.r);

    const DyadicGrid grid = DyadicGrid::standard(b.dim());
    const detail::AbsPrefix symbol_prefix(b, /*absolute=*/false);
    Rng rng(cfg.seed);
    BootstrapOptions light;
    light.quadrature_cells = 8;
    light.sweep_grid = 1;

    OffSupportEstimate est;
    for (const Cube& q1 : cfg.base_sampler.cubes(b.box(), b.spacing())) {
        const CubeTriple triple = bootstrap_cubes(kernel, q1, cfg.separation, {grid, grid}, light);
        if (!b.box().contains_cube(triple.q0) || !b.box().contains_cube(triple.q1) ||
            !b.box().contains_cube(triple.q2)) {
            ++est.skipped;
            continue;
        }
        ++est.triples;
        const auto g0 = detail::make_block_grid(b, symbol_prefix, triple.q0, cfg.quadrature_blocks);
        const auto g1 = detail::make_block_grid(b, symbol_prefix, triple.q1, cfg.quadrature_blocks);
        const auto g2 = detail::make_block_grid(b, symbol_prefix, triple.q2, cfg.quadrature_blocks);
        const double norm_factor = detail::offsupport_normalization(triple.q0, cfg.p, cfg.q, cfg.r);

        std::vector<double> f1(static_cast<std::size_t>(g1.count), 1.0);
        std::vector<double> f2(static_cast<std::size_t>(g2.count), 1.0);
        for (int draw = 0; draw <= cfg.function_draws; ++draw) {
            if (draw > 0) {
                for (double& v : f1) v = rng.uniform(-1.0, 1.0);
                for (double& v : f2) v = rng.uniform(-1.0, 1.0);
            }
            const auto phi = detail::commutator_block_profile(kernel, cfg.slot, g0, g1, g2, f1, f2);

            double paired = 0;
            if (!weak_variant) {
                SumBuffer acc;
                for (double v : phi) acc.add(std::abs(v));
                paired = acc.total() * g0.block_volume;
            } else {
                std::vector<std::size_t> order(phi.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                    const double ax = std::abs(phi[x]), ay = std::abs(phi[y]);
                    if (ax != ay) return ax < ay;
                    return x < y;
                });
                auto keep = static_cast<std::size_t>(
                    std::floor(cfg.gamma * static_cast<double>(phi.size()))) + 1;
                keep = std::min(keep, phi.size());
                SumBuffer acc;
                for (std::size_t i = 0; i < keep; ++i) acc.add(std::abs(phi[order[i]]));
                paired = acc.total() * g0.block_volume;
            }

            const double value = paired * norm_factor;
            if (value > est.value) {
                est.value = value;
                est.witness = {q1, draw};
            }
        }
    }
    return est;
}

} // namespace detail

// sup over sampled separated triples and admissible block-constant test
// functions of the normalized commutator pairing, with the x-side function
// sign-optimized.  A sampled lower estimate of the true supremum.
inline OffSupportEstimate offsupport_norm_est(const LatticeFunction& b, const KernelSpec& kernel,
                                              const OffSupportConfig& cfg) {
    return detail::offsupport_core(b, kernel, cfg, false);
}

// Same, but the x-side function is confined to the gamma-major subset of
// Q0 where the commutator output is smallest, which dualizes the weak-type
// output norm constructively.
inline OffSupportEstimate weak_offsupport_est(const LatticeFunction& b, const KernelSpec& kernel,
                                              const OffSupportConfig& cfg) {
    return detail::offsupport_core(b, kernel, cfg, true);
}

struct ScalePoint {
    double side = 0;
    double pairing = 0;    // sign-optimized |<[b,T](1,1), f0>| at this scale
    double per_mass = 0;   // pairing / |Q1|
    double normalized = 0; // pairing * |Q0|^{-(1/p + 1/q + 1/r')}
};

// Dilation sweep anchored at the corner of q1: the same off-support pairing
// evaluated on q1 and its successive halves, for scaling-law fits.
inline std::vector<ScalePoint> offsupport_scale_profile(const LatticeFunction& b,
                                                        const KernelSpec& kernel,
                                                        const OffSupportConfig& cfg, Cube q1,
                                                        int n_scales) {
    if (n_scales < 1) throw validation_error("offsupport_scale_profile: need at least one scale");
    const DyadicGrid grid = DyadicGrid::standard(b.dim());
    const detail::AbsPrefix symbol_prefix(b, /*absolute=*/false);
    BootstrapOptions light;
    light.quadrature_cells = 8;
    light.sweep_grid = 1;

    std::vector<ScalePoint> points;
    for (int j = 0; j < n_scales; ++j) {
        const CubeTriple triple = bootstrap_cubes(kernel, q1, cfg.separation, {grid, grid}, light);
        if (!b.box().contains_cube(triple.q0) || !b.box().contains_cube(triple.q2))
            throw validation_error("offsupport_scale_profile: triple leaves the symbol box at side " +
                                   std::to_string(q1.side));
        const auto g0 = detail::make_block_grid(b, symbol_prefix, triple.q0, cfg.quadrature_blocks);
        const auto g1 = detail::make_block_grid(b, symbol_prefix, triple.q1, cfg.quadrature_blocks);
        const auto g2 = detail::make_block_grid(b, symbol_prefix, triple.q2, cfg.quadrature_blocks);
        const std::vector<double> ones1(static_cast<std::size_t>(g1.count), 1.0);
        const std::vector<double> ones2(static_cast<std::size_t>(g2.count), 1.0);
        const auto phi = detail::commutator_block_profile(kernel, cfg.slot, g0, g1, g2, ones1, ones2);
        SumBuffer acc;
        for (double v : phi) acc.add(std::abs(v));

        ScalePoint pt;
        pt.side = triple.q1.side;
        pt.pairing = acc.total() * g0.block_volume;
        pt.per_mass = pt.pairing / triple.q1.volume();
        pt.normalized = pt.pairing * detail::offsupport_normalization(triple.q0, cfg.p, cfg.q, cfg.r);
        points.push_back(pt);
        q1 = Cube(q1.corner, q1.side / 2.0);
    }
    return points;
}

// ---------------------------------------------------------------------------
// Super-diagonal collection estimate

// One ledger row: a commutator pairing together with the sup and support of
// the three test functions that produced it (slot 0 pairs with x).
struct StackedEntry {
    double pairing = 0;
    std::array<double, 3> sup{};
    std::array<std::vector<CellIndex>, 3> support;
};

struct SuperdiagEstimate {
    double value = 0;
    double pairing_sum = 0;
    double normalization = 1;
    std::array<double, 3> stack_norms{}; // slot 0 in L^{r'}, slot 1 in L^p, slot 2 in L^q
};

// Sum of |pairing_k| over the collection divided by the product of stacked
// support norms: the slot-1 stack in L^p, the slot-2 stack in L^q, and the
// slot-0 stack in L^{r'}.  For r = 1 the dual exponent is infinity and the
// factor is the largest stacked value, which is where disjointness of the
// slot-0 supports pays off.
inline SuperdiagEstimate superdiag_offsupport_est(const std::vector<StackedEntry>& entries,
                                                  double p, double q, double r, double h, int d) {
    if (entries.empty())
        throw validation_error("superdiag_offsupport_est: empty ledger");
    if (!(r >= 1.0))
        throw validation_error("superdiag_offsupport_est: output exponent must be at least 1");
    const double cell_volume = std::pow(h, d);

    std::array<std::unordered_map<std::uint64_t, double>, 3> stacks;
    SumBuffer pairings;
    for (const auto& e : entries) {
        pairings.add(std::abs(e.pairing));
        for (std::size_t slot = 0; slot < 3; ++slot) {
            if (e.support[slot].empty())
                throw validation_error("superdiag_offsupport_est: entry with empty support");
            for (const auto& cell : e.support[slot])
                stacks[slot][detail::pack_cell(cell, d)] += e.sup[slot];
        }
    }

    auto lp_of_stack = [&](const std::unordered_map<std::uint64_t, double>& stack, double expnt) {
        std::vector<double> terms;
        terms.reserve(stack.size());
        for (const auto& [cell, v] : stack) terms.push_back(std::pow(v, expnt));
        return std::pow(pairwise_sum(terms) * cell_volume, 1.0 / expnt);
    };
    auto sup_of_stack = [&](const std::unordered_map<std::uint64_t, double>& stack) {
        double m = 0;
        for (const auto& [cell, v] : stack) m = std::max(m, v);
        return m;
    };

    SuperdiagEstimate est;
    est.stack_norms[1] = lp_of_stack(stacks[1], p);
    est.stack_norms[2] = lp_of_stack(stacks[2], q);
    est.stack_norms[0] = std::abs(r - 1.0) <= 1e-12 ? sup_of_stack(stacks[0])
                                                    : lp_of_stack(stacks[0], r / (r - 1.0));
    est.normalization = est.stack_norms[0] * est.stack_norms[1] * est.stack_norms[2];
    if (!(est.normalization > 0))
        throw validation_error("superdiag_offsupport_est: degenerate normalization");
    est.pairing_sum = pairings.total();
    est.value = est.pairing_sum / est.normalization;
    return est;
}

} // namespace bsio
