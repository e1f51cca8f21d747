#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bsio/kernel.hpp"
#include "bsio/lattice.hpp"

namespace bsio {

// Truncation rule for the singular integrals: a (y, z) cell is excluded at
// the evaluation point x when max(|x-y|, |x-z|) <= epsilon.  The radius must
// stay at least two cells wide so the midpoint rule never samples next to
// the singularity.
struct TruncationPolicy {
    double epsilon = 0;
};

namespace detail {

inline void validate_policy(const TruncationPolicy& pol, double h) {
    if (!(pol.epsilon >= 2.0 * h * (1.0 - 1e-12)))
        throw validation_error("TruncationPolicy: epsilon must be at least two cell widths");
}

inline void require_aligned(const LatticeFunction& a, const LatticeFunction& b, const char* who) {
    if (!a.aligned_with(b))
        throw validation_error(std::string(who) + ": incompatible lattices");
}

// A full (untruncated) sum is legitimate only when no evaluation point can
// coincide with a y = z = x singular cell carrying a nonzero coefficient.
inline void require_no_singular_overlap(const LatticeFunction& f, const LatticeFunction& g,
                                        const LatticeFunction& out, const char* who) {
    out.for_each_cell([&](const CellIndex&, const Vec& x) {
        if (f.value_at(x) != 0.0 && g.value_at(x) != 0.0)
            throw validation_error(std::string(who) +
                                   ": evaluation points meet the joint support; pass a truncation policy");
    });
}

} // namespace detail

// Truncated bilinear singular integral
//   T_eps(f, g)(x) = sum over cells with max(|x-y|, |x-z|) > eps of
//                    K(x, y, z) f(y) g(z) h^{2d},
// evaluated at every cell center of eval_box on f's lattice.  Without a
// policy the full sum is taken, which is only allowed when no evaluation
// point lies in both supports.  Cost is O(#supp f * #supp g) per point.
inline LatticeFunction apply_truncated(const KernelSpec& kernel, const LatticeFunction& f,
                                       const LatticeFunction& g,
                                       std::optional<TruncationPolicy> pol,
                                       const Cube& eval_box) {
    detail::require_aligned(f, g, "apply_truncated");
    if (pol) detail::validate_policy(*pol, f.spacing());
    LatticeFunction out(eval_box, f.spacing());
    if (!f.aligned_with(out))
        throw validation_error("apply_truncated: evaluation box is not on the data lattice");
    if (!pol) detail::require_no_singular_overlap(f, g, out, "apply_truncated");

    const auto fs = f.nonzero_cells();
    const auto gs = g.nonzero_cells();
    const double weight = f.cell_volume() * g.cell_volume();
    out.for_each_cell([&](const CellIndex& idx, const Vec& x) {
        SumBuffer acc;
        for (const auto& fc : fs) {
            const double dy = dist(x, fc.center);
            for (const auto& gc : gs) {
                if (pol && std::max(dy, dist(x, gc.center)) <= pol->epsilon) continue;
                acc.add(kernel.eval(x, fc.center, gc.center) * fc.value * gc.value);
            }
        }
        out.at(idx) = acc.total() * weight;
    });
    return out;
}

struct PairingValue {
    double value = 0;
    std::int64_t quadrature_cells = 0;
    std::optional<TruncationPolicy> policy; // nullopt when separation made it unnecessary
};

// Trilinear pairing <T(f1, f2), f0> as a triple midpoint sum.  The summation
// is canonical: the kernel's argument permutation is unwound so the loop
// always runs over the arguments of the *base* closed form in row-major
// order with pairwise-blocked accumulation.  The three adjoint forms of the
// same pairing therefore produce bitwise-identical results.
//
// Without a policy, both supports paired against the x argument must be at
// least two cells away from f0's support; the full sum is then exact
// midpoint quadrature and the truncation parameter is irrelevant.
inline PairingValue pairing(const KernelSpec& kernel, const LatticeFunction& f1,
                            const LatticeFunction& f2, const LatticeFunction& f0,
                            std::optional<TruncationPolicy> pol = std::nullopt) {
    detail::require_aligned(f1, f2, "pairing");
    detail::require_aligned(f1, f0, "pairing");
    const double h = f1.spacing();
    if (pol) detail::validate_policy(*pol, h);

    // Pairing slots: 0 carries f0 (the x argument), 1 carries f1, 2 carries f2.
    const std::array<const LatticeFunction*, 3> slot_fn{&f0, &f1, &f2};
    const auto& perm = kernel.permutation();
    std::array<int, 3> inv{};
    for (int j = 0; j < 3; ++j) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] = j;
    // Base argument j integrates the function living on user slot perm[j].
    const std::array<const LatticeFunction*, 3> base_fn{
        slot_fn[static_cast<std::size_t>(perm[0])],
        slot_fn[static_cast<std::size_t>(perm[1])],
        slot_fn[static_cast<std::size_t>(perm[2])]};

    if (!pol) {
        const auto s0 = support_box(*slot_fn[0]);
        const auto s1 = support_box(*slot_fn[1]);
        const auto s2 = support_box(*slot_fn[2]);
        if (s0 && s1 && s2) {
            const double gap = 2.0 * h * (1.0 - 1e-12);
            if (cube_distance(*s0, *s1) < gap || cube_distance(*s0, *s2) < gap)
                throw validation_error("pairing: supports are not separated; pass a truncation policy");
        }
    }

    const auto c0 = base_fn[0]->nonzero_cells();
    const auto c1 = base_fn[1]->nonzero_cells();
    const auto c2 = base_fn[2]->nonzero_cells();

    PairingValue result;
    result.policy = pol;
    SumBuffer outer;
    for (const auto& a : c0) {
        SumBuffer mid;
        for (const auto& b : c1) {
            SumBuffer inner;
            for (const auto& c : c2) {
                if (pol) {
                    // The truncation rule lives in user coordinates.
                    std::array<const Vec*, 3> user{};
                    user[static_cast<std::size_t>(inv[0])] = &a.center;
                    user[static_cast<std::size_t>(inv[1])] = &b.center;
                    user[static_cast<std::size_t>(inv[2])] = &c.center;
                    const double reach = std::max(dist(*user[0], *user[1]), dist(*user[0], *user[2]));
                    if (reach <= pol->epsilon) continue;
                }
                inner.add(kernel.eval_base(a.center, b.center, c.center) * a.value * b.value * c.value);
                ++result.quadrature_cells;
            }
            mid.add(inner.total());
        }
        outer.add(mid.total());
    }
    result.value = outer.total() * detail::ipow(h, 3 * f1.dim());
    return result;
}

// Commutator with the symbol in the given slot:
//   slot 1: [b, T]_1(f, g)(x) = sum (b(x) - b(y)) K(x,y,z) f(y) g(z) h^{2d}
//   slot 2: weight (b(x) - b(z)) instead.
// The symbol must be sampled on a box covering the evaluation points and the
// support the weight reads.  Constant symbols give the zero function exactly.
inline LatticeFunction commutator(int slot, const LatticeFunction& b, const LatticeFunction& f,
                                  const LatticeFunction& g, const KernelSpec& kernel,
                                  std::optional<TruncationPolicy> pol, const Cube& eval_box) {
    if (slot != 1 && slot != 2) throw validation_error("commutator: slot must be 1 or 2");
    detail::require_aligned(f, g, "commutator");
    detail::require_aligned(f, b, "commutator");
    if (pol) detail::validate_policy(*pol, f.spacing());
    LatticeFunction out(eval_box, f.spacing());
    if (!f.aligned_with(out))
        throw validation_error("commutator: evaluation box is not on the data lattice");
    if (!b.box().contains_cube(eval_box))
        throw validation_error("commutator: symbol box does not cover the evaluation points");
    const auto weighted_support = support_box(slot == 1 ? f : g);
    if (weighted_support && !b.box().contains_cube(*weighted_support))
        throw validation_error("commutator: symbol box does not cover the weighted support");
    if (!pol) detail::require_no_singular_overlap(f, g, out, "commutator");

    const auto fs = f.nonzero_cells();
    const auto gs = g.nonzero_cells();
    const double weight = f.cell_volume() * g.cell_volume();
    out.for_each_cell([&](const CellIndex& idx, const Vec& x) {
        const double bx = b.value_at(x);
        SumBuffer acc;
        for (const auto& fc : fs) {
            const double dy = dist(x, fc.center);
            const double by = b.value_at(fc.center);
            for (const auto& gc : gs) {
                if (pol && std::max(dy, dist(x, gc.center)) <= pol->epsilon) continue;
                const double symbol_diff = slot == 1 ? bx - by : bx - b.value_at(gc.center);
                if (symbol_diff == 0.0) {
                    // The zero weight also shields the diagonal in the
                    // constant-symbol case.
                    continue;
                }
                acc.add(symbol_diff * kernel.eval(x, fc.center, gc.center) * fc.value * gc.value);
            }
        }
        out.at(idx) = acc.total() * weight;
    });
    return out;
}

struct MaximalTruncationResult {
    LatticeFunction upper_envelope;     // sup over the list of |T_eps|
    double cotlar_constant = 0;         // max of envelope / (|T_{eps_min}| + Mf Mg)
    std::int64_t uncovered_points = 0;  // points where the envelope is positive but the bound is zero
};

// Pointwise supremum of |T_eps(f, g)| over the given truncation radii, with
// a measured constant for the pointwise domination by the smallest
// truncation plus the product of maximal functions.  The domination is only
// measured at evaluation points inside both data boxes, where the sampled
// maximal functions are meaningful.
inline MaximalTruncationResult maximal_truncation(const KernelSpec& kernel, const LatticeFunction& f,
                                                  const LatticeFunction& g,
                                                  const std::vector<double>& epsilons,
                                                  const Cube& eval_box) {
    if (epsilons.empty()) throw validation_error("maximal_truncation: empty radius list");
    if (!std::is_sorted(epsilons.begin(), epsilons.end()))
        throw validation_error("maximal_truncation: radii must be sorted ascending");
    detail::validate_policy({epsilons.front()}, f.spacing());

    MaximalTruncationResult result;
    LatticeFunction smallest = apply_truncated(kernel, f, g, TruncationPolicy{epsilons.front()}, eval_box);
    result.upper_envelope = smallest;
    result.upper_envelope.abs_inplace();
    for (std::size_t i = 1; i < epsilons.size(); ++i) {
        const LatticeFunction t = apply_truncated(kernel, f, g, TruncationPolicy{epsilons[i]}, eval_box);
        auto env = result.upper_envelope.values();
        auto tv = t.values();
        for (std::size_t j = 0; j < env.size(); ++j) env[j] = std::max(env[j], std::abs(tv[j]));
    }

    const LatticeFunction mf = maximal_function(f);
    const LatticeFunction mg = maximal_function(g);
    result.upper_envelope.for_each_cell([&](const CellIndex& idx, const Vec& x) {
        if (!f.box().contains(x) || !g.box().contains(x)) return;
        const double envelope = result.upper_envelope.at(idx);
        const double den = std::abs(smallest.value_at(x)) + mf.value_at(x) * mg.value_at(x);
        if (den > 0) {
            result.cotlar_constant = std::max(result.cotlar_constant, envelope / den);
        } else if (envelope > 0) {
            ++result.uncovered_points;
        }
    });
    return result;
}

// Positive companion operator with kernel |x-y|^alpha / (|x-y| + |x-z|)^{2d},
// applied to |f| and |g|; cells within two widths of the full singularity
// are always excluded.
inline LatticeFunction fractional_integral(double alpha, const LatticeFunction& f,
                                           const LatticeFunction& g, const Cube& eval_box) {
    const int d = f.dim();
    if (!(alpha > 0.0) || !(alpha < 2.0 * d))
        throw validation_error("fractional_integral: exponent must lie in (0, 2d)");
    detail::require_aligned(f, g, "fractional_integral");
    LatticeFunction out(eval_box, f.spacing());
    if (!f.aligned_with(out))
        throw validation_error("fractional_integral: evaluation box is not on the data lattice");

    const double exclusion = 2.0 * f.spacing();
    const auto fs = f.nonzero_cells();
    const auto gs = g.nonzero_cells();
    const double weight = f.cell_volume() * g.cell_volume();
    out.for_each_cell([&](const CellIndex& idx, const Vec& x) {
        SumBuffer acc;
        for (const auto& fc : fs) {
            const double dy = dist(x, fc.center);
            for (const auto& gc : gs) {
                const double dz = dist(x, gc.center);
                if (std::max(dy, dz) <= exclusion) continue;
                acc.add(std::pow(dy, alpha) / detail::ipow(dy + dz, 2 * d) *
                        std::abs(fc.value) * std::abs(gc.value));
            }
        }
        out.at(idx) = acc.total() * weight;
    });
    return out;
}

// Plain L2 pairing sum f g h^d over the overlap, used by the estimators.
inline double l2_pairing(const LatticeFunction& f, const LatticeFunction& g) {
    detail::require_aligned(f, g, "l2_pairing");
    SumBuffer acc;
    for (const auto& cell : f.nonzero_cells()) {
        const double gv = g.value_at(cell.center);
        if (gv != 0.0) acc.add(cell.value * gv);
    }
    return acc.total() * f.cell_volume();
}

} // namespace bsio
