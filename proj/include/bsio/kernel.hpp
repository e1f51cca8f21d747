#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsio/geometry.hpp"
#include "bsio/modulus.hpp"
#include "bsio/numeric.hpp"

namespace bsio {

namespace detail {

// Integer powers by repeated multiplication, so scaling the base by a power
// of two scales the result exactly (glibc pow does not promise that).
inline double ipow(double base, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= base;
    return r;
}

// Uniform direction on the sphere by rejection from the cube; deterministic
// under the caller's generator state.
inline Vec unit_vector(Rng& rng, int d) {
    for (;;) {
        Vec w(d);
        for (int i = 0; i < d; ++i) w[i] = rng.uniform(-1.0, 1.0);
        const double n = w.norm();
        if (n > 1e-3 && n <= 1.0) return w * (1.0 / n);
    }
}

} // namespace detail

// A bilinear singular kernel K(x, y, z) on R^d x R^d x R^d, finite off the
// diagonal x = y = z, together with its declared size constant and modulus
// of continuity.  An argument permutation carried with the kernel realizes
// the two partial adjoints without touching the underlying closed form, so
// adjoint kernels reuse the exact same arithmetic.
class KernelSpec {
public:
    enum class Family { riesz, rough, custom };

    // Sphere function for the rough family: receives the two d-dimensional
    // blocks of a unit vector of R^{2d}.
    using SphereFunction = std::function<double(const Vec&, const Vec&)>;
    using Evaluator = std::function<double(const Vec&, const Vec&, const Vec&)>;

    // K(x,y,z) = (x_i - y_i) / (|x-y| + |x-z|)^{2d+1}.
    static KernelSpec riesz(int d, int component,
                            ModulusOfContinuity omega = ModulusOfContinuity::linear()) {
        check_dim(d);
        if (component < 0 || component >= d)
            throw validation_error("KernelSpec: component index out of range");
        KernelSpec k;
        k.family_ = Family::riesz;
        k.d_ = d;
        k.component_ = component;
        k.size_constant_ = 1.0;
        k.omega_ = std::move(omega);
        k.name_ = "riesz[" + std::to_string(component) + "]";
        return k;
    }

    // K(x,y,z) = S((x-y, x-z)') / |(x-y, x-z)|^{2d} with S zero-homogeneous,
    // described by its values on the unit sphere of R^{2d}.  theta0/theta2
    // declare a continuity direction where S does not vanish; sup_abs bounds
    // |S| on the sphere.
    static KernelSpec rough_homogeneous(int d, SphereFunction sphere, Vec theta0, Vec theta2,
                                        double sup_abs, ModulusOfContinuity omega,
                                        std::string name = "rough") {
        check_dim(d);
        if (theta0.d != d || theta2.d != d)
            throw validation_error("KernelSpec: continuity direction has the wrong dimension");
        const double n2 = theta0.norm2() + theta2.norm2();
        if (std::abs(n2 - 1.0) > 1e-9)
            throw validation_error("KernelSpec: continuity direction must be a unit vector of R^{2d}");
        if (!(sup_abs > 0))
            throw validation_error("KernelSpec: sphere function bound must be positive");
        KernelSpec k;
        k.family_ = Family::rough;
        k.d_ = d;
        k.sphere_ = std::move(sphere);
        const double inv = 1.0 / std::sqrt(n2);
        k.theta0_ = theta0 * inv;
        k.theta2_ = theta2 * inv;
        const double at_theta = k.sphere_(k.theta0_, k.theta2_);
        if (at_theta == 0.0)
            throw validation_error("KernelSpec: sphere function vanishes at the declared direction");
        k.theta_value_ = at_theta;
        // The size bound in terms of |x-y| + |x-z| picks up the norm
        // equivalence factor between the sum and the Euclidean length.
        k.size_constant_ = std::pow(2.0, d) * sup_abs;
        k.omega_ = std::move(omega);
        k.name_ = std::move(name);
        return k;
    }

    // Arbitrary evaluator with declared constants; verifiers report against
    // the declaration but never reject it.
    static KernelSpec custom(int d, Evaluator evaluator, double size_constant,
                             ModulusOfContinuity omega, std::string name = "custom") {
        check_dim(d);
        if (!evaluator) throw validation_error("KernelSpec: missing evaluator");
        if (!(size_constant > 0))
            throw validation_error("KernelSpec: size constant must be positive");
        KernelSpec k;
        k.family_ = Family::custom;
        k.d_ = d;
        k.custom_ = std::move(evaluator);
        k.size_constant_ = size_constant;
        k.omega_ = std::move(omega);
        k.name_ = std::move(name);
        return k;
    }

    // Custom kernel of the separable shape P(|x-y| / D) / D^{2d} with
    // D = |x-y| + |x-z| and P piecewise linear on [0, 1].  Homogeneous of
    // degree -2d and strongly non-degenerate whenever P(1/2) != 0.
    static KernelSpec custom_profile(int d, std::vector<std::pair<double, double>> table,
                                     ModulusOfContinuity omega = ModulusOfContinuity::linear()) {
        if (table.size() < 2)
            throw validation_error("KernelSpec: profile table needs at least two points");
        double prev = -1.0, sup = 0.0;
        for (const auto& [t, p] : table) {
            if (!(t >= 0.0) || t > 1.0 || !(t > prev))
                throw validation_error("KernelSpec: profile abscissae must increase within [0, 1]");
            prev = t;
            sup = std::max(sup, std::abs(p));
        }
        if (!(sup > 0)) throw validation_error("KernelSpec: profile is identically zero");
        const int dd = d;
        auto shared = std::make_shared<std::vector<std::pair<double, double>>>(std::move(table));
        Evaluator ev = [dd, shared](const Vec& x, const Vec& y, const Vec& z) {
            const double a = dist(x, y);
            const double den = a + dist(x, z);
            const double u = a / den;
            const auto& pts = *shared;
            double val = pts.front().second;
            if (u >= pts.back().first) {
                val = pts.back().second;
            } else if (u > pts.front().first) {
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    if (u <= pts[i].first) {
                        const auto& [t0, p0] = pts[i - 1];
                        const auto& [t1, p1] = pts[i];
                        val = p0 + (p1 - p0) * (u - t0) / (t1 - t0);
                        break;
                    }
                }
            }
            return val / detail::ipow(den, 2 * dd);
        };
        return custom(d, std::move(ev), sup, std::move(omega), "profile");
    }

    Family family() const { return family_; }
    int dimension() const { return d_; }
    int component() const { return component_; }
    double size_constant() const { return size_constant_; }
    const ModulusOfContinuity& modulus() const { return omega_; }
    const std::array<int, 3>& permutation() const { return perm_; }
    const Vec& theta0() const { return theta0_; }
    const Vec& theta2() const { return theta2_; }
    double theta_value() const { return theta_value_; }
    const std::string& name() const { return name_; }

    double sphere_value(const Vec& u, const Vec& v) const {
        if (family_ != Family::rough)
            throw validation_error("sphere_value: rough kernels only");
        return sphere_(u, v);
    }

    std::string describe() const {
        if (perm_ == std::array<int, 3>{0, 1, 2}) return name_;
        std::string s = name_ + " @ (";
        for (int i = 0; i < 3; ++i) s += std::to_string(perm_[static_cast<std::size_t>(i)]);
        return s + ")";
    }

    double eval(const Vec& x, const Vec& y, const Vec& z) const {
        const std::array<const Vec*, 3> args{&x, &y, &z};
        return base_eval(*args[static_cast<std::size_t>(perm_[0])],
                         *args[static_cast<std::size_t>(perm_[1])],
                         *args[static_cast<std::size_t>(perm_[2])]);
    }

    // The underlying closed form with the argument permutation unwound;
    // shared by all adjoint forms of the same kernel, which is what makes
    // their pairings bitwise-reproducible.
    double eval_base(const Vec& x, const Vec& y, const Vec& z) const { return base_eval(x, y, z); }

    // Exchanges x with the slot-th input argument: slot 1 gives
    // K*(x,y,z) = K(y,x,z), slot 2 gives K*(x,y,z) = K(z,y,x).
    KernelSpec adjoint(int slot) const {
        if (slot != 1 && slot != 2) throw validation_error("adjoint: slot must be 1 or 2");
        return permuted(slot == 1 ? std::array<int, 3>{1, 0, 2} : std::array<int, 3>{2, 1, 0});
    }

    // Exchanges the two input arguments: K'(x,y,z) = K(x,z,y).  Running the
    // second-slot commutator study means running the first-slot machinery
    // on this kernel with the input functions swapped.
    KernelSpec swapped_inputs() const { return permuted({0, 2, 1}); }

    // Evaluation counter, shared across every copy and adjoint of the same
    // kernel so resource accounting survives permutations.
    std::uint64_t evals() const { return *eval_count_; }
    void reset_evals() const { *eval_count_ = 0; }

private:
    KernelSpec() = default;

    static void check_dim(int d) {
        if (d < 1 || d > kMaxDim) throw validation_error("KernelSpec: dimension out of range");
    }

    KernelSpec permuted(const std::array<int, 3>& tau) const {
        KernelSpec k = *this;
        for (int j = 0; j < 3; ++j)
            k.perm_[static_cast<std::size_t>(j)] = tau[static_cast<std::size_t>(perm_[static_cast<std::size_t>(j)])];
        return k;
    }

    double base_eval(const Vec& x, const Vec& y, const Vec& z) const {
        ++*eval_count_;
        const double a = dist(x, y);
        const double b = dist(x, z);
        if (a == 0.0 && b == 0.0)
            throw validation_error("kernel singularity: evaluation on the diagonal x = y = z");
        switch (family_) {
        case Family::riesz:
            return (x[component_] - y[component_]) / detail::ipow(a + b, 2 * d_ + 1);
        case Family::rough: {
            const double r = std::sqrt(a * a + b * b);
            const double inv = 1.0 / r;
            return sphere_((x - y) * inv, (x - z) * inv) / detail::ipow(r, 2 * d_);
        }
        case Family::custom:
            return custom_(x, y, z);
        }
        return 0.0;
    }

    Family family_ = Family::riesz;
    int d_ = 1;
    int component_ = 0;
    double size_constant_ = 1.0;
    ModulusOfContinuity omega_ = ModulusOfContinuity::linear();
    std::array<int, 3> perm_{0, 1, 2};
    SphereFunction sphere_;
    Vec theta0_, theta2_;
    double theta_value_ = 0.0;
    Evaluator custom_;
    std::string name_ = "riesz[0]";
    std::shared_ptr<std::uint64_t> eval_count_ = std::make_shared<std::uint64_t>(0);
};

inline double eval_kernel(const KernelSpec& k, const Vec& x, const Vec& y, const Vec& z) {
    return k.eval(x, y, z);
}

inline KernelSpec adjoint_kernel(const KernelSpec& k, int slot) { return k.adjoint(slot); }

namespace detail {

// Shared sampler for the axiom checks: a base point in [-1, 1]^d and two
// offsets with log-uniform radii, with every fourth sample collapsed onto
// one of the partial diagonals y = z or z = x.
struct TripleSample { Vec x, y, z; };

inline TripleSample sample_triple(Rng& rng, int d, std::int64_t k) {
    TripleSample t;
    t.y = Vec(d);
    for (int i = 0; i < d; ++i) t.y[i] = rng.uniform(-1.0, 1.0);
    const double r1 = std::exp2(rng.uniform(-8.0, 2.0));
    const double r2 = std::exp2(rng.uniform(-8.0, 2.0));
    const Vec u = unit_vector(rng, d);
    const Vec v = unit_vector(rng, d);
    t.x = t.y + u * r1;
    switch (k % 4) {
    case 0: t.z = t.y; break;
    case 1: t.z = t.x; break;
    default: t.z = t.y + v * r2; break;
    }
    return t;
}

} // namespace detail

struct SizeReport {
    double worst_ratio = 0;  // max |K| * (|x-y| + |x-z|)^{2d} over the samples
    double mean_ratio = 0;
    std::int64_t samples = 0;
    bool within_declared = false; // worst_ratio <= C_K (up to rounding)
};

inline SizeReport verify_size(const KernelSpec& k, std::int64_t sample_count,
                              std::uint64_t seed = 1) {
    if (sample_count < 1) throw validation_error("verify_size: sample_count must be >= 1");
    Rng rng(seed);
    SizeReport rep;
    SumBuffer acc;
    for (std::int64_t i = 0; i < sample_count; ++i) {
        const auto t = detail::sample_triple(rng, k.dimension(), i);
        const double den = dist(t.x, t.y) + dist(t.x, t.z);
        const double ratio = std::abs(k.eval(t.x, t.y, t.z)) * detail::ipow(den, 2 * k.dimension());
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        acc.add(ratio);
        ++rep.samples;
    }
    rep.mean_ratio = acc.total() / static_cast<double>(rep.samples);
    rep.within_declared = rep.worst_ratio <= k.size_constant() * (1.0 + 1e-12);
    return rep;
}

struct RegularityReport {
    double worst_modulus_ratio = 0; // over the kernel and both adjoints
    std::array<double, 3> per_form{}; // base, slot-1 adjoint, slot-2 adjoint
    std::int64_t samples = 0;
    std::int64_t skipped = 0; // steps violating the proximity precondition
};

// Measures |G(x,..) - G(x',..)| (|x-y| + |x-z|)^{2d} / omega(|x-x'| / (|x-y| + |x-z|))
// over random triples and admissible steps |x-x'| <= max(|x-y|, |x-z|)/2, for
// the kernel and both of its adjoints.
inline RegularityReport verify_regularity(const KernelSpec& k, std::int64_t sample_count,
                                          std::uint64_t seed = 1) {
    if (sample_count < 1) throw validation_error("verify_regularity: sample_count must be >= 1");
    const std::array<KernelSpec, 3> forms{k, k.adjoint(1), k.adjoint(2)};
    Rng rng(seed);
    RegularityReport rep;
    for (std::int64_t i = 0; i < sample_count; ++i) {
        const auto t = detail::sample_triple(rng, k.dimension(), i);
        const double reach = std::max(dist(t.x, t.y), dist(t.x, t.z)) / 2.0;
        const double step = reach * std::exp2(rng.uniform(-9.0, 0.0));
        const Vec xp = t.x + detail::unit_vector(rng, k.dimension()) * step;
        const double den = dist(t.x, t.y) + dist(t.x, t.z);
        const double w = k.modulus()(dist(t.x, xp) / den);
        if (dist(t.x, xp) > reach * (1.0 + 1e-12) || w == 0.0) {
            ++rep.skipped;
            continue;
        }
        for (std::size_t g = 0; g < 3; ++g) {
            const double diff = std::abs(forms[g].eval(t.x, t.y, t.z) - forms[g].eval(xp, t.y, t.z));
            const double ratio = diff * detail::ipow(den, 2 * k.dimension()) / w;
            rep.per_form[g] = std::max(rep.per_form[g], ratio);
            rep.worst_modulus_ratio = std::max(rep.worst_modulus_ratio, ratio);
        }
        ++rep.samples;
    }
    return rep;
}

struct ProbeOptions {
    double accept_fraction = 1e-3; // witness threshold c in |K| >= c r^{-2d}
};

struct ProbeResult {
    Vec x, z;
    double witness_value = 0;
    double scale = 0;
};

namespace detail {

/// Fixed direction set for the custom-kernel search: axis directions plus
// diagonal combinations, normalized.
inline std::vector<Vec> probe_directions(int d) {
    std::vector<Vec> dirs;
    for (int i = 0; i < d; ++i) {
        Vec e(d);
        e[i] = 1.0;
        dirs.push_back(e);
        e[i] = -1.0;
        dirs.push_back(e);
    }
    if (d >= 2) {
        const int lim = 1 << d;
        for (int mask = 0; mask < lim; ++mask) {
            Vec w(d);
            for (int i = 0; i < d; ++i) w[i] = (mask & (1 << i)) ? -1.0 : 1.0;
            dirs.push_back(w * (1.0 / w.norm()));
        }
    }
    return dirs;
}

} // namespace detail

// Finds points completing the given anchor to a triple with max pairwise
// distance > r and |K| >= c r^{-2d}.  The anchor fills the y argument for
// slot 1 and the z argument for slot 2.  Closed-form placements serve the
// riesz and rough families (pushed through the argument permutation);
// custom kernels get a deterministic spherical-lattice search over radii in
// [r, 3r], first with the two remaining points coincident, then apart.
inline ProbeResult probe_nondegeneracy(const KernelSpec& k, const Vec& anchor, double r,
                                       int slot = 1, ProbeOptions opts = {}) {
    if (!(r > 0)) throw validation_error("probe_nondegeneracy: scale must be positive");
    if (anchor.d != k.dimension()) throw validation_error("probe_nondegeneracy: anchor dimension mismatch");
    if (slot != 1 && slot != 2) throw validation_error("probe_nondegeneracy: slot must be 1 or 2");
    const int d = k.dimension();

    if (k.family() != KernelSpec::Family::custom) {
        // Witness triple for the un-permuted closed form, as offsets from a
        // floating center: riesz takes (c + 2r e_i, c, c), rough takes
        // (c + 2r t0, c, c + 2r(t0 - t2)).
        std::array<Vec, 3> off{Vec(d), Vec(d), Vec(d)};
        if (k.family() == KernelSpec::Family::riesz) {
            off[0][k.component()] = 2.0 * r;
        } else {
            off[0] = k.theta0() * (2.0 * r);
            off[2] = (k.theta0() - k.theta2()) * (2.0 * r);
        }
        // Base argument j lands in user slot perm[j]; pick the center so the
        // user-facing anchor slot matches the requested anchor.
        const auto& perm = k.permutation();
        std::array<int, 3> inv{};
        for (int j = 0; j < 3; ++j) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] = j;
        const int anchor_slot = slot == 1 ? 1 : 2;
        const Vec center = anchor - off[static_cast<std::size_t>(inv[static_cast<std::size_t>(anchor_slot)])];
        std::array<Vec, 3> user{Vec(d), Vec(d), Vec(d)};
        for (int j = 0; j < 3; ++j)
            user[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] = center + off[static_cast<std::size_t>(j)];
        ProbeResult res;
        res.x = user[0];
        res.z = slot == 1 ? user[2] : user[1];
        res.scale = r;
        res.witness_value = std::abs(slot == 1 ? k.eval(user[0], anchor, user[2])
                                               : k.eval(user[0], user[1], anchor));
        return res;
    }

    const double floor_value = opts.accept_fraction / detail::ipow(r, 2 * d);
    const auto dirs = detail::probe_directions(d);
    const std::array<double, 5> radii{1.05, 1.4, 1.9, 2.4, 2.95};
    double scanned_max = 0;
    auto consider = [&](const Vec& x, const Vec& other) -> std::optional<ProbeResult> {
        const double v = std::abs(slot == 1 ? k.eval(x, anchor, other) : k.eval(x, other, anchor));
        scanned_max = std::max(scanned_max, v);
        if (v < floor_value) return std::nullopt;
        ProbeResult res;
        res.x = x;
        res.z = other;
        res.witness_value = v;
        res.scale = r;
        return res;
    };
    // First pass collapses the free pair onto the anchor (the reduction to
    // triples of the shape (x, y, y)); the second pass separates them.
    for (double t : radii) {
        for (const Vec& u : dirs) {
            const Vec x = anchor + u * (t * r);
            if (auto hit = consider(x, anchor)) return *hit;
        }
    }
    for (double t : radii) {
        for (const Vec& u : dirs) {
            const Vec x = anchor + u * (t * r);
            for (double s : {0.5, 1.0}) {
                for (const Vec& v : dirs) {
                    const Vec other = anchor + v * (s * r);
                    if (dist(x, other) == 0.0) continue;
                    if (auto hit = consider(x, other)) return *hit;
                }
            }
        }
    }
    throw validation_error("probe_nondegeneracy: no witness found (scanned maximum |K| = " +
                           std::to_string(scanned_max) + ", needed " + std::to_string(floor_value) + ")");
}

// Average deviation of the sphere function from its value at the declared
// continuity direction, over directions perturbed within a ball of radius
// 2/A; Monte Carlo with the given sample count.
inline double lebesgue_point_deviation(const KernelSpec& k, double separation,
                                       std::int64_t samples, std::uint64_t seed = 1) {
    if (k.family() != KernelSpec::Family::rough)
        throw validation_error("lebesgue_point_deviation: rough kernels only");
    if (!(separation > 1.0)) throw validation_error("lebesgue_point_deviation: separation must exceed 1");
    if (samples < 1) throw validation_error("lebesgue_point_deviation: sample count must be >= 1");
    const int d = k.dimension();
    Rng rng(seed);
    const double radius = 2.0 / separation;
    SumBuffer acc;
    for (std::int64_t i = 0; i < samples; ++i) {
        Vec w0(d), w2(d);
        for (;;) {
            double n2 = 0;
            for (int j = 0; j < d; ++j) {
                w0[j] = rng.uniform(-radius, radius);
                w2[j] = rng.uniform(-radius, radius);
            }
            n2 = w0.norm2() + w2.norm2();
            if (n2 <= radius * radius) break;
        }
        Vec u0 = k.theta0() + w0;
        Vec u2 = k.theta2() + w2;
        const double inv = 1.0 / std::sqrt(u0.norm2() + u2.norm2());
        acc.add(std::abs(k.theta_value() - k.sphere_value(u0 * inv, u2 * inv)));
    }
    return acc.total() / static_cast<double>(samples);
}

} // namespace bsio
