#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsio/operators.hpp"
#include "bsio/symbols.hpp"

using namespace bsio;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace {

LatticeFunction bump(const Cube& support, double h, double value) {
    auto f = LatticeFunction::indicator(support, h);
    f.scale(value);
    return f;
}

} // namespace

TEST_CASE("truncated application reduces to the kernel on single cells") {
    const auto k = KernelSpec::riesz(1, 0);
    const auto f = bump(Cube(Vec(1), 0.25), 0.25, 2.0);
    const auto g = bump(Cube(Vec(1, {0.75}), 0.25), 0.25, -3.0);
    const Cube eval_box(Vec(1, {0.25}), 0.25);

    const auto t = apply_truncated(k, f, g, std::nullopt, eval_box);
    REQUIRE(t.cell_count() == 1);
    // K(0.375, 0.125, 0.875) = 0.25 / 0.75^3, times 2 * (-3) * h^2.
    REQUIRE_THAT(t.at({0}), WithinRel(-2.0 / 9.0, 1e-13));
}

TEST_CASE("the truncation radius excludes by the larger of the two distances") {
    const auto k = KernelSpec::riesz(1, 0);
    const auto f = bump(Cube(Vec(1), 0.25), 0.25, 1.0);
    const auto g = bump(Cube(Vec(1, {1.75}), 0.25), 0.25, 1.0);
    const Cube eval_box(Vec(1, {0.25}), 0.25); // x = 0.375: distances 0.25 and 1.5

    const auto kept = apply_truncated(k, f, g, TruncationPolicy{1.25}, eval_box);
    REQUIRE(kept.at({0}) != 0.0); // the near distance 0.25 alone would be excluded
    const auto cut = apply_truncated(k, f, g, TruncationPolicy{1.5}, eval_box);
    REQUIRE(cut.at({0}) == 0.0); // the rule is strict: max distance must exceed epsilon
}

TEST_CASE("operator inputs are validated") {
    const auto k = KernelSpec::riesz(1, 0);
    const auto f = bump(Cube(Vec(1), 0.25), 0.25, 1.0);
    const auto g = bump(Cube(Vec(1, {0.75}), 0.25), 0.25, 1.0);
    const Cube eval_box(Vec(1, {0.25}), 0.25);

    REQUIRE_THROWS_WITH(apply_truncated(k, f, g, TruncationPolicy{0.25}, eval_box),
                        ContainsSubstring("two cell widths"));
    REQUIRE_NOTHROW(apply_truncated(k, f, g, TruncationPolicy{0.5}, eval_box));

    const auto off_grid = bump(Cube(Vec(1, {0.1}), 0.25), 0.25, 1.0);
    REQUIRE_THROWS_WITH(apply_truncated(k, f, off_grid, std::nullopt, eval_box),
                        ContainsSubstring("incompatible lattices"));
    REQUIRE_THROWS_AS(apply_truncated(k, f, g, std::nullopt, Cube(Vec(1, {0.1}), 0.25)),
                      validation_error);

    // Full sums are refused when an evaluation point meets both supports.
    REQUIRE_THROWS_WITH(apply_truncated(k, f, f, std::nullopt, Cube(Vec(1), 0.25)),
                        ContainsSubstring("truncation policy"));
}

TEST_CASE("pairings agree with applying and then integrating") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 1.0 / 16.0;
    const auto f1 = bump(Cube(Vec(1), 0.25), h, 1.5);
    const auto f2 = bump(Cube(Vec(1, {0.25}), 0.25), h, -1.0);
    const auto f0 = bump(Cube(Vec(1, {0.75}), 0.25), h, 2.0);

    const auto p = pairing(k, f1, f2, f0);
    REQUIRE_FALSE(p.policy.has_value());
    REQUIRE(p.quadrature_cells == 4 * 4 * 4);

    const auto t = apply_truncated(k, f1, f2, std::nullopt, Cube(Vec(1, {0.75}), 0.25));
    REQUIRE_THAT(p.value, WithinRel(l2_pairing(t, f0), 1e-12));
}

TEST_CASE("adjoint re-associations of a separated pairing are bitwise identical") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 1.0 / 16.0;
    const auto f1 = LatticeFunction::sample(Cube(Vec(1), 0.25), h,
                                            [](const Vec& x) { return std::sin(9.0 * x[0]); });
    const auto f2 = LatticeFunction::sample(Cube(Vec(1, {0.5}), 0.25), h,
                                            [](const Vec& x) { return x[0] - 0.3; });
    const auto f0 = LatticeFunction::sample(Cube(Vec(1, {1.0}), 0.25), h,
                                            [](const Vec& x) { return std::cos(4.0 * x[0]); });

    const auto base = pairing(k, f1, f2, f0);
    const auto first = pairing(k.adjoint(1), f0, f2, f1);
    const auto second = pairing(k.adjoint(2), f1, f0, f2);
    REQUIRE(base.value == first.value);
    REQUIRE(base.value == second.value);
    REQUIRE(base.quadrature_cells == first.quadrature_cells);
    REQUIRE(base.quadrature_cells == second.quadrature_cells);
}

TEST_CASE("pairings without separation demand a policy") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 1.0 / 16.0;
    const auto f1 = bump(Cube(Vec(1), 0.25), h, 1.0);
    const auto f0 = bump(Cube(Vec(1, {0.25}), 0.25), h, 1.0); // touching f1
    REQUIRE_THROWS_WITH(pairing(k, f1, f1, f0), ContainsSubstring("not separated"));
    REQUIRE_NOTHROW(pairing(k, f1, f1, f0, TruncationPolicy{2.0 * h}));
}

TEST_CASE("constant symbols commute exactly") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 1.0 / 16.0;
    const auto b = make_symbol("constant", Cube(Vec(1, {-1.0}), 3.0), h,
                               {.constant_value = 4.2});
    const auto f = bump(Cube(Vec(1), 0.5), h, 1.0);
    const auto g = bump(Cube(Vec(1, {0.25}), 0.5), h, 2.0);
    for (int slot : {1, 2}) {
        const auto c = commutator(slot, b, f, g, k, TruncationPolicy{2.5 * h}, Cube(Vec(1), 1.0));
        for (double v : c.values()) REQUIRE(v == 0.0);
    }
}

TEST_CASE("commutators weight the kernel by symbol differences per slot") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 0.25;
    const auto b = make_symbol("linear", Cube(Vec(1, {-1.0}), 3.0), h);
    const auto f = bump(Cube(Vec(1), 0.25), h, 2.0);
    const auto g = bump(Cube(Vec(1, {0.75}), 0.25), h, -3.0);
    const Cube eval_box(Vec(1, {0.25}), 0.25);

    const double x = 0.375, y = 0.125, z = 0.875;
    const double kernel_sum = -2.0 / 9.0; // K * f * g * h^2 from the single-cell case
    const auto c1 = commutator(1, b, f, g, k, std::nullopt, eval_box);
    REQUIRE_THAT(c1.at({0}), WithinRel((x - y) * kernel_sum, 1e-12));
    const auto c2 = commutator(2, b, f, g, k, std::nullopt, eval_box);
    REQUIRE_THAT(c2.at({0}), WithinRel((x - z) * kernel_sum, 1e-12));
}

TEST_CASE("commutators validate slot and symbol coverage") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 0.25;
    const auto b = make_symbol("linear", Cube(Vec(1, {-1.0}), 3.0), h);
    const auto f = bump(Cube(Vec(1), 0.25), h, 1.0);
    const auto g = bump(Cube(Vec(1, {0.75}), 0.25), h, 1.0);
    const Cube eval_box(Vec(1, {0.25}), 0.25);

    REQUIRE_THROWS_AS(commutator(0, b, f, g, k, std::nullopt, eval_box), validation_error);
    REQUIRE_THROWS_AS(commutator(3, b, f, g, k, std::nullopt, eval_box), validation_error);

    const auto small = make_symbol("linear", Cube(Vec(1, {0.25}), 0.75), h);
    REQUIRE_THROWS_WITH(commutator(1, small, f, g, k, std::nullopt, eval_box),
                        ContainsSubstring("weighted support"));
    const auto tiny = make_symbol("linear", Cube(Vec(1), 0.25), h);
    REQUIRE_THROWS_WITH(commutator(1, tiny, f, g, k, std::nullopt, Cube(Vec(1, {0.5}), 0.25)),
                        ContainsSubstring("evaluation points"));
}

TEST_CASE("maximal truncations envelope every radius and stay dominated") {
    const auto k = KernelSpec::riesz(1, 0);
    const double h = 1.0 / 16.0;
    const auto f = bump(Cube(Vec(1), 0.25), h, 1.0);
    const auto g = bump(Cube(Vec(1, {0.5}), 0.25), h, 1.0);
    const Cube eval_box(Vec(1), 1.0);
    const std::vector<double> radii{2.0 * h, 4.0 * h, 8.0 * h};

    // Data live on [0, 1) so the sampled maximal functions cover every
    // evaluation point.
    const auto fw = LatticeFunction::sample(Cube(Vec(1), 1.0), h, [&](const Vec& x) {
        return f.value_at(x);
    });
    const auto gw = LatticeFunction::sample(Cube(Vec(1), 1.0), h, [&](const Vec& x) {
        return g.value_at(x);
    });
    const auto res = maximal_truncation(k, fw, gw, radii, eval_box);
    REQUIRE(res.uncovered_points == 0);
    REQUIRE(res.cotlar_constant > 0.0);

    for (double eps : radii) {
        const auto t = apply_truncated(k, fw, gw, TruncationPolicy{eps}, eval_box);
        t.for_each_cell([&](const CellIndex& idx, const Vec&) {
            REQUIRE(res.upper_envelope.at(idx) >= std::abs(t.at(idx)) - 1e-15);
        });
    }

    REQUIRE_THROWS_AS(maximal_truncation(k, fw, gw, {}, eval_box), validation_error);
    REQUIRE_THROWS_AS(maximal_truncation(k, fw, gw, {4.0 * h, 2.0 * h}, eval_box),
                      validation_error);
    REQUIRE_THROWS_AS(maximal_truncation(k, fw, gw, {h}, eval_box), validation_error);
}

TEST_CASE("the positive companion integrates its closed-form kernel") {
    const double h = 1.0 / 16.0;
    const auto f = bump(Cube(Vec(1), h), h, 2.0);
    const auto g = bump(Cube(Vec(1, {0.5}), h), h, 3.0);
    const Cube eval_cell(Vec(1, {0.25}), h);

    const auto frac = fractional_integral(0.5, f, g, eval_cell);
    // dy = dz = 0.25: sqrt(0.25) / 0.5^2 * 2 * 3 * h^2.
    REQUIRE_THAT(frac.at({0}), WithinRel(0.046875, 1e-13));

    // Signs are discarded.
    const auto fneg = bump(Cube(Vec(1), h), h, -2.0);
    const auto same = fractional_integral(0.5, fneg, g, eval_cell);
    REQUIRE(same.at({0}) == frac.at({0}));

    // Near the joint singularity the companion is cut, not summed.
    const auto close_eval = fractional_integral(0.5, f, f, Cube(Vec(1), h));
    REQUIRE(close_eval.at({0}) == 0.0);

    REQUIRE_THROWS_AS(fractional_integral(0.0, f, g, eval_cell), validation_error);
    REQUIRE_THROWS_AS(fractional_integral(2.0, f, g, eval_cell), validation_error);
}

TEST_CASE("plain pairings sum over the support intersection") {
    const double h = 1.0 / 16.0;
    const auto f = bump(Cube(Vec(1), 0.5), h, 2.0);
    const auto g = bump(Cube(Vec(1, {0.25}), 0.5), h, 3.0);
    REQUIRE_THAT(l2_pairing(f, g), WithinRel(1.5, 1e-14));
    REQUIRE(l2_pairing(f, bump(Cube(Vec(1, {0.5}), 0.25), h, 5.0)) == 0.0);

    const auto off_grid = bump(Cube(Vec(1, {0.01}), 0.5), h, 1.0);
    REQUIRE_THROWS_AS(l2_pairing(f, off_grid), validation_error);
}
