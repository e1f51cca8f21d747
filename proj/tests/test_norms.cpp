#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "bsio/norms.hpp"
#include "bsio/symbols.hpp"

using namespace bsio;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("exponent arithmetic and regime classification") {
    REQUIRE(sigma_exponent({2.0, 2.0}) == 1.0);
    REQUIRE_THAT(sigma_exponent({4.0, 4.0, 4.0}), WithinRel(4.0 / 3.0, 1e-15));
    REQUIRE_THROWS_AS(sigma_exponent({}), validation_error);
    REQUIRE_THROWS_AS(sigma_exponent({2.0, -1.0}), validation_error);

    REQUIRE(classify_exponents(2, 2, 1) == ExponentRegime::diagonal);
    REQUIRE(classify_exponents(2, 2, 2) == ExponentRegime::sub_diagonal);
    REQUIRE(classify_exponents(4, 4, 1) == ExponentRegime::super_diagonal);
    REQUIRE_THROWS_AS(classify_exponents(0, 2, 1), validation_error);
    REQUIRE(std::string(regime_name(ExponentRegime::super_diagonal)) == "super-diagonal");

    REQUIRE_THAT(super_diagonal_s(4, 4, 1), WithinRel(2.0, 1e-12));
    REQUIRE_THROWS_AS(super_diagonal_s(2, 2, 1), validation_error);
}

TEST_CASE("oscillation is the mean absolute deviation on the covered cells") {
    const double h = 1.0 / 16.0;
    const Cube box(Vec(1), 1.0);
    const auto b = make_symbol("step", box, h);
    REQUIRE(oscillation(b, box) == 0.5);
    REQUIRE(oscillation(b, Cube(Vec(1), 0.5)) == 0.0);
    REQUIRE_THROWS_WITH(oscillation(b, Cube(Vec(1, {0.26}), 0.001)),
                        ContainsSubstring("under-resolved"));
}

TEST_CASE("cube samplers march dyadic sides coarse-to-fine") {
    const Cube box(Vec(1), 1.0);
    const double h = 1.0 / 16.0;
    const CubeSampler sampler{.k_min = -2, .k_max = 0, .stride = 2, .cap = 512};
    const auto cubes = sampler.cubes(box, h);
    REQUIRE(cubes.size() == 11); // 1 + 3 + 7
    REQUIRE(cubes.front().side == 1.0);
    REQUIRE(cubes.back().side == 0.25);
    for (const auto& q : cubes) REQUIRE(box.contains_cube(q));

    const CubeSampler capped{.k_min = -2, .k_max = 0, .stride = 2, .cap = 5};
    REQUIRE(capped.cubes(box, h).size() == 5);

    // Sides below the lattice spacing are never emitted.
    const CubeSampler deep{.k_min = -10, .k_max = 0, .stride = 2, .cap = 4096};
    for (const auto& q : deep.cubes(box, h)) REQUIRE(q.side >= h);

    REQUIRE_THROWS_AS((CubeSampler{.k_min = 1, .k_max = 0}).cubes(box, h), validation_error);
    REQUIRE_THROWS_AS((CubeSampler{.stride = 0}).cubes(box, h), validation_error);
}

TEST_CASE("sampled oscillation suprema find the jump") {
    const double h = 1.0 / 64.0;
    const auto b = make_symbol("step", Cube(Vec(1), 1.0), h);
    const CubeSampler sampler{.k_min = -3, .k_max = 0, .stride = 2, .cap = 512};
    const auto est = bmo_norm_est(b, sampler);
    REQUIRE(est.value == 0.5); // a cube bisected by the jump maximizes the deviation
    REQUIRE(est.cubes_sampled > 0);
    REQUIRE(est.witness.contains(Vec(1, {0.5})));

    const auto flat = bmo_norm_est(make_symbol("constant", Cube(Vec(1), 1.0), h), sampler);
    REQUIRE(flat.value == 0.0);
}

TEST_CASE("scaled oscillation suprema are flat for linear symbols") {
    const double h = 1.0 / 64.0;
    const auto b = make_symbol("linear", Cube(Vec(1), 1.0), h);
    const CubeSampler sampler{.k_min = -3, .k_max = 0, .stride = 2, .cap = 512};
    // Mean absolute deviation of evenly spaced centers over side s is s/4.
    const auto est = holder_seminorm_est(b, 1.0, sampler);
    REQUIRE_THAT(est.value, WithinRel(0.25, 1e-12));
    REQUIRE_THROWS_AS(holder_seminorm_est(b, 0.0, sampler), validation_error);
    REQUIRE_THROWS_AS(holder_seminorm_est(b, 1.1, sampler), validation_error);
}

TEST_CASE("constant-optimized Ls distances hit their closed forms") {
    const double h = 1.0 / 64.0;
    const Cube box(Vec(1), 1.0);
    const auto quarter = LatticeFunction::sample(box, h, [](const Vec& x) {
        return x[0] < 0.25 ? 1.0 : 0.0;
    });

    const auto l1 = dot_ls_norm(quarter, 1.0, box);
    REQUIRE_THAT(l1.value, WithinAbs(0.25, 1e-7)); // median constant is 0
    REQUIRE_THAT(l1.witness, WithinAbs(0.0, 1e-5));

    const auto l2 = dot_ls_norm(quarter, 2.0, box);
    REQUIRE_THAT(l2.value, WithinAbs(std::sqrt(0.1875), 1e-7)); // mean constant is 1/4
    REQUIRE_THAT(l2.witness, WithinAbs(0.25, 1e-5));

    const auto lin = make_symbol("linear", box, h);
    const double n = 64.0;
    const double variance = h * h * (n * n - 1.0) / 12.0;
    REQUIRE_THAT(dot_ls_norm(lin, 2.0, box).value, WithinAbs(std::sqrt(variance), 1e-7));

    const auto flat = dot_ls_norm(make_symbol("constant", box, h, {.constant_value = 3.0}), 2.0, box);
    REQUIRE(flat.value == 0.0);
    REQUIRE(flat.witness == 3.0);

    REQUIRE_THROWS_AS(dot_ls_norm(quarter, 0.5, box), validation_error);
    REQUIRE_THROWS_WITH(dot_ls_norm(quarter, 2.0, Cube(Vec(1, {0.26}), 0.001)),
                        ContainsSubstring("under-resolved"));
}

TEST_CASE("weak quasinorms maximize over level sets, skipping ties") {
    const double h = 0.25;
    LatticeFunction u(Cube(Vec(1), 1.0), h);
    u.at({0}) = 8.0;
    u.at({1}) = -4.0;
    u.at({2}) = 2.0;
    REQUIRE(weak_lr_quasinorm(u, 1.0) == 2.0);

    u.at({0}) = 4.0; // tie with |u(1)|: the level-set measure must merge them
    REQUIRE(weak_lr_quasinorm(u, 1.0) == 2.0);
    REQUIRE(weak_lr_quasinorm(LatticeFunction(Cube(Vec(1), 1.0), h), 1.0) == 0.0);
    REQUIRE_THROWS_AS(weak_lr_quasinorm(u, 0.0), validation_error);
}

TEST_CASE("block grids carry exact symbol block averages") {
    const double h = 1.0 / 16.0;
    const auto b = make_symbol("linear", Cube(Vec(1), 1.0), h);
    const detail::AbsPrefix prefix(b, false);
    const auto grid = detail::make_block_grid(b, prefix, Cube(Vec(1), 0.5), 4);
    REQUIRE(grid.count == 4);
    REQUIRE(grid.block_volume == 0.125);
    for (std::int64_t i = 0; i < grid.count; ++i) {
        REQUIRE(grid.centers[static_cast<std::size_t>(i)][0] ==
                (static_cast<double>(i) + 0.5) * 0.125);
        REQUIRE(grid.symbol_avg[static_cast<std::size_t>(i)] ==
                grid.centers[static_cast<std::size_t>(i)][0]);
    }
    // A non-dividing block target falls back to the largest divisor.
    REQUIRE(detail::make_block_grid(b, prefix, Cube(Vec(1), 0.5), 3).count == 2);
}

namespace {

OffSupportConfig small_offsupport_config() {
    OffSupportConfig cfg;
    cfg.separation = 4;
    cfg.function_draws = 2;
    cfg.quadrature_blocks = 8;
    cfg.base_sampler = CubeSampler{.k_min = 0, .k_max = 0, .stride = 2, .cap = 8};
    return cfg;
}

} // namespace

TEST_CASE("off-support estimates vanish for constant symbols and see jumps") {
    const double h = 1.0 / 64.0;
    const Cube wide(Vec(1, {-2.0}), 6.0);
    const auto k = KernelSpec::riesz(1, 0);
    const auto cfg = small_offsupport_config();

    const auto flat = offsupport_norm_est(make_symbol("constant", wide, h), k, cfg);
    REQUIRE(flat.triples > 0);
    REQUIRE(flat.value == 0.0);

    SymbolParams sp;
    sp.center = Vec(1, {0.0});
    const auto b = make_symbol("step", wide, h, sp);
    const auto strong = offsupport_norm_est(b, k, cfg);
    REQUIRE(strong.value > 0.0);
    REQUIRE(strong.skipped == 0);
    REQUIRE(strong.witness.draw >= 0);

    const auto weak = weak_offsupport_est(b, k, cfg);
    REQUIRE(weak.value > 0.0);
    REQUIRE(weak.value <= strong.value * (1.0 + 1e-12));
}

TEST_CASE("off-support estimates validate their plan and count escapes") {
    const double h = 1.0 / 64.0;
    const auto k = KernelSpec::riesz(1, 0);
    const auto b = make_symbol("linear", Cube(Vec(1), 1.0), h);

    auto bad = small_offsupport_config();
    bad.separation = 2;
    REQUIRE_THROWS_WITH(offsupport_norm_est(b, k, bad), ContainsSubstring("at least 3"));
    auto slot = small_offsupport_config();
    slot.slot = 3;
    REQUIRE_THROWS_AS(offsupport_norm_est(b, k, slot), validation_error);
    auto gamma = small_offsupport_config();
    gamma.gamma = 1.0;
    REQUIRE_THROWS_WITH(weak_offsupport_est(b, k, gamma), ContainsSubstring("gamma"));
    REQUIRE_NOTHROW(offsupport_norm_est(b, k, gamma)); // strong variant ignores gamma

    // The symbol box is too small for any separated triple.
    const auto est = offsupport_norm_est(b, k, small_offsupport_config());
    REQUIRE(est.triples == 0);
    REQUIRE(est.skipped > 0);
    REQUIRE(est.value == 0.0);
}

TEST_CASE("dilation sweeps decay linearly for smooth symbols") {
    const double h = 1.0 / 64.0;
    const auto k = KernelSpec::riesz(1, 0);
    const auto b = make_symbol("linear", Cube(Vec(1, {-4.0}), 8.0), h);
    auto cfg = small_offsupport_config();

    const auto points = offsupport_scale_profile(b, k, cfg, Cube(Vec(1), 1.0), 3);
    REQUIRE(points.size() == 3);
    REQUIRE(points[0].side == 1.0);
    REQUIRE(points[1].side == 0.5);
    REQUIRE(points[2].side == 0.25);
    for (std::size_t j = 0; j + 1 < points.size(); ++j) {
        REQUIRE(points[j].pairing > points[j + 1].pairing);
        REQUIRE(points[j + 1].pairing > 0.0);
    }
    // For d = 1 and (p, q, r) = (2, 2, 1) the normalization is 1 / |Q0| = 1 / |Q1|.
    for (const auto& pt : points) REQUIRE_THAT(pt.normalized, WithinRel(pt.per_mass, 1e-12));

    REQUIRE_THROWS_WITH(
        offsupport_scale_profile(make_symbol("linear", Cube(Vec(1), 1.0), h), k, cfg,
                                 Cube(Vec(1), 1.0), 1),
        ContainsSubstring("leaves the symbol box at side"));
    REQUIRE_THROWS_AS(offsupport_scale_profile(b, k, cfg, Cube(Vec(1), 1.0), 0),
                      validation_error);
}

TEST_CASE("stacked ledger estimates divide by stacked support norms") {
    StackedEntry e1;
    e1.pairing = 3.0;
    e1.sup = {2.0, 1.0, 1.0};
    e1.support = {std::vector<CellIndex>{{0}}, {{0}}, {{1}}};
    StackedEntry e2;
    e2.pairing = -1.0;
    e2.sup = {4.0, 1.0, 2.0};
    e2.support = {std::vector<CellIndex>{{1}}, {{0}, {1}}, {{2}}};

    const auto est = superdiag_offsupport_est({e1, e2}, 2.0, 2.0, 1.0, 0.5, 1);
    REQUIRE(est.pairing_sum == 4.0);
    REQUIRE(est.stack_norms[0] == 4.0); // r = 1: sup of the stacked x-side
    REQUIRE_THAT(est.stack_norms[1], WithinRel(std::sqrt(2.5), 1e-14));
    REQUIRE_THAT(est.stack_norms[2], WithinRel(std::sqrt(2.5), 1e-14));
    REQUIRE_THAT(est.value, WithinRel(0.4, 1e-12));

    const auto dual = superdiag_offsupport_est({e1, e2}, 2.0, 2.0, 2.0, 0.5, 1);
    REQUIRE_THAT(dual.stack_norms[0], WithinRel(std::sqrt(10.0), 1e-14));

    REQUIRE_THROWS_WITH(superdiag_offsupport_est({}, 2, 2, 1, 0.5, 1),
                        ContainsSubstring("empty ledger"));
    REQUIRE_THROWS_AS(superdiag_offsupport_est({e1}, 2, 2, 0.5, 0.5, 1), validation_error);
    StackedEntry hollow = e1;
    hollow.support[1].clear();
    REQUIRE_THROWS_WITH(superdiag_offsupport_est({hollow}, 2, 2, 1, 0.5, 1),
                        ContainsSubstring("empty support"));
    StackedEntry silent = e1;
    silent.sup = {0.0, 0.0, 0.0};
    REQUIRE_THROWS_WITH(superdiag_offsupport_est({silent}, 2, 2, 1, 0.5, 1),
                        ContainsSubstring("degenerate normalization"));
}
