#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsio/modulus.hpp"
#include "oracle_quadrature.hpp"

using namespace bsio;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

TEST_CASE("power moduli evaluate, clamp, and integrate in closed form") {
    const auto w = ModulusOfContinuity::power(0.5);
    REQUIRE(w(0.0) == 0.0);
    REQUIRE_THAT(w(0.25), WithinRel(0.5, 1e-15));
    REQUIRE(w(4.0) == w(1.0)); // clamped past one
    REQUIRE_THAT(w.dini_integral(), WithinRel(2.0, 1e-12));

    REQUIRE_THAT(ModulusOfContinuity::power(0.25).dini_integral(), WithinRel(4.0, 1e-12));
    REQUIRE_THROWS_AS(ModulusOfContinuity::power(0.0), validation_error);
    REQUIRE_THROWS_AS(ModulusOfContinuity::power(-1.0), validation_error);
}

TEST_CASE("linear modulus has unit Dini mass") {
    const auto w = ModulusOfContinuity::linear();
    REQUIRE(w(0.5) == 0.5);
    REQUIRE(w(2.0) == 1.0);
    REQUIRE_THAT(w.dini_integral(), WithinRel(1.0, 1e-15));
}

TEST_CASE("tabulated moduli interpolate through the origin") {
    const auto w = ModulusOfContinuity::tabulated({{0.25, 0.5}, {1.0, 1.0}});
    REQUIRE(w(0.0) == 0.0);
    REQUIRE_THAT(w(0.125), WithinRel(0.25, 1e-15)); // first segment has slope 2
    REQUIRE_THAT(w(0.625), WithinRel(0.75, 1e-15)); // halfway up the second segment
    REQUIRE(w(3.0) == 1.0);
}

TEST_CASE("tabulated Dini integral matches adaptive quadrature") {
    const auto w = ModulusOfContinuity::tabulated({{0.25, 0.5}, {1.0, 1.0}});
    const double direct =
        oracle::integrate([&](double t) { return w(t) / t; }, 1e-9, 1.0, 1e-10);
    REQUIRE_THAT(w.dini_integral(), WithinRel(direct, 1e-7));
    REQUIRE_THAT(w.dini_integral(), WithinRel(1.0 + std::log(4.0) / 3.0, 1e-12));

    // A table stopping short of t = 1 pays a logarithmic tail at its last value.
    const auto short_table = ModulusOfContinuity::tabulated({{0.5, 1.0}});
    const double tail =
        oracle::integrate([&](double t) { return short_table(t) / t; }, 1e-9, 1.0, 1e-10);
    REQUIRE_THAT(short_table.dini_integral(), WithinRel(tail, 1e-7));
}

TEST_CASE("tabulated moduli validate their tables") {
    REQUIRE_THROWS_AS(ModulusOfContinuity::tabulated({}), validation_error);
    REQUIRE_THROWS_AS(ModulusOfContinuity::tabulated({{0.5, 1.0}, {0.25, 2.0}}),
                      validation_error);
    REQUIRE_THROWS_AS(ModulusOfContinuity::tabulated({{0.5, 1.0}, {1.5, 2.0}}),
                      validation_error);
    REQUIRE_THROWS_AS(ModulusOfContinuity::tabulated({{0.25, 1.0}, {0.5, 0.5}}),
                      validation_error);
    REQUIRE_THROWS_AS(ModulusOfContinuity::tabulated({{0.25, -0.5}}), validation_error);
}

TEST_CASE("subadditivity defect detects convex moduli") {
    REQUIRE(ModulusOfContinuity::linear().subadditivity_defect() <= 1.0 + 1e-12);
    REQUIRE(ModulusOfContinuity::power(0.5).subadditivity_defect() <= 1.0 + 1e-12);
    REQUIRE(ModulusOfContinuity::power(2.0).subadditivity_defect() > 1.5);
}

TEST_CASE("moduli describe their form") {
    REQUIRE_THAT(ModulusOfContinuity::power(0.5).describe(), ContainsSubstring("power"));
    REQUIRE_THAT(ModulusOfContinuity::linear().describe(), ContainsSubstring("linear"));
}
