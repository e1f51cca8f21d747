#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bsio/geometry.hpp"

using namespace bsio;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("vector construction rejects out-of-range dimensions") {
    REQUIRE_THROWS_AS(Vec(0), validation_error);
    REQUIRE_THROWS_AS(Vec(kMaxDim + 1), validation_error);
    REQUIRE_NOTHROW(Vec(kMaxDim));
}

TEST_CASE("vector arithmetic and norms") {
    const Vec a(2, {3.0, 4.0});
    REQUIRE(a.norm2() == 25.0);
    REQUIRE(a.norm() == 5.0);
    const Vec b(2, {1.0, -1.0});
    const Vec s = a + b;
    REQUIRE(s[0] == 4.0);
    REQUIRE(s[1] == 3.0);
    const Vec d = a - b;
    REQUIRE(d[0] == 2.0);
    REQUIRE(d[1] == 5.0);
    const Vec t = a * 0.5;
    REQUIRE(t[0] == 1.5);
    REQUIRE(t[1] == 2.0);
    REQUIRE(dist(a, b) == std::sqrt(4.0 + 25.0));
    const Vec u = splat(3, 2.0);
    REQUIRE(u.d == 3);
    REQUIRE(u[2] == 2.0);
}

TEST_CASE("cube geometry basics") {
    const Cube q(Vec(2, {1.0, 2.0}), 0.5);
    REQUIRE_THAT(q.volume(), WithinRel(0.25, 1e-15));
    REQUIRE_THAT(q.diameter(), WithinRel(0.5 * std::sqrt(2.0), 1e-15));
    const Vec c = q.center();
    REQUIRE(c[0] == 1.25);
    REQUIRE(c[1] == 2.25);

    REQUIRE(q.contains(q.corner));
    Vec edge = q.corner;
    edge[0] += q.side;
    REQUIRE_FALSE(q.contains(edge));

    const Cube inner(Vec(2, {1.1, 2.1}), 0.2);
    REQUIRE(q.contains_cube(inner));
    REQUIRE_FALSE(inner.contains_cube(q));
    REQUIRE(q.contains_cube(q));

    const Cube off(Vec(2, {1.4, 2.4}), 0.5);
    REQUIRE(q.intersects(off));
    const Cube far_cube(Vec(2, {3.0, 3.0}), 0.5);
    REQUIRE_FALSE(q.intersects(far_cube));

    REQUIRE(q.same_extent(Cube(Vec(2, {1.0, 2.0}), 0.5)));
    REQUIRE_FALSE(q.same_extent(off));
}

TEST_CASE("cube validation and printing") {
    REQUIRE_THROWS_AS(Cube(Vec(1), -1.0), validation_error);
    const Cube q(Vec(2, {0.0, 0.25}), 2.0);
    const std::string s = cube_to_string(q);
    REQUIRE_THAT(s, ContainsSubstring("side"));
    REQUIRE_THAT(s, ContainsSubstring("0.25"));
}

TEST_CASE("cube distance vanishes exactly on contact") {
    const Cube a(Vec(1, {0.0}), 1.0);
    REQUIRE(cube_distance(a, Cube(Vec(1, {1.0}), 1.0)) == 0.0);
    REQUIRE(cube_distance(a, Cube(Vec(1, {0.5}), 1.0)) == 0.0);
    REQUIRE(cube_distance(a, Cube(Vec(1, {3.0}), 1.0)) == 2.0);

    const Cube p(Vec(2, {0.0, 0.0}), 1.0);
    const Cube r(Vec(2, {2.0, 2.0}), 1.0);
    REQUIRE_THAT(cube_distance(p, r), WithinRel(std::sqrt(2.0), 1e-15));
}

TEST_CASE("translated cubes drop their grid identity") {
    DyadicGrid grid = DyadicGrid::standard(1);
    Cube q = grid.cube(0, {0});
    REQUIRE(q.grid_ref.has_value());
    const Cube moved = q.translated(Vec(1, {0.25}));
    REQUIRE_FALSE(moved.grid_ref.has_value());
    REQUIRE(moved.corner[0] == 0.25);
}

TEST_CASE("dyadic grid cubes, ownership, and parents") {
    const DyadicGrid grid = DyadicGrid::standard(2);
    REQUIRE(grid.label() == "std");

    const Cube q = grid.cube(-1, {3, -2});
    REQUIRE(q.side == 0.5);
    REQUIRE(q.corner[0] == 1.5);
    REQUIRE(q.corner[1] == -1.0);
    REQUIRE(grid.owns(q));

    const Vec x(2, {0.3, 0.7});
    const Cube holder = grid.containing(x, -2);
    REQUIRE(holder.side == 0.25);
    REQUIRE(holder.contains(x));

    const Cube up = grid.parent(holder);
    REQUIRE(up.side == 0.5);
    REQUIRE(up.contains_cube(holder));
    REQUIRE(grid.owns(up));

    REQUIRE_FALSE(grid.owns(Cube(Vec(2, {0.1, 0.0}), 0.5)));
    REQUIRE_FALSE(grid.owns(Cube(Vec(2, {0.0, 0.0}), 0.75)));
    REQUIRE_THROWS_AS(grid.level_of(Cube(Vec(2), 3.0)), error);
}

TEST_CASE("shifted grids own shifted cubes only") {
    const DyadicGrid shifted(1, Vec(1, {1.0 / 3.0}), "shift");
    const Cube q = shifted.cube(0, {0});
    REQUIRE_THAT(q.corner[0], WithinAbs(1.0 / 3.0, 1e-15));
    REQUIRE(shifted.owns(q));
    REQUIRE_FALSE(DyadicGrid::standard(1).owns(q));
}

TEST_CASE("largest dyadic subcube fits inside the target") {
    const DyadicGrid grid = DyadicGrid::standard(1);
    const Cube target(Vec(1, {0.3}), 1.0);
    const Cube best = largest_dyadic_subcube(grid, target);
    REQUIRE(best.side == 0.5);
    REQUIRE(best.corner[0] == 0.5);
    REQUIRE(target.contains_cube(best));
    REQUIRE(grid.owns(best));

    const Cube aligned(Vec(1, {2.0}), 1.0);
    const Cube whole = largest_dyadic_subcube(grid, aligned);
    REQUIRE(whole.side == 1.0);
    REQUIRE(whole.corner[0] == 2.0);
}
