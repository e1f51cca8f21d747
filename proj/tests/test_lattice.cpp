#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bsio/lattice.hpp"
#include "bsio/numeric.hpp"

using namespace bsio;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("lattice construction validates the box against the spacing") {
    REQUIRE_THROWS_AS(LatticeFunction(Cube(Vec(1), 1.0), 0.3), validation_error);
    REQUIRE_THROWS_AS(LatticeFunction(Cube(Vec(1), 1.0), 0.0), validation_error);
    REQUIRE_THROWS_AS(LatticeFunction(Cube(Vec(1), 1.0), -0.25), validation_error);
    const LatticeFunction f(Cube(Vec(2), 1.0), 0.25);
    REQUIRE(f.cells_per_axis() == 4);
    REQUIRE(f.cell_count() == 16);
    REQUIRE(f.cell_volume() == 0.0625);
}

TEST_CASE("sampling evaluates at cell centers") {
    const auto f =
        LatticeFunction::sample(Cube(Vec(1), 1.0), 0.25, [](const Vec& x) { return x[0]; });
    REQUIRE(f.at({0}) == 0.125);
    REQUIRE(f.at({3}) == 0.875);
    REQUIRE_THAT(f.sum(), WithinRel(2.0, 1e-15));
    REQUIRE_THAT(f.integral(), WithinRel(0.5, 1e-15)); // midpoint rule is exact on lines
}

TEST_CASE("indicator is one on every cell of its support") {
    const auto one = LatticeFunction::indicator(Cube(Vec(2, {0.5, 0.5}), 0.5), 0.25);
    REQUIRE(one.cell_count() == 4);
    for (double v : one.values()) REQUIRE(v == 1.0);
    REQUIRE_THAT(one.integral(), WithinRel(0.25, 1e-15));
}

TEST_CASE("point lookups map to cells and vanish outside the box") {
    const auto f =
        LatticeFunction::sample(Cube(Vec(1), 1.0), 0.25, [](const Vec& x) { return x[0]; });
    const auto idx = f.cell_of(Vec(1, {0.6}));
    REQUIRE(idx.has_value());
    REQUIRE((*idx)[0] == 2);
    REQUIRE(f.center(*idx)[0] == 0.625);
    REQUIRE(f.value_at(Vec(1, {0.6})) == 0.625);
    REQUIRE_FALSE(f.cell_of(Vec(1, {1.0})).has_value());
    REQUIRE(f.value_at(Vec(1, {-0.1})) == 0.0);
    REQUIRE(f.value_at(Vec(1, {7.0})) == 0.0);
}

TEST_CASE("cell ranges are exact on aligned cubes and clamp outside") {
    const LatticeFunction f(Cube(Vec(2), 1.0), 0.25);
    const auto r = f.cell_range(Cube(Vec(2, {0.25, 0.5}), 0.5));
    REQUIRE(r[0].lo == 1);
    REQUIRE(r[0].hi == 3);
    REQUIRE(r[1].lo == 2);
    REQUIRE(r[1].hi == 4);
    const auto clamped = f.cell_range(Cube(Vec(2, {-5.0, -5.0}), 20.0));
    REQUIRE(clamped[0].lo == 0);
    REQUIRE(clamped[0].hi == 4);
}

TEST_CASE("averages are exact on aligned cubes") {
    const auto f =
        LatticeFunction::sample(Cube(Vec(1), 1.0), 0.125, [](const Vec& x) { return x[0]; });
    REQUIRE_THAT(average(f, Cube(Vec(1, {0.5}), 0.5)), WithinRel(0.75, 1e-14));
    REQUIRE_THAT(average(f, f.box()), WithinRel(0.5, 1e-14));
    REQUIRE_THROWS_AS(average(f, Cube(Vec(1), 0.01)), validation_error);
}

TEST_CASE("martingale differences have mean zero and constant children") {
    const auto f = LatticeFunction::sample(Cube(Vec(2), 1.0), 0.125, [](const Vec& x) {
        return std::sin(3.0 * x[0]) + x[1] * x[1];
    });
    const Cube q(Vec(2, {0.25, 0.5}), 0.5);
    const auto delta = martingale_difference(f, q);
    REQUIRE(delta.box().same_extent(q));
    REQUIRE_THAT(delta.integral(), WithinAbs(0.0, 1e-14));
    // Constant on the lower-left child.
    const Cube child(q.corner, q.side / 2.0);
    const double v0 = delta.value_at(child.center());
    REQUIRE_THAT(average(f, child) - average(f, q), WithinRel(v0, 1e-12));

    REQUIRE_THROWS_AS(martingale_difference(f, Cube(Vec(2, {0.3, 0.5}), 0.5)), validation_error);
    REQUIRE_THROWS_AS(martingale_difference(f, Cube(Vec(2, {0.25, 0.5}), 0.125)),
                      validation_error);
}

TEST_CASE("norms follow the lattice measure") {
    const auto one = LatticeFunction::indicator(Cube(Vec(2), 0.5), 0.125);
    REQUIRE_THAT(one.lp_norm(2.0), WithinRel(0.5, 1e-14)); // |Q|^{1/2}
    REQUIRE_THAT(one.lp_norm(1.0), WithinRel(0.25, 1e-14));
    REQUIRE(one.sup_norm() == 1.0);
    REQUIRE_THROWS_AS(one.lp_norm(0.0), validation_error);
    REQUIRE_THROWS_AS(one.lp_norm(-1.0), validation_error);
}

TEST_CASE("alignment compares spacing and corner offsets") {
    const LatticeFunction f(Cube(Vec(1), 1.0), 0.25);
    REQUIRE(f.aligned_with(LatticeFunction(Cube(Vec(1, {0.75}), 0.5), 0.25)));
    REQUIRE_FALSE(f.aligned_with(LatticeFunction(Cube(Vec(1, {0.1}), 0.5), 0.25)));
    REQUIRE_FALSE(f.aligned_with(LatticeFunction(Cube(Vec(1), 1.0), 0.5)));
}

TEST_CASE("in-place updates and accumulation") {
    auto f = LatticeFunction::sample(Cube(Vec(1), 1.0), 0.25,
                                     [](const Vec& x) { return x[0] - 0.5; });
    auto g = f;
    g.scale(-2.0);
    REQUIRE(g.at({0}) == 0.75);
    g.abs_inplace();
    REQUIRE(g.at({0}) == 0.75);
    REQUIRE(g.at({3}) == 0.75);

    auto total = LatticeFunction(Cube(Vec(1), 1.0), 0.25);
    total.accumulate(f, 2.0);
    REQUIRE(total.at({3}) == 0.75);

    const auto outside = LatticeFunction::indicator(Cube(Vec(1, {0.75}), 0.5), 0.25);
    REQUIRE_THROWS_AS(total.accumulate(outside), validation_error);
}

TEST_CASE("nonzero cells report centers and values") {
    auto f = LatticeFunction(Cube(Vec(1), 1.0), 0.25);
    f.at({2}) = 3.0;
    const auto cells = f.nonzero_cells();
    REQUIRE(cells.size() == 1);
    REQUIRE(cells[0].idx[0] == 2);
    REQUIRE(cells[0].center[0] == 0.625);
    REQUIRE(cells[0].value == 3.0);
}

TEST_CASE("binary round trip preserves every bit") {
    const auto f = LatticeFunction::sample(Cube(Vec(2, {-0.5, 0.25}), 1.0), 0.125,
                                           [](const Vec& x) { return std::exp(x[0] * x[1]); });
    const std::string path = temp_path("bsio_lattice_roundtrip.bin");
    f.save_binary(path);
    const auto g = LatticeFunction::load_binary(path);
    REQUIRE(g.aligned_with(f));
    REQUIRE(g.cell_count() == f.cell_count());
    for (std::int64_t i = 0; i < f.cell_count(); ++i)
        REQUIRE(g.values()[static_cast<std::size_t>(i)] ==
                f.values()[static_cast<std::size_t>(i)]);
    std::remove(path.c_str());
}

TEST_CASE("truncated binary files are rejected") {
    const auto f = LatticeFunction::indicator(Cube(Vec(1), 1.0), 0.25);
    const std::string path = temp_path("bsio_lattice_truncated.bin");
    f.save_binary(path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    REQUIRE_THROWS_AS(LatticeFunction::load_binary(path), validation_error);
    std::remove(path.c_str());
}

TEST_CASE("csv round trip in one dimension") {
    const auto f = LatticeFunction::sample(Cube(Vec(1, {2.0}), 1.0), 0.125,
                                           [](const Vec& x) { return 1.0 / x[0]; });
    const std::string path = temp_path("bsio_lattice_roundtrip.csv");
    f.save_csv(path);
    {
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        REQUIRE(header == "x,value");
    }
    const auto g = LatticeFunction::load_csv(path);
    REQUIRE(g.aligned_with(f));
    for (std::int64_t i = 0; i < f.cell_count(); ++i)
        REQUIRE_THAT(g.values()[static_cast<std::size_t>(i)],
                     WithinRel(f.values()[static_cast<std::size_t>(i)], 1e-15));
    std::remove(path.c_str());

    const auto plane = LatticeFunction::indicator(Cube(Vec(2), 1.0), 0.5);
    REQUIRE_THROWS_AS(plane.save_csv(temp_path("bsio_lattice_2d.csv")), validation_error);
}

TEST_CASE("prefix block sums match direct summation") {
    const auto f = LatticeFunction::sample(Cube(Vec(2), 1.0), 0.25, [](const Vec& x) {
        return std::sin(7.0 * x[0]) - x[1];
    });
    const detail::AbsPrefix abs_prefix(f);
    const detail::AbsPrefix signed_prefix(f, false);

    double direct_abs = 0, direct_signed = 0;
    f.for_each_cell([&](const CellIndex& idx, const Vec&) {
        if (idx[0] >= 1 && idx[0] < 3 && idx[1] >= 0 && idx[1] < 2) {
            direct_abs += std::abs(f.at(idx));
            direct_signed += f.at(idx);
        }
    });
    REQUIRE_THAT(abs_prefix.block_sum({1, 0}, {3, 2}), WithinRel(direct_abs, 1e-13));
    REQUIRE_THAT(signed_prefix.block_sum({1, 0}, {3, 2}), WithinAbs(direct_signed, 1e-13));
}

TEST_CASE("support box bounds the nonzero cells") {
    auto f = LatticeFunction(Cube(Vec(2), 1.0), 0.25);
    REQUIRE_FALSE(support_box(f).has_value());
    f.at({1, 0}) = 1.0;
    f.at({2, 3}) = -1.0;
    const auto box = support_box(f);
    REQUIRE(box.has_value());
    REQUIRE(box->corner[0] == 0.25);
    REQUIRE(box->corner[1] == 0.0);
    REQUIRE(box->side == 1.0); // largest axis span: 4 cells in axis 1
}

TEST_CASE("maximal function dominates the function and stays below its sup") {
    const auto f = LatticeFunction::sample(Cube(Vec(1), 1.0), 1.0 / 16.0, [](const Vec& x) {
        return x[0] < 0.5 ? 2.0 : -0.5;
    });
    const auto m = maximal_function(f);
    f.for_each_cell([&](const CellIndex& idx, const Vec&) {
        REQUIRE(m.at(idx) >= std::abs(f.at(idx)) - 1e-12);
        REQUIRE(m.at(idx) <= f.sup_norm() + 1e-12);
    });
    // The global average is sampled at the top level.
    const double global = std::abs(average(f, f.box()));
    f.for_each_cell(
        [&](const CellIndex& idx, const Vec&) { REQUIRE(m.at(idx) >= global - 1e-12); });
}

TEST_CASE("pairwise summation matches long double accumulation") {
    std::vector<double> xs;
    Rng rng(7);
    long double acc = 0;
    for (int i = 0; i < 10000; ++i) {
        xs.push_back(rng.uniform(-1.0, 1.0) * std::pow(10.0, i % 7));
        acc += xs.back();
    }
    REQUIRE_THAT(pairwise_sum(xs), WithinRel(static_cast<double>(acc), 1e-12));

    SumBuffer buf;
    for (double v : xs) buf.add(v);
    REQUIRE_THAT(buf.total(), WithinRel(static_cast<double>(acc), 1e-12));
    REQUIRE(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("random streams are deterministic per seed") {
    Rng a(42), b(42), c(43);
    bool diverged = false;
    for (int i = 0; i < 100; ++i) {
        const double u = a.uniform(0.0, 1.0);
        REQUIRE(u == b.uniform(0.0, 1.0));
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        diverged = diverged || u != c.uniform(0.0, 1.0);
    }
    REQUIRE(diverged);
    Rng d(5);
    for (int i = 0; i < 50; ++i) {
        const auto k = d.below(7);
        REQUIRE(k < 7);
    }
}

TEST_CASE("slope fits recover exact linear data") {
    const std::vector<double> xs{0.0, 1.0, 2.0, 3.0, 4.0};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.5 * x - 1.0);
    REQUIRE_THAT(fit_slope(xs, ys), WithinRel(2.5, 1e-12));
}
