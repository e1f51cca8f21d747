#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <unordered_set>
#include <vector>

#include "bsio/geometry.hpp"
#include "bsio/lattice.hpp"

namespace bsio {

// Families of cubes with designated major subsets, tracked exactly as sets
// of lattice cells.  Cell coordinates are absolute integer coordinates on
// the lattice {origin + h k}, so cubes far from the original box (after
// reflection) need no ambient array.
struct SparseEntry {
    Cube cube;
    int parent = -1; // index of the next family cube up, -1 at the top
    int generation = 0;
    std::vector<CellIndex> major;
};

struct SparseFamily {
    int d = 1;
    double h = 1.0;
    Vec origin;
    double declared_gamma = 0.5;
    std::vector<SparseEntry> entries;
};

namespace detail {

inline std::uint64_t pack_cell(const CellIndex& c, int d) {
    std::uint64_t key = 0;
    for (int i = 0; i < d; ++i) {
        const std::int64_t v = c[static_cast<std::size_t>(i)];
        if (v < -(1ll << 20) || v >= (1ll << 20))
            throw validation_error("sparse family: cell coordinate out of packable range");
        key = (key << 21) | static_cast<std::uint64_t>(v + (1ll << 20));
    }
    return key;
}

inline CellIndex cube_origin_cell(const Cube& q, double h, const Vec& origin, const char* who) {
    CellIndex lo{};
    for (int i = 0; i < q.dim(); ++i) {
        const double t = (q.corner[i] - origin[i]) / h;
        const auto k = static_cast<std::int64_t>(std::llround(t));
        if (std::abs(t - static_cast<double>(k)) > 1e-9)
            throw validation_error(std::string(who) + ": cube corner is not lattice-aligned");
        lo[static_cast<std::size_t>(i)] = k;
    }
    return lo;
}

inline std::int64_t cube_cells_per_axis(const Cube& q, double h, const char* who) {
    const double t = q.side / h;
    const auto n = static_cast<std::int64_t>(std::llround(t));
    if (n < 1 || std::abs(t - static_cast<double>(n)) > 1e-9)
        throw validation_error(std::string(who) + ": cube side is not a whole number of cells");
    return n;
}

inline std::int64_t cube_cell_count(const Cube& q, double h, const char* who) {
    const std::int64_t n = cube_cells_per_axis(q, h, who);
    std::int64_t total = 1;
    for (int i = 0; i < q.dim(); ++i) total *= n;
    return total;
}

inline void for_each_cube_cell(const Cube& q, double h, const Vec& origin,
                               const std::function<void(const CellIndex&)>& fn) {
    const CellIndex lo = cube_origin_cell(q, h, origin, "sparse family");
    const std::int64_t n = cube_cells_per_axis(q, h, "sparse family");
    CellIndex idx{};
    std::function<void(int)> loop = [&](int axis) {
        if (axis == q.dim()) {
            fn(idx);
            return;
        }
        const std::int64_t base = lo[static_cast<std::size_t>(axis)];
        for (std::int64_t k = 0; k < n; ++k) {
            idx[static_cast<std::size_t>(axis)] = base + k;
            loop(axis + 1);
        }
    };
    loop(0);
}

} // namespace detail

struct StoppingOptions {
    int max_generations = 64; // recursion depth cap; reports carry the tail mass
};

namespace detail {

struct StoppingBuild {
    const LatticeFunction* f;
    AbsPrefix* prefix;
    SparseFamily* family;
    StoppingOptions opts;
    double tail_mass = 0;

    double avg_abs(const Cube& q) const {
        const CellIndex lo = cube_origin_cell(q, f->spacing(), f->box().corner, "stopping_family");
        const std::int64_t n = cube_cells_per_axis(q, f->spacing(), "stopping_family");
        CellIndex hi = lo;
        for (int i = 0; i < q.dim(); ++i) hi[static_cast<std::size_t>(i)] += n;
        std::int64_t cells = 1;
        for (int i = 0; i < q.dim(); ++i) cells *= n;
        return prefix->block_sum(lo, hi) / static_cast<double>(cells);
    }

    // Maximal dyadic subcubes of `node` (strictly below it) whose |f|-average
    // exceeds twice `threshold`; the scan descends to single cells.
    void collect_maximal(const Cube& node, double threshold, std::vector<Cube>& out) const {
        const int d = node.dim();
        const double half = node.side / 2.0;
        for (int mask = 0; mask < (1 << d); ++mask) {
            Cube child(node.corner, half);
            for (int i = 0; i < d; ++i)
                if (mask & (1 << i)) child.corner[i] += half;
            if (avg_abs(child) > 2.0 * threshold) {
                out.push_back(child);
            } else if (child.side / f->spacing() >= 2.0 - 1e-9) {
                collect_maximal(child, threshold, out);
            }
        }
    }

    int build(const Cube& q, int parent, int generation) {
        const int self = static_cast<int>(family->entries.size());
        family->entries.push_back({q, parent, generation, {}});

        std::vector<Cube> children;
        const double base = avg_abs(q);
        const bool at_resolution_floor = q.side / f->spacing() < 4.0 - 1e-9;
        const bool at_depth_cap = generation + 1 > opts.max_generations;
        if (base > 0 && !at_resolution_floor) {
            if (at_depth_cap) {
                tail_mass += base * q.volume();
            } else {
                collect_maximal(q, base, children);
            }
        }

        // E_q = q minus the selected children, as exact cells.
        std::unordered_set<std::uint64_t> removed;
        for (const Cube& c : children)
            for_each_cube_cell(c, f->spacing(), f->box().corner, [&](const CellIndex& cell) {
                removed.insert(pack_cell(cell, q.dim()));
            });
        std::vector<CellIndex> major;
        for_each_cube_cell(q, f->spacing(), f->box().corner, [&](const CellIndex& cell) {
            if (!removed.count(pack_cell(cell, q.dim()))) major.push_back(cell);
        });
        family->entries[static_cast<std::size_t>(self)].major = std::move(major);

        const auto n_cells = cube_cell_count(q, f->spacing(), "stopping_family");
        if (2 * static_cast<std::int64_t>(family->entries[static_cast<std::size_t>(self)].major.size()) < n_cells)
            throw error("stopping_family: selected children cover half the cube (internal invariant)");

        for (const Cube& c : children) {
            if (c.side / f->spacing() >= 2.0 - 1e-9) {
                build(c, self, generation + 1);
            } else {
                // Single cells join the family but cannot recurse.
                const int idx = static_cast<int>(family->entries.size());
                family->entries.push_back({c, self, generation + 1, {}});
                for_each_cube_cell(c, f->spacing(), f->box().corner, [&](const CellIndex& cell) {
                    family->entries[static_cast<std::size_t>(idx)].major.push_back(cell);
                });
            }
        }
        return self;
    }
};

} // namespace detail

struct StoppingResult {
    SparseFamily family;
    double tail_mass = 0; // L1 mass left undivided by the generation cap
};

// Calderon-Zygmund stopping family of f inside q: starting from q, the
// maximal dyadic subcubes where the |f|-average more than doubles, repeated
// inside each selected cube.  Majors are the cubes minus their selected
// children, which makes the family 1/2-sparse by exact cell counts.
inline StoppingResult stopping_family(const LatticeFunction& f, const Cube& q, StoppingOptions opts = {}) {
    detail::aligned_cells(f, q, "stopping_family");
    const std::int64_t n = detail::cube_cells_per_axis(q, f.spacing(), "stopping_family");
    if ((n & (n - 1)) != 0)
        throw validation_error("stopping_family: cube must span a power-of-two number of cells");
    // supported in q?
    for (const auto& cell : f.nonzero_cells())
        if (!q.contains(cell.center))
            throw validation_error("stopping_family: f has mass outside the root cube");

    StoppingResult result;
    result.family.d = f.dim();
    result.family.h = f.spacing();
    result.family.origin = f.box().corner;
    result.family.declared_gamma = 0.5;

    detail::AbsPrefix prefix(f);
    detail::StoppingBuild builder{&f, &prefix, &result.family, opts, 0.0};
    builder.build(q, -1, 0);
    result.tail_mass = builder.tail_mass;
    return result;
}

struct SparsePiece {
    Cube cube;          // the family cube this piece is attached to
    int entry = 0;      // index into the family
    LatticeFunction part;
};

struct SparseDecomposition {
    StoppingResult stopping;
    std::vector<SparsePiece> pieces;
    double sup_ratio = 0; // max over pieces of sup|f_P| / <|f|>_P
};

// Splits a zero-mean f on q into localized pieces f = sum_P f_P, one per
// stopping cube, by routing every martingale difference to the smallest
// stopping cube containing it.  Each piece has (numerically) zero mean and
// sup norm controlled by the local average of |f|.
inline SparseDecomposition sparse_decompose(const LatticeFunction& f, const Cube& q,
                                            StoppingOptions opts = {}) {
    const double mass_scale = f.sup_norm() * q.volume();
    if (mass_scale > 0) {
        const double mean = average(f, q) * q.volume();
        if (std::abs(mean) > 1e-10 * mass_scale)
            throw validation_error("sparse_decompose: f has nonzero mean on the root cube");
    }

    SparseDecomposition out;
    out.stopping = stopping_family(f, q, opts);
    const SparseFamily& family = out.stopping.family;

    // Locate entries by extent for ancestor switching during the descent.
    auto find_entry = [&](const Cube& c) -> int {
        for (std::size_t i = 0; i < family.entries.size(); ++i)
            if (family.entries[i].cube.same_extent(c)) return static_cast<int>(i);
        return -1;
    };

    out.pieces.reserve(family.entries.size());
    std::vector<int> piece_of_entry(family.entries.size(), -1);
    for (std::size_t i = 0; i < family.entries.size(); ++i) {
        piece_of_entry[i] = static_cast<int>(out.pieces.size());
        out.pieces.push_back({family.entries[i].cube, static_cast<int>(i),
                              LatticeFunction(family.entries[i].cube, f.spacing())});
    }

    // The constant term <f>_q 1_q belongs to the root piece; it is zero up to
    // the mean tolerance and keeps the reconstruction exact.
    {
        LatticeFunction& root = out.pieces[0].part;
        const double avg_q = average(f, q);
        for (double& v : root.values()) v = avg_q;
    }

    const int d = f.dim();
    std::function<void(const Cube&, int)> descend = [&](const Cube& node, int ancestor_piece) {
        const int here = find_entry(node);
        const int target = here >= 0 ? piece_of_entry[static_cast<std::size_t>(here)] : ancestor_piece;
        LatticeFunction& piece = out.pieces[static_cast<std::size_t>(target)].part;

        const double avg_node = average(f, node);
        const double half = node.side / 2.0;
        for (int mask = 0; mask < (1 << d); ++mask) {
            Cube child(node.corner, half);
            for (int i = 0; i < d; ++i)
                if (mask & (1 << i)) child.corner[i] += half;
            const double diff = average(f, child) - avg_node;
            const auto r = piece.cell_range(child);
            CellIndex idx{};
            std::function<void(int)> add = [&](int axis) {
                if (axis == d) {
                    piece.at(idx) += diff;
                    return;
                }
                for (std::int64_t k = r[static_cast<std::size_t>(axis)].lo;
                     k < r[static_cast<std::size_t>(axis)].hi; ++k) {
                    idx[static_cast<std::size_t>(axis)] = k;
                    add(axis + 1);
                }
            };
            add(0);
            if (child.side / f.spacing() >= 2.0 - 1e-9) descend(child, target);
        }
    };
    if (q.side / f.spacing() >= 2.0 - 1e-9) descend(q, 0);

    detail::AbsPrefix prefix(f);
    detail::StoppingBuild averager{&f, &prefix, nullptr, opts, 0.0};
    for (const auto& piece : out.pieces) {
        const double local = averager.avg_abs(piece.cube);
        if (local > 0) out.sup_ratio = std::max(out.sup_ratio, piece.part.sup_norm() / local);
    }
    return out;
}

struct SparseReport {
    double gamma_actual = 0; // min |E_Q| / |Q| over the family, exact cell counts
    double carleson = 0;     // max_P sum_{H subset P} |H| / |P|
    std::int64_t cubes = 0;
};

// Checks that the majors are pairwise disjoint (error if not) and measures
// the actual sparseness and Carleson constants of the family.
inline SparseReport verify_sparse(const SparseFamily& family) {
    SparseReport rep;
    rep.cubes = static_cast<std::int64_t>(family.entries.size());
    std::unordered_set<std::uint64_t> seen;
    rep.gamma_actual = family.entries.empty() ? 0.0 : 1.0;
    for (const auto& e : family.entries) {
        for (const auto& cell : e.major)
            if (!seen.insert(detail::pack_cell(cell, family.d)).second)
                throw validation_error("verify_sparse: majors are not disjoint");
        const auto n = detail::cube_cell_count(e.cube, family.h, "verify_sparse");
        rep.gamma_actual = std::min(rep.gamma_actual,
                                    static_cast<double>(e.major.size()) / static_cast<double>(n));
    }
    for (const auto& p : family.entries) {
        double mass = 0;
        for (const auto& h : family.entries)
            if (p.cube.contains_cube(h.cube)) mass += h.cube.volume();
        rep.carleson = std::max(rep.carleson, mass / p.cube.volume());
    }
    return rep;
}

struct ReflectParams {
    double max_dist_factor = 64; // dist(Q, image) <= factor * side(Q)
    double max_size_ratio = 4;   // side(image) within [side/ratio, side*ratio]
};

// Transports a family through a cube map into a target dyadic grid and
// builds fresh pairwise-disjoint majors for the images.  The images form a
// Carleson family (constant Lambda measured exactly); majors are claimed
// greedily from small cubes to large with a per-cube budget of 1/Lambda of
// its cells, which the Carleson bound keeps feasible.
inline SparseFamily reflect_family(const SparseFamily& family, const DyadicGrid& grid,
                                   const std::vector<Cube>& image_cubes,
                                   ReflectParams params = {}) {
    if (image_cubes.size() != family.entries.size())
        throw validation_error("reflect_family: one image cube per family entry is required");
    SparseFamily out;
    out.d = family.d;
    out.h = family.h;
    out.origin = family.origin;

    struct Image { Cube cube; int source; };
    std::vector<Image> images;
    images.reserve(family.entries.size());
    for (std::size_t i = 0; i < family.entries.size(); ++i) {
        const Cube& src = family.entries[i].cube;
        const Cube& img = image_cubes[i];
        const std::string pair = " (source " + cube_to_string(src) + ", image " + cube_to_string(img) + ")";
        if (!grid.owns(img))
            throw validation_error("reflect_family: image cube does not belong to the target grid" + pair);
        if (cube_distance(src, img) > params.max_dist_factor * src.side)
            throw validation_error("reflect_family: image cube drifted too far from its source" + pair);
        const double ratio = img.side / src.side;
        if (ratio > params.max_size_ratio || ratio < 1.0 / params.max_size_ratio)
            throw validation_error("reflect_family: image cube size is not comparable to its source" + pair);
        detail::cube_origin_cell(img, family.h, family.origin, "reflect_family");
        images.push_back({img, static_cast<int>(i)});
    }

    // Exact Carleson constant of the image multiset.
    double carleson = 1.0;
    for (const auto& p : images) {
        double mass = 0;
        for (const auto& h : images)
            if (p.cube.contains_cube(h.cube)) mass += h.cube.volume();
        carleson = std::max(carleson, mass / p.cube.volume());
    }
    out.declared_gamma = 1.0 / carleson;

    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (images[a].cube.side != images[b].cube.side) return images[a].cube.side < images[b].cube.side;
        for (int i = 0; i < family.d; ++i)
            if (images[a].cube.corner[i] != images[b].cube.corner[i])
                return images[a].cube.corner[i] < images[b].cube.corner[i];
        return a < b;
    });

    std::unordered_set<std::uint64_t> claimed;
    out.entries.resize(images.size());
    for (std::size_t rank : order) {
        const Cube& img = images[rank].cube;
        const auto n = detail::cube_cell_count(img, family.h, "reflect_family");
        const auto budget = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                std::floor(static_cast<double>(n) / carleson)));
        SparseEntry entry;
        entry.cube = img;
        entry.generation = family.entries[static_cast<std::size_t>(images[rank].source)].generation;
        detail::for_each_cube_cell(img, family.h, family.origin, [&](const CellIndex& cell) {
            if (static_cast<std::int64_t>(entry.major.size()) >= budget) return;
            if (claimed.insert(detail::pack_cell(cell, family.d)).second)
                entry.major.push_back(cell);
        });
        if (entry.major.empty())
            throw validation_error("reflect_family: could not construct disjoint majors in " +
                                   cube_to_string(img));
        out.entries[rank] = std::move(entry);
    }

    // Containment order among the images.
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        int best = -1;
        for (std::size_t j = 0; j < out.entries.size(); ++j) {
            if (i == j) continue;
            const Cube& a = out.entries[j].cube;
            const Cube& b = out.entries[i].cube;
            if (a.contains_cube(b) && !(a.same_extent(b) && j > i)) {
                if (best < 0 || out.entries[static_cast<std::size_t>(best)].cube.side > a.side)
                    best = static_cast<int>(j);
            }
        }
        out.entries[i].parent = best;
    }
    return out;
}

inline SparseFamily reflect_family(const SparseFamily& family, const DyadicGrid& grid,
                                   const std::function<Cube(const Cube&)>& cube_map,
                                   ReflectParams params = {}) {
    std::vector<Cube> images;
    images.reserve(family.entries.size());
    for (const auto& e : family.entries) images.push_back(cube_map(e.cube));
    return reflect_family(family, grid, images, params);
}

} // namespace bsio
