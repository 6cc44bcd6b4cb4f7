#pragma once

// sort.hpp — comparison sorting on the DMM. Row-local merge sort, a Batcher
// odd-even column sorter (in place of an asymptotically optimal EREW PRAM
// sorter, trading a log factor for small constants), the short-wide base
// case, and the square and tall sorts built on top of it.

#include <functional>

#include "dmm/core.hpp"
#include "dmm/layout.hpp"
#include "dmm/view.hpp"

namespace dmm {

// ---------------------------------------------------------------------------
// Row sorting
// ---------------------------------------------------------------------------

struct SortOrder {
    enum class Kind { ascending, descending, alternating };
    Kind kind = Kind::ascending;
    bool start_ascending = true;  // alternating: direction of row 0

    bool ascending_for(u32 row) const {
        switch (kind) {
            case Kind::ascending: return true;
            case Kind::descending: return false;
            default: return (row % 2 == 0) == start_ascending;
        }
    }

    static SortOrder asc() { return {Kind::ascending, true}; }
    static SortOrder desc() { return {Kind::descending, true}; }
    static SortOrder alternating(bool start_asc = true) {
        return {Kind::alternating, start_asc};
    }
};

namespace detail {

// Bottom-up merge within one bank, staging in the s0 window. Each placement
// costs two head reads and one write; tails cost a read and a write.
inline void row_merge_sort(RowIO& io, u32 work, u32 stage, u32 M, bool asc) {
    if (M <= 1)
        return;
    u32 from = work, to = stage;
    for (u32 width = 1; width < M; width *= 2) {
        for (u32 lo = 0; lo < M; lo += 2 * width) {
            const u32 mid = std::min(lo + width, M);
            const u32 hi = std::min(lo + 2 * width, M);
            u32 a = lo, b = mid, o = lo;
            while (a < mid && b < hi) {
                const word va = io.read(from + a);
                const word vb = io.read(from + b);
                const bool take_a = asc ? va <= vb : va >= vb;
                io.write(to + o++, take_a ? va : vb);
                take_a ? ++a : ++b;
            }
            while (a < mid)
                io.write(to + o++, io.read(from + a++));
            while (b < hi)
                io.write(to + o++, io.read(from + b++));
        }
        std::swap(from, to);
    }
    if (from != work)
        for (u32 c = 0; c < M; ++c)
            io.write(work + c, io.read(stage + c));
}

}  // namespace detail

/// Sort every view row in its assigned direction. Purely bank-local, so the
/// merged schedule is conflict-free; cost <= ~3 M ceil(log2 M) + 2M steps.
inline void sort_rows(const MatrixView& v, SortOrder order) {
    for_rows(v, [&](std::size_t r, RowIO& io) {
        detail::row_merge_sort(io, v.off(0), v.s0(0), v.M(),
                               order.ascending_for(static_cast<u32>(r)));
    });
}

// ---------------------------------------------------------------------------
// Column sorting
// ---------------------------------------------------------------------------

namespace detail {

// Batcher odd-even merge rounds for arbitrary n; cb receives disjoint
// comparator pairs (lo, hi) per round.
template <class RoundCb>
void odd_even_rounds(u32 n, RoundCb&& cb) {
    std::vector<std::pair<u32, u32>> pairs;
    for (u32 p = 1; p < n; p <<= 1) {
        for (u32 k = p; k >= 1; k >>= 1) {
            pairs.clear();
            for (u32 j = k % p; j + k < n; j += 2 * k)
                for (u32 i = 0; i < k && i + j + k < n; ++i)
                    if ((i + j) / (2 * p) == (i + j + k) / (2 * p))
                        pairs.emplace_back(i + j, i + j + k);
            if (!pairs.empty())
                cb(pairs);
            if (k == 1)
                break;
        }
    }
}

}  // namespace detail

/// Sort all view columns ascending with a Batcher odd-even comparator
/// network between rows. One processor drives each comparator across all M
/// columns: 4 steps per column per round (read both, write min and max),
/// O(M log^2 W) steps total.
inline void sort_columns_network(const MatrixView& v) {
    const u32 W = v.W(), M = v.M();
    if (W <= 1)
        return;
    Machine& mach = v.machine();
    StepBatch read_lo, read_hi, write_lo, write_hi;
    std::vector<word> lo_vals;
    detail::odd_even_rounds(W, [&](const std::vector<std::pair<u32, u32>>& pairs) {
        // per round the request pattern is fixed; only offsets and payloads
        // change across columns, so the batches are built once and patched
        read_lo.clear();
        read_hi.clear();
        write_lo.clear();
        write_hi.clear();
        for (auto [lo, hi] : pairs) {
            read_lo.read(v.bank(lo), v.bank(lo), 0);
            read_hi.read(v.bank(lo), v.bank(hi), 0);
            write_lo.write(v.bank(lo), v.bank(lo), 0, 0);
            write_hi.write(v.bank(lo), v.bank(hi), 0, 0);
        }
        for (u32 c = 0; c < M; ++c) {
            const u32 off = v.off(c);
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                read_lo.reqs[i].offset = off;
                read_hi.reqs[i].offset = off;
                write_lo.reqs[i].offset = off;
                write_hi.reqs[i].offset = off;
            }
            {
                const auto& res = mach.execute(read_lo);
                lo_vals.assign(res.begin(), res.end());
            }
            const auto& hi_res = mach.execute(read_hi);
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                write_lo.reqs[i].value = std::min(lo_vals[i], hi_res[i]);
                write_hi.reqs[i].value = std::max(lo_vals[i], hi_res[i]);
            }
            mach.execute(write_lo);
            mach.execute(write_hi);
        }
    });
}

/// Sort all columns ascending without cross-row comparators: transpose each
/// WxW block in place, sort the per-row W-word segments, transpose back.
/// Needs W | M. The segment sorter runs row-locally; cost O(M) transposes
/// plus one row pass of segment sorts.
template <class SegmentSort>
void sort_columns_blocked(const MatrixView& v, SegmentSort&& sort_segments) {
    const u32 W = v.W(), M = v.M();
    if (W <= 1)
        return;
    if (M % W != 0)
        throw DivisibilityViolation("blocked column sort needs W | M");
    for (u32 k = 0; k < M / W; ++k)
        transpose_square(v.col_window(k * W, W));
    sort_segments(v, W);
    for (u32 k = 0; k < M / W; ++k)
        transpose_square(v.col_window(k * W, W));
}

/// Comparison segment sorter for sort_columns_blocked.
inline void merge_sort_segments(const MatrixView& v, u32 seg, bool asc) {
    for_rows(v, [&](std::size_t, RowIO& io) {
        for (u32 s = 0; s < v.M(); s += seg)
            detail::row_merge_sort(io, v.off(s), v.s0(s), seg, asc);
    });
}

// ---------------------------------------------------------------------------
// Short-wide sort (the base case)
// ---------------------------------------------------------------------------

/// Observation points for the marking-based instrumentation.
enum class ShortWideStage {
    after_first_convert,  // first pass, steps 1-2 done
    after_first_pass,     // first pass, steps 1-4 done
    done,
};
using ShortWideHook = std::function<void(ShortWideStage)>;

namespace detail {

// The short-wide skeleton, generic over the row sorter so the partition module
// can reuse it with radix sorts. Direction mirrors the whole procedure.
template <class RowSort>
void short_wide_skeleton(const MatrixView& v, bool asc, RowSort&& sort_rows_fn,
                         const ShortWideHook& hook) {
    if (u64(v.W()) * v.W() > v.M())
        throw ShapeViolation("short-wide sort needs w^2 <= m");
    for (int pass = 0; pass < 2; ++pass) {
        sort_rows_fn(v, SortOrder::alternating(asc));
        to_column_major(v);
        if (pass == 0 && hook)
            hook(ShortWideStage::after_first_convert);
        sort_rows_fn(v, asc ? SortOrder::asc() : SortOrder::desc());
        to_row_major(v);
        if (pass == 0 && hook)
            hook(ShortWideStage::after_first_pass);
    }
    sort_rows_fn(v, asc ? SortOrder::asc() : SortOrder::desc());
    if (hook)
        hook(ShortWideStage::done);
}

}  // namespace detail

/// Sort a w x m view with w^2 <= m into row-major order (two passes of
/// alternating row sort + layout conversion + row sort, then a final row
/// sort). O(m log m) steps.
inline void sort_short_wide(const MatrixView& v, bool ascending = true,
                            const ShortWideHook& hook = {}) {
    detail::short_wide_skeleton(
        v, ascending,
        [](const MatrixView& view, SortOrder o) { sort_rows(view, o); }, hook);
}

// ---------------------------------------------------------------------------
// Square and tall sorts
// ---------------------------------------------------------------------------

namespace detail {

// Column sort of a square view by transposing, sorting rows, transposing back.
template <class RowSortU>
void square_column_sort(const MatrixView& v, bool asc, RowSortU&& sort_rows_uniform) {
    transpose_square(v);
    sort_rows_uniform(v, asc);
    transpose_square(v);
}

// Generic super-row square-sort skeleton over a W x M view with W <= M, sqrt(M) | W and
// M a perfect square. Super-rows of height sqrt(M) are sorted with the
// short-wide procedure in merged lockstep; column sorts go through blocked
// transposes so they stay inside the view's banks.
template <class RowSort, class SegSort>
void square_skeleton(const MatrixView& v, bool asc, RowSort&& row_sort, SegSort&& seg_sort) {
    const u32 W = v.W(), M = v.M();
    const u32 h = isqrt_floor(M);
    if (h * h != M || W > M || W % h != 0)
        throw ShapeViolation("square sort skeleton needs perfect-square M and sqrt(M) | W <= M");

    auto super_rows = [&](bool alternate) {
        std::vector<MatrixView> groups;
        for (u32 g = 0; g < W / h; ++g)
            groups.push_back(v.row_range(g * h, h));
        v.machine().lockstep(groups.size(), [&](std::size_t g) {
            const bool dir = alternate ? ((g % 2 == 0) == asc) : asc;
            short_wide_skeleton(groups[g], dir, row_sort, {});
        });
    };
    auto columns = [&] {
        if (W == M)
            square_column_sort(v, asc, [&](const MatrixView& vv, bool a) {
                row_sort(vv, a ? SortOrder::asc() : SortOrder::desc());
            });
        else
            sort_columns_blocked(v, [&](const MatrixView& vv, u32 seg) { seg_sort(vv, seg, asc); });
    };

    super_rows(false);
    columns();
    super_rows(true);
    columns();
    row_sort(v, asc ? SortOrder::asc() : SortOrder::desc());
}

// Rectangular shearsort fallback for shapes the super-row skeleton cannot
// take (M not a perfect square). Snake row sorts alternate with blocked
// column sorts for ceil(log2 W)+1 rounds; a final snake pass and odd-row
// reversal leave row-major order. O(M log M log W) steps -- costlier than
// the square skeleton, used only where the latter's shape preconditions
// fail.
template <class RowSort, class SegSort>
void shearsort_rect(const MatrixView& v, bool asc, RowSort&& row_sort, SegSort&& seg_sort) {
    const u32 W = v.W(), M = v.M();
    if (W > M || (W > 1 && M % W != 0))
        throw ShapeViolation("shearsort fallback needs W <= M and W | M");
    const u32 rounds = ilog2_ceil(W) + 1;
    for (u32 i = 0; i < rounds; ++i) {
        row_sort(v, SortOrder::alternating(asc));
        if (W > 1)
            sort_columns_blocked(v, [&](const MatrixView& vv, u32 seg) { seg_sort(vv, seg, asc); });
    }
    row_sort(v, SortOrder::alternating(asc));
    // snake -> row-major: reverse the descending rows in place
    for_rows(v, [&](std::size_t r, RowIO& io) {
        if (SortOrder::alternating(asc).ascending_for(static_cast<u32>(r)) == asc)
            return;
        for (u32 c = 0; c < M / 2; ++c) {
            const word a = io.read(v.off(c));
            const word b = io.read(v.off(M - 1 - c));
            io.write(v.off(c), b);
            io.write(v.off(M - 1 - c), a);
        }
    });
}

inline bool square_skeleton_fits(u32 W, u32 M) {
    const u32 h = isqrt_floor(M);
    return h * h == M && W <= M && W % h == 0;
}

// Universal comparison sorter for W x M views with W <= M, W | M: picks the
// super-row skeleton when the shape allows, shearsort otherwise. Short-wide
// shapes go straight to the base case.
inline void sort_wide_any(const MatrixView& v, bool asc) {
    auto row_sort = [](const MatrixView& vv, SortOrder o) { sort_rows(vv, o); };
    auto seg_sort = [](const MatrixView& vv, u32 seg, bool a) { merge_sort_segments(vv, seg, a); };
    if (u64(v.W()) * v.W() <= v.M())
        sort_short_wide(v, asc);
    else if (square_skeleton_fits(v.W(), v.M()))
        square_skeleton(v, asc, row_sort, seg_sort);
    else
        shearsort_rect(v, asc, row_sort, seg_sort);
}

}  // namespace detail

/// Square sort: super-rows of sqrt(m) adjacent rows sorted by the
/// short-wide base case, column sorts via transpose, an alternating
/// super-row pass, and a final row sort. O(m log m) steps.
inline void sort_square(const MatrixView& v, bool ascending = true) {
    if (v.W() != v.M())
        throw ShapeViolation("sort_square needs w = m");
    const u32 h = isqrt_floor(v.M());
    if (h * h != v.M())
        throw ShapeViolation("sort_square needs m to be a perfect square");
    detail::square_skeleton(
        v, ascending, [](const MatrixView& vv, SortOrder o) { sort_rows(vv, o); },
        [](const MatrixView& vv, u32 seg, bool a) { merge_sort_segments(vv, seg, a); });
}

/// Tall sort (w >= m, m | w): row sort, network column sort,
/// column-major -> row-major conversion, column sort, alternating m x m
/// block sorts, column sort, final row sort. O(m log^2 w) steps from the
/// comparator-network substitution.
inline void sort_tall(const MatrixView& v) {
    const u32 W = v.W(), M = v.M();
    if (W < M || (M > 0 && W % M != 0))
        throw ShapeViolation("sort_tall needs w >= m and m | w");
    if (W == M) {
        detail::sort_wide_any(v, true);
        return;
    }
    sort_rows(v, SortOrder::asc());
    sort_columns_network(v);
    to_row_major(v);
    sort_columns_network(v);
    {
        std::vector<MatrixView> blocks;
        for (u32 k = 0; k < W / M; ++k)
            blocks.push_back(v.row_range(k * M, M));
        v.machine().lockstep(blocks.size(), [&](std::size_t k) {
            detail::sort_wide_any(blocks[k], k % 2 == 0);
        });
    }
    sort_columns_network(v);
    sort_rows(v, SortOrder::asc());
}

}  // namespace dmm
