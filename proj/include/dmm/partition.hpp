#pragma once

// partition.hpp — the w-way partition problem and integer-key sorting.
// Row sorts are base-m LSD radix (keys are small integers), so the
// short-wide and square procedures drop to O(m) steps, and the general case
// runs the balancing + convert-and-divide recursion with a shifted square
// cleanup at the end.

#include <cmath>
#include <functional>

#include "dmm/core.hpp"
#include "dmm/layout.hpp"
#include "dmm/sort.hpp"
#include "dmm/view.hpp"

namespace dmm {

// ---------------------------------------------------------------------------
// Row-local radix sort
// ---------------------------------------------------------------------------

/// Digit passes needed for keys < domain in the given base.
inline u32 radix_pass_count(u32 base, u64 domain) {
    if (base < 2)
        return 1;
    u32 d = 1;
    u64 reach = base;
    while (reach < domain) {
        reach *= base;
        ++d;
    }
    return d;
}

namespace detail {

// Counting-sort passes within one bank. The histogram lives in the s1
// window, the scatter ping-pongs between the working and s0 windows. All
// access counts are shape-determined, so step totals are identical across
// inputs of one shape.
inline void row_radix_segment(RowIO& io, u32 work, u32 stage, u32 hist, u32 len, u64 domain,
                              bool asc) {
    if (len <= 1)
        return;
    const u32 base = len;
    const u32 passes = radix_pass_count(base, domain);
    // power-of-two bases extract digits with shifts instead of divisions
    const bool pow2 = is_pow2(base);
    const u32 lg = pow2 ? ilog2_ceil(base) : 0;
    u32 from = work, to = stage;
    u64 scale = 1;
    u32 sh = 0;
    for (u32 p = 0; p < passes; ++p) {
        auto digit = [&](word x) {
            const word k = asc ? x : domain - 1 - x;
            return pow2 ? u32((k >> sh) & (base - 1)) : u32(k / scale % base);
        };
        for (u32 b = 0; b < base; ++b)
            io.write(hist + b, 0);
        for (u32 c = 0; c < len; ++c) {
            const word x = io.read(from + c);
            if (x >= domain)
                throw KeyOutOfRange("radix key " + std::to_string(x) + " outside domain");
            const u32 g = digit(x);
            io.write(hist + g, io.read(hist + g) + 1);
        }
        word run = 0;
        for (u32 b = 0; b < base; ++b) {
            const word cnt = io.read(hist + b);
            io.write(hist + b, run);
            run += cnt;
        }
        for (u32 c = 0; c < len; ++c) {
            const word x = io.read(from + c);
            const u32 g = digit(x);
            const word pos = io.read(hist + g);
            io.write(to + u32(pos), x);
            io.write(hist + g, pos + 1);
        }
        std::swap(from, to);
        scale *= base;
        sh += lg;
    }
    if (from != work)
        for (u32 c = 0; c < len; ++c)
            io.write(work + c, io.read(stage + c));
}

}  // namespace detail

/// Sort every view row by key value with base-m LSD radix; keys must lie in
/// [0, domain). O(m * ceil(log_m domain)) steps, bank-local.
inline void radix_sort_rows(const MatrixView& v, u64 domain, SortOrder order) {
    for_rows(v, [&](std::size_t r, RowIO& io) {
        detail::row_radix_segment(io, v.off(0), v.s0(0), v.s1(0), v.M(), domain,
                                  order.ascending_for(static_cast<u32>(r)));
    });
}

/// Single-row convenience (the per-operation contract).
inline void radix_sort_row(const MatrixView& v, u32 row, u64 domain) {
    radix_sort_rows(v.row_range(row, 1), domain, SortOrder::asc());
}


// ---------------------------------------------------------------------------
// Partition instances
// ---------------------------------------------------------------------------

/// Host-side validity check: every label in [0, W) occurs exactly M times.
inline void check_partition_instance(const MatrixView& v) {
    std::vector<u64> counts(v.W(), 0);
    for (u32 r = 0; r < v.W(); ++r)
        for (u32 c = 0; c < v.M(); ++c) {
            const word x = v.machine().peek(v.bank(r), v.off(c));
            if (x >= v.W())
                throw InvalidInstance("label outside [0, w)");
            ++counts[x];
        }
    for (u64 c : counts)
        if (c != v.M())
            throw InvalidInstance("label counts are not all m");
}

// ---------------------------------------------------------------------------
// Leaf partition sorters (W <= M shapes, O(m) steps via radix)
// ---------------------------------------------------------------------------

/// Whether the general-sort machinery (balance tower, leaf sorters, recursion)
/// structurally accepts a W x M shape. Power-of-two shapes with m | w always
/// pass; a leftover balancing group g must satisfy g^2 <= m.
inline bool general_sort_shape_ok(u64 W, u64 M) {
    if (W <= 1)
        return true;
    if (W <= M) {
        const u32 h = isqrt_floor(u32(M));
        return W * W <= M || (u64(h) * h == M && W % h == 0) || (M % W == 0);
    }
    if (M < 2 || W % M != 0)
        return false;
    u64 nsubs = W;
    while (nsubs > 1) {
        const u64 g = std::min<u64>(M, nsubs);
        if (g < M && g * g > M)
            return false;
        if (nsubs % g != 0)
            return false;
        nsubs /= g;
    }
    return general_sort_shape_ok(W / M, M);
}

namespace detail {

inline void partition_leaf(const MatrixView& v, u64 domain, bool asc) {
    auto row_sort = [domain](const MatrixView& vv, SortOrder o) {
        radix_sort_rows(vv, domain, o);
    };
    // blocked column sorts work on short W-wide segments where a base-W radix
    // would need log_W(domain) passes; comparison-sorting the segments keeps
    // the leaf at O(m) with a smaller constant and an identical outcome
    auto seg_sort = [](const MatrixView& vv, u32 seg, bool a) {
        merge_sort_segments(vv, seg, a);
    };
    if (u64(v.W()) * v.W() <= v.M())
        short_wide_skeleton(v, asc, row_sort, {});
    else if (square_skeleton_fits(v.W(), v.M()))
        square_skeleton(v, asc, row_sort, seg_sort);
    else
        shearsort_rect(v, asc, row_sort, seg_sort);
}

}  // namespace detail

/// Short-wide case: partition a w x m view with w^2 <= m in O(m) steps
/// (the short-wide skeleton with radix row sorts).
inline void partition_short_wide(const MatrixView& v, const ShortWideHook& hook = {}) {
    if (u64(v.W()) * v.W() > v.M())
        throw ShapeViolation("partition_short_wide needs w^2 <= m");
    check_partition_instance(v);
    detail::short_wide_skeleton(
        v, true,
        [&](const MatrixView& vv, SortOrder o) { radix_sort_rows(vv, v.W(), o); }, hook);
}

/// Square case: partition a square m x m view (m a perfect square) in
/// O(m) steps.
inline void partition_square(const MatrixView& v) {
    if (v.W() != v.M())
        throw ShapeViolation("partition_square needs w = m");
    const u32 h = isqrt_floor(v.M());
    if (h * h != v.M())
        throw ShapeViolation("partition_square needs m to be a perfect square");
    check_partition_instance(v);
    detail::partition_leaf(v, v.W(), true);
}

// ---------------------------------------------------------------------------
// Balancing and convert-and-divide
// ---------------------------------------------------------------------------

struct PartitionParams {
    double log_m_w = 0;  // log_m of the level's row count
    u32 d = 1;           // dirty-column bound 2*log_m w, rounded to a divisor
    u32 rounds = 0;      // balancing rounds ceil(log_m w)
    u32 subproblems = 0; // m*d

    static PartitionParams compute(u32 W, u32 M) {
        PartitionParams p;
        p.log_m_w = std::log(double(W)) / std::log(double(M));
        p.rounds = u32(std::ceil(p.log_m_w - 1e-9));
        const u32 want = std::max<u32>(1, u32(std::ceil(2 * p.log_m_w - 1e-9)));
        // round d up to a divisor whose subproblem height the next recursion
        // level can actually take (d = W/m, height 1, always qualifies)
        u32 d = std::min<u32>(want, W / M);
        while (u64(M) * d <= W &&
               (W % (u64(M) * d) != 0 || !general_sort_shape_ok(W / (u64(M) * d), M)))
            ++d;
        if (u64(M) * d > W || W % (u64(M) * d) != 0)
            throw DivisibilityViolation("no feasible dirty-column divisor for this shape");
        p.d = d;
        p.subproblems = M * d;
        return p;
    }
};

/// One balancing pass over a W x m view (W a multiple of m): round 0 sorts
/// contiguous m x m groups column-major; round i assembles a square from the
/// j-th rows of every sub-matrix in a group of m and sorts it column-major.
/// A final partial group of g sub-matrices with g^2 <= m is handled with the
/// short-wide partition. All assembled matrices of a round run in merged
/// lockstep.
inline void balance(const MatrixView& v, u64 domain) {
    const u32 W = v.W(), M = v.M();
    if (W % M != 0)
        throw ShapeViolation("balance needs m | W");
    u32 sub_h = 1;   // current sub-matrix height
    u32 nsubs = W;   // current sub-matrix count
    while (nsubs > 1) {
        const u32 g = std::min(M, nsubs);
        if (g < M && u64(g) * g > M)
            throw ShapeViolation("balance leftover group of " + std::to_string(g) +
                                 " sub-matrices fits neither the square nor short-wide case");
        std::vector<MatrixView> assembled;
        assembled.reserve(u64(nsubs / g) * sub_h);
        for (u32 grp = 0; grp < nsubs / g; ++grp) {
            for (u32 j = 0; j < sub_h; ++j) {
                std::vector<u32> locals(g);
                for (u32 s = 0; s < g; ++s)
                    locals[s] = (grp * g + s) * sub_h + j;
                assembled.push_back(v.pick_rows(locals));
            }
        }
        v.machine().lockstep(assembled.size(), [&](std::size_t i) {
            MatrixView& a = assembled[i];
            if (g == M) {
                detail::partition_leaf(a, domain, true);
                transpose_square(a);
            } else {
                detail::short_wide_skeleton(
                    a, true,
                    [&](const MatrixView& vv, SortOrder o) { radix_sort_rows(vv, domain, o); },
                    {});
                to_column_major(a);
            }
        });
        sub_h *= g;
        nsubs /= g;
    }
}

/// Convert-and-divide: relayout the balanced view column-major -> row-major,
/// then split into m*d row ranges. Returns the subproblem views.
inline std::vector<MatrixView> convert_and_divide(const MatrixView& v, const PartitionParams& p) {
    const u32 W = v.W();
    if (W % p.subproblems != 0)
        throw DivisibilityViolation("m*d must divide W");
    to_row_major(v);
    const u32 h = W / p.subproblems;
    std::vector<MatrixView> subs;
    subs.reserve(p.subproblems);
    for (u32 k = 0; k < p.subproblems; ++k)
        subs.push_back(v.row_range(k * h, h));
    return subs;
}

// ---------------------------------------------------------------------------
// The general partition / integer sort
// ---------------------------------------------------------------------------

struct GeneralStats {
    u32 cleanup_retries = 0;  // extra shifted pass pairs beyond the first
    bool sorted = true;
};

/// Instrumentation hooks for the recursion's bookkeeping tests.
struct PartitionProbe {
    std::function<void(u32 depth, const std::vector<MatrixView>&)> after_balance;
    std::function<void(u32 depth, const std::vector<MatrixView>&)> after_divide;
};

namespace detail {

// Conflict-free row-major sortedness scan: each row checks itself bank-
// locally, one boundary step peeks at the successor row's head, per-row flags
// are tree-reduced and the verdict broadcast. O(M + log W) steps.
inline bool scan_sorted(const MatrixView& v) {
    const u32 W = v.W(), M = v.M();
    Machine& m = v.machine();
    std::vector<word> first(W), last(W);
    std::vector<bool> rowok(W, true);
    for_rows(v, [&](std::size_t r, RowIO& io) {
        word prev = io.read(v.off(0));
        first[r] = prev;
        bool ok = true;
        for (u32 c = 1; c < M; ++c) {
            const word x = io.read(v.off(c));
            ok = ok && prev <= x;
            prev = x;
        }
        last[r] = prev;
        rowok[r] = ok;
    });
    if (W > 1) {
        StepBatch b;
        for (u32 r = 0; r + 1 < W; ++r)
            b.read(v.bank(r), v.bank(r + 1), v.off(0));
        const auto& res = m.execute(b);
        for (u32 r = 0; r + 1 < W; ++r)
            rowok[r] = rowok[r] && last[r] <= res[r];
    }
    for_rows(v, [&](std::size_t r, RowIO& io) { io.write(v.s1(0), rowok[r] ? 0 : 1); });
    const word bad = tree_reduce_sum(m, v.rows(), v.s1(0));
    broadcast_value(m, v.rows(), bad, v.s1(0));  // loop decision known to every row
    return bad == 0;
}

// One aligned + one m/2-shifted pass of local partition sorts over row
// blocks. Blocks run in merged lockstep.
inline void cleanup_pass_pair(const MatrixView& v, u64 domain) {
    const u32 W = v.W(), M = v.M();
    {
        std::vector<MatrixView> blocks;
        for (u32 k = 0; k < W / M; ++k)
            blocks.push_back(v.row_range(k * M, M));
        v.machine().lockstep(blocks.size(), [&](std::size_t i) {
            partition_leaf(blocks[i], domain, true);
        });
    }
    if (W > M && M >= 2) {
        std::vector<MatrixView> blocks;
        blocks.push_back(v.row_range(0, M / 2));
        for (u32 lo = M / 2; lo + M <= W; lo += M)
            blocks.push_back(v.row_range(lo, M));
        blocks.push_back(v.row_range(W - M / 2, M / 2));
        v.machine().lockstep(blocks.size(), [&](std::size_t i) {
            partition_leaf(blocks[i], domain, true);
        });
    }
}

inline void balance_divide_sort(const MatrixView& v, u64 domain, GeneralStats& st,
                        const PartitionProbe* probe, bool outer) {
    const u32 W = v.W(), M = v.M();
    if (W <= M) {
        partition_leaf(v, domain, true);
        return;
    }
    if (W % M != 0)
        throw ShapeViolation("general partition needs m | w");

    // (1) repeated balancing + convert-and-divide until subproblems have <= m rows
    std::vector<MatrixView> level{v};
    u32 depth = 0;
    while (level.front().W() > M) {
        v.machine().lockstep(level.size(), [&](std::size_t i) { balance(level[i], domain); });
        if (outer && probe && probe->after_balance)
            probe->after_balance(depth, level);
        const PartitionParams p = PartitionParams::compute(level.front().W(), M);
        std::vector<MatrixView> next;
        next.reserve(level.size() * p.subproblems);
        v.machine().lockstep(level.size(), [&](std::size_t i) {
            auto subs = convert_and_divide(level[i], p);
            for (auto& s : subs)
                next.push_back(std::move(s));
        });
        level.swap(next);
        ++depth;
        if (outer && probe && probe->after_divide)
            probe->after_divide(depth, level);
    }
    // (2) sort the leaves directly
    v.machine().lockstep(level.size(), [&](std::size_t i) {
        partition_leaf(level[i], domain, true);
    });

    // (3) sort the columns: fit each column into a (W/m) x m submatrix and
    // recurse, then convert back
    to_row_major(v);
    {
        const u32 h = W / M;
        std::vector<MatrixView> cols;
        for (u32 k = 0; k < M; ++k)
            cols.push_back(v.row_range(k * h, h));
        v.machine().lockstep(cols.size(), [&](std::size_t i) {
            balance_divide_sort(cols[i], domain, st, nullptr, false);
        });
    }
    to_column_major(v);

    // (4) shifted square cleanup with a checked postcondition
    cleanup_pass_pair(v, domain);
    bool sorted = scan_sorted(v);
    const u32 budget = ilog2_ceil(W);
    u32 tries = 0;
    while (!sorted && tries < budget) {
        cleanup_pass_pair(v, domain);
        sorted = scan_sorted(v);
        ++tries;
    }
    st.cleanup_retries = std::max(st.cleanup_retries, tries);
    if (!sorted) {
        st.sorted = false;
        if (v.machine().config().strict)
            throw PostconditionFailed("cleanup retry budget exhausted");
    }
}

}  // namespace detail

/// Sort integer keys in [0, domain) row-major with the balancing recursion.
/// O(m log^3_m w) steps on conforming shapes. Shape contract: m | w, powers
/// of two throughout, any leftover balancing group g must satisfy g^2 <= m,
/// and m > 2 sqrt(log2 w).
inline GeneralStats integer_sort_general(const MatrixView& v, u64 domain,
                                         const PartitionProbe* probe = nullptr,
                                         bool enforce_analysis_pre = true) {
    if (v.W() > v.M() && v.M() < 2)
        throw ShapeViolation("general sort needs m >= 2");
    // analysis precondition of the dirty-row accounting; the checked cleanup
    // makes the result correct regardless, so internal callers may waive it
    if (enforce_analysis_pre && v.W() > v.M() &&
        double(v.M()) <= 2.0 * std::sqrt(std::log2(double(v.W()))))
        throw ShapeViolation("general sort needs m > 2 sqrt(log2 w)");
    GeneralStats st;
    detail::balance_divide_sort(v, domain, st, probe, true);
    return st;
}

/// The w-way partition: labels in [0, w), m copies each; after the call row
/// i holds exactly the labels i.
inline GeneralStats partition_general(const MatrixView& v, const PartitionProbe* probe = nullptr) {
    check_partition_instance(v);
    return integer_sort_general(v, v.W(), probe);
}

}  // namespace dmm
