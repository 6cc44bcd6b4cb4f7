#pragma once

// Shared test utilities: sequential oracles, the marking instrumentation
// from the dirty-row analysis, and machine factories. Everything here reads
// snapshots only; nothing shares code with the algorithm paths it checks.

#include <algorithm>
#include <map>
#include <vector>

#include "dmm/core.hpp"
#include "dmm/rng.hpp"
#include "dmm/view.hpp"

namespace testutil {

using dmm::u32;
using dmm::u64;
using dmm::word;

inline dmm::Machine make_machine(u32 w, u32 m, bool strict = true) {
    return dmm::Machine(dmm::MachineConfig::standard(w, m, strict));
}

/// Sequential sorting oracle: the row-major order the machine must reach.
inline std::vector<word> seq_sorted(std::vector<word> grid) {
    std::sort(grid.begin(), grid.end());
    return grid;
}

inline std::vector<word> random_grid(dmm::Rng& rng, u64 n, word lo, word hi) {
    std::vector<word> g(n);
    for (auto& x : g)
        x = lo + dmm::rng_below(rng, hi - lo);
    return g;
}

/// Exact multiset comparison.
inline bool same_multiset(std::vector<word> a, std::vector<word> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

// --- marking oracle ---------------------------------------------------------
// Marking value i in [1, wm]: elements of rank < i get mark 0, the rest 1.
// Marks are recomputed on snapshots; the algorithms never see them.

struct Marking {
    word threshold;  // values < threshold are marked 0

    static Marking for_value(const std::vector<word>& original, u64 i) {
        std::vector<word> s(original);
        std::sort(s.begin(), s.end());
        // ranks are 1-based; i-1 elements have rank < i
        return Marking{s[i - 1]};
    }
    int mark(word x) const { return x < threshold ? 0 : 1; }
};

inline bool row_major_sorted_by_mark(const std::vector<word>& grid, const Marking& mk) {
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (mk.mark(grid[i - 1]) > mk.mark(grid[i]))
            return false;
    return true;
}

/// Columns of a W x M snapshot containing both marks.
inline u32 dirty_columns(const std::vector<word>& grid, u32 W, u32 M, const Marking& mk) {
    u32 count = 0;
    for (u32 c = 0; c < M; ++c) {
        bool has0 = false, has1 = false;
        for (u32 r = 0; r < W; ++r)
            (mk.mark(grid[u64(r) * M + c]) == 0 ? has0 : has1) = true;
        if (has0 && has1)
            ++count;
    }
    return count;
}

inline std::vector<u32> dirty_row_list(const std::vector<word>& grid, u32 W, u32 M,
                                       const Marking& mk) {
    std::vector<u32> rows;
    for (u32 r = 0; r < W; ++r) {
        bool has0 = false, has1 = false;
        for (u32 c = 0; c < M; ++c)
            (mk.mark(grid[u64(r) * M + c]) == 0 ? has0 : has1) = true;
        if (has0 && has1)
            rows.push_back(r);
    }
    return rows;
}

/// Number of maximal contiguous runs in a sorted index list.
inline u32 contiguous_clusters(const std::vector<u32>& rows) {
    u32 clusters = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (i == 0 || rows[i] != rows[i - 1] + 1)
            ++clusters;
    return clusters;
}

}  // namespace testutil
