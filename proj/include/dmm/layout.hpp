#pragma once

// layout.hpp — conflict-free data movement: in-place square transpose,
// row-major <-> column-major conversion, and offline schedules realizing
// arbitrary fixed permutations as rounds of bank-disjoint moves.

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dmm/core.hpp"
#include "dmm/view.hpp"

namespace dmm {

// ---------------------------------------------------------------------------
// Square transpose (closed-form paired-diagonal schedule, in place)
// ---------------------------------------------------------------------------

/// Transpose a square view in place. Wrapped diagonals d and s-d are swapped
/// pairwise: read both into registers, then write both. <= 4s steps, no
/// staging, no conflicts (each batch touches every view row exactly once).
inline void transpose_square(const MatrixView& v) {
    if (v.W() != v.M())
        throw NotSquare("transpose_square needs a square view");
    const u32 s = v.W();
    if (s <= 1)
        return;
    Machine& m = v.machine();
    StepBatch b;
    std::vector<word> x(s), y(s);
    for (u32 d = 1; 2 * d <= s; ++d) {
        const u32 e = s - d;
        // diagonal d: cell (r, r+d); its transposed home is diagonal e
        b.clear();
        for (u32 r = 0; r < s; ++r)
            b.read(v.bank(r), v.bank(r), v.off((r + d) % s));
        {
            const auto& res = m.execute(b);
            x.assign(res.begin(), res.end());
        }
        if (d != e) {
            b.clear();
            for (u32 r = 0; r < s; ++r)
                b.read(v.bank(r), v.bank(r), v.off((r + e) % s));
            const auto& res = m.execute(b);
            y.assign(res.begin(), res.end());
        }
        b.clear();
        for (u32 r = 0; r < s; ++r)
            b.write(v.bank(r), v.bank((r + d) % s), v.off(r), x[r]);
        m.execute(b);
        if (d != e) {
            b.clear();
            for (u32 r = 0; r < s; ++r)
                b.write(v.bank(r), v.bank((r + e) % s), v.off(r), y[r]);
            m.execute(b);
        }
    }
}

// ---------------------------------------------------------------------------
// Offline schedules
// ---------------------------------------------------------------------------

struct Move {
    u32 src_bank = 0;
    u32 src_off = 0;
    u32 dst_bank = 0;
    u32 dst_off = 0;
};

/// Rounds of moves realizing a fixed permutation; within a round all source
/// banks are pairwise distinct and all destination banks are pairwise
/// distinct, so a round is two conflict-free steps.
struct Schedule {
    std::vector<std::vector<Move>> rounds;

    void validate(u32 W, u32 M) const {
        std::vector<u64> smark(W, 0), dmark(W, 0);
        u64 epoch = 0;
        for (const auto& round : rounds) {
            ++epoch;
            for (const Move& mv : round) {
                if (mv.src_bank >= W || mv.dst_bank >= W || mv.src_off >= M || mv.dst_off >= M)
                    throw OutOfBounds("schedule move outside shape");
                if (smark[mv.src_bank] == epoch || dmark[mv.dst_bank] == epoch)
                    throw ConflictViolation("schedule round reuses a bank");
                smark[mv.src_bank] = epoch;
                dmark[mv.dst_bank] = epoch;
            }
        }
    }
};

namespace detail {

struct PermEdge {
    u32 src, dst, soff, doff;
};

// Split an even-regular bipartite multigraph into two half-regular ones by
// walking Euler circuits and alternating edge assignment.
inline void euler_split(const std::vector<PermEdge>& edges, u32 W,
                        std::vector<PermEdge>& a, std::vector<PermEdge>& b) {
    const std::size_t E = edges.size();
    std::vector<std::vector<std::pair<u32, u32>>> adj(2 * W);  // (edge id, peer)
    for (u32 i = 0; i < E; ++i) {
        adj[edges[i].src].push_back({i, W + edges[i].dst});
        adj[W + edges[i].dst].push_back({i, edges[i].src});
    }
    std::vector<bool> used(E, false);
    std::vector<u32> cursor(2 * W, 0);
    std::vector<u32> circuit;
    std::vector<std::pair<u32, u32>> stack;  // (vertex, edge taken to get here)
    for (u32 start = 0; start < 2 * W; ++start) {
        if (cursor[start] >= adj[start].size())
            continue;
        circuit.clear();
        stack.clear();
        stack.push_back({start, u32(-1)});
        while (!stack.empty()) {
            u32 vtx = stack.back().first;
            while (cursor[vtx] < adj[vtx].size() && used[adj[vtx][cursor[vtx]].first])
                ++cursor[vtx];
            if (cursor[vtx] == adj[vtx].size()) {
                if (stack.back().second != u32(-1))
                    circuit.push_back(stack.back().second);
                stack.pop_back();
            } else {
                auto [eid, peer] = adj[vtx][cursor[vtx]];
                used[eid] = true;
                stack.push_back({peer, eid});
            }
        }
        // circuit edges are contiguous in walk order; alternate them
        for (std::size_t i = 0; i < circuit.size(); ++i)
            (i % 2 == 0 ? a : b).push_back(edges[circuit[i]]);
    }
}

// Peel one perfect matching off a regular bipartite multigraph (Kuhn).
inline void peel_matching(std::vector<PermEdge>& edges, u32 W, std::vector<PermEdge>& matching) {
    std::vector<std::vector<u32>> adj(W);
    for (u32 i = 0; i < edges.size(); ++i)
        adj[edges[i].src].push_back(i);
    std::vector<int> match_edge_of_dst(W, -1);
    std::vector<u64> visited(W, 0);
    u64 epoch = 0;

    auto augment = [&](auto&& self, u32 src) -> bool {
        for (u32 eid : adj[src]) {
            u32 d = edges[eid].dst;
            if (visited[d] == epoch)
                continue;
            visited[d] = epoch;
            if (match_edge_of_dst[d] < 0 || self(self, edges[match_edge_of_dst[d]].src)) {
                match_edge_of_dst[d] = int(eid);
                return true;
            }
        }
        return false;
    };
    for (u32 s = 0; s < W; ++s) {
        ++epoch;
        if (!augment(augment, s))
            throw Error("matching extraction failed on regular multigraph");
    }
    std::vector<bool> taken(edges.size(), false);
    for (u32 d = 0; d < W; ++d) {
        matching.push_back(edges[match_edge_of_dst[d]]);
        taken[match_edge_of_dst[d]] = true;
    }
    std::vector<PermEdge> rest;
    rest.reserve(edges.size() - W);
    for (u32 i = 0; i < edges.size(); ++i)
        if (!taken[i])
            rest.push_back(edges[i]);
    edges.swap(rest);
}

inline void decompose(std::vector<PermEdge> edges, u32 W, u32 degree,
                      std::vector<std::vector<Move>>& out) {
    if (degree == 0 || edges.empty())
        return;
    if (degree == 1) {
        std::vector<Move> round;
        round.reserve(edges.size());
        for (const PermEdge& e : edges)
            round.push_back({e.src, e.soff, e.dst, e.doff});
        out.push_back(std::move(round));
        return;
    }
    if (degree % 2 == 1) {
        std::vector<PermEdge> matching;
        peel_matching(edges, W, matching);
        std::vector<Move> round;
        round.reserve(matching.size());
        for (const PermEdge& e : matching)
            round.push_back({e.src, e.soff, e.dst, e.doff});
        out.push_back(std::move(round));
        decompose(std::move(edges), W, degree - 1, out);
        return;
    }
    std::vector<PermEdge> a, b;
    a.reserve(edges.size() / 2);
    b.reserve(edges.size() / 2);
    euler_split(edges, W, a, b);
    decompose(std::move(a), W, degree / 2, out);
    decompose(std::move(b), W, degree / 2, out);
}

}  // namespace detail

/// Precompute a conflict-free round schedule for an arbitrary bijection on
/// [W]x[M] cells. perm[r*M + c] = destination cell. The bank-to-bank transfer
/// multigraph is M-regular, so Euler splitting (plus one matching peel at odd
/// degrees) yields at most M rounds. Precomputation runs host-side and is not
/// charged machine steps.
inline Schedule offline_schedule(u32 W, u32 M, const std::vector<std::pair<u32, u32>>& perm) {
    if (perm.size() != u64(W) * M)
        throw NotBijective("permutation table has wrong size");
    std::vector<bool> hit(u64(W) * M, false);
    std::vector<detail::PermEdge> edges;
    edges.reserve(perm.size());
    for (u32 r = 0; r < W; ++r) {
        for (u32 c = 0; c < M; ++c) {
            auto [dr, dc] = perm[u64(r) * M + c];
            if (dr >= W || dc >= M)
                throw NotBijective("permutation target out of range");
            if (hit[u64(dr) * M + dc])
                throw NotBijective("permutation target repeated");
            hit[u64(dr) * M + dc] = true;
            edges.push_back({r, dr, c, dc});
        }
    }
    Schedule s;
    detail::decompose(std::move(edges), W, M, s.rounds);
    return s;
}

/// Apply a schedule: per round one parallel read batch from the working
/// window and one parallel write batch into the window at dst_base.
/// Exactly 2 * |rounds| steps.
inline void apply_schedule(const MatrixView& v, const Schedule& s, u32 dst_base) {
    Machine& m = v.machine();
    StepBatch b;
    std::vector<word> vals;
    for (const auto& round : s.rounds) {
        b.clear();
        for (const Move& mv : round)
            b.read(v.bank(mv.src_bank), v.bank(mv.src_bank), v.off(mv.src_off));
        {
            const auto& res = m.execute(b);
            vals.assign(res.begin(), res.end());
        }
        b.clear();
        for (std::size_t i = 0; i < round.size(); ++i)
            b.write(v.bank(round[i].src_bank), v.bank(round[i].dst_bank),
                    dst_base + round[i].dst_off, vals[i]);
        m.execute(b);
    }
}

inline void apply_schedule(const MatrixView& v, const Schedule& s) {
    apply_schedule(v, s, v.s0_base());
}

// Schedule text form: one "src_bank src_off dst_bank dst_off" line per move,
// blank line between rounds.
inline std::string schedule_to_text(const Schedule& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.rounds.size(); ++i) {
        if (i)
            os << "\n";
        for (const Move& mv : s.rounds[i])
            os << mv.src_bank << ' ' << mv.src_off << ' ' << mv.dst_bank << ' ' << mv.dst_off
               << "\n";
    }
    return os.str();
}

inline Schedule schedule_from_text(const std::string& text) {
    Schedule s;
    std::istringstream is(text);
    std::string line;
    std::vector<Move> round;
    while (std::getline(is, line)) {
        if (line.empty()) {
            if (!round.empty())
                s.rounds.push_back(std::move(round));
            round.clear();
            continue;
        }
        std::istringstream ls(line);
        Move mv;
        if (!(ls >> mv.src_bank >> mv.src_off >> mv.dst_bank >> mv.dst_off))
            throw Error("malformed schedule line: " + line);
        round.push_back(mv);
    }
    if (!round.empty())
        s.rounds.push_back(std::move(round));
    return s;
}

// ---------------------------------------------------------------------------
// Row-major <-> column-major conversion
// ---------------------------------------------------------------------------

namespace detail {

// Closed-form conversion rounds for shapes where one dimension divides the
// other (destination banks are distinct by construction). Emits the
// to-column-major direction; reverse the moves for the inverse.
template <class Emit>
void conversion_rounds(u32 W, u32 M, Emit&& emit) {
    std::vector<Move> round(W);
    if (M % W == 0) {
        for (u32 rr = 0; rr < M / W; ++rr) {
            for (u32 c = 0; c < W; ++c) {
                for (u32 i = 0; i < W; ++i) {
                    const u32 j = rr * W + (i + c) % W;
                    const u64 lin = u64(i) * M + j;
                    round[i] = {i, j, u32(lin % W), u32(lin / W)};
                }
                emit(round);
            }
        }
    } else if (W % M == 0) {
        const u32 rows_per_col = W / M;
        for (u32 r = 0; r < M; ++r) {
            for (u32 i = 0; i < W; ++i) {
                const u32 q = i / rows_per_col;
                const u32 j = (r + q) % M;
                const u64 lin = u64(i) * M + j;
                round[i] = {i, j, u32(lin % W), u32(lin / W)};
            }
            emit(round);
        }
    } else {
        // irregular shape: fall back to the generic offline scheduler
        std::vector<std::pair<u32, u32>> perm(u64(W) * M);
        for (u32 i = 0; i < W; ++i)
            for (u32 j = 0; j < M; ++j) {
                const u64 lin = u64(i) * M + j;
                perm[u64(i) * M + j] = {u32(lin % W), u32(lin / W)};
            }
        Schedule s = offline_schedule(W, M, perm);
        for (auto& rd : s.rounds)
            emit(rd);
    }
}

enum class ConvDir { to_column_major, to_row_major };

inline void convert_layout(const MatrixView& v, ConvDir dir) {
    const u32 W = v.W(), M = v.M();
    if (W == 1 || M == 1)
        return;  // both layouts coincide
    if (W == M) {
        // conversion degenerates to the square transpose
        transpose_square(v);
        return;
    }
    Machine& m = v.machine();
    StepBatch b;
    std::vector<word> vals;
    conversion_rounds(W, M, [&](const std::vector<Move>& round) {
        b.clear();
        for (const Move& mv : round) {
            const u32 sb = dir == ConvDir::to_column_major ? mv.src_bank : mv.dst_bank;
            const u32 so = dir == ConvDir::to_column_major ? mv.src_off : mv.dst_off;
            b.read(v.bank(sb), v.bank(sb), v.off(so));
        }
        {
            const auto& res = m.execute(b);
            vals.assign(res.begin(), res.end());
        }
        b.clear();
        for (std::size_t i = 0; i < round.size(); ++i) {
            const Move& mv = round[i];
            const u32 sb = dir == ConvDir::to_column_major ? mv.src_bank : mv.dst_bank;
            const u32 db = dir == ConvDir::to_column_major ? mv.dst_bank : mv.src_bank;
            const u32 dofs = dir == ConvDir::to_column_major ? mv.dst_off : mv.src_off;
            b.write(v.bank(sb), v.bank(db), v.s0(dofs), vals[i]);
        }
        m.execute(b);
    });
    copy_window(v, v.s0_base(), v.col_base(), M);
}

}  // namespace detail

/// Relayout: the value at row-major linear index v = i*m + j moves to cell
/// (v mod W, v div W). Staged through the first scratch window; <= 4M steps.
inline void to_column_major(const MatrixView& v) {
    detail::convert_layout(v, detail::ConvDir::to_column_major);
}

/// Inverse of to_column_major: column-major linear index u = j*W + i moves to
/// (u div M, u mod M).
inline void to_row_major(const MatrixView& v) {
    detail::convert_layout(v, detail::ConvDir::to_row_major);
}

}  // namespace dmm
