#pragma once

// permute.hpp — the randomized permutation pipeline. Every label encodes its
// destination (i, j) as the word i*m + j; a common hash colors the labels so
// that each communication step delivers at most one label per destination
// bank, leftovers shrink geometrically, and a packed integer sort plus a
// three-phase delivery finishes the tail. A deterministic fallback (full
// integer sort + the same delivery) guarantees termination on any input.

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "dmm/core.hpp"
#include "dmm/partition.hpp"
#include "dmm/rng.hpp"
#include "dmm/view.hpp"

namespace dmm {

// counter-region slots
namespace ctr {
constexpr u32 hash_word = 0;
constexpr u32 sync = 1;
constexpr u32 load = 2;
constexpr u32 cursor = 3;
}  // namespace ctr

/// Idealized constant-time hash oracle standing in for the m-wise independent
/// family: the representation is m opaque words (what the broadcast pays
/// for), evaluation is a unit-cost PRF keyed by the first word. Values are
/// fully independent per input, so "unlucky rows" cannot occur.
class HashOracle {
  public:
    HashOracle() = default;
    HashOracle(word key, u32 m) : key_(key), m_(m) {}
    u32 operator()(u32 i) const {
        return static_cast<u32>(splitmix64(key_ ^ (u64(i) * 0x9e3779b97f4a7c15ULL)) % m_);
    }

  private:
    word key_ = 0;
    u32 m_ = 1;
};

/// Color of label (i, j): the k with j == h(i) + k (mod m).
inline u32 color_of(word label, const HashOracle& h, u32 m) {
    const u32 i = static_cast<u32>(label / m);
    const u32 j = static_cast<u32>(label % m);
    return (j + m - h(i)) % m;
}

struct PermuteParams {
    u32 alpha = 4;    // communication passes per iteration
    u32 iter_cap = 64;

    static PermuteParams standard() { return {}; }
};

struct PermuteReport {
    u32 iterations = 0;
    bool fallback = false;
    bool used_packing = false;
    u32 packed_width = 0;            // m'
    u64 threshold = 0;               // T
    u64 random_words = 0;
    std::vector<u64> leftover_history;  // global leftover after each iteration
    std::vector<u32> shifts;         // per-row preprocessing shifts (audit record)
    u32 cleanup_retries = 0;         // from the packed integer sort
};

/// Pipeline report, CSV form: a header line, then one line per iteration.
inline std::string permute_report_csv(const PermuteReport& r) {
    std::string s = "iteration,leftover,threshold,fallback,random_words\n";
    for (std::size_t i = 0; i < r.leftover_history.size(); ++i)
        s += std::to_string(i + 1) + "," + std::to_string(r.leftover_history[i]) + "," +
             std::to_string(r.threshold) + "," + (r.fallback ? "1" : "0") + "," +
             std::to_string(r.random_words) + "\n";
    return s;
}

namespace detail {

// Cells that no longer hold a label carry the value w*m — one past the
// largest encoded label, so it sorts behind every real key.
inline word empty_label(const Machine& m) { return m.config().n(); }

struct RowHoldings {
    // offsets of still-held labels in the working window, bucketed by color
    std::vector<std::vector<u32>> by_color;
    u32 count = 0;
};

// Stopping threshold T = max(ceil(wm / L^3), w) with L = max(log_m w, 2).
inline u64 permute_threshold(u32 w, u32 m) {
    const double L = std::max(std::log(double(w)) / std::log(double(m)), 2.0);
    const double t = std::ceil(double(w) * m / (L * L * L));
    return std::max<u64>(u64(t), w);
}

}  // namespace detail

/// Preprocessing: each row cyclically shifts its labels by a private random
/// amount in [1, m], then every aligned m x m block of rows is transposed.
/// O(m) steps, conflict-free. The drawn shifts are returned for the audit
/// record.
inline std::vector<u32> preprocess_shuffle(const MatrixView& v, Rng& rng,
                                           u64* words_drawn = nullptr) {
    const u32 W = v.W(), M = v.M();
    if (W % M != 0)
        throw ShapeViolation("preprocessing needs m | w");
    std::vector<u32> shift(W);
    for (u32 r = 0; r < W; ++r)
        shift[r] = 1 + static_cast<u32>(rng_below(rng, M));
    if (words_drawn)
        *words_drawn += W;
    for_rows(v, [&](std::size_t r, RowIO& io) {
        const u32 s = shift[r] % M;
        if (s == 0)
            return;
        // walk the gcd(M, s) rotation cycles with one carried register
        const u32 g = std::gcd(M, s);
        for (u32 start = 0; start < g; ++start) {
            word carry = io.read(v.off(start));
            u32 pos = (start + s) % M;
            while (pos != start) {
                const word tmp = io.read(v.off(pos));
                io.write(v.off(pos), carry);
                carry = tmp;
                pos = (pos + s) % M;
            }
            io.write(v.off(start), carry);
        }
    });
    std::vector<MatrixView> blocks;
    for (u32 b = 0; b < W / M; ++b)
        blocks.push_back(v.row_range(b * M, M));
    v.machine().lockstep(blocks.size(), [&](std::size_t b) { transpose_square(blocks[b]); });
    return shift;
}

/// Row 0 draws the oracle and distributes its m representation words (one
/// write per step), then doubling replicates them; <= m + 2 ceil(log2 w)
/// steps. Returns the oracle all rows now share.
inline HashOracle draw_and_broadcast_hash(Machine& m, Rng& rng, u64* words_drawn = nullptr) {
    const u32 mm = m.m(), w = m.w();
    std::vector<word> payload(mm);
    for (u32 j = 0; j < mm; ++j)
        payload[j] = rng();
    if (words_drawn)
        *words_drawn += mm;
    const u32 slot = m.config().counter_base() + ctr::hash_word;
    StepBatch b;
    for (u32 j = 0; j < std::min(mm, w); ++j) {
        b.clear();
        b.write(0, j, slot, payload[j]);
        m.execute(b);
    }
    std::vector<u32> banks(w);
    for (u32 r = 0; r < w; ++r)
        banks[r] = r;
    broadcast_doubling(m, banks, std::min(mm, w), slot);
    return HashOracle(payload[0], mm);
}

namespace detail {

// Iteration-start rescan: compact the row's held labels into the working
// window sorted by color (single base-m counting pass on the derived color
// key, staged through s0 with the histogram in s1), and rebuild the
// controller-side color buckets from the same reads.
inline void rescan_and_bucket(const MatrixView& v, const HashOracle& h,
                              std::vector<RowHoldings>& rows) {
    const u32 M = v.M();
    const word empty = empty_label(v.machine());
    rows.assign(v.W(), {});
    for_rows(v, [&](std::size_t r, RowIO& io) {
        RowHoldings& hold = rows[r];
        hold.by_color.assign(M, {});
        for (u32 b = 0; b < M; ++b)
            io.write(v.s1(b), 0);
        std::vector<word> vals(M);
        for (u32 c = 0; c < M; ++c) {
            vals[c] = io.read(v.off(c));
            if (vals[c] == empty)
                continue;
            const u32 g = color_of(vals[c], h, M);
            io.write(v.s1(g), io.read(v.s1(g)) + 1);
        }
        word run = 0;
        for (u32 b = 0; b < M; ++b) {
            const word cnt = io.read(v.s1(b));
            io.write(v.s1(b), run);
            run += cnt;
        }
        for (u32 c = 0; c < M; ++c) {
            if (vals[c] == empty)
                continue;
            const u32 g = color_of(vals[c], h, M);
            const word pos = io.read(v.s1(g));
            io.write(v.s0(u32(pos)), vals[c]);
            io.write(v.s1(g), pos + 1);
        }
        const u32 cnt = u32(run);
        for (u32 c = 0; c < M; ++c)
            io.write(v.off(c), c < cnt ? io.read(v.s0(c)) : empty);
        // rebuild buckets: compacted cells are color-sorted
        hold.count = cnt;
        for (u32 c = 0; c < cnt; ++c) {
            const word x = v.machine().peek(v.bank(u32(r)), v.off(c));
            hold.by_color[color_of(x, h, M)].push_back(c);
        }
    });
}

}  // namespace detail

/// One communication phase: alpha passes of m color steps. At color step k
/// every row holding an undelivered label of color k sends one of them to
/// its destination bank's output slot (read own cell, write destination,
/// mark the source cell empty — 3 machine steps per color). The coloring
/// makes each write batch bank-disjoint. Returns the global leftover count.
inline u64 communication_phase(const MatrixView& v, [[maybe_unused]] const HashOracle& h,
                               u32 alpha, std::vector<detail::RowHoldings>& rows, u32 out_base) {
    // the coloring is already materialized in the rescan buckets; h stays in
    // the signature because callers must use the same draw for both
    const u32 W = v.W(), M = v.M();
    Machine& mach = v.machine();
    std::vector<std::vector<u32>> next(M);  // per color: per-row next bucket index
    for (u32 k = 0; k < M; ++k)
        next[k].assign(W, 0);
    StepBatch b;
    std::vector<u32> senders;
    std::vector<word> vals;
    for (u32 pass = 0; pass < alpha; ++pass) {
        for (u32 k = 0; k < M; ++k) {
            senders.clear();
            b.clear();
            for (u32 r = 0; r < W; ++r) {
                auto& bucket = rows[r].by_color[k];
                if (next[k][r] < bucket.size()) {
                    b.read(v.bank(r), v.bank(r), v.off(bucket[next[k][r]]));
                    senders.push_back(r);
                }
            }
            {
                const auto& res = mach.execute(b);
                vals.assign(res.begin(), res.end());
            }
            b.clear();
            for (std::size_t i = 0; i < senders.size(); ++i) {
                const word label = vals[i];
                const u32 di = u32(label / M), dj = u32(label % M);
                b.write(v.bank(senders[i]), v.bank(di), out_base + dj, label);
            }
            mach.execute(b);
            b.clear();
            for (std::size_t i = 0; i < senders.size(); ++i) {
                const u32 r = senders[i];
                b.write(v.bank(r), v.bank(r), v.off(rows[r].by_color[k][next[k][r]]),
                        detail::empty_label(mach));
                ++next[k][r];
                --rows[r].count;
            }
            mach.execute(b);
        }
    }
    u64 leftover = 0;
    for (u32 r = 0; r < W; ++r)
        leftover += rows[r].count;
    return leftover;
}

/// Synchronization: per-row leftover counts are written down, tree-summed,
/// and the total broadcast back. O(log w) steps.
inline u64 synchronize(const MatrixView& v, const std::vector<detail::RowHoldings>& rows) {
    Machine& m = v.machine();
    const u32 slot = m.config().counter_base() + ctr::sync;
    for_rows(v, [&](std::size_t r, RowIO& io) { io.write(slot, rows[r].count); });
    const word total = tree_reduce_sum(m, v.rows(), slot);
    broadcast_value(m, v.rows(), total, slot);
    return total;
}

struct PackedLayout {
    u32 width = 0;     // m'
    u32 base = 0;      // column base of the packed region
    u32 s0 = 0, s1 = 0;
};

/// Pack the leftovers into a w x m' matrix in the scratch-A window:
/// row-local compaction, then t random shifted matching rounds in which a
/// row with load above theta hands ceil(2m/t) labels to a light partner
/// that has not received before. Throws PackingOverflow if a row still
/// exceeds m'.
inline PackedLayout pack_leftovers(const MatrixView& v, Rng& rng, u64 leftover_total, u32 alpha,
                                   u64* words_drawn = nullptr) {
    const u32 W = v.W(), M = v.M();
    Machine& mach = v.machine();
    const auto& cfg = mach.config();
    if (!cfg.has_scratch_b())
        throw CapacityExceeded("packing needs the standard 4m+8 bank layout");

    const u32 t = std::max<u32>(1, u32(ilog2_ceil(W)) * u32(ilog2_ceil(W)));
    const u32 theta = u32((2 * leftover_total + W - 1) / W) + alpha;
    const u32 bundle = (2 * M + t - 1) / t;
    // Smallest power-of-two width that fits the loads, leaves scratch for the
    // packed sort, keeps the sort's balance tower well-shaped, and leaves the
    // shifted-square cleanup enough headroom: its retry budget can absorb a
    // dirty band of about width/2 rows per pass pair, while the band after
    // the recursion grows like 2^(2 log_width W).
    auto cleanup_headroom = [&](u32 wd) {
        const double band = std::pow(2.0, 2.0 * std::log2(double(W)) / std::log2(double(wd)));
        return band <= 0.5 * double(wd) * double(ilog2_ceil(W));
    };
    u32 width = u32(next_pow2(u64(theta) + bundle + 1));
    while (2 * width <= M && (!general_sort_shape_ok(W, width) || !cleanup_headroom(width)))
        width *= 2;
    if (2 * width > M)
        throw PackingOverflow("no feasible packed width below m/2 for this shape");

    const u32 load_slot = cfg.counter_base() + ctr::load;
    const u32 cursor_slot = cfg.counter_base() + ctr::cursor;
    constexpr word kReceived = word(1) << 32;

    // compact own leftovers into the scratch-A window, pad the packed width
    const word empty = detail::empty_label(mach);
    std::vector<u32> load(W, 0);
    for_rows(v, [&](std::size_t r, RowIO& io) {
        u32 out = 0;
        for (u32 c = 0; c < M; ++c) {
            const word x = io.read(v.off(c));
            if (x != empty)
                io.write(v.s0(out++), x);
        }
        load[r] = out;
        for (u32 c = out; c < width; ++c)
            io.write(v.s0(c), empty);
        io.write(load_slot, out);
        io.write(cursor_slot, out);
    });

    // t shifted matching rounds
    if (words_drawn)
        *words_drawn += t;
    StepBatch b;
    for (u32 round = 0; round < t; ++round) {
        const u32 shift = 1 + u32(rng_below(rng, W));
        b.clear();
        for (u32 r = 0; r < W; ++r)
            b.read(v.bank(r), v.bank((r + shift) % W), load_slot);
        std::vector<word> partner_load;
        {
            const auto& res = mach.execute(b);
            partner_load.assign(res.begin(), res.end());
        }
        std::vector<u32> senders;
        std::vector<u32> give(W, 0);
        for (u32 r = 0; r < W; ++r) {
            const bool received = (partner_load[r] & kReceived) != 0;
            const u32 plo = u32(partner_load[r] & 0xffffffffu);
            if (load[r] > theta && !received && plo <= theta) {
                senders.push_back(r);
                give[r] = std::min(bundle, load[r]);
            }
        }
        b.clear();
        for (u32 r : senders)
            b.read(v.bank(r), v.bank((r + shift) % W), cursor_slot);
        std::vector<word> cursors;
        {
            const auto& res = mach.execute(b);
            cursors.assign(res.begin(), res.end());
        }
        for (u32 k = 0; k < bundle; ++k) {
            b.clear();
            std::vector<u32> active;
            for (u32 r : senders)
                if (k < give[r]) {
                    b.read(v.bank(r), v.bank(r), v.s0(load[r] - 1 - k));
                    active.push_back(r);
                }
            const auto& res = mach.execute(b);
            std::vector<word> moved(res.begin(), res.end());
            b.clear();
            for (std::size_t i = 0; i < active.size(); ++i) {
                const u32 r = active[i];
                const u32 p = (r + shift) % W;
                std::size_t si = 0;
                while (senders[si] != r)
                    ++si;
                b.write(v.bank(r), v.bank(p), v.s0(u32(cursors[si]) + k), moved[i]);
            }
            mach.execute(b);
        }
        // update partner counters (load | received, cursor) and own load
        b.clear();
        for (std::size_t si = 0; si < senders.size(); ++si) {
            const u32 r = senders[si];
            const u32 p = (r + shift) % W;
            const u32 plo = u32(partner_load[r] & 0xffffffffu);
            b.write(v.bank(r), v.bank(p), load_slot, word(plo + give[r]) | kReceived);
        }
        mach.execute(b);
        b.clear();
        for (std::size_t si = 0; si < senders.size(); ++si) {
            const u32 r = senders[si];
            const u32 p = (r + shift) % W;
            b.write(v.bank(r), v.bank(p), cursor_slot, cursors[si] + give[r]);
        }
        mach.execute(b);
        b.clear();
        for (u32 r : senders) {
            load[r] -= give[r];
            b.write(v.bank(r), v.bank(r), load_slot, load[r]);
        }
        mach.execute(b);
        for (u32 r : senders) {
            const u32 p = (r + shift) % W;
            load[p] += give[r];  // mirror of the counter writes
        }
    }

    for (u32 r = 0; r < W; ++r)
        if (load[r] > width)
            throw PackingOverflow("row " + std::to_string(r) + " holds " +
                                  std::to_string(load[r]) + " > m' = " + std::to_string(width));

    // pad every row's packed window to width
    for_rows(v, [&](std::size_t r, RowIO& io) {
        for (u32 c = load[r]; c < width; ++c)
            io.write(v.s0(c), empty);
    });

    PackedLayout layout;
    layout.width = width;
    layout.base = v.s0_base();
    layout.s0 = cfg.scratch_b_base();
    layout.s1 = cfg.scratch_b_base() + width;
    return layout;
}

namespace detail {

// Three delivery phases over a lexicographically sorted packed matrix:
// middle labels (destination row owned exclusively by this packed row) one
// per step; then first-group labels at step j; then last-group labels at
// step j. Reads and writes alternate, and every write batch is
// bank-disjoint by the sortedness/bijection argument.
inline void three_phase_delivery(const MatrixView& packed, u32 dest_m, u32 out_base) {
    const u32 W = packed.W(), Mp = packed.M();
    Machine& mach = packed.machine();

    struct RowPlan {
        std::vector<u32> middle;            // offsets
        std::vector<std::pair<u32, u32>> first, last;  // (j, offset)
    };
    const word empty = empty_label(mach);
    std::vector<RowPlan> plan(W);
    for (u32 r = 0; r < W; ++r) {
        std::vector<std::pair<word, u32>> labels;  // (label, offset)
        for (u32 c = 0; c < Mp; ++c) {
            const word x = mach.peek(packed.bank(r), packed.off(c));
            if (x != empty)
                labels.emplace_back(x, c);
        }
        if (labels.empty())
            continue;
        const u32 i_first = u32(labels.front().first / dest_m);
        const u32 i_last = u32(labels.back().first / dest_m);
        for (auto [x, c] : labels) {
            const u32 i = u32(x / dest_m), j = u32(x % dest_m);
            if (i == i_first)
                plan[r].first.emplace_back(j, c);
            else if (i == i_last)
                plan[r].last.emplace_back(j, c);
            else
                plan[r].middle.push_back(c);
        }
    }

    StepBatch b;
    std::vector<u32> senders;
    std::vector<word> vals;
    auto send = [&](auto&& offset_of_sender) {
        // one read batch + one write batch; offset_of_sender fills `senders`
        b.clear();
        senders.clear();
        offset_of_sender();
        if (b.empty())
            return;
        {
            const auto& res = mach.execute(b);
            vals.assign(res.begin(), res.end());
        }
        b.clear();
        for (std::size_t i = 0; i < senders.size(); ++i) {
            const word label = vals[i];
            b.write(packed.bank(senders[i]), packed.bank(u32(label / dest_m)),
                    out_base + u32(label % dest_m), label);
        }
        mach.execute(b);
    };

    u32 max_middle = 0;
    for (u32 r = 0; r < W; ++r)
        max_middle = std::max<u32>(max_middle, u32(plan[r].middle.size()));
    for (u32 k = 0; k < max_middle; ++k)
        send([&] {
            for (u32 r = 0; r < W; ++r)
                if (k < plan[r].middle.size()) {
                    b.read(packed.bank(r), packed.bank(r), packed.off(plan[r].middle[k]));
                    senders.push_back(r);
                }
        });
    for (auto group : {&RowPlan::first, &RowPlan::last}) {
        for (u32 j = 0; j < dest_m; ++j)
            send([&] {
                for (u32 r = 0; r < W; ++r)
                    for (auto [jj, c] : plan[r].*group)
                        if (jj == j) {
                            b.read(packed.bank(r), packed.bank(r), packed.off(c));
                            senders.push_back(r);
                        }
            });
    }
}

}  // namespace detail

/// Finishing: lexicographically sort the packed labels with the general
/// integer sort (empty cells carry the one-past-the-end key, so they land at
/// the tail), then deliver them in three conflict-free phases.
inline GeneralStats finish(const MatrixView& packed, u32 dest_m, u32 out_base) {
    GeneralStats st = integer_sort_general(packed, detail::empty_label(packed.machine()) + 1,
                                           nullptr, /*enforce_analysis_pre=*/false);
    detail::three_phase_delivery(packed, dest_m, out_base);
    return st;
}

/// The full pipeline. Returns the run's report; the output region of bank i
/// ends up holding the labels (i, 0..m-1) in order.
inline PermuteReport permute(Machine& mach, Rng& rng, const PermuteParams& params = {}) {
    const u32 w = mach.w(), m = mach.m();
    if (m < 2 || w % m != 0)
        throw ShapeViolation("permute needs m >= 2 and m | w");
    if (!general_sort_shape_ok(w, m))
        throw ShapeViolation("permute needs a shape its fallback sort can take");
    const auto& cfg = mach.config();
    if (!cfg.has_scratch_b())
        throw CapacityExceeded("permute needs the standard 4m+8 bank layout");

    MatrixView v = MatrixView::make(mach, [&] {
        std::vector<u32> rows(w);
        for (u32 r = 0; r < w; ++r)
            rows[r] = r;
        return rows;
    }(), cfg.work_base(), m, cfg.scratch_a_base(), cfg.scratch_b_base());
    const u32 out_base = cfg.out_base();

    PermuteReport rep;
    rep.threshold = detail::permute_threshold(w, m);

    rep.shifts = preprocess_shuffle(v, rng, &rep.random_words);

    std::vector<detail::RowHoldings> rows;
    u64 leftover = u64(w) * m;
    while (leftover > rep.threshold && rep.iterations < params.iter_cap) {
        HashOracle h = draw_and_broadcast_hash(mach, rng, &rep.random_words);
        rescan_and_bucket(v, h, rows);
        communication_phase(v, h, params.alpha, rows, out_base);
        leftover = synchronize(v, rows);
        rep.leftover_history.push_back(leftover);
        ++rep.iterations;
    }

    bool delivered = leftover == 0;
    if (!delivered && leftover <= rep.threshold) {
        try {
            PackedLayout pk = pack_leftovers(v, rng, leftover, params.alpha, &rep.random_words);
            rep.used_packing = true;
            rep.packed_width = pk.width;
            MatrixView packed = MatrixView::make(mach, v.rows(), pk.base, pk.width, pk.s0, pk.s1);
            GeneralStats st = finish(packed, m, out_base);
            rep.cleanup_retries = st.cleanup_retries;
            delivered = true;
        } catch (const PackingOverflow&) {
            mach.recover_clock();
            delivered = false;
        } catch (const PostconditionFailed&) {
            mach.recover_clock();  // the packed sort's cleanup budget ran out
            delivered = false;
        }
    }
    if (!delivered) {
        // deterministic fallback: compact in place, pad with sentinels, sort
        // the full matrix, deliver with the same three phases
        rep.fallback = true;
        const word empty = detail::empty_label(mach);
        for_rows(v, [&](std::size_t, RowIO& io) {
            u32 out = 0;
            std::vector<word> keep;
            for (u32 c = 0; c < m; ++c) {
                const word x = io.read(v.off(c));
                if (x != empty)
                    keep.push_back(x);
            }
            for (const word x : keep)
                io.write(v.off(out++), x);
            for (u32 c = out; c < m; ++c)
                io.write(v.off(c), empty);
        });
        try {
            GeneralStats st = finish(v, m, out_base);
            rep.cleanup_retries = st.cleanup_retries;
        } catch (const PostconditionFailed&) {
            // last resort at shapes whose cleanup budget cannot close: a
            // comparison tall sort has no such fragility, and the multiset in
            // the working window survives the failed attempt intact
            mach.recover_clock();
            sort_tall(v);
            detail::three_phase_delivery(v, m, out_base);
        }
    }
    return rep;
}

/// Exact output check: bank i's output region must hold i*m + j at slot j.
inline bool permute_output_correct(const Machine& mach) {
    const u32 w = mach.w(), m = mach.m();
    const u32 base = mach.config().out_base();
    for (u32 i = 0; i < w; ++i)
        for (u32 j = 0; j < m; ++j)
            if (mach.peek(i, base + j) != u64(i) * m + j)
                return false;
    return true;
}

// ---------------------------------------------------------------------------
// Heavy-tail experiment (empirical companion of the leftover analysis)
// ---------------------------------------------------------------------------

struct HeavyTailRow {
    u32 k = 0;                 // starting labels in the row
    double mean_leftover = 0;  // after one phase of alpha passes
    double envelope = 0;       // m * (k / 2m)^alpha
    u32 rows = 0;
};

/// Simulate rows holding k labels with random destinations under a fresh
/// random hash: label (i, j) gets color (j - h(i)) mod m, labels sharing a
/// destination row get distinct offsets, and after one phase of alpha passes
/// a color keeps only its excess beyond alpha. Reports the measured mean
/// leftover next to the analytic envelope m * (k / 2m)^alpha.
inline std::vector<HeavyTailRow> heavy_tail_experiment(u32 w, u32 m, u32 alpha, u32 rows_per_k,
                                                       u64 seed,
                                                       const std::vector<u32>& k_values) {
    Rng rng(seed);
    std::vector<HeavyTailRow> out;
    std::vector<u32> color_count(m);
    for (u32 k : k_values) {
        if (k > m)
            throw ShapeViolation("a row holds at most m labels");
        double total = 0;
        for (u32 trial = 0; trial < rows_per_k; ++trial) {
            std::fill(color_count.begin(), color_count.end(), 0);
            std::map<u32, std::pair<u32, std::set<u32>>> dest;  // i -> (h(i), used js)
            for (u32 t = 0; t < k; ++t) {
                const u32 i = u32(rng_below(rng, w));
                auto it = dest.find(i);
                if (it == dest.end())
                    it = dest.emplace(i, std::make_pair(u32(rng_below(rng, m)), std::set<u32>{}))
                             .first;
                u32 j;
                do {
                    j = u32(rng_below(rng, m));
                } while (it->second.second.count(j));
                it->second.second.insert(j);
                ++color_count[(j + m - it->second.first) % m];
            }
            u64 left = 0;
            for (u32 c = 0; c < m; ++c)
                left += color_count[c] > alpha ? color_count[c] - alpha : 0;
            total += double(left);
        }
        HeavyTailRow row;
        row.k = k;
        row.rows = rows_per_k;
        row.mean_leftover = total / rows_per_k;
        row.envelope = double(m) * std::pow(double(k) / (2.0 * m), double(alpha));
        out.push_back(row);
    }
    return out;
}

inline std::string heavy_tail_csv(const std::vector<HeavyTailRow>& rows) {
    std::string s = "k,rows,mean_leftover,envelope\n";
    for (const auto& r : rows)
        s += std::to_string(r.k) + "," + std::to_string(r.rows) + "," +
             std::to_string(r.mean_leftover) + "," + std::to_string(r.envelope) + "\n";
    return s;
}

}  // namespace dmm
