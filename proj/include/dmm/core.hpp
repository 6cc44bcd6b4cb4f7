#pragma once

// core.hpp — the Discrete Memory Model machine.
//
// w processors over w memory banks, advancing in lockstep steps. Each step a
// processor performs at most one word access, and no bank may be touched twice
// within a step (the Conflict Avoidance Condition). Strict mode turns a CAC
// violation into an error; permissive mode serializes it and counts it.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dmm {

using word = std::uint64_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;

inline u32 ilog2_ceil(u64 x) {
    u32 k = 0;
    u64 p = 1;
    while (p < x) {
        p <<= 1;
        ++k;
    }
    return k;
}

inline bool is_pow2(u64 x) { return x != 0 && (x & (x - 1)) == 0; }

inline u64 next_pow2(u64 x) {
    u64 p = 1;
    while (p < x)
        p <<= 1;
    return p;
}

inline u32 isqrt_floor(u32 x) {
    u32 r = static_cast<u32>(std::sqrt(double(x)));
    while (u64(r) * r > x)
        --r;
    while (u64(r + 1) * (r + 1) <= x)
        ++r;
    return r;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConflictViolation : Error { using Error::Error; };
// Two lockstep branches hit the same bank in the same merged step.
struct OverlappingViews : ConflictViolation { using ConflictViolation::ConflictViolation; };
struct OutOfBounds : Error { using Error::Error; };
struct DuplicateProcessor : Error { using Error::Error; };
struct CapacityExceeded : Error { using Error::Error; };
struct TraceIncomplete : Error { using Error::Error; };
struct NotSquare : Error { using Error::Error; };
struct NotBijective : Error { using Error::Error; };
struct ShapeViolation : Error { using Error::Error; };
struct KeyOutOfRange : Error { using Error::Error; };
struct InvalidInstance : Error { using Error::Error; };
struct DivisibilityViolation : Error { using Error::Error; };
struct PostconditionFailed : Error { using Error::Error; };
struct PackingOverflow : Error { using Error::Error; };
struct VerificationFailed : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct MachineConfig {
    u32 w = 1;              // banks == processors
    u32 m = 1;              // words per logical matrix row
    u32 bank_capacity = 0;  // words per bank, >= 2m + 8
    bool strict = true;     // conflict = error (else counted + serialized)

    // Region map within a bank. The minimum capacity 2m+8 covers the input
    // and output regions plus counters; the standard layout adds two more
    // m-word scratch regions so radix histograms and staged permutations
    // never collide with delivered output.
    u32 work_base() const { return 0; }
    u32 out_base() const { return m; }
    u32 scratch_a_base() const { return 2 * m; }
    u32 scratch_b_base() const { return 3 * m; }
    u32 counter_base() const { return bank_capacity - 8; }

    bool has_scratch_a() const { return bank_capacity >= 3 * m + 8; }
    bool has_scratch_b() const { return bank_capacity >= 4 * m + 8; }

    u64 n() const { return u64(w) * m; }

    static MachineConfig standard(u32 w, u32 m, bool strict = true) {
        MachineConfig c;
        c.w = w;
        c.m = m;
        c.bank_capacity = 4 * m + 8;
        c.strict = strict;
        return c;
    }

    void validate() const {
        if (w < 1 || m < 1)
            throw ShapeViolation("machine needs w >= 1 and m >= 1");
        if (bank_capacity < 2 * m + 8)
            throw CapacityExceeded("bank_capacity must be at least 2m + 8");
    }
};

// ---------------------------------------------------------------------------
// Access requests and traces
// ---------------------------------------------------------------------------

enum class Op : std::uint8_t { read = 0, write = 1 };

struct AccessRequest {
    u32 processor = 0;
    u32 bank = 0;
    u32 offset = 0;
    Op op = Op::read;
    word value = 0;  // payload for writes
};

/// One parallel step's worth of accesses, at most one per processor.
struct StepBatch {
    std::vector<AccessRequest> reqs;

    void clear() { reqs.clear(); }
    bool empty() const { return reqs.empty(); }
    std::size_t size() const { return reqs.size(); }

    std::size_t read(u32 processor, u32 bank, u32 offset) {
        reqs.push_back({processor, bank, offset, Op::read, 0});
        return reqs.size() - 1;
    }
    void write(u32 processor, u32 bank, u32 offset, word value) {
        reqs.push_back({processor, bank, offset, Op::write, value});
    }
};

struct TraceEvent {
    u64 step = 0;
    u32 processor = 0;
    u32 bank = 0;
    u32 offset = 0;
    Op op = Op::read;
    word value = 0;
};

/// Full audited access history plus the cost meter readouts.
struct TraceLog {
    u64 steps = 0;
    u64 conflicts = 0;
    u32 w = 0;
    bool recording = false;
    std::vector<TraceEvent> events;

    u64 work() const { return steps * w; }
};

struct TraceViolation {
    u64 step = 0;
    u32 bank = 0;
};

/// Streaming CAC re-audit, independent of the machine's own enforcement.
/// Subscribes to the access feed and keeps its own last-touch table, so a
/// machine bug in conflict detection would still surface here. Bank slots
/// are written only by the owning row during threaded row-local sections,
/// which keeps the table race-free; the violation tally is atomic.
class TraceAuditor {
  public:
    explicit TraceAuditor(u32 w) : seen_(w, 0) {}

    void on_access(u64 step, u32 bank) {
        if (bank >= seen_.size() || seen_[bank] == step + 1) {
            record(step, bank);
            return;
        }
        seen_[bank] = step + 1;
    }

    void on_event(const TraceEvent& e) { on_access(e.step, e.bank); }

    u64 violation_count() const { return count_.load(std::memory_order_relaxed); }
    std::vector<TraceViolation> sample() const {
        std::lock_guard<std::mutex> lock(mu_);
        return violations_;
    }
    bool clean() const { return violation_count() == 0; }

  private:
    void record(u64 step, u32 bank) {
        count_.fetch_add(1, std::memory_order_relaxed);
        std::lock_guard<std::mutex> lock(mu_);
        if (violations_.size() < 16)
            violations_.push_back({step, bank});
    }

    std::vector<u64> seen_;
    mutable std::mutex mu_;
    std::vector<TraceViolation> violations_;
    std::atomic<u64> count_{0};
};

/// Offline re-audit of a recorded trace: every (step, bank) pair hit more
/// than once. Sort-based on purpose — shares no state with the execution
/// path it checks.
inline std::vector<TraceViolation> verify_trace(const TraceLog& trace) {
    if (!trace.recording)
        throw TraceIncomplete("verify_trace needs a trace with event recording enabled");
    std::vector<std::pair<u64, u32>> keys;
    keys.reserve(trace.events.size());
    for (const TraceEvent& e : trace.events)
        keys.emplace_back(e.step, e.bank);
    std::sort(keys.begin(), keys.end());
    std::vector<TraceViolation> out;
    for (std::size_t i = 1; i < keys.size(); ++i) {
        if (keys[i] == keys[i - 1]) {
            if (out.empty() || out.back().step != keys[i].first || out.back().bank != keys[i].second)
                out.push_back({keys[i].first, keys[i].second});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Machine
// ---------------------------------------------------------------------------

class Machine;

/// Row-local access handle used inside rows_lockstep(): a single processor
/// working exclusively on its own bank, one access per merged step.
class RowIO {
  public:
    word read(u32 offset);
    void write(u32 offset, word value);
    u64 len() const { return len_; }
    u32 bank() const { return bank_; }

  private:
    friend class Machine;
    RowIO(Machine& m, u32 bank, u64 base, u64 branch)
        : m_(m), bank_(bank), base_(base), branch_(branch) {}
    Machine& m_;
    u32 bank_;
    u64 base_;
    u64 branch_;
    u64 len_ = 0;
};

class Machine {
  public:
    explicit Machine(MachineConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        cells_.assign(u64(cfg_.w) * cfg_.bank_capacity, 0);
        last_touch_.assign(cfg_.w, 0);
        last_branch_.assign(cfg_.w, 0);
        proc_mark_.assign(cfg_.w, 0);
        bank_mult_.assign(cfg_.w, 0);
        bank_mult_mark_.assign(cfg_.w, 0);
    }

    const MachineConfig& config() const { return cfg_; }
    u32 w() const { return cfg_.w; }
    u32 m() const { return cfg_.m; }

    u64 steps() const { return steps_; }
    u64 conflicts() const { return conflicts_.load(std::memory_order_relaxed); }
    u64 work() const { return steps_ * cfg_.w; }

    void enable_trace() { recording_ = true; }
    void attach_auditor(TraceAuditor* a) { auditor_ = a; }

    /// Host threads used to execute large row-local sections (0 = one per
    /// hardware thread). Purely a simulation-speed knob; results and meters
    /// are identical for any setting.
    void set_host_threads(u32 n) { host_threads_ = n; }

    TraceLog trace() const {
        TraceLog t;
        t.steps = steps_;
        t.conflicts = conflicts();
        t.w = cfg_.w;
        t.recording = recording_;
        t.events = events_;
        return t;
    }

    /// Execute one parallel step. Returns read results indexed like the batch.
    const std::vector<word>& execute(const StepBatch& batch) {
        results_.assign(batch.reqs.size(), 0);
        ++batch_epoch_;
        const u64 s = steps_;
        u32 max_mult = 1;
        for (std::size_t i = 0; i < batch.reqs.size(); ++i) {
            const AccessRequest& r = batch.reqs[i];
            check_bounds(r.bank, r.offset);
            if (r.processor >= cfg_.w)
                throw OutOfBounds("processor id out of range");
            if (proc_mark_[r.processor] == batch_epoch_)
                throw DuplicateProcessor("two requests from processor " + std::to_string(r.processor));
            proc_mark_[r.processor] = batch_epoch_;
            max_mult = std::max(max_mult, note_touch(r.bank, s));
            word v;
            if (r.op == Op::write) {
                cells_[cell_index(r.bank, r.offset)] = r.value;
                v = r.value;
            } else {
                v = cells_[cell_index(r.bank, r.offset)];
                results_[i] = v;
            }
            feed(s, r.processor, r.bank, r.offset, r.op, v);
        }
        steps_ = s + max_mult;
        return results_;
    }

    /// Run `count` branches as if in parallel: each branch replays from the
    /// same base step and the global clock advances by the longest branch.
    /// Merged-step collisions between branches are CAC violations
    /// (OverlappingViews). Nesting is allowed.
    template <class F>
    void lockstep(std::size_t count, F&& branch) {
        const u64 base = steps_;
        u64 max_end = base;
        for (std::size_t b = 0; b < count; ++b) {
            steps_ = base;
            branch_id_ = ++branch_counter_;
            branch(b);
            max_end = std::max(max_end, steps_);
        }
        steps_ = max_end;
        branch_id_ = ++branch_counter_;
    }

    /// Lockstep over rows doing purely bank-local work: fn(index, RowIO&).
    /// Each row's accesses are confined to its own bank, so the merge is
    /// conflict-free by construction (still stamped and auditable). Rows are
    /// independent down to their bank-indexed state, so large sections run on
    /// a few host threads; results are identical to the serial order. Any
    /// host-side state the callback writes must be per-row slots.
    template <class F>
    void rows_lockstep(const std::vector<u32>& banks, F&& fn) {
        const u64 base = steps_;
        const u64 branch_base = branch_counter_ + 1;
        branch_counter_ += banks.size() + 1;
        const unsigned hw =
            host_threads_ ? host_threads_ : std::thread::hardware_concurrency();
        const unsigned nthreads =
            (recording_ || banks.size() < 4096 || hw < 2) ? 1 : std::min<unsigned>(hw, 8);
        u64 max_len = 0;
        if (nthreads == 1) {
            for (std::size_t i = 0; i < banks.size(); ++i) {
                RowIO io(*this, banks[i], base, branch_base + i);
                fn(i, io);
                max_len = std::max(max_len, io.len());
            }
        } else {
            // contiguous chunks per thread: bank-indexed bookkeeping stays on
            // thread-private cache lines except at chunk seams
            std::vector<u64> maxes(nthreads, 0);
            std::vector<std::exception_ptr> errs(nthreads);
            std::vector<std::thread> pool;
            const std::size_t chunk = (banks.size() + nthreads - 1) / nthreads;
            for (unsigned t = 0; t < nthreads; ++t) {
                pool.emplace_back([&, t] {
                    try {
                        u64 local_max = 0;
                        const std::size_t lo = t * chunk;
                        const std::size_t hi = std::min(banks.size(), lo + chunk);
                        for (std::size_t i = lo; i < hi; ++i) {
                            RowIO io(*this, banks[i], base, branch_base + i);
                            fn(i, io);
                            local_max = std::max(local_max, io.len());
                        }
                        maxes[t] = local_max;
                    } catch (...) {
                        errs[t] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool)
                th.join();
            for (auto& e : errs)
                if (e)
                    std::rethrow_exception(e);
            for (u64 m : maxes)
                max_len = std::max(max_len, m);
        }
        steps_ = base + max_len;
        branch_id_ = branch_counter_;
    }

    /// Resynchronize the step clock after an exception unwound through a
    /// lockstep section: jump past every stamped step so stale same-step
    /// stamps from longer sibling branches cannot read as collisions.
    void recover_clock() {
        u64 hwm = steps_;
        for (u64 t : last_touch_)
            hwm = std::max(hwm, t);
        steps_ = hwm;
        branch_id_ = ++branch_counter_;
    }

    // Host-side inspection and setup; not machine accesses, never metered.
    word peek(u32 bank, u32 offset) const {
        check_bounds(bank, offset);
        return cells_[cell_index(bank, offset)];
    }
    void poke(u32 bank, u32 offset, word v) {
        check_bounds(bank, offset);
        cells_[cell_index(bank, offset)] = v;
    }

  private:
    friend class RowIO;

    u64 cell_index(u32 bank, u32 offset) const {
        return u64(bank) * cfg_.bank_capacity + offset;
    }

    void check_bounds(u32 bank, u32 offset) const {
        if (bank >= cfg_.w)
            throw OutOfBounds("bank " + std::to_string(bank) + " out of range");
        if (offset >= cfg_.bank_capacity)
            throw OutOfBounds("offset " + std::to_string(offset) + " out of range");
    }

    // Stamp the bank for step s; returns this bank's access multiplicity
    // within the step (permissive mode serializes, so cost = max multiplicity).
    u32 note_touch(u32 bank, u64 s) {
        if (last_touch_[bank] == s + 1) {
            const bool cross_branch = last_branch_[bank] != branch_id_;
            if (cfg_.strict) {
                if (cross_branch)
                    throw OverlappingViews("banks " + std::to_string(bank) +
                                           " touched by two lockstep branches in step " +
                                           std::to_string(s));
                throw ConflictViolation("bank " + std::to_string(bank) +
                                        " touched twice in step " + std::to_string(s));
            }
            ++conflicts_;
            if (bank_mult_mark_[bank] == s + 1) {
                return ++bank_mult_[bank];
            }
            bank_mult_mark_[bank] = s + 1;
            bank_mult_[bank] = 2;
            return 2;
        }
        last_touch_[bank] = s + 1;
        last_branch_[bank] = branch_id_;
        return 1;
    }

    void feed(u64 s, u32 proc, u32 bank, u32 off, Op op, word v) {
        if (auditor_)
            auditor_->on_access(s, bank);
        if (recording_)
            events_.push_back({s, proc, bank, off, op, v});
    }

    MachineConfig cfg_;
    std::vector<word> cells_;
    std::vector<word> results_;

    u64 steps_ = 0;
    std::atomic<u64> conflicts_{0};

    std::vector<u64> last_touch_;   // step+1 of last access per bank
    std::vector<u64> last_branch_;  // lockstep branch owning that access
    u64 branch_id_ = 0;
    u64 branch_counter_ = 0;

    std::vector<u64> proc_mark_;  // per-batch duplicate-processor detection
    u64 batch_epoch_ = 0;
    std::vector<u32> bank_mult_;  // permissive-mode multiplicity tracking
    std::vector<u64> bank_mult_mark_;

    bool recording_ = false;
    std::vector<TraceEvent> events_;
    TraceAuditor* auditor_ = nullptr;
    u32 host_threads_ = 0;
};

// The bank id is validated once when the view is built; only the offset needs
// a per-access check. A collision on the own-bank stamp can only come from a
// sibling lockstep branch sharing the bank.
inline word RowIO::read(u32 offset) {
    if (offset >= m_.cfg_.bank_capacity)
        throw OutOfBounds("row-local offset " + std::to_string(offset) + " out of range");
    const u64 s = base_ + len_;
    if (m_.last_touch_[bank_] == s + 1 && m_.last_branch_[bank_] != branch_) {
        if (m_.cfg_.strict)
            throw OverlappingViews("row-local step collision on bank " + std::to_string(bank_));
        m_.conflicts_.fetch_add(1, std::memory_order_relaxed);
    } else {
        m_.last_touch_[bank_] = s + 1;
        m_.last_branch_[bank_] = branch_;
    }
    const word v = m_.cells_[m_.cell_index(bank_, offset)];
    m_.feed(s, bank_, bank_, offset, Op::read, v);
    ++len_;
    return v;
}

inline void RowIO::write(u32 offset, word value) {
    if (offset >= m_.cfg_.bank_capacity)
        throw OutOfBounds("row-local offset " + std::to_string(offset) + " out of range");
    const u64 s = base_ + len_;
    if (m_.last_touch_[bank_] == s + 1 && m_.last_branch_[bank_] != branch_) {
        if (m_.cfg_.strict)
            throw OverlappingViews("row-local step collision on bank " + std::to_string(bank_));
        m_.conflicts_.fetch_add(1, std::memory_order_relaxed);
    } else {
        m_.last_touch_[bank_] = s + 1;
        m_.last_branch_[bank_] = branch_;
    }
    m_.cells_[m_.cell_index(bank_, offset)] = value;
    m_.feed(s, bank_, bank_, offset, Op::write, value);
    ++len_;
}

// ---------------------------------------------------------------------------
// Collectives
// ---------------------------------------------------------------------------

/// Sum one word per row (stored at `offset` in each of the given banks); the
/// total ends up with the first row's processor and is returned.
/// 2*ceil(log2 n) steps, conflict-free.
inline word tree_reduce_sum(Machine& m, const std::vector<u32>& banks, u32 offset) {
    const u32 n = static_cast<u32>(banks.size());
    if (n == 0)
        return 0;
    if (n == 1)
        return m.peek(banks[0], offset);

    std::vector<word> acc(n);
    StepBatch b;
    // step 1: every processor loads its own summand
    for (u32 r = 0; r < n; ++r)
        b.read(banks[r], banks[r], offset);
    {
        const auto& res = m.execute(b);
        for (u32 r = 0; r < n; ++r)
            acc[r] = res[r];
    }
    // level 1 needs no flush: partner cells still hold the raw summands
    u32 half = 1;
    bool first = true;
    while (half < n) {
        const u32 span = half * 2;
        if (!first) {
            b.clear();
            for (u32 r = half; r < n; r += span)
                b.write(banks[r], banks[r], offset, acc[r]);
            m.execute(b);
        }
        b.clear();
        std::vector<u32> readers;
        for (u32 r = 0; r + half < n; r += span) {
            b.read(banks[r], banks[r + half], offset);
            readers.push_back(r);
        }
        const auto& res = m.execute(b);
        for (std::size_t i = 0; i < readers.size(); ++i)
            acc[readers[i]] += res[i];
        half = span;
        first = false;
    }
    return acc[0];
}

inline word tree_reduce_sum(Machine& m, u32 offset) {
    std::vector<u32> banks(m.w());
    for (u32 r = 0; r < m.w(); ++r)
        banks[r] = r;
    return tree_reduce_sum(m, banks, offset);
}

// Doubling rounds shared by the broadcast variants: the first `have` banks
// of the list already hold their word at `off`; receivers pull (processor t
// reads bank t-have, then writes its own bank). 2 steps per round.
inline void broadcast_doubling(Machine& m, const std::vector<u32>& banks, u32 have, u32 off) {
    const u32 n = static_cast<u32>(banks.size());
    StepBatch b;
    std::vector<word> got;
    while (have < n) {
        b.clear();
        const u32 nrecv = std::min(have, n - have);
        for (u32 t = have; t < have + nrecv; ++t)
            b.read(banks[t], banks[t - have], off);
        {
            const auto& res = m.execute(b);
            got.assign(res.begin(), res.end());
        }
        b.clear();
        for (u32 t = have; t < have + nrecv; ++t)
            b.write(banks[t], banks[t], off, got[t - have]);
        m.execute(b);
        have *= 2;
    }
}

/// Broadcast a controller-held word into each listed bank at `dst_off`.
/// One seed write plus doubling; <= 2*ceil(log2 n) + 1 steps.
inline void broadcast_value(Machine& m, const std::vector<u32>& banks, word v, u32 dst_off) {
    if (banks.empty())
        return;
    StepBatch b;
    b.write(banks[0], banks[0], dst_off, v);
    m.execute(b);
    broadcast_doubling(m, banks, 1, dst_off);
}

inline void broadcast_value(Machine& m, word v, u32 dst_off) {
    std::vector<u32> banks(m.w());
    for (u32 r = 0; r < m.w(); ++r)
        banks[r] = r;
    broadcast_value(m, banks, v, dst_off);
}

/// Distribute `count` words held by row 0 at [src_off, src_off+count) so that
/// row j ends up holding word (j mod count) at dst_off. Pipelined distribution
/// then doubling; O(count + log w) steps.
inline void broadcast_from_row0(Machine& m, u32 src_off, u32 count, u32 dst_off) {
    const u32 w = m.w();
    if (count == 0)
        return;
    if (count > w)
        throw CapacityExceeded("broadcast payload exceeds row count");
    if (u64(src_off) + count > m.config().bank_capacity || dst_off >= m.config().bank_capacity)
        throw CapacityExceeded("broadcast window out of bank capacity");

    StepBatch b;
    // Pipelined distribution: processor j reads word j from bank 0 one step
    // before writing it into bank j. Step s carries a read of bank 0 by
    // processor s+1 plus a write of bank s by processor s (disjoint banks).
    word carry = 0;
    for (u32 s = 0; s + 1 < count; ++s) {
        b.clear();
        b.read(s + 1, 0, src_off + s + 1);
        if (s >= 1)
            b.write(s, s, dst_off, carry);
        const auto& res = m.execute(b);
        carry = res[0];
    }
    if (count > 1) {
        b.clear();
        b.write(count - 1, count - 1, dst_off, carry);
        m.execute(b);
    }
    if (src_off != dst_off) {
        b.clear();
        b.read(0, 0, src_off);
        word w0 = m.execute(b)[0];
        b.clear();
        b.write(0, 0, dst_off, w0);
        m.execute(b);
    }
    std::vector<u32> banks(w);
    for (u32 r = 0; r < w; ++r)
        banks[r] = r;
    broadcast_doubling(m, banks, count, dst_off);
}

}  // namespace dmm
