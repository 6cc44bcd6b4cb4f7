#pragma once

// instance.hpp — benchmark-harness plumbing: instance files, independent
// result verifiers, run reports, CSV rows, and the trace text format.
// Verifiers work from the instance grid and final machine snapshot only.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "dmm/core.hpp"
#include "dmm/permute.hpp"
#include "dmm/rng.hpp"
#include "dmm/sort.hpp"

namespace dmm {

enum class InstanceKind { sort, partition, permute };

inline const char* kind_name(InstanceKind k) {
    switch (k) {
        case InstanceKind::sort: return "sort";
        case InstanceKind::partition: return "partition";
        default: return "permute";
    }
}

inline InstanceKind kind_from_name(const std::string& s) {
    if (s == "sort")
        return InstanceKind::sort;
    if (s == "partition")
        return InstanceKind::partition;
    if (s == "permute")
        return InstanceKind::permute;
    throw InvalidInstance("unknown instance kind: " + s);
}

struct Instance {
    InstanceKind kind = InstanceKind::sort;
    u32 w = 1;
    u32 m = 1;
    u64 seed = 0;
    std::vector<word> grid;  // row-major w x m
};

/// Deterministic instance generation from (kind, w, m, seed).
inline Instance gen_instance(InstanceKind kind, u32 w, u32 m, u64 seed) {
    if (w < 1 || m < 1)
        throw ShapeViolation("instances need w >= 1, m >= 1");
    Instance in;
    in.kind = kind;
    in.w = w;
    in.m = m;
    in.seed = seed;
    Rng rng(splitmix64(seed ^ (u64(w) << 32) ^ m));
    const u64 n = u64(w) * m;
    switch (kind) {
        case InstanceKind::sort:
            in.grid.resize(n);
            for (auto& x : in.grid)
                x = rng();
            break;
        case InstanceKind::partition:
            in.grid.reserve(n);
            for (u32 label = 0; label < w; ++label)
                for (u32 k = 0; k < m; ++k)
                    in.grid.push_back(label);
            fisher_yates(rng, in.grid);
            break;
        case InstanceKind::permute:
            in.grid = random_permutation(rng, n);
            break;
    }
    return in;
}

/// Structural invariants of an instance file.
inline void validate_instance(const Instance& in) {
    if (in.grid.size() != u64(in.w) * in.m)
        throw InvalidInstance("grid size does not match w*m");
    if (in.kind == InstanceKind::partition) {
        std::vector<u64> counts(in.w, 0);
        for (word x : in.grid) {
            if (x >= in.w)
                throw InvalidInstance("partition label outside [0, w)");
            ++counts[x];
        }
        for (u64 c : counts)
            if (c != in.m)
                throw InvalidInstance("partition labels are not m copies each");
    } else if (in.kind == InstanceKind::permute) {
        std::vector<bool> seen(in.grid.size(), false);
        for (word x : in.grid) {
            if (x >= in.grid.size() || seen[x])
                throw InvalidInstance("permute labels are not a bijection");
            seen[x] = true;
        }
    }
}

// Text format: header "kind w m seed", then one row per line.
inline std::string instance_to_text(const Instance& in) {
    std::ostringstream os;
    os << kind_name(in.kind) << ' ' << in.w << ' ' << in.m << ' ' << in.seed << '\n';
    for (u32 r = 0; r < in.w; ++r) {
        for (u32 c = 0; c < in.m; ++c) {
            if (c)
                os << ' ';
            os << in.grid[u64(r) * in.m + c];
        }
        os << '\n';
    }
    return os.str();
}

inline Instance instance_from_text(std::istream& is) {
    Instance in;
    std::string kind;
    if (!(is >> kind >> in.w >> in.m >> in.seed))
        throw InvalidInstance("malformed instance header");
    in.kind = kind_from_name(kind);
    in.grid.resize(u64(in.w) * in.m);
    for (auto& x : in.grid)
        if (!(is >> x))
            throw InvalidInstance("instance grid truncated");
    return in;
}

inline Instance load_instance(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw Error("cannot open instance file: " + path);
    return instance_from_text(f);
}

inline void save_instance(const Instance& in, const std::string& path) {
    std::ofstream f(path);
    if (!f)
        throw Error("cannot write instance file: " + path);
    f << instance_to_text(in);
}

// ---------------------------------------------------------------------------
// Algorithms and reports
// ---------------------------------------------------------------------------

enum class Algorithm {
    sort_short_wide,
    sort_square,
    sort_tall,
    partition_short_wide,
    partition_square,
    partition_general,
    integer_sort_general,
    permute,
};

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::sort_short_wide: return "sort_short_wide";
        case Algorithm::sort_square: return "sort_square";
        case Algorithm::sort_tall: return "sort_tall";
        case Algorithm::partition_short_wide: return "partition_short_wide";
        case Algorithm::partition_square: return "partition_square";
        case Algorithm::partition_general: return "partition_general";
        case Algorithm::integer_sort_general: return "integer_sort_general";
        default: return "permute";
    }
}

inline std::optional<Algorithm> algorithm_from_name(const std::string& s) {
    for (Algorithm a :
         {Algorithm::sort_short_wide, Algorithm::sort_square, Algorithm::sort_tall,
          Algorithm::partition_short_wide, Algorithm::partition_square,
          Algorithm::partition_general, Algorithm::integer_sort_general, Algorithm::permute})
        if (s == algorithm_name(a))
            return a;
    return std::nullopt;
}

inline InstanceKind instance_kind_for(Algorithm a) {
    switch (a) {
        case Algorithm::sort_short_wide:
        case Algorithm::sort_square:
        case Algorithm::sort_tall:
            return InstanceKind::sort;
        case Algorithm::partition_short_wide:
        case Algorithm::partition_square:
        case Algorithm::partition_general:
            return InstanceKind::partition;
        default:
            return InstanceKind::permute;  // permutation labels double as integer keys
    }
}

struct RunOptions {
    bool strict = true;
    u32 alpha = 4;
    std::optional<u64> seed;  // algorithm-side randomness; defaults to the instance seed
    bool record_trace = false;
    u32 host_threads = 0;  // simulation-speed knob, 0 = auto
};

struct RunReport {
    std::string algorithm;
    u32 w = 0, m = 0;
    u64 seed = 0;
    u64 steps = 0;
    u64 work = 0;
    u64 conflicts = 0;
    bool correct = false;
    u32 iterations = 0;       // permute
    bool fallback = false;    // permute
    u32 cleanup_retries = 0;  // general partition / integer sort

    std::string summary() const {
        std::ostringstream os;
        os << "algorithm=" << algorithm << " w=" << w << " m=" << m << " seed=" << seed
           << " steps=" << steps << " work=" << work << " conflicts=" << conflicts
           << " correct=" << (correct ? 1 : 0) << " iterations=" << iterations
           << " fallback=" << (fallback ? 1 : 0) << " cleanup_retries=" << cleanup_retries;
        return os.str();
    }
};

inline std::string csv_header() {
    return "algorithm,w,m,seed,steps,work,conflicts,correct,iterations,fallback";
}

inline std::string csv_line(const RunReport& r) {
    std::ostringstream os;
    os << r.algorithm << ',' << r.w << ',' << r.m << ',' << r.seed << ',' << r.steps << ','
       << r.work << ',' << r.conflicts << ',' << (r.correct ? 1 : 0) << ',' << r.iterations << ','
       << (r.fallback ? 1 : 0);
    return os.str();
}

// ---------------------------------------------------------------------------
// Independent verifiers (instance grid + final snapshot only)
// ---------------------------------------------------------------------------

inline bool verify_sorted_result(const Instance& in, const std::vector<word>& final_grid) {
    std::vector<word> expect(in.grid);
    std::sort(expect.begin(), expect.end());
    return final_grid == expect;
}

inline bool verify_partition_result(const Instance& in, const std::vector<word>& final_grid) {
    if (final_grid.size() != u64(in.w) * in.m)
        return false;
    for (u32 r = 0; r < in.w; ++r)
        for (u32 c = 0; c < in.m; ++c)
            if (final_grid[u64(r) * in.m + c] != r)
                return false;
    return true;
}

inline bool verify_permute_result(const Instance& in, const std::vector<word>& output_grid) {
    for (u32 i = 0; i < in.w; ++i)
        for (u32 j = 0; j < in.m; ++j)
            if (output_grid[u64(i) * in.m + j] != u64(i) * in.m + j)
                return false;
    return true;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct RunOutcome {
    RunReport report;
    TraceLog trace;             // events populated only when requested
    PermuteReport pipeline;     // populated by permute runs
};

inline RunOutcome run_algorithm(Algorithm alg, const Instance& in, const RunOptions& opt = {}) {
    if (in.kind != instance_kind_for(alg))
        throw InvalidInstance(std::string("algorithm ") + algorithm_name(alg) +
                              " needs a " + kind_name(instance_kind_for(alg)) + " instance");
    validate_instance(in);

    Machine mach(MachineConfig::standard(in.w, in.m, opt.strict));
    mach.set_host_threads(opt.host_threads);
    TraceAuditor auditor(in.w);
    mach.attach_auditor(&auditor);
    if (opt.record_trace)
        mach.enable_trace();

    const auto& cfg = mach.config();
    std::vector<u32> all_rows(in.w);
    for (u32 r = 0; r < in.w; ++r)
        all_rows[r] = r;
    MatrixView v = MatrixView::full(mach);
    MatrixView vp = MatrixView::make(mach, all_rows, cfg.work_base(), in.m,
                                     cfg.scratch_a_base(), cfg.scratch_b_base());
    (alg == Algorithm::permute || alg == Algorithm::integer_sort_general ? vp : v).load(in.grid);

    RunOutcome out;
    out.report.algorithm = algorithm_name(alg);
    out.report.w = in.w;
    out.report.m = in.m;
    out.report.seed = opt.seed.value_or(in.seed);

    switch (alg) {
        case Algorithm::sort_short_wide:
            sort_short_wide(v);
            out.report.correct = verify_sorted_result(in, v.snapshot());
            break;
        case Algorithm::sort_square:
            sort_square(v);
            out.report.correct = verify_sorted_result(in, v.snapshot());
            break;
        case Algorithm::sort_tall:
            sort_tall(v);
            out.report.correct = verify_sorted_result(in, v.snapshot());
            break;
        case Algorithm::partition_short_wide:
            partition_short_wide(v);
            out.report.correct = verify_partition_result(in, v.snapshot());
            break;
        case Algorithm::partition_square:
            partition_square(v);
            out.report.correct = verify_partition_result(in, v.snapshot());
            break;
        case Algorithm::partition_general: {
            auto st = partition_general(v);
            out.report.cleanup_retries = st.cleanup_retries;
            out.report.correct = verify_partition_result(in, v.snapshot());
            break;
        }
        case Algorithm::integer_sort_general: {
            auto st = integer_sort_general(vp, u64(in.w) * in.m);
            out.report.cleanup_retries = st.cleanup_retries;
            out.report.correct = verify_sorted_result(in, vp.snapshot());
            break;
        }
        case Algorithm::permute: {
            Rng rng(out.report.seed);
            PermuteParams params;
            params.alpha = opt.alpha;
            auto rep = permute(mach, rng, params);
            out.report.iterations = rep.iterations;
            out.report.fallback = rep.fallback;
            out.report.cleanup_retries = rep.cleanup_retries;
            out.pipeline = rep;
            std::vector<word> outgrid;
            outgrid.reserve(u64(in.w) * in.m);
            for (u32 i = 0; i < in.w; ++i)
                for (u32 j = 0; j < in.m; ++j)
                    outgrid.push_back(mach.peek(i, cfg.out_base() + j));
            out.report.correct = verify_permute_result(in, outgrid);
            break;
        }
    }

    out.report.steps = mach.steps();
    out.report.work = mach.work();
    out.report.conflicts = mach.conflicts() + auditor.violation_count();
    if (opt.record_trace)
        out.trace = mach.trace();
    return out;
}

// ---------------------------------------------------------------------------
// Trace text format
// ---------------------------------------------------------------------------

// One line per event: "step processor bank offset op [value]" (op r or w,
// value on writes), then a summary "steps=<k> work=<k*w> conflicts=<c>".
inline std::string trace_to_text(const TraceLog& t) {
    std::ostringstream os;
    for (const TraceEvent& e : t.events) {
        os << e.step << ' ' << e.processor << ' ' << e.bank << ' ' << e.offset << ' '
           << (e.op == Op::read ? 'r' : 'w');
        if (e.op == Op::write)
            os << ' ' << e.value;
        os << '\n';
    }
    os << "steps=" << t.steps << " work=" << t.work() << " conflicts=" << t.conflicts << '\n';
    return os.str();
}

inline TraceLog trace_from_text(std::istream& is) {
    TraceLog t;
    t.recording = true;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        if (line.rfind("steps=", 0) == 0) {
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) {
                const auto eq = tok.find('=');
                const std::string key = tok.substr(0, eq);
                const u64 val = std::stoull(tok.substr(eq + 1));
                if (key == "steps")
                    t.steps = val;
                else if (key == "conflicts")
                    t.conflicts = val;
            }
            continue;
        }
        std::istringstream ls(line);
        TraceEvent e;
        char op;
        if (!(ls >> e.step >> e.processor >> e.bank >> e.offset >> op))
            throw Error("malformed trace line: " + line);
        e.op = op == 'r' ? Op::read : Op::write;
        if (e.op == Op::write)
            ls >> e.value;
        if (e.bank + 1 > t.w)
            t.w = e.bank + 1;
        t.events.push_back(e);
    }
    return t;
}

}  // namespace dmm
