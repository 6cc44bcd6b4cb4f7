// dmmcli — instance generation, algorithm runs under strict conflict
// checking, oracle verification, scaling benchmarks, and trace re-audits.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "dmm/dmm.hpp"

namespace {

using namespace dmm;

struct ShapeArg {
    u32 w = 0, m = 0;
};

std::vector<ShapeArg> parse_shapes(const std::string& s) {
    std::vector<ShapeArg> shapes;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        const auto x = tok.find('x');
        if (x == std::string::npos)
            throw CLI::ValidationError("--shapes", "expected WxM[,WxM...]");
        ShapeArg sh;
        sh.w = u32(std::stoul(tok.substr(0, x)));
        sh.m = u32(std::stoul(tok.substr(x + 1)));
        shapes.push_back(sh);
    }
    if (shapes.empty())
        throw CLI::ValidationError("--shapes", "no shapes given");
    return shapes;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path);
    if (!f)
        throw Error("cannot write " + path);
    f << text;
}

int cmd_gen(const std::string& kind, u32 w, u32 m, u64 seed, const std::string& out) {
    Instance in = gen_instance(kind_from_name(kind), w, m, seed);
    write_text(out, instance_to_text(in));
    return 0;
}

int cmd_run(const std::string& alg_name, const std::string& instance_path, bool permissive,
            u32 alpha, std::optional<u64> seed, const std::string& trace_out,
            const std::string& csv_path) {
    auto alg = algorithm_from_name(alg_name);
    if (!alg) {
        std::cerr << "unknown algorithm: " << alg_name << "\n";
        return 2;
    }
    Instance in = load_instance(instance_path);
    RunOptions opt;
    opt.strict = !permissive;
    opt.alpha = alpha;
    opt.seed = seed;
    opt.record_trace = !trace_out.empty();
    RunOutcome out = run_algorithm(*alg, in, opt);
    std::cout << out.report.summary() << "\n";
    if (*alg == Algorithm::permute)
        std::cout << "pipeline: threshold=" << out.pipeline.threshold
                  << " random_words=" << out.pipeline.random_words << " leftovers=";
    if (*alg == Algorithm::permute) {
        for (std::size_t i = 0; i < out.pipeline.leftover_history.size(); ++i)
            std::cout << (i ? "," : "") << out.pipeline.leftover_history[i];
        std::cout << "\n";
    }
    if (!trace_out.empty())
        write_text(trace_out, trace_to_text(out.trace));
    if (!csv_path.empty()) {
        if (*alg == Algorithm::permute)
            write_text(csv_path, permute_report_csv(out.pipeline));
        else
            write_text(csv_path, csv_header() + "\n" + csv_line(out.report) + "\n");
    }
    return out.report.correct && out.report.conflicts == 0 ? 0 : 1;
}

int cmd_bench(const std::string& alg_name, const std::string& shapes_arg, u32 seeds,
              u64 seed_base, u32 alpha, const std::string& csv_path) {
    auto alg = algorithm_from_name(alg_name);
    if (!alg) {
        std::cerr << "unknown algorithm: " << alg_name << "\n";
        return 2;
    }
    auto shapes = parse_shapes(shapes_arg);
    std::ostringstream csv;
    csv << csv_header() << "\n";
    bool all_ok = true;
    for (const ShapeArg& sh : shapes) {
        double steps_sum = 0, work_sum = 0, iter_sum = 0;
        u64 conflict_sum = 0, correct_count = 0, fallback_count = 0;
        for (u32 s = 0; s < seeds; ++s) {
            const u64 seed = seed_base + s;
            Instance in = gen_instance(instance_kind_for(*alg), sh.w, sh.m, seed);
            RunOptions opt;
            opt.alpha = alpha;
            RunOutcome out = run_algorithm(*alg, in, opt);
            csv << csv_line(out.report) << "\n";
            steps_sum += double(out.report.steps);
            work_sum += double(out.report.work);
            iter_sum += double(out.report.iterations);
            conflict_sum += out.report.conflicts;
            correct_count += out.report.correct ? 1 : 0;
            fallback_count += out.report.fallback ? 1 : 0;
            all_ok = all_ok && out.report.correct && out.report.conflicts == 0;
        }
        csv << "summary:" << algorithm_name(*alg) << ',' << sh.w << ',' << sh.m << ',' << seeds
            << ',' << steps_sum / seeds << ',' << work_sum / seeds << ',' << conflict_sum << ','
            << double(correct_count) / seeds << ',' << iter_sum / seeds << ',' << fallback_count
            << "\n";
    }
    write_text(csv_path, csv.str());
    return all_ok ? 0 : 1;
}

int cmd_verify(const std::string& instance_path) {
    Instance in = load_instance(instance_path);
    validate_instance(in);
    std::cout << "instance ok: " << kind_name(in.kind) << " w=" << in.w << " m=" << in.m
              << " seed=" << in.seed << "\n";
    return 0;
}

int cmd_heavy_tail(u32 w, u32 m, u32 alpha, u32 rows, u64 seed, const std::string& csv_path) {
    std::vector<u32> ks;
    for (u32 k = 0; k <= m; k += std::max(1u, m / 8))
        ks.push_back(k);
    if (ks.back() != m)
        ks.push_back(m);
    auto table = heavy_tail_experiment(w, m, alpha, rows, seed, ks);
    write_text(csv_path, heavy_tail_csv(table));
    return 0;
}

int cmd_trace_check(const std::string& trace_path) {
    std::ifstream f(trace_path);
    if (!f) {
        std::cerr << "cannot open " << trace_path << "\n";
        return 2;
    }
    TraceLog t = trace_from_text(f);
    auto violations = verify_trace(t);
    if (violations.empty()) {
        std::cout << "trace ok: " << t.events.size() << " events, steps=" << t.steps
                  << " conflicts=" << t.conflicts << "\n";
        return 0;
    }
    for (const auto& v : violations)
        std::cout << "violation: step " << v.step << " bank " << v.bank << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete Memory Model simulator and bank-conflict-free algorithm harness"};
    app.require_subcommand(1);

    std::string kind = "sort", alg, instance_path, out_path, csv_path, trace_path;
    u32 w = 16, m = 16, alpha = 4, seeds = 10;
    u64 seed = 1, seed_base = 1;
    std::optional<u64> alg_seed;
    bool permissive = false;
    std::string shapes;

    auto* gen = app.add_subcommand("gen", "generate a deterministic instance file");
    gen->add_option("--kind", kind, "sort | partition | permute")->required();
    gen->add_option("--w", w, "bank/processor count")->required();
    gen->add_option("--m", m, "words per row")->required();
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_path, "output path (default stdout)");

    auto* run = app.add_subcommand("run", "run an algorithm on an instance and verify");
    run->add_option("--alg", alg, "algorithm name")->required();
    run->add_option("--instance", instance_path, "instance file")->required();
    run->add_option("--alpha", alpha, "communication passes (permute)");
    run->add_option("--seed", alg_seed, "algorithm seed (default: instance seed)");
    run->add_flag("--permissive,!--strict", permissive,
                  "count and serialize conflicts instead of failing");
    run->add_option("--trace-out", trace_path, "dump the full access trace to this path");
    run->add_option("--csv", csv_path, "write the run (or permute pipeline) report as CSV");

    auto* bench = app.add_subcommand("bench", "run seed sweeps over shapes, emit CSV");
    bench->add_option("--alg", alg, "algorithm name")->required();
    bench->add_option("--shapes", shapes, "comma list of WxM shapes")->required();
    bench->add_option("--seeds", seeds, "seeds per shape");
    bench->add_option("--seed", seed_base, "first seed");
    bench->add_option("--alpha", alpha, "communication passes (permute)");
    bench->add_option("--csv", csv_path, "CSV output path (default stdout)");

    auto* verify = app.add_subcommand("verify", "check instance file invariants");
    verify->add_option("--instance", instance_path, "instance file")->required();

    auto* tcheck = app.add_subcommand("trace-check", "re-audit a dumped trace for CAC violations");
    tcheck->add_option("--trace", trace_path, "trace file")->required();

    u32 ht_rows = 1000;
    auto* htail = app.add_subcommand("heavy-tail",
                                     "simulate one-phase leftovers against the analytic envelope");
    htail->add_option("--w", w, "destination universe");
    htail->add_option("--m", m, "row width");
    htail->add_option("--alpha", alpha, "passes per phase");
    htail->add_option("--rows", ht_rows, "simulated rows per k");
    htail->add_option("--seed", seed, "rng seed");
    htail->add_option("--csv", csv_path, "CSV output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen(kind, w, m, seed, out_path);
        if (run->parsed())
            return cmd_run(alg, instance_path, permissive, alpha, alg_seed, trace_path, csv_path);
        if (bench->parsed())
            return cmd_bench(alg, shapes, seeds, seed_base, alpha, csv_path);
        if (verify->parsed())
            return cmd_verify(instance_path);
        if (tcheck->parsed())
            return cmd_trace_check(trace_path);
        if (htail->parsed())
            return cmd_heavy_tail(w, m, alpha, ht_rows, seed, csv_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
