// Benchmark and verification harness for tree-structured attention:
// runs (workload x strategy) matrices and emits IO, load-balance and
// correctness reports as CSV/JSON.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treeattn/treeattn.hpp"

namespace fs = std::filesystem;
using namespace treeattn;

namespace {

struct RunConfig {
    std::string workload = "fig2";
    std::vector<std::string> strategies = {"q-guided", "node", "node-chunk", "flatten"};
    std::vector<std::string> algorithms = {"naive", "flash-decoding", "radix",
                                           "tree-attn-medusa", "tree-attn-specinfer",
                                           "node", "node-chunk", "flatten"};
    int block_size = kDefaultBlockSize;
    int d_head = 64;
    int n_heads = 1;
    int n_layers = 32;
    int dtype_bytes = 2;
    std::string mode = "all";
    std::string baseline = "flash-decoding";
    std::uint64_t seed = 0;
    std::string out_dir = "reports";
    std::string format = "csv";
    int sample_every = 25;
    double tolerance = 1e-4;

    CostParams cost() const {
        CostParams p;
        p.d_head = d_head;
        p.n_heads = n_heads;
        p.n_layers = n_layers;
        p.dtype_bytes = dtype_bytes;
        return p;
    }
    AttentionParams attn() const {
        AttentionParams p;
        p.d_head = d_head;
        p.n_heads = n_heads;
        return p;
    }
};

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

Trace load_trace(const RunConfig& cfg) {
    if (is_preset(cfg.workload)) return preset_trace(cfg.workload);
    return generate(load_spec(cfg.workload));
}

std::vector<std::size_t> sampled_indices(std::size_t n, int every) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(std::max(1, every)))
        idx.push_back(i);
    if (idx.empty() || idx.back() != n - 1) idx.push_back(n - 1);
    return idx;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
}

// ---------------------------------------------------------------------------

struct VerifyResult {
    std::map<std::string, double> max_rel_error;  // per strategy
    bool pass = true;
};

VerifyResult run_verify(const RunConfig& cfg, const Trace& trace, const fs::path& out) {
    const AttentionParams params = cfg.attn();
    VerifyResult res;
    nlohmann::json detail = nlohmann::json::array();
    for (std::size_t i : sampled_indices(trace.size(), cfg.sample_every)) {
        const TraceIteration& it = trace[i];
        const DecodingTree snap = it.tree.build();
        SynthInstance inst = instance_from_snapshot(snap, params, cfg.seed + i);
        const auto oracle = naive_attention(inst.tree, inst.queries, *inst.pool, params);
        for (const std::string& sname : cfg.strategies) {
            const Strategy s = strategy_from_name(sname);
            auto [got, plan] =
                run_iteration(inst.tree, s, cfg.block_size, *inst.pool, inst.queries, params);
            double max_err = 0;
            for (const auto& [leaf, vec] : got)
                max_err = std::max(max_err, relative_error(vec, oracle.at(leaf)));
            auto& worst = res.max_rel_error[sname];
            worst = std::max(worst, max_err);
            detail.push_back({{"iteration", it.iteration},
                              {"strategy", sname},
                              {"max_rel_error", max_err}});
        }
    }
    for (const auto& [sname, err] : res.max_rel_error)
        if (err > cfg.tolerance) res.pass = false;

    nlohmann::json summary;
    summary["tolerance"] = cfg.tolerance;
    summary["pass"] = res.pass;
    for (const auto& [sname, err] : res.max_rel_error)
        summary["max_rel_error"][sname] = err;
    summary["samples"] = detail;
    write_text(out / "verify.json", summary.dump(2) + "\n");

    if (cfg.format == "csv") {
        std::ostringstream csv;
        csv << "iteration,strategy,max_rel_error\n";
        for (const auto& row : detail)
            csv << row["iteration"].get<int>() << "," << row["strategy"].get<std::string>()
                << "," << fmt_double(row["max_rel_error"].get<double>()) << "\n";
        write_text(out / "verify.csv", csv.str());
    }

    for (const auto& [sname, err] : res.max_rel_error)
        std::cout << "verify " << sname << ": max_rel_error=" << fmt_double(err)
                  << (err <= cfg.tolerance ? " PASS" : " FAIL") << "\n";
    return res;
}

// ---------------------------------------------------------------------------

struct IoResult {
    std::map<std::string, std::uint64_t> kv_totals;
    std::map<std::string, double> reduction_vs_baseline;  // percent
};

IoResult run_io(const RunConfig& cfg, const Trace& trace, const fs::path& out) {
    const CostParams params = cfg.cost();
    IoResult res;
    std::map<std::string, IoReport> totals;
    std::ostringstream csv;
    csv << kIoCsvHeader << "\n";
    for (const TraceIteration& it : trace) {
        const DecodingTree snap = it.tree.build();
        for (const std::string& aname : cfg.algorithms) {
            const Algorithm a = algorithm_from_name(aname);
            const IoReport r = io_analytical(snap, a, params, cfg.block_size);
            csv << io_report_csv_row(it.iteration, aname, r) << "\n";
            IoReport& t = totals[aname];
            t.kv_bytes += r.kv_bytes;
            t.q_bytes += r.q_bytes;
            t.mask_bytes += r.mask_bytes;
            t.partial_bytes += r.partial_bytes;
        }
    }
    if (cfg.format == "csv") write_text(out / "io.csv", csv.str());

    nlohmann::json summary;
    const auto base_it = totals.find(cfg.baseline);
    if (base_it == totals.end())
        throw CLI::ValidationError("--baseline", "baseline not in algorithm list");
    for (const auto& [aname, t] : totals) {
        res.kv_totals[aname] = t.kv_bytes;
        nlohmann::json jt = io_report_to_json(t);
        if (aname != cfg.baseline && base_it->second.kv_bytes > 0) {
            const double pct = 100.0 * (1.0 - static_cast<double>(t.kv_bytes) /
                                                  static_cast<double>(base_it->second.kv_bytes));
            res.reduction_vs_baseline[aname] = pct;
            jt["kv_reduction_vs_" + cfg.baseline + "_pct"] = pct;
        }
        summary[aname] = std::move(jt);
    }
    write_text(out / "io_summary.json", summary.dump(2) + "\n");

    for (const auto& [aname, pct] : res.reduction_vs_baseline)
        std::cout << "io " << aname << ": kv reduction vs " << cfg.baseline << " = "
                  << fmt_double(pct) << "%\n";
    return res;
}

// ---------------------------------------------------------------------------

struct BalanceResult {
    std::map<std::string, double> mean_idle_fraction;
};

BalanceResult run_balance(const RunConfig& cfg, const Trace& trace, const fs::path& out) {
    BalanceResult res;
    std::map<std::string, double> idle_sum;
    std::map<std::string, int> idle_count;
    std::ostringstream csv;
    csv << "iteration,strategy,group_count,kv_max,kv_min,kv_mean,kv_stddev,idle_fraction\n";
    for (const TraceIteration& it : trace) {
        const DecodingTree snap = it.tree.build();
        for (const std::string& sname : cfg.strategies) {
            const Strategy s = strategy_from_name(sname);
            const BalanceReport b = load_balance(make_plan(snap, s, cfg.block_size));
            csv << it.iteration << "," << sname << "," << b.group_count << ","
                << b.kv_len_max << "," << b.kv_len_min << "," << fmt_double(b.kv_len_mean)
                << "," << fmt_double(b.kv_len_stddev) << "," << fmt_double(b.idle_fraction)
                << "\n";
            idle_sum[sname] += b.idle_fraction;
            idle_count[sname]++;
        }
    }
    write_text(out / "balance.csv", csv.str());

    nlohmann::json summary;
    for (const auto& [sname, sum] : idle_sum) {
        res.mean_idle_fraction[sname] = sum / idle_count[sname];
        summary[sname]["mean_idle_fraction"] = res.mean_idle_fraction[sname];
    }
    write_text(out / "balance_summary.json", summary.dump(2) + "\n");

    for (const auto& [sname, idle] : res.mean_idle_fraction)
        std::cout << "balance " << sname << ": mean_idle_fraction=" << fmt_double(idle) << "\n";
    return res;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tree-structured attention: correctness, IO and balance harness"};
    RunConfig cfg;

    app.add_option("--workload", cfg.workload,
                   "workload spec JSON path, or a preset name")
        ->capture_default_str();
    app.add_option("--strategy", cfg.strategies,
                   "partitioning strategies (q-guided, node, node-chunk, flatten)")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--algorithms", cfg.algorithms,
                   "algorithm rows for IO reports (adds analytical-only rows)")
        ->delimiter(',');
    app.add_option("--block-size", cfg.block_size)->capture_default_str();
    app.add_option("--d-head", cfg.d_head)->capture_default_str();
    app.add_option("--heads", cfg.n_heads)->capture_default_str();
    app.add_option("--layers", cfg.n_layers)->capture_default_str();
    app.add_option("--dtype-bytes", cfg.dtype_bytes)->capture_default_str();
    app.add_option("--mode", cfg.mode, "verify|io|balance|all")
        ->check(CLI::IsMember({"verify", "io", "balance", "all"}))
        ->capture_default_str();
    app.add_option("--baseline", cfg.baseline)->capture_default_str();
    app.add_option("--seed", cfg.seed)->capture_default_str();
    app.add_option("--out", cfg.out_dir)->capture_default_str();
    app.add_option("--format", cfg.format)->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    app.add_option("--sample-every", cfg.sample_every)->capture_default_str();
    app.add_option("--tolerance", cfg.tolerance)->capture_default_str();

    try {
        app.parse(argc, argv);
        if (cfg.strategies.empty())
            throw CLI::ValidationError("--strategy", "at least one strategy required");
        for (const auto& s : cfg.strategies) strategy_from_name(s);
        for (const auto& a : cfg.algorithms) algorithm_from_name(a);
        cfg.cost().validate();
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_name() == "CallForHelp" ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        const fs::path out(cfg.out_dir);
        fs::create_directories(out);
        const Trace trace = load_trace(cfg);

        bool ok = true;
        nlohmann::json summary;
        summary["workload"] = cfg.workload;
        summary["seed"] = cfg.seed;

        if (cfg.mode == "verify" || cfg.mode == "all") {
            const VerifyResult v = run_verify(cfg, trace, out);
            ok = ok && v.pass;
            summary["verify"]["pass"] = v.pass;
            for (const auto& [s, e] : v.max_rel_error)
                summary["verify"]["max_rel_error"][s] = e;
        }
        if (cfg.mode == "io" || cfg.mode == "all") {
            const IoResult io = run_io(cfg, trace, out);
            for (const auto& [a, pct] : io.reduction_vs_baseline)
                summary["io"]["kv_reduction_pct"][a] = pct;
        }
        if (cfg.mode == "balance" || cfg.mode == "all") {
            const BalanceResult b = run_balance(cfg, trace, out);
            for (const auto& [s, idle] : b.mean_idle_fraction)
                summary["balance"]["mean_idle_fraction"][s] = idle;
        }
        summary["pass"] = ok;
        write_text(out / "summary.json", summary.dump(2) + "\n");
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
