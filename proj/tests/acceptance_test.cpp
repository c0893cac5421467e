// Acceptance suite: one test per shipping criterion, each printing a single
// summary line so the log reads as a checklist.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "treeattn/treeattn.hpp"

namespace fs = std::filesystem;
using namespace treeattn;
using Clock = std::chrono::steady_clock;

namespace {

void report(int n, const char* name, bool pass) {
    std::cout << "ACCEPTANCE " << n << " " << name << ": " << (pass ? "PASS" : "FAIL")
              << std::endl;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::vector<Strategy> kAllStrategies = {Strategy::QGuided, Strategy::Node,
                                              Strategy::NodeChunk, Strategy::Flatten};

}  // namespace

// 1. All four strategies reproduce the 64-bit dense reference within 1e-4
//    on >= 500 seeded random trees, in bounded time.
TEST(Acceptance, OracleEquivalence) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    const int d_heads[] = {16, 64, 128};
    double worst = 0;
    for (int trial = 0; trial < 500; ++trial) {
        AttentionParams params;
        params.d_head = d_heads[trial % 3];
        params.n_heads = 1;
        SynthInstance inst = make_instance(rng, params, /*content_seed=*/trial);
        const auto oracle = naive_attention(inst.tree, inst.queries, *inst.pool, params);
        for (Strategy s : kAllStrategies) {
            auto [got, plan] =
                run_iteration(inst.tree, s, kDefaultBlockSize, *inst.pool, inst.queries, params);
            ASSERT_EQ(got.size(), oracle.size());
            for (const auto& [leaf, vec] : got)
                worst = std::max(worst, relative_error(vec, oracle.at(leaf)));
        }
    }
    EXPECT_LE(worst, 1e-4);
    const double secs = seconds_since(t0);
    EXPECT_LE(secs, 180.0);
    std::cout << "  (500 trees, max_rel_error=" << worst << ", " << secs << "s)\n";
    report(1, "oracle-equivalence", !HasFailure());
}

// 2. Few-shot KV-IO reduction of flatten vs sequence-based decoding hits the
//    closed-form values for 20/30/50 branches.
TEST(Acceptance, FewShotIoReduction) {
    const auto t0 = Clock::now();
    CostParams p;
    p.d_head = 128;
    p.n_heads = 32;
    p.n_layers = 32;
    p.dtype_bytes = 2;
    const struct { int b; double pct; } cases[] = {{20, 90.47}, {30, 92.05}, {50, 93.32}};
    for (const auto& c : cases) {
        const Trace trace = gen_few_shot(4000, c.b, 400);
        std::vector<DecodingTree> trees;
        trees.reserve(trace.size());
        for (const auto& it : trace) trees.push_back(it.tree.build());
        const double red =
            100.0 * io_reduction(trees, Algorithm::FlashDecoding, Algorithm::Flatten, p);
        EXPECT_NEAR(red, c.pct, 0.5) << "b=" << c.b;
    }
    EXPECT_LT(seconds_since(t0), 5.0);
    report(2, "few-shot-io-reduction", !HasFailure());
}

// 3. Fused strategies move no partial results through memory; the unfused
//    dense-mask baseline's partial traffic matches its cost formula exactly.
TEST(Acceptance, PartialResultElimination) {
    std::mt19937_64 rng(31);
    CostParams p;
    p.d_head = 128;
    p.n_heads = 8;
    p.n_layers = 4;
    p.dtype_bytes = 2;
    for (int trial = 0; trial < 100; ++trial) {
        const DecodingTree t = random_tree(rng);
        for (Strategy s : kAllStrategies)
            EXPECT_EQ(io_measured(make_plan(t, s, 128), p).partial_bytes, 0u);
        const auto r = io_analytical(t, Algorithm::TreeAttnMedusa, p);
        const std::uint64_t u = p.unit();
        const std::uint64_t n_tree = static_cast<std::uint64_t>(t.total_tokens());
        const std::uint64_t l_n = t.leaves().size();
        EXPECT_GT(r.partial_bytes, 0u);
        EXPECT_EQ(r.partial_terms.qkt, 2 * l_n * n_tree * u);
        EXPECT_EQ(r.partial_terms.scaled, 2 * l_n * n_tree * u);
        EXPECT_EQ(r.partial_terms.dense_mask, l_n * n_tree * u);
        EXPECT_EQ(r.partial_terms.mask_add, 2 * l_n * n_tree * u);
        EXPECT_EQ(r.partial_terms.softmax, 2 * l_n * n_tree * u);
        EXPECT_EQ(r.partial_bytes, r.partial_terms.total());
    }
    report(3, "partial-result-elimination", !HasFailure());
}

// 4. The KV-IO ratio sequence-based / flatten equals the shared factor as an
//    exact rational on 1000 random trees.
TEST(Acceptance, RatioLaw) {
    std::mt19937_64 rng(41);
    CostParams p;
    p.d_head = 64;
    p.n_heads = 4;
    p.n_layers = 8;
    p.dtype_bytes = 2;
    for (int trial = 0; trial < 1000; ++trial) {
        const DecodingTree t = random_tree(rng);
        const auto fd = io_analytical(t, Algorithm::FlashDecoding, p);
        const auto fl = io_analytical(t, Algorithm::Flatten, p);
        const Rational fs = t.shared_factor();
        ASSERT_EQ(static_cast<unsigned __int128>(fd.kv_bytes) * fs.den,
                  static_cast<unsigned __int128>(fl.kv_bytes) * fs.num)
            << "trial " << trial;
    }
    report(4, "ratio-law", !HasFailure());
}

// 5. Flatten emits full blocks except possibly the last; its group sizes stay
//    tight while per-node grouping goes idle on the long-prompt token-tree
//    verification workload.
TEST(Acceptance, FlattenBalance) {
    auto check_blocks = [](const DecodingTree& t, int bs) {
        const PartitionPlan plan = partition_flatten(t, bs);
        // Every stream block is full except the trailing remainder; with
        // >64 queries the tail block is shared by sibling query-split
        // groups, so all trailing groups carry the same remainder.
        const std::int64_t tail = t.total_tokens() % bs;
        std::size_t i = 0;
        while (i < plan.groups.size() && plan.groups[i].kv_length() == bs) ++i;
        for (; i < plan.groups.size(); ++i)
            ASSERT_EQ(plan.groups[i].kv_length(), tail) << "group " << i;
        const BalanceReport b = load_balance(plan);
        ASSERT_LE(b.kv_len_stddev, static_cast<double>(bs));
    };
    for (const auto& name : preset_names())
        for (const auto& it : preset_trace(name)) check_blocks(it.tree.build(), 128);
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 1000; ++trial) check_blocks(random_tree(rng), 128);

    for (const auto& it : preset_trace("spec_t64")) {
        const DecodingTree t = it.tree.build();
        EXPECT_GT(load_balance(partition_node(t)).idle_fraction, 0.8);
        EXPECT_LT(load_balance(partition_flatten(t, 128)).idle_fraction, 0.05);
    }
    report(5, "flatten-balance", !HasFailure());
}

// 6. Bit masks expand to exactly the ancestor-relation dense mask.
TEST(Acceptance, MaskRoundTrip) {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 200; ++trial) {
        const DecodingTree t = random_tree(rng);
        for (Strategy s : kAllStrategies) {
            const PartitionPlan plan = make_plan(t, s, 64);
            for (const QkvGroup& g : plan.groups) {
                const auto dense = reconstruct_dense_mask(g);
                std::size_t col = 0;
                for (const NodeSegment& seg : g.segments) {
                    for (std::int64_t tok = 0; tok < seg.length; ++tok, ++col)
                        for (std::size_t j = 0; j < g.query_ids.size(); ++j) {
                            const bool expect = t.on_path(seg.node, g.query_ids[j]);
                            ASSERT_EQ(dense[j][col], expect)
                                << strategy_name(s) << " trial " << trial;
                        }
                }
            }
        }
    }
    report(6, "mask-round-trip", !HasFailure());
}

// 7. Flatten's output is invariant to the block size used to cut the stream.
TEST(Acceptance, PartitionInvariance) {
    std::mt19937_64 rng(71);
    AttentionParams params;
    params.d_head = 16;
    params.n_heads = 1;
    for (int trial = 0; trial < 200; ++trial) {
        RandomTreeConfig cfg;
        cfg.max_tokens = 2048;
        SynthInstance inst = make_instance(rng, params, /*content_seed=*/trial, cfg);
        std::vector<AttentionOutput> outs;
        for (int bs : {32, 64, 128, 256}) {
            auto [out, plan] =
                run_iteration(inst.tree, Strategy::Flatten, bs, *inst.pool, inst.queries, params);
            outs.push_back(std::move(out));
        }
        for (std::size_t a = 0; a + 1 < outs.size(); ++a)
            for (std::size_t b = a + 1; b < outs.size(); ++b)
                for (const auto& [leaf, vec] : outs[a])
                    ASSERT_LE(relative_error(vec, outs[b].at(leaf)), 1e-5)
                        << "trial " << trial;
    }
    report(7, "partition-invariance", !HasFailure());
}

// 8. The t=64 token-tree verification trace keeps its shape every step:
//    chain + 64 candidate tokens, 64 queries, monotone chain growth bounded
//    by the candidate-tree depth.
TEST(Acceptance, SpeculativePresetShape) {
    SpeculativeSpec spec;
    spec.prompt_len = 4000;
    spec.tree_size = 64;
    spec.steps = 1000;
    spec.max_length = 6000;
    const int depth = token_tree_depth(make_token_tree(spec.tree_size));
    const Trace trace = gen_speculative(spec);
    ASSERT_FALSE(trace.empty());
    std::int64_t chain = spec.prompt_len;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const DecodingTree t = trace[i].tree.build();
        ASSERT_EQ(trace[i].query_count, 64);
        const std::int64_t chain_len = t.node(t.root()).token_count;
        ASSERT_EQ(t.total_tokens(), chain_len + 64);
        if (i > 0) {
            const std::int64_t accepted = chain_len - chain;
            ASSERT_GE(accepted, 1);
            ASSERT_LE(accepted, depth);
        }
        chain = chain_len;
    }
    report(8, "speculative-preset-shape", !HasFailure());
}

// 9. Two full harness runs with the same config and seed produce
//    byte-identical report files.
TEST(Acceptance, Determinism) {
    const fs::path a = fs::temp_directory_path() / "treeattn_acc_det_a";
    const fs::path b = fs::temp_directory_path() / "treeattn_acc_det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const std::string base = std::string(TREEATTN_CLI_PATH) +
                             " --workload fig2 --mode all --seed 7 --out ";
    ASSERT_EQ(WEXITSTATUS(std::system((base + a.string() + " >/dev/null 2>&1").c_str())), 0);
    ASSERT_EQ(WEXITSTATUS(std::system((base + b.string() + " >/dev/null 2>&1").c_str())), 0);
    for (const char* f : {"summary.json", "verify.json", "io.csv", "io_summary.json",
                          "balance.csv", "balance_summary.json"}) {
        const std::string sa = slurp(a / f);
        ASSERT_FALSE(sa.empty()) << f;
        ASSERT_EQ(sa, slurp(b / f)) << f;
    }
    report(9, "determinism", !HasFailure());
}
