// Walkthrough: grow a small decoding tree, run one attention iteration with
// each partitioning strategy, and compare IO against sequence-based decoding.

#include <iostream>

#include "treeattn/treeattn.hpp"

using namespace treeattn;

int main() {
    AttentionParams attn;
    attn.d_head = 64;
    attn.n_heads = 2;

    // A prompt of 32 tokens, branched into three continuations of
    // different lengths, one of them branched again.
    PagePool pool(attn.dim());
    DecodingTree tree(32, &pool);
    const auto kids = tree.branch(tree.root(), {8, 12, 5});
    tree.branch(kids[1], {3, 3});
    fill_tree_kv(pool, tree, /*seed=*/42);

    std::cout << "tree: " << tree.node_count() << " nodes, " << tree.total_tokens()
              << " tokens, " << tree.leaves().size() << " leaves, F_s="
              << tree.shared_factor().value() << "\n\n";

    const auto queries = make_queries(tree, attn, /*seed=*/42);
    const auto oracle = naive_attention(tree, queries, pool, attn);

    CostParams cost;
    cost.d_head = attn.d_head;
    cost.n_heads = attn.n_heads;
    cost.n_layers = 32;
    cost.dtype_bytes = 2;
    const std::uint64_t baseline =
        io_analytical(tree, Algorithm::FlashDecoding, cost).kv_bytes;

    for (Strategy s : {Strategy::QGuided, Strategy::Node, Strategy::NodeChunk,
                       Strategy::Flatten}) {
        auto [out, plan] = run_iteration(tree, s, 16, pool, queries, attn);
        double err = 0;
        for (const auto& [leaf, vec] : out)
            err = std::max(err, relative_error(vec, oracle.at(leaf)));
        const IoReport io = io_measured(plan, cost);
        std::cout << strategy_name(s) << ": " << plan.groups.size() << " groups, "
                  << "kv=" << io.kv_bytes << " bytes ("
                  << 100.0 * static_cast<double>(io.kv_bytes) / static_cast<double>(baseline)
                  << "% of sequence-based), max_rel_error=" << err << "\n";
    }
    return 0;
}
