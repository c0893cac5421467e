#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <vector>

#include "treeattn/attention.hpp"
#include "treeattn/kv_cache.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

/// Deterministic content generation: KV and query vectors depend only on
/// (seed, node id, token index), never on allocation order.

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

inline std::uint64_t content_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(seed ^ mix64(a * 0x9e3779b97f4a7c15ULL + b));
}

inline void fill_uniform(std::vector<float>& v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& x : v) x = dist(rng);
}

}  // namespace detail

inline void fill_node_kv(PagePool& pool, NodeId node, std::uint64_t seed) {
    const KvHandle& h = pool.handle(node);
    std::vector<float> key(static_cast<std::size_t>(pool.dim()));
    std::vector<float> value(static_cast<std::size_t>(pool.dim()));
    for (std::size_t t = 0; t < h.refs.size(); ++t) {
        detail::fill_uniform(key, detail::content_seed(seed, static_cast<std::uint64_t>(node), 2 * t));
        detail::fill_uniform(value, detail::content_seed(seed, static_cast<std::uint64_t>(node), 2 * t + 1));
        pool.write_kv(h, static_cast<int>(t), key, value);
    }
}

inline void fill_tree_kv(PagePool& pool, const DecodingTree& tree, std::uint64_t seed) {
    for (NodeId id : tree.node_ids()) fill_node_kv(pool, id, seed);
}

inline std::map<NodeId, QueryVec> make_queries(const DecodingTree& tree,
                                               const AttentionParams& params,
                                               std::uint64_t seed) {
    std::map<NodeId, QueryVec> queries;
    for (NodeId leaf : tree.leaves()) {
        QueryVec q;
        q.leaf = leaf;
        q.q.resize(static_cast<std::size_t>(params.dim()));
        detail::fill_uniform(q.q, detail::content_seed(seed ^ 0xabcdef12ULL,
                                                       static_cast<std::uint64_t>(leaf), 0));
        queries.emplace(leaf, std::move(q));
    }
    return queries;
}

struct RandomTreeConfig {
    int max_leaves = 64;
    std::int64_t max_tokens = 8192;
    std::int64_t max_node_tokens = 400;
    int max_branch_width = 4;
    int mutation_steps = 24;
};

/// Seeded random decoding tree built through the public mutation API.
inline DecodingTree random_tree(std::mt19937_64& rng, const RandomTreeConfig& cfg = {},
                                KvLifecycle* kv = nullptr) {
    std::uniform_int_distribution<std::int64_t> root_tokens(1, cfg.max_node_tokens);
    DecodingTree tree(root_tokens(rng), kv);
    for (int step = 0; step < cfg.mutation_steps; ++step) {
        const std::vector<NodeId> leaves = tree.leaves();
        std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
        const NodeId leaf = leaves[pick(rng)];
        const bool can_branch =
            static_cast<int>(leaves.size()) + cfg.max_branch_width <= cfg.max_leaves &&
            tree.total_tokens() + cfg.max_branch_width <= cfg.max_tokens;
        if (can_branch && rng() % 3 == 0) {
            std::uniform_int_distribution<int> width(2, cfg.max_branch_width);
            std::uniform_int_distribution<std::int64_t> tokens(1, cfg.max_node_tokens);
            const int w = width(rng);
            std::vector<std::int64_t> counts;
            std::int64_t budget = cfg.max_tokens - tree.total_tokens();
            for (int i = 0; i < w; ++i) {
                const std::int64_t c = std::min(tokens(rng), std::max<std::int64_t>(1, budget / w));
                counts.push_back(c);
                budget -= c;
            }
            tree.branch(leaf, counts);
        } else {
            std::uniform_int_distribution<std::int64_t> extra(1, cfg.max_node_tokens / 4 + 1);
            const std::int64_t n =
                std::min(extra(rng), cfg.max_tokens - tree.total_tokens());
            if (n >= 1) tree.append_tokens(leaf, n);
        }
    }
    return tree;
}

/// Pool + content + queries for one tree, ready for the engine.
struct SynthInstance {
    std::unique_ptr<PagePool> pool;
    DecodingTree tree;
    std::map<NodeId, QueryVec> queries;
};

inline SynthInstance make_instance(std::mt19937_64& rng, const AttentionParams& params,
                                   std::uint64_t content_seed,
                                   const RandomTreeConfig& cfg = {}) {
    auto pool = std::make_unique<PagePool>(params.dim());
    DecodingTree tree = random_tree(rng, cfg, pool.get());
    fill_tree_kv(*pool, tree, content_seed);
    auto queries = make_queries(tree, params, content_seed);
    return {std::move(pool), std::move(tree), std::move(queries)};
}

inline SynthInstance instance_from_snapshot(const DecodingTree& source,
                                            const AttentionParams& params,
                                            std::uint64_t content_seed) {
    auto pool = std::make_unique<PagePool>(params.dim());
    std::vector<TreeNode> nodes;
    for (NodeId id : source.node_ids()) {
        TreeNode n = source.node(id);
        n.children.clear();
        nodes.push_back(std::move(n));
    }
    DecodingTree tree = DecodingTree::restore(source.root(), nodes, pool.get());
    fill_tree_kv(*pool, tree, content_seed);
    auto queries = make_queries(tree, params, content_seed);
    return {std::move(pool), std::move(tree), std::move(queries)};
}

}  // namespace treeattn
