#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "treeattn/tree.hpp"

namespace treeattn {

enum class Strategy { QGuided, Node, NodeChunk, Flatten };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::QGuided: return "q-guided";
        case Strategy::Node: return "node";
        case Strategy::NodeChunk: return "node-chunk";
        case Strategy::Flatten: return "flatten";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
    if (s == "q-guided") return Strategy::QGuided;
    if (s == "node") return Strategy::Node;
    if (s == "node-chunk") return Strategy::NodeChunk;
    if (s == "flatten") return Strategy::Flatten;
    throw std::invalid_argument("unknown strategy: " + s);
}

/// A contiguous token range inside one tree node.
struct NodeSegment {
    NodeId node = kInvalidNode;
    std::int64_t token_offset = 0;
    std::int64_t length = 0;
};

/// One logical unit of attention work: KV segments plus the queries
/// attending to them. masks[s] bit j covers query_ids[j] over segments[s].
struct QkvGroup {
    int group_id = 0;
    std::vector<NodeSegment> segments;
    std::vector<NodeId> query_ids;  // at most 64
    std::vector<std::uint64_t> masks;

    std::int64_t kv_length() const {
        std::int64_t n = 0;
        for (const auto& s : segments) n += s.length;
        return n;
    }
};

struct PartitionPlan {
    Strategy strategy = Strategy::Flatten;
    int block_size = 128;
    std::vector<QkvGroup> groups;

    std::int64_t total_kv_tokens() const {
        std::int64_t n = 0;
        for (const auto& g : groups) n += g.kv_length();
        return n;
    }
};

inline constexpr int kMaxQueriesPerGroup = 64;  // one mask word
inline constexpr int kDefaultBlockSize = 128;

namespace detail {

/// Per-leaf set of path nodes, for the ancestor-or-self mask test.
class AncestorIndex {
public:
    explicit AncestorIndex(const DecodingTree& tree) {
        for (NodeId leaf : tree.leaves()) {
            auto& set = paths_[leaf];
            NodeId cur = leaf;
            while (cur != kInvalidNode) {
                set.insert(cur);
                cur = tree.node(cur).parent;
            }
        }
    }

    bool attends(NodeId leaf, NodeId node) const {
        return paths_.at(leaf).count(node) != 0;
    }

private:
    std::unordered_map<NodeId, std::unordered_set<NodeId>> paths_;
};

/// Emits one group per <=64-query slice of `queries`, recomputing the
/// per-segment masks for each slice. When more than 64 queries force a
/// split, the sibling groups share the full segment list (duplicating
/// KV IO across siblings keeps the group shape uniform); otherwise a
/// segment no query attends is dropped.
inline void emit_groups(std::vector<QkvGroup>& out,
                        const std::vector<NodeSegment>& segments,
                        const std::vector<NodeId>& queries,
                        const AncestorIndex& anc) {
    const bool split = queries.size() > static_cast<std::size_t>(kMaxQueriesPerGroup);
    for (std::size_t base = 0; base < queries.size(); base += kMaxQueriesPerGroup) {
        const std::size_t count =
            std::min<std::size_t>(kMaxQueriesPerGroup, queries.size() - base);
        QkvGroup g;
        g.group_id = static_cast<int>(out.size());
        g.query_ids.assign(queries.begin() + base, queries.begin() + base + count);
        bool any_mask = false;
        for (const NodeSegment& seg : segments) {
            std::uint64_t mask = 0;
            for (std::size_t j = 0; j < count; ++j)
                if (anc.attends(g.query_ids[j], seg.node))
                    mask |= std::uint64_t{1} << j;
            if (mask == 0 && !split) continue;  // no query here attends this segment
            g.segments.push_back(seg);
            g.masks.push_back(mask);
            any_mask = any_mask || mask != 0;
        }
        if (any_mask) out.push_back(std::move(g));
    }
}

}  // namespace detail

/// One group per query; its full root-to-leaf KV is cut into blocks.
/// Shared prefixes are loaded once per query (the redundancy the
/// KV-guided strategies remove).
inline PartitionPlan partition_q_guided(const DecodingTree& tree, int block_size = kDefaultBlockSize) {
    if (block_size < 1) throw std::invalid_argument("partition: block_size must be >= 1");
    PartitionPlan plan;
    plan.strategy = Strategy::QGuided;
    plan.block_size = block_size;
    for (NodeId leaf : tree.leaves()) {
        // Root-to-leaf node chain in root-first order.
        std::vector<NodeId> chain;
        for (NodeId cur = leaf; cur != kInvalidNode; cur = tree.node(cur).parent)
            chain.push_back(cur);
        std::reverse(chain.begin(), chain.end());

        QkvGroup g;
        g.query_ids = {leaf};
        std::int64_t fill = 0;
        auto flush = [&] {
            if (g.segments.empty()) return;
            g.group_id = static_cast<int>(plan.groups.size());
            plan.groups.push_back(std::move(g));
            g = QkvGroup{};
            g.query_ids = {leaf};
            fill = 0;
        };
        for (NodeId id : chain) {
            std::int64_t remaining = tree.node(id).token_count;
            std::int64_t offset = 0;
            while (remaining > 0) {
                const std::int64_t take = std::min(remaining, block_size - fill);
                g.segments.push_back({id, offset, take});
                g.masks.push_back(1);
                offset += take;
                remaining -= take;
                fill += take;
                if (fill == block_size) flush();
            }
        }
        flush();
    }
    return plan;
}

/// One group per live node, grouped with every query sharing it.
inline PartitionPlan partition_node(const DecodingTree& tree) {
    detail::AncestorIndex anc(tree);
    PartitionPlan plan;
    plan.strategy = Strategy::Node;
    plan.block_size = 0;
    for (NodeId id : tree.depth_first_order()) {
        const TreeNode& n = tree.node(id);
        if (n.token_count == 0) continue;
        std::vector<NodeSegment> segs = {{id, 0, n.token_count}};
        detail::emit_groups(plan.groups, segs, tree.queries_for_node(id), anc);
    }
    return plan;
}

/// Node grouping with oversized nodes further cut into blocks.
inline PartitionPlan partition_node_chunk(const DecodingTree& tree, int block_size = kDefaultBlockSize) {
    if (block_size < 1) throw std::invalid_argument("partition: block_size must be >= 1");
    detail::AncestorIndex anc(tree);
    PartitionPlan plan;
    plan.strategy = Strategy::NodeChunk;
    plan.block_size = block_size;
    for (NodeId id : tree.depth_first_order()) {
        const TreeNode& n = tree.node(id);
        if (n.token_count == 0) continue;
        const std::vector<NodeId> queries = tree.queries_for_node(id);
        for (std::int64_t off = 0; off < n.token_count; off += block_size) {
            const std::int64_t len = std::min<std::int64_t>(block_size, n.token_count - off);
            std::vector<NodeSegment> segs = {{id, off, len}};
            detail::emit_groups(plan.groups, segs, queries, anc);
        }
    }
    return plan;
}

/// Depth-first flatten of all tree tokens into one stream, cut into
/// equal blocks; chunks crossing node boundaries carry one segment and
/// one mask word per crossed node.
inline PartitionPlan partition_flatten(const DecodingTree& tree, int block_size = kDefaultBlockSize) {
    if (block_size < 1) throw std::invalid_argument("partition: block_size must be >= 1");
    detail::AncestorIndex anc(tree);
    PartitionPlan plan;
    plan.strategy = Strategy::Flatten;
    plan.block_size = block_size;

    std::vector<NodeSegment> pending;
    std::unordered_set<NodeId> pending_query_set;
    std::int64_t fill = 0;

    auto add_queries_of = [&](NodeId node) {
        for (NodeId q : tree.queries_for_node(node)) pending_query_set.insert(q);
    };
    auto flush = [&] {
        if (pending.empty()) return;
        // Keep query order deterministic: order of tree.leaves().
        std::vector<NodeId> ordered;
        for (NodeId leaf : tree.leaves())
            if (pending_query_set.count(leaf)) ordered.push_back(leaf);
        detail::emit_groups(plan.groups, pending, ordered, anc);
        pending.clear();
        pending_query_set.clear();
        fill = 0;
    };

    for (NodeId id : tree.depth_first_order()) {
        std::int64_t remaining = tree.node(id).token_count;
        std::int64_t offset = 0;
        while (remaining > 0) {
            const std::int64_t take = std::min(remaining, block_size - fill);
            pending.push_back({id, offset, take});
            add_queries_of(id);
            offset += take;
            remaining -= take;
            fill += take;
            if (fill == block_size) flush();
        }
    }
    flush();
    return plan;
}

inline PartitionPlan make_plan(const DecodingTree& tree, Strategy s, int block_size = kDefaultBlockSize) {
    switch (s) {
        case Strategy::QGuided: return partition_q_guided(tree, block_size);
        case Strategy::Node: return partition_node(tree);
        case Strategy::NodeChunk: return partition_node_chunk(tree, block_size);
        case Strategy::Flatten: return partition_flatten(tree, block_size);
    }
    throw std::invalid_argument("make_plan: bad strategy");
}

/// Expands a group's bit masks into the dense |queries| x kv_length
/// boolean matrix the attention math sees.
inline std::vector<std::vector<bool>> reconstruct_dense_mask(const QkvGroup& g) {
    const std::size_t nq = g.query_ids.size();
    const std::size_t nkv = static_cast<std::size_t>(g.kv_length());
    std::vector<std::vector<bool>> m(nq, std::vector<bool>(nkv, false));
    std::size_t col = 0;
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
        const std::uint64_t mask = g.masks[s];
        for (std::int64_t t = 0; t < g.segments[s].length; ++t, ++col)
            for (std::size_t j = 0; j < nq; ++j)
                if (mask >> j & 1) m[j][col] = true;
    }
    return m;
}

}  // namespace treeattn
