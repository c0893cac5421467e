#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "treeattn/common.hpp"

#include <nlohmann/json_fwd.hpp>

namespace treeattn {

/// Hook so a KV store can follow node lifecycle without the tree
/// depending on the storage layer.
class KvLifecycle {
public:
    virtual ~KvLifecycle() = default;
    virtual void on_alloc(NodeId node, int n_tokens) = 0;
    virtual void on_extend(NodeId node, int n_tokens) = 0;
    virtual void on_free(NodeId node) = 0;
};

struct TreeNode {
    NodeId id = kInvalidNode;
    NodeId parent = kInvalidNode;
    std::vector<NodeId> children;
    std::int64_t token_count = 0;

    bool is_leaf() const { return children.empty(); }
};

/// Rooted tree of token-bearing nodes. One query per leaf.
/// Mutations are single-writer; const queries are safe to share.
class DecodingTree {
public:
    explicit DecodingTree(std::int64_t root_token_count, KvLifecycle* kv = nullptr)
        : kv_(kv) {
        if (root_token_count < 1)
            throw std::invalid_argument("new_tree: root_token_count must be >= 1");
        TreeNode root;
        root.id = next_id_++;
        root.token_count = root_token_count;
        root_ = root.id;
        nodes_.emplace(root.id, std::move(root));
        if (kv_) kv_->on_alloc(root_, static_cast<int>(root_token_count));
        rebuild_leaves();
    }

    NodeId root() const { return root_; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<NodeId>& leaves() const { return leaves_; }

    bool contains(NodeId id) const { return nodes_.count(id) != 0; }

    const TreeNode& node(NodeId id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end())
            throw std::out_of_range("tree: unknown node id " + std::to_string(id));
        return it->second;
    }

    std::int64_t total_tokens() const {
        std::int64_t sum = 0;
        for (const auto& [id, n] : nodes_) sum += n.token_count;
        return sum;
    }

    /// Adds children to a leaf; the leaf stops being a query holder
    /// until all its children are pruned again.
    std::vector<NodeId> branch(NodeId at, const std::vector<std::int64_t>& child_token_counts) {
        auto it = nodes_.find(at);
        if (it == nodes_.end())
            throw std::out_of_range("branch: unknown node id " + std::to_string(at));
        if (!it->second.is_leaf())
            throw std::invalid_argument("branch: only leaves may branch");
        for (std::int64_t c : child_token_counts)
            if (c < 0) throw std::invalid_argument("branch: negative child token count");

        std::vector<NodeId> created;
        created.reserve(child_token_counts.size());
        for (std::int64_t c : child_token_counts) {
            TreeNode child;
            child.id = next_id_++;
            child.parent = at;
            child.token_count = c;
            it->second.children.push_back(child.id);
            created.push_back(child.id);
            nodes_.emplace(child.id, std::move(child));
            if (kv_) kv_->on_alloc(created.back(), static_cast<int>(c));
        }
        rebuild_leaves();
        return created;
    }

    /// Removes a node and its whole subtree; KV space is released.
    void prune(NodeId at) {
        if (at == root_)
            throw std::invalid_argument("prune: cannot prune the root");
        auto it = nodes_.find(at);
        if (it == nodes_.end())
            throw std::out_of_range("prune: unknown node id " + std::to_string(at));

        std::vector<NodeId> doomed = subtree_of(at);
        auto& parent = nodes_.at(it->second.parent);
        parent.children.erase(
            std::find(parent.children.begin(), parent.children.end(), at));
        for (NodeId id : doomed) {
            if (kv_) kv_->on_free(id);
            nodes_.erase(id);
        }
        rebuild_leaves();
    }

    /// One decode step extending a leaf by n tokens.
    void append_tokens(NodeId leaf, std::int64_t n) {
        auto it = nodes_.find(leaf);
        if (it == nodes_.end())
            throw std::out_of_range("append_tokens: unknown node id " + std::to_string(leaf));
        if (!it->second.is_leaf())
            throw std::invalid_argument("append_tokens: target is not a leaf");
        if (n < 1)
            throw std::invalid_argument("append_tokens: n must be >= 1");
        it->second.token_count += n;
        if (kv_) kv_->on_extend(leaf, static_cast<int>(n));
    }

    /// Token length of the root-to-leaf path (N_i).
    std::int64_t path_tokens(NodeId leaf) const {
        std::int64_t sum = 0;
        NodeId cur = leaf;
        while (cur != kInvalidNode) {
            const TreeNode& n = node(cur);
            sum += n.token_count;
            cur = n.parent;
        }
        return sum;
    }

    /// Shared factor F_s = (sum of all root-to-leaf path lengths) / total tokens,
    /// as an exact ratio. F_s == 1 iff the tree is a chain.
    Rational shared_factor() const {
        const std::int64_t total = total_tokens();
        if (total <= 0) throw std::logic_error("shared_factor: empty tree");
        std::int64_t paths = 0;
        for (NodeId leaf : leaves_) paths += path_tokens(leaf);
        return Rational(static_cast<std::uint64_t>(paths), static_cast<std::uint64_t>(total));
    }

    std::int64_t path_tokens_sum() const {
        std::int64_t paths = 0;
        for (NodeId leaf : leaves_) paths += path_tokens(leaf);
        return paths;
    }

    /// Pre-order traversal; children in insertion order. Each subtree
    /// occupies a contiguous range of the result.
    std::vector<NodeId> depth_first_order() const {
        std::vector<NodeId> order;
        order.reserve(nodes_.size());
        dfs(root_, order);
        return order;
    }

    /// Leaves in the subtree of `at` (itself if a leaf), in leaf order.
    std::vector<NodeId> queries_for_node(NodeId at) const {
        const TreeNode& n = node(at);
        if (n.is_leaf()) return {at};
        std::unordered_set<NodeId> want;
        collect_leaves(at, want);
        std::vector<NodeId> out;
        for (NodeId leaf : leaves_)
            if (want.count(leaf)) out.push_back(leaf);
        return out;
    }

    /// True iff `anc` lies on the root-to-leaf path of `leaf` (or equals it).
    bool on_path(NodeId anc, NodeId leaf) const {
        NodeId cur = leaf;
        while (cur != kInvalidNode) {
            if (cur == anc) return true;
            cur = node(cur).parent;
        }
        return false;
    }

    std::vector<NodeId> subtree_of(NodeId at) const {
        std::vector<NodeId> out;
        dfs(at, out);
        return out;
    }

    /// Node ids in ascending id order (deterministic snapshot order).
    std::vector<NodeId> node_ids() const {
        std::vector<NodeId> out;
        out.reserve(nodes_.size());
        for (const auto& [id, n] : nodes_) out.push_back(id);
        return out;
    }

    /// Rebuilds a tree from snapshot nodes (children derived from parent
    /// links, in ascending child-id order). Allocates KV per node when a
    /// lifecycle hook is given.
    static DecodingTree restore(NodeId root, const std::vector<TreeNode>& nodes,
                                KvLifecycle* kv = nullptr) {
        DecodingTree t;
        t.kv_ = kv;
        t.root_ = root;
        for (const TreeNode& n : nodes) {
            TreeNode copy = n;
            copy.children.clear();
            if (!t.nodes_.emplace(copy.id, std::move(copy)).second)
                throw std::invalid_argument("restore: duplicate node id");
            t.next_id_ = std::max(t.next_id_, static_cast<NodeId>(n.id + 1));
        }
        for (const auto& [id, n] : t.nodes_) {
            if (id == root) {
                if (n.parent != kInvalidNode)
                    throw std::invalid_argument("restore: root must have no parent");
                continue;
            }
            auto pit = t.nodes_.find(n.parent);
            if (pit == t.nodes_.end())
                throw std::invalid_argument("restore: dangling parent link");
            pit->second.children.push_back(id);
        }
        std::vector<NodeId> reach = t.subtree_of(root);
        if (reach.size() != t.nodes_.size())
            throw std::invalid_argument("restore: unreachable or cyclic nodes");
        t.rebuild_leaves();
        if (kv)
            for (NodeId id : t.depth_first_order())
                kv->on_alloc(id, static_cast<int>(t.node(id).token_count));
        return t;
    }

    nlohmann::json to_json() const;
    static DecodingTree from_json(const nlohmann::json& j, KvLifecycle* kv = nullptr);

private:
    DecodingTree() = default;

    void dfs(NodeId at, std::vector<NodeId>& out) const {
        out.push_back(at);
        for (NodeId c : node(at).children) dfs(c, out);
    }

    void collect_leaves(NodeId at, std::unordered_set<NodeId>& out) const {
        const TreeNode& n = node(at);
        if (n.is_leaf()) { out.insert(at); return; }
        for (NodeId c : n.children) collect_leaves(c, out);
    }

    void rebuild_leaves() {
        leaves_.clear();
        std::vector<NodeId> order = depth_first_order();
        for (NodeId id : order)
            if (node(id).is_leaf()) leaves_.push_back(id);
    }

    std::map<NodeId, TreeNode> nodes_;
    NodeId root_ = kInvalidNode;
    NodeId next_id_ = 0;
    std::vector<NodeId> leaves_;
    KvLifecycle* kv_ = nullptr;
};

}  // namespace treeattn
