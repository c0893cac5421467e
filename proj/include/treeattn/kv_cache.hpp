#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "treeattn/common.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

struct TokenRef {
    std::int32_t page = -1;
    std::int32_t slot = -1;
};

struct KvHandle {
    NodeId node = kInvalidNode;
    std::vector<TokenRef> refs;  // one per token, generation order
};

struct GatheredKv {
    int rows = 0;
    int dim = 0;  // n_heads * d_head
    std::vector<float> keys;    // row-major rows x dim
    std::vector<float> values;
};

/// Paged KV storage. Pages hold `page_size` token slots; a page is
/// owned by exactly one node, so freeing a node recycles whole pages.
class PagePool : public KvLifecycle {
public:
    PagePool(int dim, int page_size = 16) : dim_(dim), page_size_(page_size) {
        if (dim < 1 || page_size < 1)
            throw std::invalid_argument("PagePool: dim and page_size must be >= 1");
    }

    int page_size() const { return page_size_; }
    int dim() const { return dim_; }

    std::size_t page_count() const { return pages_.size(); }
    std::size_t free_page_count() const { return free_list_.size(); }
    std::int64_t live_slots() const { return live_slots_; }

    bool has_handle(NodeId node) const { return handles_.count(node) != 0; }

    const KvHandle& handle(NodeId node) const {
        auto it = handles_.find(node);
        if (it == handles_.end())
            throw std::logic_error("PagePool: no handle for node " + std::to_string(node));
        return it->second;
    }

    KvHandle& allocate(NodeId node, int n_tokens) {
        if (n_tokens < 0)
            throw std::invalid_argument("allocate: negative token count");
        if (handles_.count(node))
            throw std::logic_error("allocate: node already has a handle");
        KvHandle h;
        h.node = node;
        auto [it, ok] = handles_.emplace(node, std::move(h));
        extend(it->second, n_tokens);
        return it->second;
    }

    void extend(KvHandle& h, int n_tokens) {
        for (int i = 0; i < n_tokens; ++i) {
            // Fill this node's tail page first; never share a page across nodes.
            if (!h.refs.empty()) {
                const TokenRef tail = h.refs.back();
                Page& p = pages_[tail.page];
                if (p.used < page_size_) {
                    h.refs.push_back({tail.page, p.used});
                    p.used++;
                    p.live++;
                    live_slots_++;
                    continue;
                }
            }
            const std::int32_t pid = acquire_page(h.node);
            Page& p = pages_[pid];
            h.refs.push_back({pid, 0});
            p.used = 1;
            p.live = 1;
            live_slots_++;
        }
    }

    void free(NodeId node) {
        auto it = handles_.find(node);
        if (it == handles_.end())
            throw std::logic_error("free: handle not live (double free?)");
        for (const TokenRef& r : it->second.refs) {
            Page& p = pages_[r.page];
            p.live--;
            live_slots_--;
            if (p.live == 0) release_page(r.page);
        }
        handles_.erase(it);
    }

    void write_kv(const KvHandle& h, int token_index,
                  std::span<const float> key, std::span<const float> value) {
        if (token_index < 0 || token_index >= static_cast<int>(h.refs.size()))
            throw std::invalid_argument("write_kv: token index out of range");
        if (static_cast<int>(key.size()) != dim_ || static_cast<int>(value.size()) != dim_)
            throw std::invalid_argument("write_kv: vector dimension mismatch");
        const TokenRef r = h.refs[token_index];
        Page& p = pages_[r.page];
        float* k = p.keys.data() + static_cast<std::size_t>(r.slot) * dim_;
        float* v = p.values.data() + static_cast<std::size_t>(r.slot) * dim_;
        std::copy(key.begin(), key.end(), k);
        std::copy(value.begin(), value.end(), v);
    }

    /// Rows come back in the order of `refs`, bit-identical to what was written.
    GatheredKv gather(std::span<const TokenRef> refs) const {
        GatheredKv out;
        out.rows = static_cast<int>(refs.size());
        out.dim = dim_;
        out.keys.resize(static_cast<std::size_t>(out.rows) * dim_);
        out.values.resize(static_cast<std::size_t>(out.rows) * dim_);
        for (int i = 0; i < out.rows; ++i) {
            const TokenRef& r = refs[i];
            if (r.page < 0 || r.page >= static_cast<std::int32_t>(pages_.size()) ||
                pages_[r.page].owner == kInvalidNode || r.slot >= pages_[r.page].used)
                throw std::logic_error("gather: dangling token ref");
            const Page& p = pages_[r.page];
            const float* k = p.keys.data() + static_cast<std::size_t>(r.slot) * dim_;
            const float* v = p.values.data() + static_cast<std::size_t>(r.slot) * dim_;
            std::copy(k, k + dim_, out.keys.begin() + static_cast<std::size_t>(i) * dim_);
            std::copy(v, v + dim_, out.values.begin() + static_cast<std::size_t>(i) * dim_);
        }
        return out;
    }

    // KvLifecycle: lets a DecodingTree drive allocation directly.
    void on_alloc(NodeId node, int n_tokens) override { allocate(node, n_tokens); }
    void on_extend(NodeId node, int n_tokens) override {
        auto it = handles_.find(node);
        if (it == handles_.end())
            throw std::logic_error("extend: no handle for node");
        extend(it->second, n_tokens);
    }
    void on_free(NodeId node) override { free(node); }

private:
    struct Page {
        NodeId owner = kInvalidNode;
        std::int32_t used = 0;  // high-water slot mark
        std::int32_t live = 0;  // live slots
        std::vector<float> keys;
        std::vector<float> values;
    };

    std::int32_t acquire_page(NodeId owner) {
        std::int32_t pid;
        if (!free_list_.empty()) {
            pid = free_list_.back();
            free_list_.pop_back();
        } else {
            pid = static_cast<std::int32_t>(pages_.size());
            pages_.emplace_back();
            pages_[pid].keys.resize(static_cast<std::size_t>(page_size_) * dim_);
            pages_[pid].values.resize(static_cast<std::size_t>(page_size_) * dim_);
        }
        pages_[pid].owner = owner;
        pages_[pid].used = 0;
        pages_[pid].live = 0;
        return pid;
    }

    void release_page(std::int32_t pid) {
        pages_[pid].owner = kInvalidNode;
        pages_[pid].used = 0;
        free_list_.push_back(pid);
    }

    int dim_;
    int page_size_;
    std::vector<Page> pages_;
    std::vector<std::int32_t> free_list_;
    std::map<NodeId, KvHandle> handles_;
    std::int64_t live_slots_ = 0;
};

}  // namespace treeattn
