#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeattn/common.hpp"
#include "treeattn/partition.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

enum class Algorithm {
    Naive,
    FlashDecoding,
    Radix,
    TreeAttnMedusa,
    TreeAttnSpecInfer,
    Node,
    NodeChunk,
    Flatten,
};

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Naive: return "naive";
        case Algorithm::FlashDecoding: return "flash-decoding";
        case Algorithm::Radix: return "radix";
        case Algorithm::TreeAttnMedusa: return "tree-attn-medusa";
        case Algorithm::TreeAttnSpecInfer: return "tree-attn-specinfer";
        case Algorithm::Node: return "node";
        case Algorithm::NodeChunk: return "node-chunk";
        case Algorithm::Flatten: return "flatten";
    }
    return "?";
}

inline Algorithm algorithm_from_name(const std::string& s) {
    if (s == "naive") return Algorithm::Naive;
    if (s == "flash-decoding") return Algorithm::FlashDecoding;
    if (s == "radix") return Algorithm::Radix;
    if (s == "tree-attn-medusa") return Algorithm::TreeAttnMedusa;
    if (s == "tree-attn-specinfer") return Algorithm::TreeAttnSpecInfer;
    if (s == "node") return Algorithm::Node;
    if (s == "node-chunk") return Algorithm::NodeChunk;
    if (s == "flatten") return Algorithm::Flatten;
    throw std::invalid_argument("unknown algorithm: " + s);
}

/// Per-term breakdown of the partial-result traffic of unfused tree
/// attention (round-trips of QK^T, scaled scores, mask, mask-add and
/// softmax rows). Zero for every fused algorithm.
struct PartialTerms {
    std::uint64_t qkt = 0;
    std::uint64_t scaled = 0;
    std::uint64_t mask_add = 0;
    std::uint64_t softmax = 0;
    std::uint64_t dense_mask = 0;  // the dense causal mask read

    std::uint64_t total() const { return qkt + scaled + mask_add + softmax + dense_mask; }
};

struct IoReport {
    std::uint64_t kv_bytes = 0;
    std::uint64_t q_bytes = 0;
    std::uint64_t mask_bytes = 0;      // bit-mask traffic only
    std::uint64_t partial_bytes = 0;   // == partial_terms.total()
    PartialTerms partial_terms;

    std::uint64_t total_bytes() const {
        return kv_bytes + q_bytes + mask_bytes + partial_bytes;
    }
};

struct BalanceReport {
    std::size_t group_count = 0;
    std::int64_t kv_len_max = 0;
    std::int64_t kv_len_min = 0;
    double kv_len_mean = 0.0;
    double kv_len_stddev = 0.0;
    double idle_fraction = 0.0;  // 1 - mean/max under one-group-per-processor
};

/// Analytical per-iteration IO of one attention algorithm on one tree,
/// with the unit u = n_heads * n_layers * dtype_bytes applied to every
/// datum. Chunked algorithms use `block_size` only for the query-IO
/// group count.
inline IoReport io_analytical(const DecodingTree& tree, Algorithm algo,
                              const CostParams& params,
                              int block_size = kDefaultBlockSize) {
    params.validate();
    const std::uint64_t u = params.unit();
    const std::uint64_t d = static_cast<std::uint64_t>(params.d_head);
    const std::uint64_t n_tree = static_cast<std::uint64_t>(tree.total_tokens());
    const std::uint64_t sum_paths = static_cast<std::uint64_t>(tree.path_tokens_sum());
    const std::uint64_t l_n = static_cast<std::uint64_t>(tree.leaves().size());
    const std::uint64_t bs = static_cast<std::uint64_t>(block_size);

    // Group count k for the query-IO bound O(k * l_n * d_head).
    std::uint64_t k = 1;
    std::uint64_t live_nodes = 0, chunked_nodes = 0;
    for (NodeId id : tree.node_ids()) {
        const std::int64_t tc = tree.node(id).token_count;
        if (tc == 0) continue;
        live_nodes++;
        chunked_nodes += (static_cast<std::uint64_t>(tc) + bs - 1) / bs;
    }

    IoReport r;
    switch (algo) {
        case Algorithm::Naive:
            r.kv_bytes = 2 * d * sum_paths * u;
            r.partial_terms.qkt = 2 * sum_paths * u;
            r.partial_terms.scaled = 2 * sum_paths * u;
            r.partial_terms.softmax = 2 * sum_paths * u;
            break;
        case Algorithm::FlashDecoding:
        case Algorithm::Radix:
            r.kv_bytes = 2 * d * sum_paths * u;
            break;
        case Algorithm::TreeAttnMedusa:
            r.kv_bytes = 2 * d * n_tree * u;
            r.partial_terms.qkt = 2 * l_n * n_tree * u;
            r.partial_terms.scaled = 2 * l_n * n_tree * u;
            r.partial_terms.dense_mask = l_n * n_tree * u;
            r.partial_terms.mask_add = 2 * l_n * n_tree * u;
            r.partial_terms.softmax = 2 * l_n * n_tree * u;
            break;
        case Algorithm::TreeAttnSpecInfer:
            r.kv_bytes = 2 * d * n_tree * l_n * u;
            r.mask_bytes = (l_n * n_tree + 63) / 64 * u;
            break;
        case Algorithm::Node:
            r.kv_bytes = 2 * d * n_tree * u;
            k = live_nodes;
            break;
        case Algorithm::NodeChunk:
            r.kv_bytes = 2 * d * n_tree * u;
            k = chunked_nodes;
            break;
        case Algorithm::Flatten:
            r.kv_bytes = 2 * d * n_tree * u;
            r.mask_bytes = n_tree * u;
            k = (n_tree + bs - 1) / bs;
            break;
    }
    r.partial_bytes = r.partial_terms.total();
    r.q_bytes = k * l_n * d * u;
    return r;
}

/// Byte counts a concrete plan actually loads: shared prefixes once per
/// group they appear in, queries once per group membership, one 64-bit
/// mask word per segment per layer. Fused execution writes no partials.
inline IoReport io_measured(const PartitionPlan& plan, const CostParams& params) {
    params.validate();
    const std::uint64_t u = params.unit();
    const std::uint64_t d = static_cast<std::uint64_t>(params.d_head);
    IoReport r;
    for (const QkvGroup& g : plan.groups) {
        r.kv_bytes += 2 * d * static_cast<std::uint64_t>(g.kv_length()) * u;
        r.q_bytes += static_cast<std::uint64_t>(g.query_ids.size()) * d * u;
        r.mask_bytes += static_cast<std::uint64_t>(g.segments.size()) * 8 *
                        static_cast<std::uint64_t>(params.n_layers);
    }
    return r;
}

/// KV-IO reduction of `to` vs `from`, summed over a trace of trees.
template <typename TreeRange>
inline double io_reduction(const TreeRange& trees, Algorithm from, Algorithm to,
                           const CostParams& params,
                           int block_size = kDefaultBlockSize) {
    std::uint64_t from_bytes = 0, to_bytes = 0;
    std::size_t n = 0;
    for (const DecodingTree& t : trees) {
        from_bytes += io_analytical(t, from, params, block_size).kv_bytes;
        to_bytes += io_analytical(t, to, params, block_size).kv_bytes;
        ++n;
    }
    if (n == 0 || from_bytes == 0)
        throw std::invalid_argument("io_reduction: empty trace");
    return 1.0 - static_cast<double>(to_bytes) / static_cast<double>(from_bytes);
}

inline BalanceReport load_balance(const PartitionPlan& plan) {
    if (plan.groups.empty())
        throw std::invalid_argument("load_balance: empty plan");
    BalanceReport b;
    b.group_count = plan.groups.size();
    std::vector<std::int64_t> lens;
    lens.reserve(plan.groups.size());
    for (const QkvGroup& g : plan.groups) lens.push_back(g.kv_length());
    b.kv_len_max = *std::max_element(lens.begin(), lens.end());
    b.kv_len_min = *std::min_element(lens.begin(), lens.end());
    double sum = 0;
    for (std::int64_t l : lens) sum += static_cast<double>(l);
    b.kv_len_mean = sum / static_cast<double>(lens.size());
    double var = 0;
    for (std::int64_t l : lens) {
        const double dl = static_cast<double>(l) - b.kv_len_mean;
        var += dl * dl;
    }
    b.kv_len_stddev = std::sqrt(var / static_cast<double>(lens.size()));
    b.idle_fraction =
        b.kv_len_max > 0 ? 1.0 - b.kv_len_mean / static_cast<double>(b.kv_len_max) : 0.0;
    return b;
}

}  // namespace treeattn
