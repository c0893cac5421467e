#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "treeattn/common.hpp"
#include "treeattn/kv_cache.hpp"
#include "treeattn/partition.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

struct AttentionParams {
    int d_head = 64;
    int n_heads = 1;
    int tile_size = 32;  // tokens per online-softmax tile; results are
                         // tile-size independent up to rounding
    bool use_double = false;

    int dim() const { return d_head * n_heads; }
};

/// One decode-step query vector per live leaf. Length n_heads * d_head.
struct QueryVec {
    NodeId leaf = kInvalidNode;
    std::vector<float> q;
};

/// Partial attention of one (query, group) pair: unnormalized-by-merge
/// output plus LogSumExp per head. Queries with no attended token in a
/// group simply produce no Partial.
struct PartialAttention {
    NodeId query = kInvalidNode;
    int group = 0;
    std::vector<double> out;  // n_heads * d_head
    std::vector<double> lse;  // n_heads
};

/// Final attention per leaf, n_heads * d_head each.
using AttentionOutput = std::map<NodeId, std::vector<double>>;

/// Worker pool size for Stage 1, capped by TREEATTN_THREADS (default 1).
inline int worker_thread_count() {
    const char* env = std::getenv("TREEATTN_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

namespace detail {

/// Resolves a group's segments into a flat ref list plus a parallel
/// per-token mask column index.
inline void resolve_group_refs(const QkvGroup& g, const PagePool& pool,
                               std::vector<TokenRef>& refs,
                               std::vector<std::uint64_t>& token_masks) {
    refs.clear();
    token_masks.clear();
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
        const NodeSegment& seg = g.segments[s];
        const KvHandle& h = pool.handle(seg.node);
        if (seg.token_offset + seg.length > static_cast<std::int64_t>(h.refs.size()))
            throw std::logic_error("group segment exceeds node token range");
        for (std::int64_t t = 0; t < seg.length; ++t) {
            refs.push_back(h.refs[static_cast<std::size_t>(seg.token_offset + t)]);
            token_masks.push_back(g.masks[s]);
        }
    }
}

template <typename Scalar>
inline Scalar dot(const Scalar* a, const float* b, int n) {
    Scalar acc = 0;
    for (int i = 0; i < n; ++i) acc += a[i] * static_cast<Scalar>(b[i]);
    return acc;
}

}  // namespace detail

/// Numerically stable log(sum(exp(q.k/sqrt(d)))) over the unmasked keys.
/// Returns nullopt when every key is masked out.
inline std::optional<double> lse_of(std::span<const double> q,
                                    const std::vector<std::vector<double>>& keys,
                                    const std::vector<bool>& mask) {
    if (keys.size() != mask.size())
        throw std::invalid_argument("lse_of: mask size mismatch");
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.size()));
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> scores;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (!mask[i]) continue;
        if (keys[i].size() != q.size())
            throw std::invalid_argument("lse_of: key dimension mismatch");
        double s = 0;
        for (std::size_t d = 0; d < q.size(); ++d) s += q[d] * keys[i][d];
        s *= scale;
        scores.push_back(s);
        m = std::max(m, s);
    }
    if (scores.empty()) return std::nullopt;
    double acc = 0;
    for (double s : scores) acc += std::exp(s - m);
    return m + std::log(acc);
}

/// Stage 1: tiled online-softmax attention of one QKV group. Emits one
/// PartialAttention per query that attends at least one token here.
template <typename Scalar = float>
inline std::vector<PartialAttention> group_attention(
    const QkvGroup& g, const std::map<NodeId, QueryVec>& queries,
    const PagePool& pool, const AttentionParams& params) {
    const int dim = params.dim();
    if (pool.dim() != dim)
        throw std::invalid_argument("group_attention: pool/params dimension mismatch");

    std::vector<TokenRef> refs;
    std::vector<std::uint64_t> token_masks;
    detail::resolve_group_refs(g, pool, refs, token_masks);
    const GatheredKv kv = pool.gather(refs);
    const int n_tokens = kv.rows;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(params.d_head));

    std::vector<PartialAttention> out;
    for (std::size_t j = 0; j < g.query_ids.size(); ++j) {
        const NodeId leaf = g.query_ids[j];
        auto qit = queries.find(leaf);
        if (qit == queries.end())
            throw std::invalid_argument("group_attention: missing query vector for leaf");
        if (static_cast<int>(qit->second.q.size()) != dim)
            throw std::invalid_argument("group_attention: query dimension mismatch");

        std::vector<Scalar> qv(qit->second.q.begin(), qit->second.q.end());
        PartialAttention pa;
        pa.query = leaf;
        pa.group = g.group_id;
        pa.out.assign(static_cast<std::size_t>(dim), 0.0);
        pa.lse.assign(static_cast<std::size_t>(params.n_heads), 0.0);
        bool attended_any = false;

        for (int h = 0; h < params.n_heads; ++h) {
            const Scalar* qh = qv.data() + static_cast<std::size_t>(h) * params.d_head;
            Scalar run_max = -std::numeric_limits<Scalar>::infinity();
            Scalar run_den = 0;
            std::vector<Scalar> acc(static_cast<std::size_t>(params.d_head), 0);
            bool attended = false;

            for (int tile = 0; tile < n_tokens; tile += params.tile_size) {
                const int tile_end = std::min(n_tokens, tile + params.tile_size);
                // Local max over the tile, then one rescale of the running state.
                Scalar tile_max = -std::numeric_limits<Scalar>::infinity();
                std::vector<Scalar> scores(static_cast<std::size_t>(tile_end - tile));
                bool tile_any = false;
                for (int t = tile; t < tile_end; ++t) {
                    if (!(token_masks[t] >> j & 1)) continue;
                    const float* k = kv.keys.data() +
                        static_cast<std::size_t>(t) * dim + static_cast<std::size_t>(h) * params.d_head;
                    const Scalar s = detail::dot(qh, k, params.d_head) * scale;
                    scores[t - tile] = s;
                    tile_max = std::max(tile_max, s);
                    tile_any = true;
                }
                if (!tile_any) continue;
                const Scalar new_max = attended ? std::max(run_max, tile_max) : tile_max;
                if (attended && new_max != run_max) {
                    const Scalar r = std::exp(run_max - new_max);
                    run_den *= r;
                    for (Scalar& a : acc) a *= r;
                }
                run_max = new_max;
                for (int t = tile; t < tile_end; ++t) {
                    if (!(token_masks[t] >> j & 1)) continue;
                    const Scalar w = std::exp(scores[t - tile] - run_max);
                    run_den += w;
                    const float* v = kv.values.data() +
                        static_cast<std::size_t>(t) * dim + static_cast<std::size_t>(h) * params.d_head;
                    for (int d = 0; d < params.d_head; ++d)
                        acc[d] += w * static_cast<Scalar>(v[d]);
                }
                attended = true;
            }

            if (attended) {
                attended_any = true;
                pa.lse[h] = static_cast<double>(run_max) + std::log(static_cast<double>(run_den));
                for (int d = 0; d < params.d_head; ++d)
                    pa.out[static_cast<std::size_t>(h) * params.d_head + d] =
                        static_cast<double>(acc[d] / run_den);
            } else {
                pa.lse[h] = -std::numeric_limits<double>::infinity();
            }
        }
        if (attended_any) out.push_back(std::move(pa));
    }
    return out;
}

/// Stage 2: merge one query's partials into the exact final attention
/// with max-stabilized LSE weighting. Partials must jointly cover the
/// query's root-to-leaf tokens exactly once.
inline std::vector<double> tree_reduce(const std::vector<PartialAttention>& partials,
                                       const AttentionParams& params) {
    if (partials.empty())
        throw std::logic_error("tree_reduce: no partials for query");
    const int dim = params.dim();
    std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
    for (int h = 0; h < params.n_heads; ++h) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : partials) m = std::max(m, p.lse[h]);
        if (!std::isfinite(m))
            throw std::logic_error("tree_reduce: query attended no tokens");
        double den = 0;
        std::vector<double> num(static_cast<std::size_t>(params.d_head), 0.0);
        for (const auto& p : partials) {
            if (!std::isfinite(p.lse[h])) continue;  // empty partial for this head
            const double w = std::exp(p.lse[h] - m);
            den += w;
            for (int d = 0; d < params.d_head; ++d)
                num[d] += w * p.out[static_cast<std::size_t>(h) * params.d_head + d];
        }
        for (int d = 0; d < params.d_head; ++d)
            out[static_cast<std::size_t>(h) * params.d_head + d] = num[d] / den;
    }
    return out;
}

/// Dense 64-bit reference: per leaf, softmax attention over its full
/// root-to-leaf KV. This is the correctness oracle for every strategy.
inline AttentionOutput naive_attention(const DecodingTree& tree,
                                       const std::map<NodeId, QueryVec>& queries,
                                       const PagePool& pool,
                                       const AttentionParams& params) {
    const int dim = params.dim();
    AttentionOutput result;
    for (NodeId leaf : tree.leaves()) {
        auto qit = queries.find(leaf);
        if (qit == queries.end()) continue;

        std::vector<NodeId> chain;
        for (NodeId cur = leaf; cur != kInvalidNode; cur = tree.node(cur).parent)
            chain.push_back(cur);
        std::reverse(chain.begin(), chain.end());
        std::vector<TokenRef> refs;
        for (NodeId id : chain) {
            if (tree.node(id).token_count == 0) continue;
            const KvHandle& h = pool.handle(id);
            refs.insert(refs.end(), h.refs.begin(), h.refs.end());
        }
        const GatheredKv kv = pool.gather(refs);

        std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_head));
        for (int h = 0; h < params.n_heads; ++h) {
            const float* qh = qit->second.q.data() + static_cast<std::size_t>(h) * params.d_head;
            std::vector<double> scores(static_cast<std::size_t>(kv.rows));
            double m = -std::numeric_limits<double>::infinity();
            for (int t = 0; t < kv.rows; ++t) {
                const float* k = kv.keys.data() +
                    static_cast<std::size_t>(t) * dim + static_cast<std::size_t>(h) * params.d_head;
                double s = 0;
                for (int d = 0; d < params.d_head; ++d)
                    s += static_cast<double>(qh[d]) * static_cast<double>(k[d]);
                scores[t] = s * scale;
                m = std::max(m, scores[t]);
            }
            double den = 0;
            for (int t = 0; t < kv.rows; ++t) den += std::exp(scores[t] - m);
            for (int t = 0; t < kv.rows; ++t) {
                const double w = std::exp(scores[t] - m) / den;
                const float* v = kv.values.data() +
                    static_cast<std::size_t>(t) * dim + static_cast<std::size_t>(h) * params.d_head;
                for (int d = 0; d < params.d_head; ++d)
                    out[static_cast<std::size_t>(h) * params.d_head + d] +=
                        w * static_cast<double>(v[d]);
            }
        }
        result.emplace(leaf, std::move(out));
    }
    return result;
}

/// Both phases for one decode iteration: partition, per-group attention,
/// per-query reduction. Output is independent of group execution order
/// because reduction consumes partials sorted by group id.
inline std::pair<AttentionOutput, PartitionPlan> run_iteration(
    const DecodingTree& tree, Strategy strategy, int block_size,
    const PagePool& pool, const std::map<NodeId, QueryVec>& queries,
    const AttentionParams& params) {
    PartitionPlan plan = make_plan(tree, strategy, block_size);
    if (queries.empty()) return {AttentionOutput{}, std::move(plan)};

    auto attend = [&](const QkvGroup& g) {
        return params.use_double ? group_attention<double>(g, queries, pool, params)
                                 : group_attention<float>(g, queries, pool, params);
    };

    // Stage 1 is pure per group; partials are merged back in group order
    // so threading never changes the result.
    std::vector<std::vector<PartialAttention>> per_group(plan.groups.size());
    const int n_threads = worker_thread_count();
    if (n_threads > 1 && plan.groups.size() > 1) {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int spawn = std::min<int>(n_threads, static_cast<int>(plan.groups.size()));
        for (int w = 0; w < spawn; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < plan.groups.size();
                     i = next.fetch_add(1))
                    per_group[i] = attend(plan.groups[i]);
            });
        }
        for (auto& t : workers) t.join();
    } else {
        for (std::size_t i = 0; i < plan.groups.size(); ++i)
            per_group[i] = attend(plan.groups[i]);
    }

    std::map<NodeId, std::vector<PartialAttention>> by_query;
    for (auto& partials : per_group)
        for (auto& p : partials) by_query[p.query].push_back(std::move(p));

    AttentionOutput out;
    for (auto& [leaf, partials] : by_query)
        out.emplace(leaf, tree_reduce(partials, params));
    return {std::move(out), std::move(plan)};
}

/// Max absolute difference normalized by the reference's max magnitude.
inline double relative_error(std::span<const double> got, std::span<const double> ref) {
    if (got.size() != ref.size())
        throw std::invalid_argument("relative_error: size mismatch");
    double max_diff = 0, max_ref = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(got[i] - ref[i]));
        max_ref = std::max(max_ref, std::abs(ref[i]));
    }
    return max_diff / (max_ref + 1e-12);
}

}  // namespace treeattn
