#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeattn/serde.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

enum class WorkloadKind { FewShot, Reasoning, Speculative };

struct TreeSnapshot {
    std::vector<TreeNode> nodes;  // ascending id order, children empty
    NodeId root = kInvalidNode;

    static TreeSnapshot of(const DecodingTree& tree) {
        TreeSnapshot s;
        s.root = tree.root();
        for (NodeId id : tree.node_ids()) {
            TreeNode n = tree.node(id);
            n.children.clear();
            s.nodes.push_back(std::move(n));
        }
        return s;
    }

    DecodingTree build(KvLifecycle* kv = nullptr) const {
        return DecodingTree::restore(root, nodes, kv);
    }

    std::int64_t total_tokens() const {
        std::int64_t sum = 0;
        for (const auto& n : nodes) sum += n.token_count;
        return sum;
    }
};

struct TraceIteration {
    int iteration = 0;
    int query_count = 0;
    TreeSnapshot tree;
};

using Trace = std::vector<TraceIteration>;

/// Branch/prune record consumed by the reasoning replay.
struct TreeRecord {
    int iteration = 0;
    bool is_branch = true;
    NodeId node = kInvalidNode;
    std::vector<std::int64_t> children;  // initial token counts, branch only
};

struct FewShotSpec {
    std::int64_t prefix_len = 4000;
    int branches = 20;
    int iterations = 400;
};

struct ReasoningSpec {
    std::int64_t prompt_len = 1000;
    int depth = 10;
    int width = 10;
    int gen_per_depth = 100;  // append iterations after each branch point
    std::uint64_t seed = 7;
    std::vector<TreeRecord> records;  // generated from the template when empty
};

struct SpeculativeSpec {
    std::int64_t prompt_len = 4000;
    int tree_size = 64;
    int steps = 1000;
    std::int64_t max_length = 6000;
    std::uint64_t seed = 7;
    std::vector<NodeId> topology;      // parent per token-tree node, -1 = chain tip
    std::vector<int> accepted_lens;    // sampled when empty
};

struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::FewShot;
    FewShotSpec few_shot;
    ReasoningSpec reasoning;
    SpeculativeSpec speculative;
};

// ---------------------------------------------------------------------------
// Few-shot prompting: one shared prompt, `branches` parallel suffixes.

inline Trace gen_few_shot(std::int64_t prefix_len, int branches, int iterations) {
    if (prefix_len < 1 || branches < 1 || iterations < 1)
        throw std::invalid_argument("gen_few_shot: all parameters must be >= 1");
    DecodingTree tree(prefix_len);
    tree.branch(tree.root(), std::vector<std::int64_t>(branches, 0));
    Trace trace;
    trace.reserve(static_cast<std::size_t>(iterations));
    for (int it = 1; it <= iterations; ++it) {
        for (NodeId leaf : std::vector<NodeId>(tree.leaves()))
            tree.append_tokens(leaf, 1);
        trace.push_back({it, branches, TreeSnapshot::of(tree)});
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Multi-step reasoning: breadth-first thought search replayed from records.

/// Builds the default record template: at each depth, branch the current
/// best leaf into `width` thoughts of seeded size in [50, 200], generate
/// `gen_per_depth` iterations, then prune all but the first thought.
inline std::vector<TreeRecord> make_reasoning_records(const ReasoningSpec& spec) {
    if (spec.prompt_len < 1 || spec.depth < 1 || spec.width < 1 || spec.gen_per_depth < 1)
        throw std::invalid_argument("make_reasoning_records: parameters must be >= 1");
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::int64_t> thought_size(50, 200);

    std::vector<TreeRecord> records;
    int it = 1;
    NodeId frontier = 0;  // ids are assigned sequentially from 0 (root)
    NodeId next_id = 1;
    for (int d = 0; d < spec.depth; ++d) {
        TreeRecord br;
        br.iteration = it++;
        br.is_branch = true;
        br.node = frontier;
        for (int w = 0; w < spec.width; ++w) br.children.push_back(thought_size(rng));
        const NodeId first_child = next_id;
        next_id += spec.width;
        records.push_back(std::move(br));
        it += spec.gen_per_depth;  // append iterations between records
        for (int w = 1; w < spec.width; ++w) {
            TreeRecord pr;
            pr.iteration = it;
            pr.is_branch = false;
            pr.node = first_child + w;
            records.push_back(std::move(pr));
        }
        it++;
        frontier = first_child;
    }
    return records;
}

inline Trace gen_reasoning(const ReasoningSpec& spec) {
    std::vector<TreeRecord> records =
        spec.records.empty() ? make_reasoning_records(spec) : spec.records;
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].iteration < records[i - 1].iteration)
            throw std::invalid_argument("gen_reasoning: records not sorted by iteration");

    DecodingTree tree(spec.prompt_len);
    Trace trace;
    std::size_t next = 0;
    int last_it = records.empty() ? 0 : records.back().iteration;
    for (int it = 1; it <= last_it; ++it) {
        bool had_record = false;
        while (next < records.size() && records[next].iteration == it) {
            const TreeRecord& r = records[next++];
            if (!tree.contains(r.node))
                throw std::invalid_argument(
                    "gen_reasoning: invalid-record: node " + std::to_string(r.node) +
                    " does not exist at iteration " + std::to_string(it));
            if (r.is_branch) tree.branch(r.node, r.children);
            else tree.prune(r.node);
            had_record = true;
        }
        if (!had_record)
            for (NodeId leaf : std::vector<NodeId>(tree.leaves()))
                tree.append_tokens(leaf, 1);
        trace.push_back({it, static_cast<int>(tree.leaves().size()), TreeSnapshot::of(tree)});
    }
    if (trace.empty())  // no records: a single chain iteration
        trace.push_back({1, 1, TreeSnapshot::of(tree)});
    return trace;
}

// ---------------------------------------------------------------------------
// Speculative decoding: graft a token tree, verify, collapse to the
// accepted chain.

/// Fanout-decreasing token-tree topology of `t` nodes: level widths
/// halve until exhausted; each level hangs off the first node of the
/// previous one. parent -1 means the chain tip.
inline std::vector<NodeId> make_token_tree(int t) {
    if (t < 1) throw std::invalid_argument("make_token_tree: t must be >= 1");
    std::vector<NodeId> parents;
    int remaining = t;
    NodeId level_head = -1;
    while (remaining > 0) {
        const int width = std::max(1, remaining / 2);
        const NodeId first = static_cast<NodeId>(parents.size());
        for (int i = 0; i < width; ++i) parents.push_back(level_head);
        level_head = first;
        remaining -= width;
    }
    return parents;
}

inline int token_tree_depth(const std::vector<NodeId>& parents) {
    int depth = 0;
    for (std::size_t i = 0; i < parents.size(); ++i) {
        int d = 1;
        NodeId p = parents[i];
        while (p != -1) { d++; p = parents[static_cast<std::size_t>(p)]; }
        depth = std::max(depth, d);
    }
    return depth;
}

inline Trace gen_speculative(const SpeculativeSpec& spec) {
    if (spec.prompt_len < 1 || spec.tree_size < 1 || spec.steps < 1)
        throw std::invalid_argument("gen_speculative: parameters must be >= 1");
    const std::vector<NodeId> topo =
        spec.topology.empty() ? make_token_tree(spec.tree_size) : spec.topology;
    const int t = static_cast<int>(topo.size());
    const int depth = token_tree_depth(topo);

    std::vector<int> accepted = spec.accepted_lens;
    if (accepted.empty()) {
        std::mt19937_64 rng(spec.seed);
        std::uniform_int_distribution<int> dist(1, std::min(4, depth));
        accepted.resize(static_cast<std::size_t>(spec.steps));
        for (int& a : accepted) a = dist(rng);
    }
    if (static_cast<int>(accepted.size()) < spec.steps)
        throw std::invalid_argument("gen_speculative: accepted_lens shorter than steps");

    DecodingTree tree(spec.prompt_len);
    Trace trace;
    for (int step = 0; step < spec.steps; ++step) {
        if (tree.node(tree.root()).token_count >= spec.max_length) break;
        if (accepted[static_cast<std::size_t>(step)] > depth)
            throw std::invalid_argument(
                "gen_speculative: accepted length exceeds token-tree depth");

        // Graft: token-tree nodes become 1-token tree nodes, all children
        // of one topology node added in a single branch call.
        std::vector<NodeId> grafted(static_cast<std::size_t>(t), kInvalidNode);
        std::map<NodeId, std::vector<int>> children_of;  // topo parent -> topo ids
        for (int i = 0; i < t; ++i) children_of[topo[static_cast<std::size_t>(i)]].push_back(i);
        // Topology ids are created level by level, so parents precede
        // children and one pass in id order suffices.
        auto graft_children = [&](NodeId tree_parent, const std::vector<int>& topo_children) {
            std::vector<NodeId> created =
                tree.branch(tree_parent, std::vector<std::int64_t>(topo_children.size(), 1));
            for (std::size_t i = 0; i < topo_children.size(); ++i)
                grafted[static_cast<std::size_t>(topo_children[i])] = created[i];
        };
        graft_children(tree.root(), children_of[-1]);
        for (int i = 0; i < t; ++i) {
            auto it = children_of.find(i);
            if (it != children_of.end()) graft_children(grafted[static_cast<std::size_t>(i)], it->second);
        }

        trace.push_back({step, t, TreeSnapshot::of(tree)});

        // Collapse: drop the token tree, extend the accepted chain.
        for (NodeId top : std::vector<NodeId>(tree.node(tree.root()).children))
            tree.prune(top);
        tree.append_tokens(tree.root(), accepted[static_cast<std::size_t>(step)]);
    }
    return trace;
}

inline Trace generate(const WorkloadSpec& spec) {
    switch (spec.kind) {
        case WorkloadKind::FewShot:
            return gen_few_shot(spec.few_shot.prefix_len, spec.few_shot.branches,
                                spec.few_shot.iterations);
        case WorkloadKind::Reasoning:
            return gen_reasoning(spec.reasoning);
        case WorkloadKind::Speculative:
            return gen_speculative(spec.speculative);
    }
    throw std::invalid_argument("generate: bad workload kind");
}

// ---------------------------------------------------------------------------
// JSON round-trip.

inline nlohmann::json spec_to_json(const WorkloadSpec& spec) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    switch (spec.kind) {
        case WorkloadKind::FewShot:
            j["kind"] = "few_shot";
            j["prefix_len"] = spec.few_shot.prefix_len;
            j["branches"] = spec.few_shot.branches;
            j["iterations"] = spec.few_shot.iterations;
            break;
        case WorkloadKind::Reasoning: {
            j["kind"] = "reasoning";
            j["prompt_len"] = spec.reasoning.prompt_len;
            j["depth"] = spec.reasoning.depth;
            j["width"] = spec.reasoning.width;
            j["gen_per_depth"] = spec.reasoning.gen_per_depth;
            j["seed"] = spec.reasoning.seed;
            nlohmann::json records = nlohmann::json::array();
            for (const TreeRecord& r : spec.reasoning.records) {
                nlohmann::json jr = {{"iteration", r.iteration},
                                     {"op", r.is_branch ? "branch" : "prune"},
                                     {"node", r.node}};
                if (r.is_branch) jr["children"] = r.children;
                records.push_back(std::move(jr));
            }
            j["records"] = std::move(records);
            break;
        }
        case WorkloadKind::Speculative:
            j["kind"] = "speculative";
            j["prompt_len"] = spec.speculative.prompt_len;
            j["tree_size"] = spec.speculative.tree_size;
            j["steps"] = spec.speculative.steps;
            j["max_length"] = spec.speculative.max_length;
            j["seed"] = spec.speculative.seed;
            j["topology"] = spec.speculative.topology;
            j["accepted_lens"] = spec.speculative.accepted_lens;
            break;
    }
    return j;
}

inline WorkloadSpec spec_from_json(const nlohmann::json& j) {
    WorkloadSpec spec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "few_shot") {
        spec.kind = WorkloadKind::FewShot;
        spec.few_shot.prefix_len = j.at("prefix_len").get<std::int64_t>();
        spec.few_shot.branches = j.at("branches").get<int>();
        spec.few_shot.iterations = j.at("iterations").get<int>();
    } else if (kind == "reasoning") {
        spec.kind = WorkloadKind::Reasoning;
        spec.reasoning.prompt_len = j.at("prompt_len").get<std::int64_t>();
        spec.reasoning.depth = j.at("depth").get<int>();
        spec.reasoning.width = j.at("width").get<int>();
        spec.reasoning.gen_per_depth = j.value("gen_per_depth", 100);
        spec.reasoning.seed = j.value("seed", std::uint64_t{7});
        for (const auto& jr : j.value("records", nlohmann::json::array())) {
            TreeRecord r;
            r.iteration = jr.at("iteration").get<int>();
            const std::string op = jr.at("op").get<std::string>();
            if (op == "branch") r.is_branch = true;
            else if (op == "prune") r.is_branch = false;
            else throw std::invalid_argument("spec_from_json: unknown op " + op);
            r.node = jr.at("node").get<NodeId>();
            if (r.is_branch) r.children = jr.at("children").get<std::vector<std::int64_t>>();
            spec.reasoning.records.push_back(std::move(r));
        }
    } else if (kind == "speculative") {
        spec.kind = WorkloadKind::Speculative;
        spec.speculative.prompt_len = j.at("prompt_len").get<std::int64_t>();
        spec.speculative.tree_size = j.at("tree_size").get<int>();
        spec.speculative.steps = j.at("steps").get<int>();
        spec.speculative.max_length = j.value("max_length", std::int64_t{1} << 40);
        spec.speculative.seed = j.value("seed", std::uint64_t{7});
        spec.speculative.topology = j.value("topology", std::vector<NodeId>{});
        spec.speculative.accepted_lens = j.value("accepted_lens", std::vector<int>{});
    } else {
        throw std::invalid_argument("spec_from_json: unknown kind " + kind);
    }
    return spec;
}

inline WorkloadSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_spec: cannot open " + path);
    nlohmann::json j;
    in >> j;  // nlohmann reports line/byte position on malformed input
    return spec_from_json(j);
}

inline nlohmann::json trace_to_json(const Trace& trace) {
    nlohmann::json iters = nlohmann::json::array();
    for (const TraceIteration& it : trace) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : it.tree.nodes) {
            nlohmann::json jn = {{"id", n.id}, {"token_count", n.token_count}};
            if (n.parent != kInvalidNode) jn["parent"] = n.parent;
            else jn["parent"] = nullptr;
            nodes.push_back(std::move(jn));
        }
        iters.push_back({{"iteration", it.iteration},
                         {"query_count", it.query_count},
                         {"root", it.tree.root},
                         {"nodes", std::move(nodes)}});
    }
    return {{"schema_version", kSchemaVersion}, {"iterations", std::move(iters)}};
}

inline void save_trace(const std::string& path, const Trace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_trace: cannot open " + path);
    out << trace_to_json(trace).dump(2) << "\n";
}

}  // namespace treeattn
