#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeattn/io_model.hpp"
#include "treeattn/partition.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

inline constexpr int kSchemaVersion = 1;

inline nlohmann::json DecodingTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (NodeId id : node_ids()) {
        const TreeNode& n = node(id);
        nlohmann::json jn = {{"id", n.id}, {"token_count", n.token_count}};
        if (n.parent != kInvalidNode) jn["parent"] = n.parent;
        else jn["parent"] = nullptr;
        nodes.push_back(std::move(jn));
    }
    return {{"nodes", std::move(nodes)}, {"root", root_}};
}

inline DecodingTree DecodingTree::from_json(const nlohmann::json& j, KvLifecycle* kv) {
    std::vector<TreeNode> nodes;
    for (const auto& jn : j.at("nodes")) {
        TreeNode n;
        n.id = jn.at("id").get<NodeId>();
        n.parent = jn.at("parent").is_null() ? kInvalidNode : jn.at("parent").get<NodeId>();
        n.token_count = jn.at("token_count").get<std::int64_t>();
        nodes.push_back(std::move(n));
    }
    return restore(j.at("root").get<NodeId>(), nodes, kv);
}

inline nlohmann::json plan_to_json(const PartitionPlan& plan) {
    nlohmann::json groups = nlohmann::json::array();
    for (const QkvGroup& g : plan.groups) {
        nlohmann::json segments = nlohmann::json::array();
        for (const NodeSegment& s : g.segments)
            segments.push_back({{"node", s.node}, {"offset", s.token_offset}, {"len", s.length}});
        nlohmann::json masks = nlohmann::json::array();
        for (std::uint64_t m : g.masks) {
            char buf[19];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(m));
            masks.push_back(std::string(buf));
        }
        groups.push_back({{"id", g.group_id},
                          {"segments", std::move(segments)},
                          {"queries", g.query_ids},
                          {"masks", std::move(masks)}});
    }
    return {{"strategy", strategy_name(plan.strategy)},
            {"block_size", plan.block_size},
            {"groups", std::move(groups)}};
}

inline nlohmann::json io_report_to_json(const IoReport& r) {
    return {{"kv_bytes", r.kv_bytes},
            {"q_bytes", r.q_bytes},
            {"mask_bytes", r.mask_bytes},
            {"partial_bytes", r.partial_bytes},
            {"total_bytes", r.total_bytes()}};
}

inline std::string io_report_csv_row(int iteration, const std::string& algorithm,
                                     const IoReport& r) {
    return std::to_string(iteration) + "," + algorithm + "," +
           std::to_string(r.kv_bytes) + "," + std::to_string(r.q_bytes) + "," +
           std::to_string(r.mask_bytes) + "," + std::to_string(r.partial_bytes) + "," +
           std::to_string(r.total_bytes());
}

inline constexpr const char* kIoCsvHeader =
    "iteration,algorithm,kv_bytes,q_bytes,mask_bytes,partial_bytes,total";

}  // namespace treeattn
