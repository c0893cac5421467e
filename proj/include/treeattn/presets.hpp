#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "treeattn/workloads.hpp"

namespace treeattn {

/// Named workload presets covering the benchmark matrix: few-shot widths
/// 20/30/50, the four reasoning task shapes, speculative token-tree
/// sizes 32..256, plus two fixed small trees for sanity checks.
inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {
        "fig2",        "chain",        "few_shot_b20", "few_shot_b30", "few_shot_b50",
        "sorting",     "document",     "keyword",      "set",
        "spec_t32",    "spec_t64",     "spec_t128",    "spec_t256",
    };
    return names;
}

inline bool is_preset(const std::string& name) {
    for (const auto& n : preset_names())
        if (n == name) return true;
    return false;
}

inline Trace preset_trace(const std::string& name) {
    if (name == "fig2") {
        // Two-cascaded tree: shared prefix node with two divergent suffixes.
        DecodingTree tree(4);
        tree.branch(tree.root(), {2, 2});
        return {{0, 2, TreeSnapshot::of(tree)}};
    }
    if (name == "chain") {
        return gen_few_shot(4000, 1, 400);
    }
    if (name == "few_shot_b20") return gen_few_shot(4000, 20, 400);
    if (name == "few_shot_b30") return gen_few_shot(4000, 30, 400);
    if (name == "few_shot_b50") return gen_few_shot(4000, 50, 400);

    if (name == "sorting" || name == "document" || name == "keyword" || name == "set") {
        ReasoningSpec spec;
        spec.width = 10;
        if (name == "sorting") { spec.prompt_len = 1000; spec.depth = 10; }
        if (name == "document") { spec.prompt_len = 3000; spec.depth = 3; }
        if (name == "keyword") { spec.prompt_len = 1000; spec.depth = 5; }
        if (name == "set") { spec.prompt_len = 1000; spec.depth = 8; }
        return gen_reasoning(spec);
    }

    if (name.rfind("spec_t", 0) == 0) {
        SpeculativeSpec spec;
        spec.prompt_len = 4000;
        spec.steps = 1000;
        spec.max_length = 6000;
        spec.tree_size = std::stoi(name.substr(6));
        return gen_speculative(spec);
    }
    throw std::invalid_argument("unknown preset: " + name);
}

}  // namespace treeattn
