#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segparse/error.hpp"
#include "segparse/grammar.hpp"

namespace segparse {

inline nlohmann::json tree_to_json(const ParseTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (int id = 0; id < tree.size(); ++id) {
        const ParseNode& n = tree.node(id);
        nlohmann::json jn;
        jn["id"] = id;
        jn["region"] = {n.region.x, n.region.y, n.region.w, n.region.h};
        jn["depth"] = n.depth;
        switch (n.state) {
            case ParseNode::State::Pending:
                jn["state"] = "pending";
                break;
            case ParseNode::State::Split:
                jn["state"] = "split";
                jn["action"] = {{"kind", rule_name(n.action.kind)},
                                {"l", *n.action.split_fraction}};
                jn["children"] = {n.children[0], n.children[1]};
                break;
            case ParseNode::State::Terminal:
                jn["state"] = "terminal";
                jn["action"] = {{"kind", rule_name(n.action.kind)}};
                jn["b"] = n.label;
                break;
        }
        nodes.push_back(std::move(jn));
    }
    return nlohmann::json{{"max_depth", tree.max_depth()},
                          {"root", tree.root()},
                          {"expansion_order", tree.expansion_order()},
                          {"nodes", std::move(nodes)}};
}

inline ParseTree tree_from_json(const nlohmann::json& j) {
    try {
        const int max_depth = j.at("max_depth").get<int>();
        std::vector<ParseNode> nodes(j.at("nodes").size());
        for (const auto& jn : j.at("nodes")) {
            const int id = jn.at("id").get<int>();
            if (id < 0 || id >= static_cast<int>(nodes.size())) {
                throw StateError("node id out of range");
            }
            ParseNode& n = nodes[id];
            const auto& r = jn.at("region");
            n.region = Region{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                              r.at(3).get<int>()};
            n.depth = jn.at("depth").get<int>();
            const std::string state = jn.at("state").get<std::string>();
            if (state == "pending") {
                n.state = ParseNode::State::Pending;
            } else if (state == "split") {
                n.state = ParseNode::State::Split;
                const auto kind = rule_from_name(jn.at("action").at("kind").get<std::string>());
                if (!kind || !is_split(*kind)) throw StateError("bad split action kind");
                n.action.kind = *kind;
                n.action.split_fraction = jn.at("action").at("l").get<double>();
                n.children[0] = jn.at("children").at(0).get<int>();
                n.children[1] = jn.at("children").at(1).get<int>();
                n.split_loc = split_fraction_to_loc(*n.action.split_fraction,
                                                    n.region.extent(n.action.axis()));
            } else if (state == "terminal") {
                n.state = ParseNode::State::Terminal;
                const auto kind = rule_from_name(jn.at("action").at("kind").get<std::string>());
                if (!kind || is_split(*kind)) throw StateError("bad terminal action kind");
                n.action.kind = *kind;
                n.label = jn.at("b").get<int>();
            } else {
                throw StateError("unknown node state '" + state + "'");
            }
        }
        std::vector<int> order;
        for (const auto& v : j.at("expansion_order")) order.push_back(v.get<int>());
        return ParseTree::from_parts(max_depth, std::move(nodes), std::move(order));
    } catch (const nlohmann::json::exception& e) {
        throw StateError(std::string("malformed tree json: ") + e.what());
    }
}

inline void save_tree(const ParseTree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << tree_to_json(tree).dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

inline ParseTree load_tree(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path + ": " + e.what());
    }
    return tree_from_json(j);
}

}  // namespace segparse
