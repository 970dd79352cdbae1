#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/model.hpp"

namespace nsdial {

// Proof tree rendering. Bridge entities (introduced by expansion) carry a
// trailing '*', expander-predicted relations a trailing '~'; root components
// come from the hypothesis itself and stay bare.

namespace detail {

struct NodeMarks {
    bool head_bridge = false, tail_bridge = false, rel_predicted = false;
};

inline std::vector<NodeMarks> mark_tree(const TraceTree& t) {
    std::vector<NodeMarks> m(t.nodes.size());
    for (size_t i = 0; i < t.nodes.size(); ++i) {
        const auto& n = t.nodes[i];
        if (i > 0) m[i].rel_predicted = true;
        if (n.left >= 0) m[static_cast<size_t>(n.left)].tail_bridge = true;
        if (n.right >= 0) m[static_cast<size_t>(n.right)].head_bridge = true;
    }
    return m;
}

inline std::string node_label(const TraceTreeNode& n, const NodeMarks& m) {
    std::string s = "[" + n.head + (m.head_bridge ? "*" : "") + " " + n.relation +
                    (m.rel_predicted ? "~" : "") + " " + n.tail + (m.tail_bridge ? "*" : "") + "]";
    return s;
}

inline void render_ascii_rec(const TraceTree& t, const std::vector<NodeMarks>& m, int idx,
                             const std::string& prefix, bool last, bool root,
                             std::ostringstream& out) {
    const auto& n = t.nodes[static_cast<size_t>(idx)];
    if (root) {
        out << node_label(n, m[static_cast<size_t>(idx)]) << "\n";
    } else {
        out << prefix << (last ? "`-- " : "|-- ") << node_label(n, m[static_cast<size_t>(idx)])
            << "\n";
    }
    std::string child_prefix = root ? "" : prefix + (last ? "    " : "|   ");
    if (n.left >= 0) render_ascii_rec(t, m, n.left, child_prefix, n.right < 0, false, out);
    if (n.right >= 0) render_ascii_rec(t, m, n.right, child_prefix, true, false, out);
}

}  // namespace detail

inline std::string render_proof_ascii(const TraceTree& t) {
    if (t.nodes.empty()) return "(empty proof tree)\n";
    std::ostringstream out;
    out << t.structure << " proof tree " << t.id << " (* bridge entity, ~ predicted relation)\n";
    auto marks = detail::mark_tree(t);
    detail::render_ascii_rec(t, marks, 0, "", true, true, out);
    return out.str();
}

inline std::string render_proof_dot(const TraceTree& t) {
    std::ostringstream out;
    out << "digraph proof_" << t.id << " {\n";
    out << "  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n";
    auto marks = detail::mark_tree(t);
    for (size_t i = 0; i < t.nodes.size(); ++i) {
        out << "  n" << i << " [label=\"" << detail::node_label(t.nodes[i], marks[i]) << "\"";
        if (marks[i].head_bridge || marks[i].tail_bridge) out << ", color=red";
        out << "];\n";
    }
    for (size_t i = 0; i < t.nodes.size(); ++i) {
        if (t.nodes[i].left >= 0)
            out << "  n" << i << " -> n" << t.nodes[i].left << " [label=\"left\"];\n";
        if (t.nodes[i].right >= 0)
            out << "  n" << i << " -> n" << t.nodes[i].right << " [label=\"right\"];\n";
    }
    out << "}\n";
    return out.str();
}

// Inverse of trace_to_json, for rendering saved traces.
inline DecodeTrace trace_from_json(const nlohmann::ordered_json& j) {
    DecodeTrace tr;
    tr.tokens = j.value("tokens", std::vector<std::string>{});
    for (const auto& sj : j.value("steps", nlohmann::ordered_json::array())) {
        TraceStep s;
        s.chosen = sj.value("chosen", "");
        s.from_kb_channel = sj.value("from_kb_channel", false);
        s.p_gen = sj.value("p_gen", 0.0f);
        for (const auto& x : sj.value("top_vocab", nlohmann::ordered_json::array()))
            s.top_vocab.emplace_back(x.value("token", ""), x.value("p", 0.0f));
        for (const auto& x : sj.value("p_kb", nlohmann::ordered_json::array()))
            s.p_kb.emplace_back(x.value("token", ""), x.value("weight", 0.0f));
        s.structure = sj.value("structure", "");
        if (sj.contains("state_tokens")) {
            s.k0 = sj["state_tokens"].value("k0", "");
            s.k1 = sj["state_tokens"].value("k1", "");
        }
        for (const auto& x : sj.value("hypotheses", nlohmann::ordered_json::array())) {
            TraceHyp h;
            h.structure = x.value("structure", "");
            if (x.contains("state_tokens")) {
                h.k0 = x["state_tokens"].value("k0", "");
                h.k1 = x["state_tokens"].value("k1", "");
            }
            h.candidate = x.value("candidate", "");
            h.cp_prob = x.value("cp_prob", 0.0f);
            if (x.contains("triple") && x["triple"].size() == 3) {
                h.head = x["triple"][0].get<std::string>();
                h.relation = x["triple"][1].get<std::string>();
                h.tail = x["triple"][2].get<std::string>();
            }
            h.alpha = x.value("belief", 0.0f);
            h.best_depth = x.value("best_depth", 0);
            h.tree_id = x.value("tree_id", -1);
            s.hyps.push_back(std::move(h));
        }
        tr.steps.push_back(std::move(s));
    }
    for (const auto& tj : j.value("trees", nlohmann::ordered_json::array())) {
        TraceTree t;
        t.id = tj.value("id", 0);
        t.structure = tj.value("structure", "");
        for (const auto& nj : tj.value("nodes", nlohmann::ordered_json::array())) {
            TraceTreeNode n;
            if (nj.contains("triple") && nj["triple"].size() == 3) {
                n.head = nj["triple"][0].get<std::string>();
                n.relation = nj["triple"][1].get<std::string>();
                n.tail = nj["triple"][2].get<std::string>();
            }
            n.depth = nj.value("depth", 0);
            n.left = nj.value("left", -1);
            n.right = nj.value("right", -1);
            t.nodes.push_back(std::move(n));
        }
        tr.trees.push_back(std::move(t));
    }
    return tr;
}

}  // namespace nsdial
