#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsdial/kb.hpp"
#include "nsdial/model.hpp"

namespace nsdial {

// Failure triage for KB-grounded decoding. A step fails when the gold token
// is a KB entity and the decoder emitted something else; the category is the
// first reasoning stage that already disagrees with every gold-consistent
// hypothesis (one whose synthesized triple contains the gold entity).

enum class ErrorStage { Structure, QueryStates, Candidates, Belief };

inline const char* stage_name(ErrorStage s) {
    switch (s) {
        case ErrorStage::Structure: return "structure";
        case ErrorStage::QueryStates: return "query_states";
        case ErrorStage::Candidates: return "candidates";
        case ErrorStage::Belief: return "belief";
    }
    return "?";
}

struct ErrorRecord {
    int step = -1;
    std::string gold, chosen;
    ErrorStage stage = ErrorStage::Structure;
    std::string detail;
};

inline std::optional<ErrorRecord> categorize_step(const TraceStep& step, int step_idx,
                                                  const std::string& gold,
                                                  const KnowledgeBase& kb) {
    int gid = kb.find(gold);
    if (gid < 0 || kb.kind(gid) != TokenKind::Entity) return std::nullopt;
    if (step.chosen == gold) return std::nullopt;

    ErrorRecord rec;
    rec.step = step_idx;
    rec.gold = gold;
    rec.chosen = step.chosen;

    // gold-consistent structures: head slot needs an outgoing fact, tail slot
    // an incoming one
    bool as_head = false, as_tail = false;
    for (const auto& tr : kb.triples()) {
        if (tr.head == gid) as_head = true;
        if (tr.tail == gid) as_tail = true;
    }
    bool structure_ok = (step.structure == "H-Hypothesis" && as_head) ||
                        (step.structure == "T-Hypothesis" && as_tail);
    if (!structure_ok) {
        rec.stage = ErrorStage::Structure;
        rec.detail = "sampled " + step.structure + ", gold entity fits " +
                     std::string(as_head ? (as_tail ? "H or T" : "H") : (as_tail ? "T" : "none"));
        return rec;
    }

    // query states must match some gold fact under the sampled structure
    bool states_ok = false;
    for (const auto& tr : kb.triples()) {
        if (step.structure == "H-Hypothesis" && tr.head == gid &&
            kb.surface(tr.relation) == step.k0 && kb.surface(tr.tail) == step.k1)
            states_ok = true;
        if (step.structure == "T-Hypothesis" && tr.tail == gid &&
            kb.surface(tr.head) == step.k0 && kb.surface(tr.relation) == step.k1)
            states_ok = true;
    }
    if (!states_ok) {
        rec.stage = ErrorStage::QueryStates;
        rec.detail = "states (" + step.k0 + ", " + step.k1 + ") match no fact containing '" +
                     gold + "'";
        return rec;
    }

    bool in_candidates = false;
    float gold_belief = 0;
    for (const auto& h : step.hyps)
        if (h.candidate == gold) {
            in_candidates = true;
            gold_belief = std::max(gold_belief, h.alpha);
        }
    if (!in_candidates) {
        rec.stage = ErrorStage::Candidates;
        rec.detail = "gold entity missing from the top-" + std::to_string(step.hyps.size()) +
                     " candidates";
        return rec;
    }

    rec.stage = ErrorStage::Belief;
    rec.detail = "gold candidate belief " + std::to_string(gold_belief) +
                 " lost the fused distribution to '" + step.chosen + "'";
    return rec;
}

inline std::vector<ErrorRecord> categorize_errors(const DecodeTrace& trace,
                                                  const std::vector<std::string>& gold_tokens,
                                                  const KnowledgeBase& kb) {
    std::vector<ErrorRecord> out;
    size_t n = std::min(trace.steps.size(), gold_tokens.size());
    for (size_t i = 0; i < n; ++i)
        if (auto rec = categorize_step(trace.steps[i], static_cast<int>(i), gold_tokens[i], kb))
            out.push_back(std::move(*rec));
    return out;
}

inline std::map<std::string, int> summarize_errors(const std::vector<ErrorRecord>& recs) {
    std::map<std::string, int> counts{
        {"structure", 0}, {"query_states", 0}, {"candidates", 0}, {"belief", 0}};
    for (const auto& r : recs) ++counts[stage_name(r.stage)];
    return counts;
}

}  // namespace nsdial
