#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/dataset.hpp"
#include "nsdial/kb.hpp"

namespace nsdial {

// Corpus-level BLEU-4: uniform weights, brevity penalty, clipped modified
// n-gram precisions pooled over the corpus. One reference per hypothesis.
// Smoothing (off by default) adds one to numerator and denominator of the
// order-2..4 precisions.
inline double corpus_bleu(const std::vector<std::vector<std::string>>& references,
                          const std::vector<std::vector<std::string>>& hypotheses,
                          bool smooth = false) {
    if (references.size() != hypotheses.size())
        throw std::invalid_argument("corpus_bleu: length mismatch");
    if (references.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
    long long hyp_len = 0, ref_len = 0;
    long long match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& hyp = hypotheses[i];
        const auto& ref = references[i];
        hyp_len += static_cast<long long>(hyp.size());
        ref_len += static_cast<long long>(ref.size());
        for (int n = 1; n <= 4; ++n) {
            if (static_cast<int>(hyp.size()) < n) continue;
            std::map<std::vector<std::string>, long long> ref_counts;
            for (size_t j = 0; j + n <= ref.size(); ++j)
                ++ref_counts[std::vector<std::string>(ref.begin() + j, ref.begin() + j + n)];
            std::map<std::vector<std::string>, long long> hyp_counts;
            for (size_t j = 0; j + n <= hyp.size(); ++j)
                ++hyp_counts[std::vector<std::string>(hyp.begin() + j, hyp.begin() + j + n)];
            for (const auto& [gram, c] : hyp_counts) {
                total[n - 1] += c;
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) match[n - 1] += std::min(c, it->second);
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_p = 0;
    for (int n = 0; n < 4; ++n) {
        double num = static_cast<double>(match[n]);
        double den = static_cast<double>(total[n]);
        if (smooth && n > 0) {
            num += 1.0;
            den += 1.0;
        }
        if (num <= 0.0 || den <= 0.0) return 0.0;
        log_p += 0.25 * std::log(num / den);
    }
    double bp = hyp_len >= ref_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_p);
}

// KB entity surfaces occurring as tokens in the text, deduplicated.
inline std::set<std::string> extract_entities(const std::vector<std::string>& tokens,
                                              const KnowledgeBase& kb) {
    std::set<std::string> out;
    for (const auto& t : tokens) {
        int id = kb.find(t);
        if (id >= 0 && kb.kind(id) == TokenKind::Entity) out.insert(t);
    }
    return out;
}

// Micro-averaged set-wise F1 over turns; turns with empty gold and empty
// prediction are skipped. Returns 0 when no turn contributes counts.
inline double entity_f1(const std::vector<std::vector<std::string>>& gold_sets,
                        const std::vector<std::vector<std::string>>& predicted_texts,
                        const KnowledgeBase& kb) {
    if (gold_sets.size() != predicted_texts.size())
        throw std::invalid_argument("entity_f1: length mismatch");
    long long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold_sets.size(); ++i) {
        std::set<std::string> gold(gold_sets[i].begin(), gold_sets[i].end());
        std::set<std::string> pred = extract_entities(predicted_texts[i], kb);
        if (gold.empty() && pred.empty()) continue;
        for (const auto& e : pred)
            gold.count(e) ? ++tp : ++fp;
        for (const auto& e : gold)
            if (!pred.count(e)) ++fn;
    }
    if (tp + fp == 0 || tp + fn == 0) return 0.0;
    double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

struct BucketMetrics {
    int count = 0;
    double bleu = 0;
    double entity_f1 = 0;
};

struct EvalReport {
    int count = 0;
    double bleu = 0;
    double entity_f1 = 0;
    std::map<int, BucketMetrics> per_hop;
    std::map<std::string, BucketMetrics> per_domain;
};

inline EvalReport bucketed_eval(const std::vector<Example>& examples,
                                const std::vector<std::vector<std::string>>& predictions,
                                const KnowledgeBase& kb, bool smooth = false) {
    if (examples.size() != predictions.size())
        throw std::invalid_argument("bucketed_eval: length mismatch");
    if (examples.empty()) throw std::invalid_argument("bucketed_eval: empty dataset");
    auto eval_indices = [&](const std::vector<size_t>& idx) {
        BucketMetrics m;
        m.count = static_cast<int>(idx.size());
        std::vector<std::vector<std::string>> refs, hyps, golds;
        for (size_t i : idx) {
            refs.push_back(examples[i].response);
            hyps.push_back(predictions[i]);
            golds.push_back(examples[i].entities);
        }
        m.bleu = corpus_bleu(refs, hyps, smooth);
        m.entity_f1 = entity_f1(golds, hyps, kb);
        return m;
    };
    std::vector<size_t> all;
    std::map<int, std::vector<size_t>> by_hop;
    std::map<std::string, std::vector<size_t>> by_domain;
    for (size_t i = 0; i < examples.size(); ++i) {
        all.push_back(i);
        by_hop[examples[i].hop].push_back(i);
        by_domain[examples[i].domain].push_back(i);
    }
    EvalReport rep;
    auto overall = eval_indices(all);
    rep.count = overall.count;
    rep.bleu = overall.bleu;
    rep.entity_f1 = overall.entity_f1;
    for (const auto& [hop, idx] : by_hop) rep.per_hop[hop] = eval_indices(idx);
    for (const auto& [dom, idx] : by_domain) rep.per_domain[dom] = eval_indices(idx);
    int bucket_total = 0;
    for (const auto& [hop, m] : rep.per_hop) bucket_total += m.count;
    if (bucket_total != rep.count)
        throw std::logic_error("bucketed_eval: hop buckets do not partition the turns");
    return rep;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& rep) {
    nlohmann::ordered_json j;
    j["count"] = rep.count;
    j["bleu"] = rep.bleu;
    j["entity_f1"] = rep.entity_f1;
    auto hops = nlohmann::ordered_json::object();
    for (const auto& [hop, m] : rep.per_hop)
        hops[std::to_string(hop)] = {{"count", m.count}, {"bleu", m.bleu},
                                     {"entity_f1", m.entity_f1}};
    j["per_hop"] = hops;
    auto doms = nlohmann::ordered_json::object();
    for (const auto& [dom, m] : rep.per_domain)
        doms[dom] = {{"count", m.count}, {"bleu", m.bleu}, {"entity_f1", m.entity_f1}};
    j["per_domain"] = doms;
    return j;
}

inline std::string report_table(const EvalReport& rep) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %8s %10s %12s\n", "bucket", "count", "bleu", "entity_f1");
    os << line;
    std::snprintf(line, sizeof line, "%-12s %8d %10.2f %12.4f\n", "overall", rep.count, rep.bleu,
                  rep.entity_f1);
    os << line;
    for (const auto& [hop, m] : rep.per_hop) {
        std::string name = std::to_string(hop) + "-hop";
        std::snprintf(line, sizeof line, "%-12s %8d %10.2f %12.4f\n", name.c_str(), m.count, m.bleu,
                      m.entity_f1);
        os << line;
    }
    for (const auto& [dom, m] : rep.per_domain) {
        std::snprintf(line, sizeof line, "%-12s %8d %10.2f %12.4f\n", dom.c_str(), m.count, m.bleu,
                      m.entity_f1);
        os << line;
    }
    return os.str();
}

}  // namespace nsdial
