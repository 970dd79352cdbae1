#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/dataset.hpp"
#include "nsdial/rng.hpp"

namespace nsdial {

// Entity-overlap split: designate a low-frequency slice of the entity space
// as test-side, send a dialogue to test only when every gold entity it
// mentions is test-side, and measure how much entity sharing survives.

struct SplitResult {
    Dataset train, dev, test;
    double target_overlap = 0;
    double achieved_overlap = 0;              // |E(train) ∩ E(test)| / |E(all)|
    std::vector<std::string> train_entities;  // designated sides, rank order
    std::vector<std::string> test_entities;
    std::vector<std::string> assignments;  // per input dialogue: train|dev|test
};

inline std::set<std::string> dialogue_entities(const Dialogue& d) {
    std::set<std::string> out;
    for (const auto& t : d.turns) out.insert(t.entities.begin(), t.entities.end());
    return out;
}

inline SplitResult make_unseen_split(const Dataset& all, double target_overlap, uint64_t seed,
                                     double dev_frac = 0.15) {
    if (all.dialogues.empty()) throw std::invalid_argument("split: empty dataset");
    if (target_overlap < 0 || target_overlap > 1)
        throw std::invalid_argument("split: target overlap outside [0,1]");
    if (dev_frac < 0 || dev_frac >= 1)
        throw std::invalid_argument("split: dev fraction outside [0,1)");

    size_t n = all.dialogues.size();
    std::vector<std::set<std::string>> ents(n);
    std::map<std::string, int> freq;  // dialogues containing the entity
    for (size_t i = 0; i < n; ++i) {
        ents[i] = dialogue_entities(all.dialogues[i]);
        for (const auto& e : ents[i]) ++freq[e];
    }
    if (freq.empty()) throw std::invalid_argument("split: no gold entities in dataset");

    // rank by sample share, descending; ties by surface for determinism
    std::vector<std::string> ranked;
    for (const auto& [e, c] : freq) ranked.push_back(e);
    std::sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
        if (freq[a] != freq[b]) return freq[a] > freq[b];
        return a < b;
    });

    // scan every cut: test side = ranked[cut:], assignment and overlap follow
    auto eval_cut = [&](size_t cut, std::vector<bool>& to_test) {
        std::set<std::string> test_side(ranked.begin() + static_cast<long>(cut), ranked.end());
        std::set<std::string> e_train, e_test;
        size_t n_test = 0;
        for (size_t i = 0; i < n; ++i) {
            bool all_in = !ents[i].empty();
            for (const auto& e : ents[i])
                if (!test_side.count(e)) all_in = false;
            to_test[i] = all_in;
            if (all_in) {
                ++n_test;
                e_test.insert(ents[i].begin(), ents[i].end());
            } else {
                e_train.insert(ents[i].begin(), ents[i].end());
            }
        }
        size_t both = 0;
        for (const auto& e : e_test)
            if (e_train.count(e)) ++both;
        double achieved = static_cast<double>(both) / static_cast<double>(freq.size());
        return std::pair<double, size_t>(achieved, n_test);
    };

    size_t best_cut = ranked.size();
    double best_achieved = 1.0;
    bool found = false;
    std::vector<bool> to_test(n);
    for (size_t cut = 0; cut <= ranked.size(); ++cut) {
        auto [achieved, n_test] = eval_cut(cut, to_test);
        if (n_test == 0 || n_test == n) continue;  // degenerate split
        bool better = !found || std::abs(achieved - target_overlap) <
                                    std::abs(best_achieved - target_overlap) ||
                      (std::abs(achieved - target_overlap) ==
                           std::abs(best_achieved - target_overlap) &&
                       achieved < best_achieved);
        if (better) {
            best_cut = cut;
            best_achieved = achieved;
            found = true;
        }
    }
    if (!found) throw std::runtime_error("split: every cut degenerates to one side");

    SplitResult res;
    res.target_overlap = target_overlap;
    eval_cut(best_cut, to_test);
    res.achieved_overlap = best_achieved;
    res.train_entities.assign(ranked.begin(), ranked.begin() + static_cast<long>(best_cut));
    res.test_entities.assign(ranked.begin() + static_cast<long>(best_cut), ranked.end());

    std::vector<size_t> train_idx;
    res.assignments.assign(n, "train");
    for (size_t i = 0; i < n; ++i) {
        if (to_test[i]) {
            res.assignments[i] = "test";
            res.test.dialogues.push_back(all.dialogues[i]);
        } else {
            train_idx.push_back(i);
        }
    }

    // carve dev out of the train side, seeded shuffle
    Rng rng(seed);
    for (size_t i = train_idx.size(); i > 1; --i)
        std::swap(train_idx[i - 1], train_idx[rng.below(static_cast<uint32_t>(i))]);
    size_t n_dev = static_cast<size_t>(std::floor(dev_frac * static_cast<double>(train_idx.size())));
    std::set<size_t> dev_set(train_idx.begin(), train_idx.begin() + static_cast<long>(n_dev));
    for (size_t i = 0; i < n; ++i) {
        if (to_test[i]) continue;
        if (dev_set.count(i)) {
            res.assignments[i] = "dev";
            res.dev.dialogues.push_back(all.dialogues[i]);
        } else {
            res.train.dialogues.push_back(all.dialogues[i]);
        }
    }
    return res;
}

inline nlohmann::ordered_json split_to_json(const SplitResult& s) {
    nlohmann::ordered_json j;
    j["target_overlap"] = s.target_overlap;
    j["achieved_overlap"] = s.achieved_overlap;
    j["train_entities"] = s.train_entities;
    j["test_entities"] = s.test_entities;
    j["assignments"] = s.assignments;
    j["sizes"] = {{"train", s.train.dialogues.size()},
                  {"dev", s.dev.dialogues.size()},
                  {"test", s.test.dialogues.size()}};
    return j;
}

}  // namespace nsdial
