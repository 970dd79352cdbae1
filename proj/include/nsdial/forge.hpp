#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/dataset.hpp"
#include "nsdial/kb.hpp"
#include "nsdial/rng.hpp"

namespace nsdial {

// ---- template and places specifications (data-file driven) ----

struct PoolRule {
    std::string relation;
    std::string position;  // "head" | "tail"
};

inline PoolRule pool_rule_from_json(const nlohmann::json& j, const std::string& where) {
    PoolRule r;
    r.relation = j.value("relation", "");
    r.position = j.value("position", "");
    if (r.relation.empty() || (r.position != "head" && r.position != "tail"))
        throw std::invalid_argument(where + ": pool rule needs relation and position head|tail");
    return r;
}

struct QATemplate {
    std::string id, domain;
    int hop = 1;  // designed reasoning distance between anchor and answer
    std::string question, answer;
    std::string anchor_placeholder, answer_placeholder;
    PoolRule anchor_pool, answer_pool;
    std::vector<std::string> guided_next;
};

inline std::vector<QATemplate> parse_templates(const nlohmann::json& arr) {
    if (!arr.is_array() || arr.empty())
        throw std::invalid_argument("templates: expected a nonempty array");
    std::vector<QATemplate> out;
    std::set<std::string> ids;
    for (const auto& j : arr) {
        QATemplate t;
        t.id = j.value("id", "");
        t.domain = j.value("domain", "");
        t.hop = j.value("hop", 0);
        t.question = j.value("question", "");
        t.answer = j.value("answer", "");
        t.anchor_placeholder = j.value("anchor_placeholder", "");
        t.answer_placeholder = j.value("answer_placeholder", "");
        if (t.id.empty() || t.domain.empty() || t.question.empty() || t.answer.empty())
            throw std::invalid_argument("templates: missing id/domain/question/answer");
        if (t.hop < 1 || t.hop > 5)
            throw std::invalid_argument("template '" + t.id + "': hop outside [1,5]");
        if (t.question.find(t.anchor_placeholder) == std::string::npos)
            throw std::invalid_argument("template '" + t.id + "': question lacks anchor slot");
        if (t.answer.find(t.answer_placeholder) == std::string::npos)
            throw std::invalid_argument("template '" + t.id + "': answer lacks answer slot");
        t.anchor_pool = pool_rule_from_json(j.at("anchor_pool"), "template '" + t.id + "'");
        t.answer_pool = pool_rule_from_json(j.at("answer_pool"), "template '" + t.id + "'");
        t.guided_next = j.value("guided_next", std::vector<std::string>{});
        if (!ids.insert(t.id).second)
            throw std::invalid_argument("templates: duplicate id '" + t.id + "'");
        out.push_back(std::move(t));
    }
    for (const auto& t : out)
        for (const auto& g : t.guided_next)
            if (!ids.count(g))
                throw std::invalid_argument("template '" + t.id + "': unknown guided_next '" + g +
                                            "'");
    return out;
}

inline std::vector<QATemplate> load_templates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open templates file " + path);
    nlohmann::json j;
    in >> j;
    return parse_templates(j);
}

struct PlacesSpec {
    PoolRule venues;  // how to find venue entities in the base KB
    std::vector<std::string> parks, districts, counties;
};

inline PlacesSpec parse_places(const nlohmann::json& root, const std::string& domain) {
    if (!root.contains(domain))
        throw std::invalid_argument("places: no entry for domain '" + domain + "'");
    const auto& j = root.at(domain);
    PlacesSpec p;
    p.venues = pool_rule_from_json(j.at("venues"), "places '" + domain + "'");
    p.parks = j.value("parks", std::vector<std::string>{});
    p.districts = j.value("districts", std::vector<std::string>{});
    p.counties = j.value("counties", std::vector<std::string>{});
    if (p.parks.empty() || p.districts.empty() || p.counties.empty())
        throw std::invalid_argument("places '" + domain + "': empty hierarchy level");
    return p;
}

inline PlacesSpec load_places(const std::string& path, const std::string& domain) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open places file " + path);
    nlohmann::json j;
    in >> j;
    return parse_places(j, domain);
}

// Entities occupying the given slot of the given relation, ascending id.
inline std::vector<int> entities_in(const KnowledgeBase& kb, const PoolRule& rule) {
    int rel = kb.find(rule.relation);
    std::vector<int> out;
    if (rel < 0) return out;
    std::set<int> seen;
    for (const auto& tr : kb.triples()) {
        if (tr.relation != rel) continue;
        int id = rule.position == "head" ? tr.head : tr.tail;
        if (seen.insert(id).second) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---- KB extension: venue -> park -> district -> county chains ----

inline KnowledgeBase extend_kb_with_hierarchy(const KnowledgeBase& base, const PlacesSpec& places,
                                              Rng& rng) {
    KnowledgeBase kb = base;
    auto venues = entities_in(kb, places.venues);
    if (venues.empty())
        throw std::invalid_argument("extend_kb: no venues match " + places.venues.relation + "/" +
                                    places.venues.position);
    for (int v : venues) {
        const auto& park = places.parks[rng.below(static_cast<uint32_t>(places.parks.size()))];
        kb.add_triple(kb.surface(v), "next_to", park);
    }
    for (const auto& park : places.parks) {
        const auto& d =
            places.districts[rng.below(static_cast<uint32_t>(places.districts.size()))];
        kb.add_triple(park, "is_within", d);
    }
    for (const auto& d : places.districts) {
        const auto& c = places.counties[rng.below(static_cast<uint32_t>(places.counties.size()))];
        kb.add_triple(d, "located_in", c);
    }
    return kb;
}

inline void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write kb file " + path);
    for (const auto& tr : kb.triples())
        out << kb.surface(tr.head) << '|' << kb.surface(tr.relation) << '|' << kb.surface(tr.tail)
            << "\n";
}

// ---- hop oracle over turn context ----

// Reasoning distance between two entities: shortest directed path in either
// direction (the location chains are stored forward only).
inline std::optional<int> sym_hop(const KnowledgeBase& kb, int a, int b, int max_hops = 5) {
    std::optional<int> best;
    if (auto f = kb.hop_distance(a, b, max_hops)) best = f->k;
    if (auto r = kb.hop_distance(b, a, max_hops))
        if (!best || r->k < *best) best = r->k;
    return best;
}

inline std::vector<int> entity_ids_in_text(const KnowledgeBase& kb, const std::string& text) {
    std::vector<int> out;
    for (const auto& tok : tokenize(text)) {
        int id = kb.find(tok);
        if (id >= 0 && kb.kind(id) == TokenKind::Entity) out.push_back(id);
    }
    return out;
}

// Hop label of turn t: minimum reasoning distance between any distinct
// (context entity, gold entity) pair, where the context is everything said up
// to and including the turn's user utterance. 0 when the turn has no gold
// entities, -1 when no finite pair exists.
inline int recompute_hop(const Dialogue& d, size_t turn, const KnowledgeBase& kb,
                         int max_hops = 5) {
    std::set<int> ctx;
    for (size_t i = 0; i < turn; ++i) {
        for (int id : entity_ids_in_text(kb, d.turns[i].user)) ctx.insert(id);
        for (int id : entity_ids_in_text(kb, d.turns[i].system)) ctx.insert(id);
    }
    for (int id : entity_ids_in_text(kb, d.turns[turn].user)) ctx.insert(id);
    std::set<int> gold;
    for (const auto& e : d.turns[turn].entities) {
        int id = kb.find(e);
        if (id >= 0) gold.insert(id);
    }
    if (gold.empty()) return 0;
    int best = -1;
    for (int c : ctx)
        for (int g : gold) {
            if (c == g) continue;
            if (auto k = sym_hop(kb, c, g, max_hops))
                if (best < 0 || *k < best) best = *k;
        }
    return best;
}

// ---- skeleton sampling and instantiation ----

inline std::vector<const QATemplate*> domain_templates(const std::vector<QATemplate>& all,
                                                       const std::string& domain) {
    std::vector<const QATemplate*> out;
    for (const auto& t : all)
        if (t.domain == domain) out.push_back(&t);
    return out;
}

// First template uniform over the domain, successors uniform over the
// predecessor's guided list.
inline std::vector<const QATemplate*> sample_skeleton(int n_rounds,
                                                      const std::vector<const QATemplate*>& tpls,
                                                      Rng& rng) {
    if (tpls.empty()) throw std::invalid_argument("sample_skeleton: no templates");
    std::map<std::string, const QATemplate*> by_id;
    for (const auto* t : tpls) by_id[t->id] = t;
    std::vector<const QATemplate*> out;
    out.push_back(tpls[rng.below(static_cast<uint32_t>(tpls.size()))]);
    for (int r = 1; r < n_rounds; ++r) {
        const auto& g = out.back()->guided_next;
        if (g.empty())
            throw std::runtime_error("template '" + out.back()->id +
                                     "' has no guided successors before the final round");
        std::vector<const QATemplate*> opts;
        for (const auto& id : g) {
            auto it = by_id.find(id);
            if (it != by_id.end()) opts.push_back(it->second);
        }
        if (opts.empty())
            throw std::runtime_error("template '" + out.back()->id +
                                     "': guided successors are all outside the domain");
        out.push_back(opts[rng.below(static_cast<uint32_t>(opts.size()))]);
    }
    return out;
}

inline std::string replace_tokens(const std::string& text, const std::string& placeholder,
                                  const std::string& value) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string tok;
    bool first = true;
    while (in >> tok) {
        if (!first) out << ' ';
        out << (tok == placeholder ? value : tok);
        first = false;
    }
    return out.str();
}

// Fill the template against the KB. The anchor prefers recently mentioned
// entities for coherence; the answer is chosen so the turn's realized hop
// label equals the designed hop whenever any such answer exists.
inline Turn instantiate_template(const QATemplate& tpl, const KnowledgeBase& kb,
                                 const std::vector<int>& mentioned, Dialogue& partial, Rng& rng) {
    auto anchors = entities_in(kb, tpl.anchor_pool);
    if (anchors.empty())
        throw std::runtime_error("template '" + tpl.id + "': empty anchor pool (" +
                                 tpl.anchor_pool.relation + ")");
    auto answers_all = entities_in(kb, tpl.answer_pool);
    if (answers_all.empty())
        throw std::runtime_error("template '" + tpl.id + "': empty answer pool (" +
                                 tpl.answer_pool.relation + ")");

    // candidate order: recently mentioned anchor first (with probability 0.7),
    // then a random shuffle of the pool
    std::vector<int> order = anchors;
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(static_cast<uint32_t>(i))]);
    if (!mentioned.empty() && rng.uniform() < 0.7) {
        for (auto it = mentioned.rbegin(); it != mentioned.rend(); ++it) {
            if (std::find(anchors.begin(), anchors.end(), *it) != anchors.end()) {
                order.erase(std::remove(order.begin(), order.end(), *it), order.end());
                order.insert(order.begin(), *it);
                break;
            }
        }
    }

    auto try_build = [&](int anchor, int answer) {
        Turn t;
        t.user = replace_tokens(tpl.question, tpl.anchor_placeholder, kb.surface(anchor));
        std::string ans = replace_tokens(tpl.answer, tpl.anchor_placeholder, kb.surface(anchor));
        t.system = replace_tokens(ans, tpl.answer_placeholder, kb.surface(answer));
        for (int id : entity_ids_in_text(kb, t.system)) {
            const auto& s = kb.surface(id);
            if (std::find(t.entities.begin(), t.entities.end(), s) == t.entities.end())
                t.entities.push_back(s);
        }
        return t;
    };

    for (int anchor : order) {
        std::vector<int> valid;
        for (int a : answers_all) {
            if (a == anchor) continue;
            auto k = sym_hop(kb, anchor, a);
            if (k && *k == tpl.hop) valid.push_back(a);
        }
        if (valid.empty()) continue;
        // prefer answers whose realized label (full context) stays on design
        std::vector<int> exact;
        for (int a : valid) {
            Turn probe = try_build(anchor, a);
            partial.turns.push_back(probe);
            int label = recompute_hop(partial, partial.turns.size() - 1, kb);
            partial.turns.pop_back();
            if (label == tpl.hop) exact.push_back(a);
        }
        const auto& pool = exact.empty() ? valid : exact;
        int answer = pool[rng.below(static_cast<uint32_t>(pool.size()))];
        Turn t = try_build(anchor, answer);
        partial.turns.push_back(t);
        t.hop = recompute_hop(partial, partial.turns.size() - 1, kb);
        partial.turns.pop_back();
        return t;
    }
    throw std::runtime_error("template '" + tpl.id +
                             "': unsatisfiable, no anchor/answer pair at designed hop " +
                             std::to_string(tpl.hop));
}

// ---- pronominalization ----

struct PronounEdit {
    int dialogue = -1;
    int turn = 0;
    std::string entity;
    std::string pronoun;
};

// Entities that take "they": people, derived from person-position relations.
inline std::set<std::string> person_entities(const KnowledgeBase& kb) {
    std::set<std::string> out;
    for (const char* rel : {"directed_by", "written_by", "starring", "acted_by"}) {
        int r = kb.find(rel);
        if (r < 0) continue;
        for (const auto& tr : kb.triples())
            if (tr.relation == r) out.insert(kb.surface(tr.tail));
    }
    return out;
}

// Replaces already-mentioned KB entities in user utterances with pronouns.
// First-turn entities are never touched; gold sets stay as they are.
inline void pronominalize(Dialogue& d, Rng& rng, double rate,
                          const std::set<std::string>& persons, const KnowledgeBase& kb,
                          std::vector<PronounEdit>* audit = nullptr) {
    if (rate < 0 || rate > 1) throw std::invalid_argument("pronominalize: rate outside [0,1]");
    std::set<std::string> mentioned;
    for (size_t t = 0; t < d.turns.size(); ++t) {
        if (t > 0 && rate > 0) {
            std::istringstream in(d.turns[t].user);
            std::ostringstream out;
            std::string tok;
            bool first = true;
            while (in >> tok) {
                std::string use = tok;
                int id = kb.find(tok);
                if (id >= 0 && kb.kind(id) == TokenKind::Entity && mentioned.count(tok) &&
                    rng.uniform() < rate) {
                    use = persons.count(tok) ? "they" : "it";
                    if (audit) audit->push_back({-1, static_cast<int>(t), tok, use});
                }
                if (!first) out << ' ';
                out << use;
                first = false;
            }
            d.turns[t].user = out.str();
        }
        for (int id : entity_ids_in_text(kb, d.turns[t].user)) mentioned.insert(kb.surface(id));
        for (int id : entity_ids_in_text(kb, d.turns[t].system)) mentioned.insert(kb.surface(id));
    }
}

// ---- dataset generation ----

struct ForgeConfig {
    std::string domain;
    int n_train = 300, n_dev = 50, n_test = 50;
    std::array<double, 3> hop_mix = {0.7, 0.15, 0.15};  // buckets 1/2/3
    double pronoun_rate = 0.3;
    uint64_t seed = 1;
    std::string kb_file;  // recorded on each dialogue
};

struct ForgeResult {
    Dataset train, dev, test;
    std::map<int, int> hop_counts;  // realized labels over all splits
    std::vector<PronounEdit> pronoun_edits;
    int retries = 0;
};

inline Dialogue forge_dialogue(const std::string& domain,
                               const std::vector<const QATemplate*>& tpls,
                               const KnowledgeBase& kb, const std::set<std::string>& persons,
                               double pronoun_rate, Rng& rng,
                               std::vector<PronounEdit>* audit) {
    Dialogue d;
    d.domain = domain;
    int n_rounds = 3 + static_cast<int>(rng.below(2));
    auto skeleton = sample_skeleton(n_rounds, tpls, rng);
    std::vector<int> mentioned;
    for (const auto* tpl : skeleton) {
        Turn t = instantiate_template(*tpl, kb, mentioned, d, rng);
        d.turns.push_back(t);
        for (int id : entity_ids_in_text(kb, t.user))
            if (std::find(mentioned.begin(), mentioned.end(), id) == mentioned.end())
                mentioned.push_back(id);
        for (int id : entity_ids_in_text(kb, t.system))
            if (std::find(mentioned.begin(), mentioned.end(), id) == mentioned.end())
                mentioned.push_back(id);
    }
    pronominalize(d, rng, pronoun_rate, persons, kb, audit);
    // labels are assigned after pronoun substitution; the mention rule keeps
    // the entity context identical either way
    for (size_t t = 0; t < d.turns.size(); ++t)
        d.turns[t].hop = recompute_hop(d, t, kb);
    return d;
}

inline ForgeResult generate_dataset(const ForgeConfig& cfg, const KnowledgeBase& kb,
                                    const std::vector<QATemplate>& all_templates) {
    auto tpls = domain_templates(all_templates, cfg.domain);
    if (tpls.empty())
        throw std::invalid_argument("generate_dataset: no templates for domain '" + cfg.domain +
                                    "'");
    double mix_sum = cfg.hop_mix[0] + cfg.hop_mix[1] + cfg.hop_mix[2];
    if (mix_sum <= 0) throw std::invalid_argument("generate_dataset: hop mix sums to zero");
    auto persons = person_entities(kb);
    Rng base(cfg.seed);

    ForgeResult res;
    int total = cfg.n_train + cfg.n_dev + cfg.n_test;
    std::array<int, 4> counts{0, 0, 0, 0};  // index = bucket, [1..3] used
    int turns_total = 0;
    const int max_attempts = 40;
    for (int i = 0; i < total; ++i) {
        Dialogue accepted;
        std::vector<PronounEdit> audit;
        bool got = false;
        for (int a = 0; a < max_attempts && !got; ++a) {
            Rng drng = base.fork(static_cast<uint64_t>(i) * max_attempts + a);
            std::vector<PronounEdit> trial_audit;
            Dialogue d =
                forge_dialogue(cfg.domain, tpls, kb, persons, cfg.pronoun_rate, drng, &trial_audit);
            // greedy quota: no bucket may overshoot its share by more than slack
            std::array<int, 4> next = counts;
            int nt = turns_total;
            bool ok = true;
            for (const auto& t : d.turns) {
                int b = std::min(std::max(t.hop, 1), 3);
                ++next[static_cast<size_t>(b)];
                ++nt;
            }
            double slack = std::max(3.0, 0.04 * nt);
            for (int b = 1; b <= 3; ++b)
                if (next[static_cast<size_t>(b)] >
                    cfg.hop_mix[static_cast<size_t>(b - 1)] / mix_sum * nt + slack)
                    ok = false;
            if (ok || a == max_attempts - 1) {
                accepted = std::move(d);
                audit = std::move(trial_audit);
                counts = next;
                turns_total = nt;
                got = true;
                if (!ok) ++res.retries;  // accepted on exhaustion, mix drifts
            } else {
                ++res.retries;
            }
        }
        accepted.kb_file = cfg.kb_file;
        for (auto& e : audit) e.dialogue = i;
        res.pronoun_edits.insert(res.pronoun_edits.end(), audit.begin(), audit.end());
        for (const auto& t : accepted.turns) ++res.hop_counts[t.hop];
        Dataset* dst = i < cfg.n_train ? &res.train
                       : i < cfg.n_train + cfg.n_dev ? &res.dev
                                                     : &res.test;
        dst->dialogues.push_back(std::move(accepted));
    }
    return res;
}

// ---- verification (generation invariants, reusable by tests and the CLI) ----

struct VerifyReport {
    bool ok = true;
    std::vector<std::string> issues;
    std::map<int, int> hop_counts;
    int turns = 0;

    void fail(const std::string& msg) {
        ok = false;
        if (issues.size() < 50) issues.push_back(msg);
    }
};

inline VerifyReport verify_dataset(const Dataset& ds, const KnowledgeBase& kb) {
    VerifyReport rep;
    for (size_t di = 0; di < ds.dialogues.size(); ++di) {
        const auto& d = ds.dialogues[di];
        std::string where = "dialogue " + std::to_string(di);
        if (d.turns.size() < 3 || d.turns.size() > 4)
            rep.fail(where + ": " + std::to_string(d.turns.size()) + " turns, expected 3 or 4");
        for (size_t ti = 0; ti < d.turns.size(); ++ti) {
            const auto& t = d.turns[ti];
            ++rep.turns;
            ++rep.hop_counts[t.hop];
            std::string tw = where + " turn " + std::to_string(ti);
            for (const auto& e : t.entities) {
                int id = kb.find(e);
                if (id < 0 || kb.kind(id) != TokenKind::Entity)
                    rep.fail(tw + ": gold entity '" + e + "' not a KB entity");
            }
            int oracle = recompute_hop(d, ti, kb);
            if (oracle != t.hop)
                rep.fail(tw + ": hop label " + std::to_string(t.hop) + " != oracle " +
                         std::to_string(oracle));
            if (ti == 0) {
                for (const auto& tok : tokenize(t.user))
                    if (tok == "it" || tok == "they")
                        rep.fail(tw + ": pronoun in the opening turn");
            }
        }
    }
    return rep;
}

// Pronoun audit check: every replacement's entity must occur verbatim in an
// earlier turn of its dialogue.
inline bool pronoun_edits_valid(const Dataset& ds, const std::vector<PronounEdit>& edits,
                                size_t dialogue_offset, const KnowledgeBase& kb,
                                std::string* why = nullptr) {
    for (const auto& e : edits) {
        size_t di = static_cast<size_t>(e.dialogue) - dialogue_offset;
        if (e.dialogue < 0 || di >= ds.dialogues.size()) continue;  // other split
        const auto& d = ds.dialogues[di];
        bool found = false;
        for (int t = 0; t < e.turn && !found; ++t) {
            for (int id : entity_ids_in_text(kb, d.turns[static_cast<size_t>(t)].user))
                if (kb.surface(id) == e.entity) found = true;
            for (int id : entity_ids_in_text(kb, d.turns[static_cast<size_t>(t)].system))
                if (kb.surface(id) == e.entity) found = true;
        }
        if (!found) {
            if (why)
                *why = "dialogue " + std::to_string(e.dialogue) + " turn " +
                       std::to_string(e.turn) + ": '" + e.entity + "' had no prior mention";
            return false;
        }
    }
    return true;
}

}  // namespace nsdial
