#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "nsdial/kb.hpp"
#include "nsdial/rng.hpp"

using namespace nsdial;

namespace {
KnowledgeBase kb_from(const std::string& text) {
    std::istringstream ss(text);
    return parse_kb(ss, "test");
}
}  // namespace

TEST_CASE("kb text parsing and interning", "[kb]") {
    auto kb = kb_from("a|next_to|b\nb|located_in|c\n");
    REQUIRE(kb.n_tokens() == 5);
    REQUIRE(kb.n_triples() == 2);
    // first-appearance ids
    REQUIRE(kb.find("a") == 0);
    REQUIRE(kb.find("next_to") == 1);
    REQUIRE(kb.find("b") == 2);
    REQUIRE(kb.find("located_in") == 3);
    REQUIRE(kb.find("c") == 4);
    REQUIRE(kb.kind(0) == TokenKind::Entity);
    REQUIRE(kb.kind(1) == TokenKind::Relation);
    REQUIRE(kb.surface(4) == "c");
    REQUIRE(kb.find("zzz") == -1);

    auto empty = kb_from("");
    REQUIRE(empty.n_tokens() == 0);
    REQUIRE(empty.n_triples() == 0);

    auto commented = kb_from("# header\n\n  a | r | b  \n");
    REQUIRE(commented.n_triples() == 1);
    REQUIRE(commented.surface(0) == "a");  // fields are trimmed
}

TEST_CASE("kb parse errors carry line numbers", "[kb]") {
    REQUIRE_THROWS_WITH(kb_from("a|r|b\nc|d\n"), Catch::Matchers::ContainsSubstring("test:2"));
    REQUIRE_THROWS_WITH(kb_from("a|r|b|x\n"), Catch::Matchers::ContainsSubstring("4"));
    REQUIRE_THROWS_WITH(kb_from("a||b\n"), Catch::Matchers::ContainsSubstring("empty field"));
    // same surface as entity then relation
    REQUIRE_THROWS_WITH(kb_from("a|r|b\nr|a|c\n"),
                        Catch::Matchers::ContainsSubstring("both relation and entity"));
}

TEST_CASE("kb json array form", "[kb]") {
    auto kb = kb_from(R"([{"head":"a","relation":"r","tail":"b"},
                          {"head":"b","relation":"r","tail":"c"}])");
    REQUIRE(kb.n_triples() == 2);
    REQUIRE(kb.find("r") == 1);
    REQUIRE_THROWS_WITH(kb_from("[{\"head\":\"a\"}]"),
                        Catch::Matchers::ContainsSubstring("head/relation/tail"));
    REQUIRE_THROWS_WITH(kb_from("[  broken"), Catch::Matchers::ContainsSubstring("bad JSON"));
}

TEST_CASE("kb deduplicates triples", "[kb]") {
    auto kb = kb_from("a|r|b\na|r|b\n");
    REQUIRE(kb.n_triples() == 1);
    REQUIRE_FALSE(kb.add_triple("a", "r", "b"));
    REQUIRE(kb.add_triple("a", "r", "c"));
}

TEST_CASE("kb neighbors ordered by tail id", "[kb]") {
    auto kb = kb_from("a|r|b\na|s|c\n");
    int a = kb.find("a"), s = kb.find("s"), c = kb.find("c");
    auto all = kb.neighbors(a);
    REQUIRE(all.size() == 2);
    REQUIRE(kb.surface(all[0].tail) == "b");
    REQUIRE(kb.surface(all[1].tail) == "c");
    auto only_s = kb.neighbors(a, s);
    REQUIRE(only_s.size() == 1);
    REQUIRE(only_s[0].tail == c);
    REQUIRE(kb.neighbors(c).empty());
    REQUIRE_THROWS_AS(kb.neighbors(99), std::out_of_range);
}

TEST_CASE("hop distance on chains", "[kb]") {
    auto kb = kb_from("a|r|b\nb|r|c\n");
    int a = kb.find("a"), c = kb.find("c"), r = kb.find("r");
    auto res = kb.hop_distance(a, c, 5);
    REQUIRE(res.has_value());
    REQUIRE(res->k == 2);
    REQUIRE(res->path.size() == 2);
    REQUIRE(res->path[0].head == a);
    REQUIRE(res->path[1].tail == c);

    auto self = kb.hop_distance(a, a, 5);
    REQUIRE(self->k == 0);
    REQUIRE(self->path.empty());

    REQUIRE_FALSE(kb.hop_distance(c, a, 5).has_value());  // edges are directed
    REQUIRE_FALSE(kb.hop_distance(a, c, 1).has_value());  // over the cap
    REQUIRE_THROWS_AS(kb.hop_distance(a, r, 5), std::invalid_argument);

    for (const auto& t : kb.triples()) {
        auto one = kb.hop_distance(t.head, t.tail, 1);
        REQUIRE(one.has_value());
        REQUIRE(one->k == 1);
    }
}

TEST_CASE("hop distance prefers smallest token ids on ties", "[kb]") {
    // two length-2 routes a->c->d and a->b->d; c was interned first (smaller id)
    auto kb = kb_from("a|r|c\nc|r|d\na|r|b\nb|r|d\n");
    auto res = kb.hop_distance(kb.find("a"), kb.find("d"), 5);
    REQUIRE(res->k == 2);
    REQUIRE(kb.surface(res->path[0].tail) == "c");

    // same tail through two relations: smaller relation id wins
    auto kb2 = kb_from("a|r|b\na|s|b\n");
    auto res2 = kb2.hop_distance(kb2.find("a"), kb2.find("b"), 5);
    REQUIRE(res2->k == 1);
    REQUIRE(kb2.surface(res2->path[0].relation) == "r");
}

TEST_CASE("hop distance is minimal against matrix powers", "[kb]") {
    Rng rng(2024);
    const int n_ent = 30, n_rel = 3, n_edges = 80, max_d = 5;
    KnowledgeBase kb;
    std::vector<std::string> ents, rels;
    for (int i = 0; i < n_ent; ++i) ents.push_back("e" + std::to_string(i));
    for (int i = 0; i < n_rel; ++i) rels.push_back("rel" + std::to_string(i));
    for (int i = 0; i < n_edges; ++i) {
        auto& h = ents[rng.below(n_ent)];
        auto& t = ents[rng.below(n_ent)];
        kb.add_triple(h, rels[rng.below(n_rel)], t);
    }
    // reach[d][i][j]: a directed walk of length exactly d from i to j exists
    std::vector<std::vector<std::vector<bool>>> reach(
        max_d + 1, std::vector<std::vector<bool>>(static_cast<size_t>(kb.n_tokens()),
                                                  std::vector<bool>(static_cast<size_t>(kb.n_tokens()), false)));
    for (int i = 0; i < kb.n_tokens(); ++i) reach[0][static_cast<size_t>(i)][static_cast<size_t>(i)] = true;
    for (int d = 1; d <= max_d; ++d)
        for (const auto& t : kb.triples())
            for (int i = 0; i < kb.n_tokens(); ++i)
                if (reach[d - 1][static_cast<size_t>(i)][static_cast<size_t>(t.head)])
                    reach[d][static_cast<size_t>(i)][static_cast<size_t>(t.tail)] = true;

    for (const auto& hs : ents)
        for (const auto& ts : ents) {
            int h = kb.find(hs), t = kb.find(ts);
            if (h < 0 || t < 0) continue;
            int oracle = -1;
            for (int d = 0; d <= max_d && oracle < 0; ++d)
                if (reach[d][static_cast<size_t>(h)][static_cast<size_t>(t)]) oracle = d;
            auto got = kb.hop_distance(h, t, max_d);
            if (oracle < 0) {
                REQUIRE_FALSE(got.has_value());
            } else {
                REQUIRE(got.has_value());
                REQUIRE(got->k == oracle);
                // witness path is a real consecutive edge chain of length k
                REQUIRE(static_cast<int>(got->path.size()) == got->k);
                int cur = h;
                for (const auto& e : got->path) {
                    REQUIRE(e.head == cur);
                    bool exists = false;
                    for (const auto& kt : kb.triples()) exists = exists || kt == e;
                    REQUIRE(exists);
                    cur = e.tail;
                }
                REQUIRE(cur == t);
            }
        }
}

TEST_CASE("kb load is idempotent", "[kb]") {
    std::string text = "x|r|y\nz|s|x\ny|r|z\n";
    auto k1 = kb_from(text), k2 = kb_from(text);
    REQUIRE(k1.n_tokens() == k2.n_tokens());
    for (int i = 0; i < k1.n_tokens(); ++i) {
        REQUIRE(k1.surface(i) == k2.surface(i));
        REQUIRE(k1.kind(i) == k2.kind(i));
    }
}
