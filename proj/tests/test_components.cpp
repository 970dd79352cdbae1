#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nsdial/encoder.hpp"
#include "nsdial/hypothesis.hpp"
#include "nsdial/reasoner.hpp"
#include "tree_util.hpp"

using namespace nsdial;

namespace {

KnowledgeBase small_kb() {
    KnowledgeBase kb;
    kb.add_triple("a", "r", "b");
    kb.add_triple("b", "s", "c");
    kb.add_triple("c", "r", "a");
    return kb;
}

}  // namespace

TEST_CASE("encoder emits one projected state per token plus the sentinel", "[encdec]") {
    ParamStoreT<float> ps;
    Rng rng(1);
    int emb = ps.add_uniform("emb", {10, 4}, rng, 0.5);
    EncoderT<float> enc(ps, "enc", 4, 6, rng);
    TapeT<float> t;
    Rng drng(2);
    auto out = enc.encode(t, ps, emb, {5, 6, 7}, 0.0f, drng, false);
    REQUIRE(out.n_states == 4);
    REQUIRE(out.states_proj.value().dim(0) == 4);
    REQUIRE(out.states_proj.value().dim(1) == 6);
    REQUIRE(out.h_cls_proj.value().numel() == 6);
}

TEST_CASE("attention over a single state puts weight one on it", "[encdec]") {
    TapeT<float> t;
    TensorT<float> st({1, 3});
    st[0] = 0.3f;
    st[1] = -0.7f;
    st[2] = 1.1f;
    EncoderOutT<float> enc;
    enc.states_proj = t.constant(std::move(st));
    enc.n_states = 1;
    TensorT<float> hv({3});
    hv[0] = 1;
    hv[1] = 2;
    hv[2] = 3;
    auto h = t.constant(std::move(hv));
    auto step = attend(t, h, enc);
    REQUIRE(step.weights.value()[0] == Catch::Approx(1.0));
    REQUIRE(step.h_attn.value()[0] == Catch::Approx(0.3f));
    REQUIRE(step.h_attn.value()[1] == Catch::Approx(-0.7f));
    REQUIRE(step.h_attn.value()[2] == Catch::Approx(1.1f));
    REQUIRE(step.context.value().numel() == 6);
    // query first, attended context second
    REQUIRE(step.context.value()[0] == Catch::Approx(1.0f));
    REQUIRE(step.context.value()[3] == Catch::Approx(0.3f));
}

TEST_CASE("states orthogonal to the query attract uniform attention", "[encdec]") {
    TapeT<float> t;
    TensorT<float> st({2, 2});
    st[0] = 1;
    st[1] = 0;
    st[2] = -1;
    st[3] = 0;
    EncoderOutT<float> enc;
    enc.states_proj = t.constant(std::move(st));
    enc.n_states = 2;
    TensorT<float> hv({2});
    hv[0] = 0;
    hv[1] = 5;
    auto step = attend(t, t.constant(std::move(hv)), enc);
    REQUIRE(step.weights.value()[0] == Catch::Approx(0.5));
    REQUIRE(step.weights.value()[1] == Catch::Approx(0.5));
}

TEST_CASE("slot algebra fills the unknown slot with the candidate", "[hyp]") {
    // H: unknown head; T: unknown tail; R: unknown relation
    auto h = instantiate_triple(StructureType::H, 10, 11, 99);
    REQUIRE(h.head == 99);
    REQUIRE(h.relation == 10);
    REQUIRE(h.tail == 11);
    auto tt = instantiate_triple(StructureType::T, 10, 11, 99);
    REQUIRE(tt.head == 10);
    REQUIRE(tt.relation == 11);
    REQUIRE(tt.tail == 99);
    auto r = instantiate_triple(StructureType::R, 10, 11, 99);
    REQUIRE(r.head == 10);
    REQUIRE(r.relation == 99);
    REQUIRE(r.tail == 11);
}

TEST_CASE("zero shared feature yields 0.5 scores and smallest-id candidates", "[hyp]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(4);
    HypothesisGenT<float> gen(ps, "hyp", 6, kb.n_tokens(), rng);
    // zero the second trunk layer so h_share is exactly zero
    auto& w2 = ps.value(ps.find("hyp.w2"));
    for (auto& v : w2.data) v = 0;
    TapeT<float> t;
    TensorT<float> cv({12});
    for (int i = 0; i < 12; ++i) cv[i] = static_cast<float>(i) / 7 - 0.5f;
    Rng srng(9);
    auto out = gen.run(t, ps, t.constant(std::move(cv)), kb, 3, 0.1f, srng);
    for (int64_t i = 0; i < out.cp_scores.value().numel(); ++i)
        REQUIRE(out.cp_scores.value()[i] == Catch::Approx(0.5));
    REQUIRE(out.topk.size() == 3);
    REQUIRE(out.topk[0].first == 0);
    REQUIRE(out.topk[1].first == 1);
    REQUIRE(out.topk[2].first == 2);
    REQUIRE(out.hyps.size() == 3);
    for (const auto& hy : out.hyps) {
        // removing the candidate reproduces the template implied by the states
        auto tpl = instantiate_triple(out.structure, out.k0, out.k1, hy.candidate);
        REQUIRE(tpl.head == hy.triple.head);
        REQUIRE(tpl.relation == hy.triple.relation);
        REQUIRE(tpl.tail == hy.triple.tail);
    }
}

TEST_CASE("candidate list is strictly ordered by score then id", "[hyp]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(4);
    HypothesisGenT<float> gen(ps, "hyp", 6, kb.n_tokens(), rng);
    TapeT<float> t;
    TensorT<float> cv({12});
    for (int i = 0; i < 12; ++i) cv[i] = 0.3f * static_cast<float>(i % 5) - 0.6f;
    Rng srng(13);
    auto out = gen.run(t, ps, t.constant(std::move(cv)), kb, kb.n_tokens(), 0.1f, srng);
    for (size_t i = 1; i < out.topk.size(); ++i) {
        bool ordered = out.topk[i - 1].second > out.topk[i].second ||
                       (out.topk[i - 1].second == out.topk[i].second &&
                        out.topk[i - 1].first < out.topk[i].first);
        REQUIRE(ordered);
    }
    REQUIRE_THROWS_AS(gen.run(t, ps, out.h_share, kb, kb.n_tokens() + 1, 0.1f, srng),
                      std::invalid_argument);
}

TEST_CASE("relation-slot masking confines masked slots to relation tokens", "[hyp]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(4);
    HypothesisGenT<float> gen(ps, "hyp", 6, kb.n_tokens(), rng);
    gen.mask_relation_slots = true;
    TapeT<float> t;
    Rng srng(21);
    int seen_h = 0, seen_t = 0;
    for (int it = 0; it < 60; ++it) {
        TensorT<float> cv({12});
        for (int i = 0; i < 12; ++i) cv[i] = static_cast<float>(srng.uniform(-1, 1));
        auto out = gen.run(t, ps, t.constant(std::move(cv)), kb, 2, 0.1f, srng);
        // H-Hyp: k0 is the relation slot; T-Hyp: k1; R-Hyp: neither
        if (out.structure == StructureType::H) {
            REQUIRE(kb.kind(out.k0) == TokenKind::Relation);
            ++seen_h;
        } else if (out.structure == StructureType::T) {
            REQUIRE(kb.kind(out.k1) == TokenKind::Relation);
            ++seen_t;
        }
    }
    REQUIRE(seen_h + seen_t > 0);
}

TEST_CASE("proof tree: depth-d level holds two-to-the-d nodes", "[reasoner]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(6);
    HypothesisGenT<float> gen(ps, "hyp", 5, kb.n_tokens(), rng);
    ReasonerT<float> rsn(ps, "reasoner", 5, gen.emb_cp, rng);
    TapeT<float> t;
    TensorT<float> cv({10});
    for (int i = 0; i < 10; ++i) cv[i] = 0.1f * static_cast<float>(i) - 0.4f;
    Rng srng(5);
    auto out = gen.run(t, ps, t.constant(std::move(cv)), kb, 1, 0.1f, srng);
    for (int D = 1; D <= 3; ++D) {
        auto tree = rsn.build_proof_tree(t, ps, out.hyps[0], D, kb);
        REQUIRE(tree.levels.size() == static_cast<size_t>(D) + 1);
        int total = 0;
        for (int d = 0; d <= D; ++d) {
            REQUIRE(tree.levels[static_cast<size_t>(d)].size() == static_cast<size_t>(1 << d));
            total += 1 << d;
        }
        REQUIRE(static_cast<int>(tree.nodes.size()) == total);
        // frontier nodes have no children, inner nodes have both
        for (const auto& n : tree.nodes) {
            if (n.depth == D) {
                REQUIRE(n.left == -1);
                REQUIRE(n.right == -1);
            } else {
                REQUIRE(n.left >= 0);
                REQUIRE(n.right >= 0);
            }
        }
        // bridge chaining: left child shares the parent head, right child the tail
        const auto& root = tree.nodes[0];
        if (D >= 1) {
            REQUIRE(tree.nodes[static_cast<size_t>(root.left)].decoded.head == root.decoded.head);
            REQUIRE(tree.nodes[static_cast<size_t>(root.right)].decoded.tail == root.decoded.tail);
            REQUIRE(tree.nodes[static_cast<size_t>(root.left)].decoded.tail ==
                    tree.nodes[static_cast<size_t>(root.right)].decoded.head);
        }
        REQUIRE_THROWS_AS(rsn.build_proof_tree(t, ps, out.hyps[0], 0, kb), std::invalid_argument);
        REQUIRE_THROWS_AS(rsn.build_proof_tree(t, ps, out.hyps[0], 6, kb), std::invalid_argument);
    }
}

TEST_CASE("decode roundtrip tolerates noise below half the embedding gap", "[reasoner]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(8);
    int emb = ps.add_uniform("emb_cp", {kb.n_tokens(), 4}, rng, 1.0);
    const auto& table = ps.value(emb);
    double min_gap = 1e30;
    for (int i = 0; i < kb.n_tokens(); ++i)
        for (int j = i + 1; j < kb.n_tokens(); ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) {
                double d = table[i * 4 + k] - table[j * 4 + k];
                acc += d * d;
            }
            min_gap = std::min(min_gap, std::sqrt(acc));
        }
    REQUIRE(min_gap > 1e-4);
    for (int i = 0; i < kb.n_tokens(); ++i) {
        TensorT<float> h({4});
        for (int k = 0; k < 4; ++k) h[k] = table[i * 4 + k];
        h[0] += static_cast<float>(0.49 * min_gap);
        REQUIRE(decode_vector(h, kb, table) == i);
        REQUIRE(decode_vector(h, kb, table, kb.kind(i)) == i);
    }
}

TEST_CASE("belief is exactly one on a perfectly matching leaf", "[reasoner]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(8);
    HypothesisGenT<float> gen(ps, "hyp", 4, kb.n_tokens(), rng);
    ReasonerT<float> rsn(ps, "reasoner", 4, gen.emb_cp, rng);
    const auto& table = ps.value(gen.emb_cp);
    TapeT<float> t;
    const auto& tr = kb.triples()[0];
    auto rowv = [&](int id) {
        TensorT<float> v({4});
        for (int k = 0; k < 4; ++k) v[k] = table[id * 4 + k];
        return t.constant(std::move(v));
    };
    ProofTreeT<float> tree;
    tree.depth_limit = 0;
    tree.levels.resize(1);
    ProofNodeT<float> root;
    root.h_head = rowv(tr.head);
    root.h_rel = rowv(tr.relation);
    root.h_tail = rowv(tr.tail);
    tree.nodes.push_back(root);
    tree.levels[0].push_back(0);
    auto res = rsn.belief_score(t, ps, tree, kb, BeliefMode::FixedDepth);
    REQUIRE(res.value == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(res.best_depth == 0);
}

TEST_CASE("leaf distances zero and ln two give belief one half", "[reasoner]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(8);
    HypothesisGenT<float> gen(ps, "hyp", 4, kb.n_tokens(), rng);
    ReasonerT<float> rsn(ps, "reasoner", 4, gen.emb_cp, rng);
    const auto& table = ps.value(gen.emb_cp);
    TapeT<float> t;
    const auto& tr = kb.triples()[0];
    auto rowv = [&](int id, float off) {
        TensorT<float> v({4});
        for (int k = 0; k < 4; ++k) v[k] = table[id * 4 + k];
        v[0] += off;
        return t.constant(std::move(v));
    };
    ProofTreeT<float> tree;
    tree.depth_limit = 1;
    tree.levels.resize(2);
    ProofNodeT<float> root;
    root.h_head = rowv(tr.head, 0);
    root.h_rel = rowv(tr.relation, 0);
    root.h_tail = rowv(tr.tail, 0);
    root.left = 1;
    root.right = 2;
    tree.nodes.push_back(root);
    tree.levels[0].push_back(0);
    ProofNodeT<float> exact;
    exact.h_head = rowv(tr.head, 0);
    exact.h_rel = rowv(tr.relation, 0);
    exact.h_tail = rowv(tr.tail, 0);
    exact.depth = 1;
    tree.nodes.push_back(exact);
    tree.levels[1].push_back(1);
    ProofNodeT<float> offby;
    offby.h_head = rowv(tr.head, 0);
    offby.h_rel = rowv(tr.relation, 0);
    offby.h_tail = rowv(tr.tail, static_cast<float>(std::log(2.0)));
    offby.depth = 1;
    tree.nodes.push_back(offby);
    tree.levels[1].push_back(2);

    // worst leaf at the fixed depth sits at distance ln 2: alpha = exp(-ln 2)
    auto res = rsn.belief_score(t, ps, tree, kb, BeliefMode::FixedDepth);
    REQUIRE(res.value == Catch::Approx(0.5).margin(1e-6));
    // best-depth mode prefers the exact root level
    auto best = rsn.belief_score(t, ps, tree, kb, BeliefMode::BestDepth);
    REQUIRE(best.value == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(best.best_depth == 0);
}

TEST_CASE("belief grows when leaves move toward facts; best beats fixed", "[reasoner]") {
    auto kb = small_kb();
    ParamStoreT<float> ps;
    Rng rng(15);
    HypothesisGenT<float> gen(ps, "hyp", 4, kb.n_tokens(), rng);
    ReasonerT<float> rsn(ps, "reasoner", 4, gen.emb_cp, rng);
    const auto& table = ps.value(gen.emb_cp);
    Rng trng(77);
    for (int it = 0; it < 50; ++it) {
        TapeT<float> t;
        int depth = 1 + static_cast<int>(trng.below(3));
        auto tree = testutil::random_tree(t, trng, depth, 4, 1.5);
        auto fixed = rsn.belief_score(t, ps, tree, kb, BeliefMode::FixedDepth);
        auto best = rsn.belief_score(t, ps, tree, kb, BeliefMode::BestDepth);
        REQUIRE(best.value >= fixed.value);
        auto closer = testutil::contract_tree(t, tree, kb, table);
        auto best2 = rsn.belief_score(t, ps, closer, kb, BeliefMode::BestDepth);
        REQUIRE(best2.value >= best.value);
        auto fixed2 = rsn.belief_score(t, ps, closer, kb, BeliefMode::FixedDepth);
        REQUIRE(fixed2.value >= fixed.value);
    }
}

TEST_CASE("kb distribution keeps the larger belief per candidate", "[reasoner]") {
    auto kb = small_kb();
    TapeT<float> t;
    std::vector<SynthesizedHypT<float>> hyps(3);
    hyps[0].candidate = 1;
    hyps[1].candidate = 1;
    hyps[2].candidate = 3;
    std::vector<BeliefResultT<float>> beliefs(3);
    auto mk = [&](double v) {
        TensorT<float> x({1});
        x[0] = static_cast<float>(v);
        return t.constant(std::move(x));
    };
    beliefs[0].alpha = mk(0.3);
    beliefs[1].alpha = mk(0.9);
    beliefs[2].alpha = mk(0.4);
    auto dist = kb_distribution(t, hyps, beliefs, kb.n_tokens());
    REQUIRE(dist.value()[1] == Catch::Approx(0.9));
    REQUIRE(dist.value()[3] == Catch::Approx(0.4));
    REQUIRE(dist.value()[0] == 0.0f);
    auto empty = kb_distribution(t, {}, {}, kb.n_tokens());
    for (int64_t i = 0; i < empty.value().numel(); ++i) REQUIRE(empty.value()[i] == 0.0f);
}
