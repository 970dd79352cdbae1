#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "nsdial/kb.hpp"
#include "nsdial/ops.hpp"

namespace nsdial {

// 0 leaves the head slot unknown, 1 the tail, 2 the relation.
enum class StructureType { H = 0, T = 1, R = 2 };

inline const char* structure_name(StructureType s) {
    switch (s) {
        case StructureType::H: return "H-Hypothesis";
        case StructureType::T: return "T-Hypothesis";
        case StructureType::R: return "R-Hypothesis";
    }
    return "?";
}

// Slot algebra: the two predicted state tokens fill the known slots in
// (head, relation, tail) order; the candidate takes the unknown slot.
inline Triple instantiate_triple(StructureType st, int k0, int k1, int cand) {
    switch (st) {
        case StructureType::H: return {cand, k0, k1};
        case StructureType::T: return {k0, k1, cand};
        case StructureType::R: return {k0, cand, k1};
    }
    throw std::logic_error("bad structure");
}

template <class S>
struct SynthesizedHypT {
    StructureType structure;
    Triple triple;   // symbolic form, candidate slot filled
    int candidate;
    float cp_prob;
    VarT<S> h_head, h_rel, h_tail;  // soft embeddings, gradients reach all heads
};

template <class S>
struct HypStepOutT {
    VarT<S> h_share;
    VarT<S> i_sp;  // 3-way sample
    StructureType structure;
    int k0 = -1, k1 = -1;   // hard state tokens
    VarT<S> e_k0, e_k1;     // soft state embeddings
    VarT<S> cp_logits;      // n
    VarT<S> cp_scores;      // sigmoid(cp_logits)
    std::vector<std::pair<int, float>> topk;  // (token, prob), by (-prob, id)
    std::vector<SynthesizedHypT<S>> hyps;
};

// Shared two-layer trunk with private heads for structure, two query states,
// and candidate scoring; candidates come from a dot product with a dedicated
// token embedding table that the reasoning engine shares.
template <class S>
struct HypothesisGenT {
    int w1 = -1, w2 = -1;            // shared trunk
    int w3 = -1, w4 = -1;            // structure head
    int wq0a = -1, wq0b = -1;        // query state head k=0
    int wq1a = -1, wq1b = -1;        // query state head k=1
    int emb_cp = -1;                 // n x hid
    int hid = 0, n_kb = 0;
    bool mask_relation_slots = false;
    bool straight_through = false;

    HypothesisGenT() = default;
    HypothesisGenT(ParamStoreT<S>& ps, const std::string& prefix, int hidden, int n_tokens,
                   Rng& rng) : hid(hidden), n_kb(n_tokens) {
        S a = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hidden)));
        w1 = ps.add_uniform(prefix + ".w1", {hidden, 2 * hidden}, rng, a);
        w2 = ps.add_uniform(prefix + ".w2", {hidden, hidden}, rng, a);
        w3 = ps.add_uniform(prefix + ".w3", {hidden, hidden}, rng, a);
        w4 = ps.add_uniform(prefix + ".w4", {3, hidden}, rng, a);
        wq0a = ps.add_uniform(prefix + ".wq0a", {hidden, hidden}, rng, a);
        wq0b = ps.add_uniform(prefix + ".wq0b", {n_tokens, hidden}, rng, a);
        wq1a = ps.add_uniform(prefix + ".wq1a", {hidden, hidden}, rng, a);
        wq1b = ps.add_uniform(prefix + ".wq1b", {n_tokens, hidden}, rng, a);
        emb_cp = ps.add_uniform(prefix + ".emb_cp", {n_tokens, hidden}, rng, a);
    }

    VarT<S> shared_features(TapeT<S>& t, ParamStoreT<S>& ps, VarT<S> context) const {
        return matvec(t.param(ps, w2), leaky_relu(matvec(t.param(ps, w1), context)));
    }

    // The known-slot kinds per structure, for the optional relation mask.
    static void slot_kinds(StructureType st, TokenKind& k0_kind, TokenKind& k1_kind) {
        switch (st) {
            case StructureType::H: k0_kind = TokenKind::Relation; k1_kind = TokenKind::Entity; return;
            case StructureType::T: k0_kind = TokenKind::Entity; k1_kind = TokenKind::Relation; return;
            case StructureType::R: k0_kind = TokenKind::Entity; k1_kind = TokenKind::Entity; return;
        }
    }

    HypStepOutT<S> run(TapeT<S>& t, ParamStoreT<S>& ps, VarT<S> context, const KnowledgeBase& kb,
                       int K, S tau, Rng& rng) const {
        if (K < 1 || K > n_kb) throw std::invalid_argument("hypothesis: K out of [1, n]");
        HypStepOutT<S> out;
        out.h_share = shared_features(t, ps, context);

        auto sp_logits = matvec(t.param(ps, w4), leaky_relu(matvec(t.param(ps, w3), out.h_share)));
        out.i_sp = gumbel_softmax(sp_logits, tau, rng, straight_through);
        int st = 0;
        for (int i = 1; i < 3; ++i)
            if (out.i_sp.value()[i] > out.i_sp.value()[st]) st = i;
        out.structure = static_cast<StructureType>(st);

        TokenKind k0_kind, k1_kind;
        slot_kinds(out.structure, k0_kind, k1_kind);
        auto qsp = [&](int wa, int wb, TokenKind want) {
            auto logits = matvec(t.param(ps, wb), leaky_relu(matvec(t.param(ps, wa), out.h_share)));
            if (mask_relation_slots && want == TokenKind::Relation) {
                TensorT<S> m({n_kb});
                for (int i = 0; i < n_kb; ++i)
                    m[i] = kb.kind(i) == TokenKind::Relation ? S(0) : S(-1e9);
                logits = add(logits, t.constant(std::move(m)));
            }
            return gumbel_softmax(logits, tau, rng, straight_through);
        };
        auto i_q0 = qsp(wq0a, wq0b, k0_kind);
        auto i_q1 = qsp(wq1a, wq1b, k1_kind);
        auto argmax = [](const VarT<S>& v) {
            int best = 0;
            for (int64_t i = 1; i < v.value().numel(); ++i)
                if (v.value()[i] > v.value()[best]) best = static_cast<int>(i);
            return best;
        };
        out.k0 = argmax(i_q0);
        out.k1 = argmax(i_q1);
        auto embt = t.param(ps, emb_cp);
        out.e_k0 = matvec_t(embt, i_q0);
        out.e_k1 = matvec_t(embt, i_q1);

        out.cp_logits = matvec(embt, out.h_share);
        out.cp_scores = sigmoid(out.cp_logits);
        std::vector<int> order(static_cast<size_t>(n_kb));
        for (int i = 0; i < n_kb; ++i) order[static_cast<size_t>(i)] = i;
        const auto& sc = out.cp_scores.value();
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (sc[a] != sc[b]) return sc[a] > sc[b];
            return a < b;
        });
        auto i0 = pick(out.i_sp, 0), i1 = pick(out.i_sp, 1), i2 = pick(out.i_sp, 2);
        auto i12 = add(i1, i2);
        auto i02 = add(i0, i2);
        for (int k = 0; k < K; ++k) {
            int cand = order[static_cast<size_t>(k)];
            SynthesizedHypT<S> hyp;
            hyp.structure = out.structure;
            hyp.candidate = cand;
            hyp.cp_prob = static_cast<float>(sc[cand]);
            hyp.triple = instantiate_triple(out.structure, out.k0, out.k1, cand);
            auto e_c = row(embt, cand);
            hyp.h_head = add(smul(i0, e_c), smul(i12, out.e_k0));
            hyp.h_rel = add(add(smul(i0, out.e_k0), smul(i1, out.e_k1)), smul(i2, e_c));
            hyp.h_tail = add(smul(i02, out.e_k1), smul(i1, e_c));
            out.topk.emplace_back(cand, hyp.cp_prob);
            out.hyps.push_back(std::move(hyp));
        }
        return out;
    }
};

}  // namespace nsdial
