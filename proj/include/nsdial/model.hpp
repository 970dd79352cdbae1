#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/config.hpp"
#include "nsdial/dataset.hpp"
#include "nsdial/encoder.hpp"
#include "nsdial/hypothesis.hpp"
#include "nsdial/reasoner.hpp"

namespace nsdial {

enum class Ablation { Full, NoReasoner, NoSoftswitch };

inline Ablation ablation_from(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "no_reasoner") return Ablation::NoReasoner;
    if (s == "no_softswitch") return Ablation::NoSoftswitch;
    throw std::invalid_argument("unknown ablation '" + s + "'");
}

// ---- plain-data trace structures (JSON exportable) ----

struct TraceHyp {
    std::string structure;
    std::string k0, k1;
    std::string head, relation, tail;  // synthesized triple
    std::string candidate;
    float cp_prob = 0;
    float alpha = 0;
    int best_depth = 0;
    int tree_id = -1;  // -1 when the reasoner was ablated away
};

struct TraceStep {
    std::string chosen;
    bool from_kb_channel = false;  // chosen token is addressable by the KB channel
    float p_gen = 0;
    std::vector<std::pair<std::string, float>> top_vocab;  // top-10
    std::vector<std::pair<std::string, float>> p_kb;       // full raw KB-channel weights
    std::string structure;
    std::string k0, k1;
    std::vector<TraceHyp> hyps;
};

struct TraceTreeNode {
    std::string head, relation, tail;
    int depth = 0;
    int left = -1, right = -1;
};

struct TraceTree {
    int id = 0;
    std::string structure;
    std::vector<TraceTreeNode> nodes;  // preorder
};

struct DecodeTrace {
    std::vector<std::string> tokens;
    std::vector<TraceStep> steps;
    std::vector<TraceTree> trees;
};

inline nlohmann::ordered_json trace_to_json(const DecodeTrace& tr) {
    nlohmann::ordered_json j;
    j["tokens"] = tr.tokens;
    auto steps = nlohmann::ordered_json::array();
    for (const auto& s : tr.steps) {
        nlohmann::ordered_json sj;
        sj["chosen"] = s.chosen;
        sj["from_kb_channel"] = s.from_kb_channel;
        sj["p_gen"] = s.p_gen;
        auto tv = nlohmann::ordered_json::array();
        for (const auto& [tok, p] : s.top_vocab) tv.push_back({{"token", tok}, {"p", p}});
        sj["top_vocab"] = tv;
        auto pk = nlohmann::ordered_json::array();
        for (const auto& [tok, w] : s.p_kb) pk.push_back({{"token", tok}, {"weight", w}});
        sj["p_kb"] = pk;
        sj["structure"] = s.structure;
        sj["state_tokens"] = {{"k0", s.k0}, {"k1", s.k1}};
        auto hj = nlohmann::ordered_json::array();
        for (const auto& h : s.hyps) {
            nlohmann::ordered_json x;
            x["structure"] = h.structure;
            x["state_tokens"] = {{"k0", h.k0}, {"k1", h.k1}};
            x["candidate"] = h.candidate;
            x["cp_prob"] = h.cp_prob;
            x["triple"] = {h.head, h.relation, h.tail};
            x["belief"] = h.alpha;
            x["best_depth"] = h.best_depth;
            x["tree_id"] = h.tree_id;
            hj.push_back(x);
        }
        sj["hypotheses"] = hj;
        steps.push_back(sj);
    }
    j["steps"] = steps;
    auto trees = nlohmann::ordered_json::array();
    for (const auto& t : tr.trees) {
        nlohmann::ordered_json tj;
        tj["id"] = t.id;
        tj["structure"] = t.structure;
        auto nodes = nlohmann::ordered_json::array();
        for (const auto& n : t.nodes)
            nodes.push_back({{"triple", {n.head, n.relation, n.tail}},
                             {"depth", n.depth},
                             {"left", n.left},
                             {"right", n.right}});
        tj["nodes"] = nodes;
        trees.push_back(tj);
    }
    j["trees"] = trees;
    return j;
}

// ---- the model ----

template <class S>
class ModelT {
public:
    ModelT(const Config& cfg, const KnowledgeBase& kb, const JointVocab& jv)
        : cfg_(cfg), kb_(&kb), jv_(&jv) {
        cfg_.validate();
        Rng rng(cfg.seed);
        int h = cfg.hidden, e = cfg.emb_dim;
        S ae = static_cast<S>(1.0 / std::sqrt(static_cast<double>(e)));
        emb_word_ = ps_.add_uniform("emb_word", {jv.size(), e}, rng, ae);
        encoder_ = EncoderT<S>(ps_, "enc", e, h, rng);
        dec_ = GRUCellT<S>(ps_, "dec", e, h, rng);
        S ah = static_cast<S>(1.0 / std::sqrt(static_cast<double>(2 * h)));
        u1_ = ps_.add_uniform("u1", {jv.vocab_size(), 2 * h}, rng, ah);
        u2_ = ps_.add_uniform("u2", {1, 2 * h}, rng, ah);
        hyp_ = HypothesisGenT<S>(ps_, "hyp", h, kb.n_tokens(), rng);
        hyp_.mask_relation_slots = cfg.mask_relation_slots;
        hyp_.straight_through = cfg.straight_through;
        reasoner_ = ReasonerT<S>(ps_, "reasoner", h, hyp_.emb_cp, rng);
        ablation_ = ablation_from(cfg.ablation);
        mode_ = cfg.belief_mode == "fixed_depth" ? BeliefMode::FixedDepth : BeliefMode::BestDepth;
        assert_distinct_embeddings();
    }

    ParamStoreT<S>& params() { return ps_; }
    const ParamStoreT<S>& params() const { return ps_; }
    const Config& config() const { return cfg_; }
    const KnowledgeBase& kb() const { return *kb_; }
    const JointVocab& joint() const { return *jv_; }
    Ablation ablation() const { return ablation_; }

    std::vector<int> joint_ids(const std::vector<std::string>& toks) const {
        std::vector<int> ids;
        ids.reserve(toks.size());
        for (const auto& t : toks) ids.push_back(jv_->id(t));
        return ids;
    }

    struct StepOut {
        VarT<S> p_final, p_gen, p_vocab, p_kb, h_dec;
        HypStepOutT<S> hyp;
        std::vector<BeliefResultT<S>> beliefs;
        std::vector<ProofTreeT<S>> trees;
    };

    EncoderOutT<S> encode(TapeT<S>& t, const std::vector<int>& history_ids, Rng& rng,
                          bool train) const {
        return encoder_.encode(t, const_cast<ParamStoreT<S>&>(ps_), emb_word_, history_ids,
                               static_cast<S>(cfg_.dropout), rng, train);
    }

    StepOut step(TapeT<S>& t, const EncoderOutT<S>& enc, VarT<S> h_prev, int prev_joint, Rng& rng,
                 bool train) {
        auto embt = t.param(ps_, emb_word_);
        auto x = row(embt, prev_joint);
        if (train && cfg_.dropout > 0) x = dropout(x, static_cast<S>(cfg_.dropout), rng, true);
        auto h = dec_.step(t, ps_, x, h_prev);
        auto astep = attend(t, h, enc);
        auto p_vocab = softmax(matvec(t.param(ps_, u1_), astep.context));
        auto p_gen = pick(sigmoid(matvec(t.param(ps_, u2_), concat(astep.h_attn, astep.h_dec))), 0);

        StepOut out;
        out.hyp = hyp_.run(t, ps_, astep.context, *kb_, cfg_.candidates, static_cast<S>(cfg_.tau),
                           rng);
        if (ablation_ == Ablation::NoReasoner) {
            out.p_kb = out.hyp.cp_scores;  // sigmoid scores stand in for beliefs
        } else {
            for (const auto& hy : out.hyp.hyps) {
                out.trees.push_back(reasoner_.build_proof_tree(t, ps_, hy, cfg_.depth, *kb_));
                out.beliefs.push_back(reasoner_.belief_score(t, ps_, out.trees.back(), *kb_, mode_));
            }
            out.p_kb = kb_distribution(t, out.hyp.hyps, out.beliefs, kb_->n_tokens());
        }
        validate_channel(out.p_kb.value());
        if (ablation_ == Ablation::NoSoftswitch) {
            out.p_final = fuse_sum(p_vocab, out.p_kb, jv_->kb_to_joint(), jv_->size());
        } else {
            out.p_final = fuse_soft_switch(p_vocab, out.p_kb, p_gen, jv_->kb_to_joint(),
                                           jv_->size());
        }
        out.p_gen = p_gen;
        out.p_vocab = p_vocab;
        out.h_dec = h;
        return out;
    }

    // Candidate supervision: 1 exactly for KB tokens whose surface is the gold token.
    std::vector<S> cp_labels(int gold_joint) const {
        std::vector<S> labels(static_cast<size_t>(kb_->n_tokens()), S(0));
        const auto& m = jv_->kb_to_joint();
        for (size_t i = 0; i < m.size(); ++i)
            if (m[i] == gold_joint) labels[i] = S(1);
        return labels;
    }

    struct LossOut {
        VarT<S> total, l_gen, l_cp;
        int n_steps = 0;
    };

    // Teacher forcing: gold previous token in, losses summed over response
    // tokens (terminator included).
    LossOut teacher_forced(TapeT<S>& t, const Example& ex, Rng& rng, bool train) {
        auto enc = encode(t, joint_ids(ex.history), rng, train);
        VarT<S> h = enc.h_cls_proj;
        int prev = Vocabulary::kSos;
        std::vector<int> gold;
        for (const auto& tok : ex.response) gold.push_back(jv_->id(tok));
        gold.push_back(Vocabulary::kEos);
        auto lg = t.constant(TensorT<S>({1}));
        auto lc = t.constant(TensorT<S>({1}));
        for (int g : gold) {
            auto so = step(t, enc, h, prev, rng, train);
            lg = add(lg, neg_log_pick_clamped(so.p_final, g));
            lc = add(lc, mean_bce_with_logits(so.hyp.cp_logits, cp_labels(g)));
            h = so.h_dec;
            prev = g;
        }
        LossOut out;
        out.l_gen = lg;
        out.l_cp = lc;
        out.total = add(scale(lg, static_cast<S>(cfg_.gamma_g)),
                        scale(lc, static_cast<S>(cfg_.gamma_c)));
        out.n_steps = static_cast<int>(gold.size());
        return out;
    }

    struct DecodeResult {
        std::vector<std::string> tokens;
        DecodeTrace trace;
    };

    DecodeResult greedy_decode(const std::vector<std::string>& history, Rng& rng, int max_len,
                               bool want_trace = false) {
        TapeT<S> t;
        auto enc = encode(t, joint_ids(history), rng, false);
        VarT<S> h = enc.h_cls_proj;
        int prev = Vocabulary::kSos;
        DecodeResult res;
        for (int stepno = 0; stepno < max_len; ++stepno) {
            auto so = step(t, enc, h, prev, rng, false);
            const auto& p = so.p_final.value();
            int choice = 0;
            for (int64_t i = 1; i < p.numel(); ++i)
                if (p[i] > p[choice]) choice = static_cast<int>(i);
            h = so.h_dec;
            prev = choice;
            if (choice == Vocabulary::kEos) break;
            if (want_trace) res.trace.steps.push_back(make_trace_step(so, choice, res.trace));
            res.tokens.push_back(jv_->surface(choice));
        }
        res.trace.tokens = res.tokens;
        return res;
    }

private:
    void validate_channel(const TensorT<S>& pkb) const {
        for (int64_t i = 0; i < pkb.numel(); ++i)
            if (!(pkb[i] >= S(0) && pkb[i] <= S(1)))
                throw std::runtime_error("kb channel weight outside [0,1] at token " +
                                         std::to_string(i) + ": " + std::to_string(pkb[i]));
    }

    void assert_distinct_embeddings() {
        const auto& emb = ps_.value(hyp_.emb_cp);
        for (int i = 0; i < kb_->n_tokens(); ++i)
            if (decode_vector(row_copy(emb, i), *kb_, emb) != i)
                throw std::logic_error("cp embedding collision at init (token " +
                                       std::to_string(i) + ")");
    }

    static TensorT<S> row_copy(const TensorT<S>& m, int i) {
        TensorT<S> out({m.dim(1)});
        std::copy_n(m.data.data() + static_cast<size_t>(i) * m.dim(1), m.dim(1), out.data.data());
        return out;
    }

    TraceStep make_trace_step(const StepOut& so, int choice, DecodeTrace& sink) const {
        TraceStep ts;
        ts.chosen = jv_->surface(choice);
        const auto& m = jv_->kb_to_joint();
        for (size_t i = 0; i < m.size(); ++i)
            if (m[i] == choice && so.p_kb.value()[static_cast<int64_t>(i)] > S(0))
                ts.from_kb_channel = true;
        ts.p_gen = static_cast<float>(so.p_gen.value()[0]);
        const auto& pv = so.p_vocab.value();
        std::vector<int> order(static_cast<size_t>(pv.numel()));
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::partial_sort(order.begin(), order.begin() + std::min<size_t>(10, order.size()),
                          order.end(), [&](int a, int b) {
                              if (pv[a] != pv[b]) return pv[a] > pv[b];
                              return a < b;
                          });
        for (size_t i = 0; i < std::min<size_t>(10, order.size()); ++i)
            ts.top_vocab.emplace_back(jv_->words().surface(order[i]),
                                      static_cast<float>(pv[order[i]]));
        const auto& pk = so.p_kb.value();
        for (int i = 0; i < kb_->n_tokens(); ++i)
            ts.p_kb.emplace_back(kb_->surface(i), static_cast<float>(pk[i]));
        ts.structure = structure_name(so.hyp.structure);
        ts.k0 = kb_->surface(so.hyp.k0);
        ts.k1 = kb_->surface(so.hyp.k1);
        for (size_t i = 0; i < so.hyp.hyps.size(); ++i) {
            const auto& hy = so.hyp.hyps[i];
            TraceHyp th;
            th.structure = structure_name(hy.structure);
            th.k0 = kb_->surface(so.hyp.k0);
            th.k1 = kb_->surface(so.hyp.k1);
            th.head = kb_->surface(hy.triple.head);
            th.relation = kb_->surface(hy.triple.relation);
            th.tail = kb_->surface(hy.triple.tail);
            th.candidate = kb_->surface(hy.candidate);
            th.cp_prob = hy.cp_prob;
            if (i < so.beliefs.size()) {
                th.alpha = so.beliefs[i].value;
                th.best_depth = so.beliefs[i].best_depth;
                th.tree_id = static_cast<int>(sink.trees.size());
                sink.trees.push_back(tree_to_trace(so.trees[i], th.tree_id));
            }
            ts.hyps.push_back(std::move(th));
        }
        return ts;
    }

    TraceTree tree_to_trace(const ProofTreeT<S>& tree, int id) const {
        TraceTree tt;
        tt.id = id;
        tt.structure = structure_name(tree.structure);
        for (const auto& n : tree.nodes) {
            TraceTreeNode tn;
            tn.head = kb_->surface(n.decoded.head);
            tn.relation = kb_->surface(n.decoded.relation);
            tn.tail = kb_->surface(n.decoded.tail);
            tn.depth = n.depth;
            tn.left = n.left;
            tn.right = n.right;
            tt.nodes.push_back(std::move(tn));
        }
        return tt;
    }

    Config cfg_;
    const KnowledgeBase* kb_;
    const JointVocab* jv_;
    ParamStoreT<S> ps_;
    int emb_word_ = -1, u1_ = -1, u2_ = -1;
    EncoderT<S> encoder_;
    GRUCellT<S> dec_;
    HypothesisGenT<S> hyp_;
    ReasonerT<S> reasoner_;
    Ablation ablation_ = Ablation::Full;
    BeliefMode mode_ = BeliefMode::BestDepth;
};

using Model = ModelT<float>;

}  // namespace nsdial
