#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "nsdial/hypothesis.hpp"
#include "nsdial/kb.hpp"
#include "nsdial/ops.hpp"

namespace nsdial {

// Nearest KB token to an embedding-space vector by squared Euclidean
// distance; ties go to the smaller id.
template <class S>
int decode_vector(const TensorT<S>& h, const KnowledgeBase& kb, const TensorT<S>& emb,
                  std::optional<TokenKind> kind_filter = std::nullopt) {
    if (emb.rank() != 2 || emb.dim(0) != kb.n_tokens() || h.numel() != emb.dim(1))
        throw std::invalid_argument("decode_vector: table/vector shape mismatch");
    int d = emb.dim(1);
    int best = -1;
    double best_d = 0;
    for (int i = 0; i < kb.n_tokens(); ++i) {
        if (kind_filter && kb.kind(i) != *kind_filter) continue;
        const S* r = emb.data.data() + static_cast<size_t>(i) * d;
        double acc = 0;
        for (int j = 0; j < d; ++j) {
            double diff = static_cast<double>(h[j]) - static_cast<double>(r[j]);
            acc += diff * diff;
        }
        if (best < 0 || acc < best_d) {
            best = i;
            best_d = acc;
        }
    }
    if (best < 0) throw std::runtime_error("decode_vector: no token of requested kind");
    return best;
}

template <class S>
struct ProofNodeT {
    VarT<S> h_head, h_rel, h_tail;
    Triple decoded{-1, -1, -1};
    int depth = 0;
    int left = -1, right = -1;  // child indices, -1 at the frontier
};

template <class S>
struct ProofTreeT {
    std::vector<ProofNodeT<S>> nodes;       // preorder (DFS)
    std::vector<std::vector<int>> levels;   // depth -> node indices, DFS order
    int depth_limit = 1;
    StructureType structure = StructureType::H;
    int candidate = -1;
    float cp_prob = 0;
};

enum class BeliefMode { FixedDepth, BestDepth };

template <class S>
struct BeliefResultT {
    VarT<S> alpha;      // scalar, on tape through the achieved min-max branch
    float value = 0;
    int best_depth = 0;
    // (node index, nearest kb triple index, distance) over the scored frontier
    std::vector<std::tuple<int, int, float>> per_leaf_best;
};

// Expands hypotheses into binary proof trees through predicted bridge
// entities and relations, then scores the tree frontier against the KB.
template <class S>
struct ReasonerT {
    int w5z = -1, w6z = -1, w5r1 = -1, w6r1 = -1, w5r2 = -1, w6r2 = -1;
    int emb_cp = -1;  // shared with the hypothesis generator
    int hid = 0;

    ReasonerT() = default;
    ReasonerT(ParamStoreT<S>& ps, const std::string& prefix, int hidden, int emb_cp_param,
              Rng& rng) : emb_cp(emb_cp_param), hid(hidden) {
        S a = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hidden)));
        w5z = ps.add_uniform(prefix + ".w5z", {hidden, 3 * hidden}, rng, a);
        w6z = ps.add_uniform(prefix + ".w6z", {hidden, hidden}, rng, a);
        w5r1 = ps.add_uniform(prefix + ".w5r1", {hidden, 3 * hidden}, rng, a);
        w6r1 = ps.add_uniform(prefix + ".w6r1", {hidden, hidden}, rng, a);
        w5r2 = ps.add_uniform(prefix + ".w5r2", {hidden, 3 * hidden}, rng, a);
        w6r2 = ps.add_uniform(prefix + ".w6r2", {hidden, hidden}, rng, a);
    }

    ProofTreeT<S> build_proof_tree(TapeT<S>& t, ParamStoreT<S>& ps,
                                   const SynthesizedHypT<S>& hyp, int depth_limit,
                                   const KnowledgeBase& kb) const {
        if (depth_limit < 1 || depth_limit > 5)
            throw std::invalid_argument("reasoner: depth limit outside [1,5]");
        ProofTreeT<S> tree;
        tree.depth_limit = depth_limit;
        tree.structure = hyp.structure;
        tree.candidate = hyp.candidate;
        tree.cp_prob = hyp.cp_prob;
        tree.levels.resize(static_cast<size_t>(depth_limit) + 1);
        const auto& embv = t.param(ps, emb_cp).value();

        ProofNodeT<S> root;
        root.h_head = hyp.h_head;
        root.h_rel = hyp.h_rel;
        root.h_tail = hyp.h_tail;
        root.decoded = hyp.triple;
        root.depth = 0;
        tree.nodes.push_back(root);
        tree.levels[0].push_back(0);
        expand_rec(t, ps, tree, 0, depth_limit, kb, embv);
        return tree;
    }

    BeliefResultT<S> belief_score(TapeT<S>& t, ParamStoreT<S>& ps, const ProofTreeT<S>& tree,
                                  const KnowledgeBase& kb, BeliefMode mode) const {
        if (kb.n_triples() == 0) throw std::invalid_argument("reasoner: empty KB");
        const auto& embv = t.param(ps, emb_cp).value();
        int d = embv.dim(1);
        int D = tree.depth_limit;

        // raw scan for the achieved min-max branch; doubles keep comparisons stable
        auto node_vec = [&](const ProofNodeT<S>& n, std::vector<double>& out) {
            out.resize(static_cast<size_t>(3 * d));
            for (int j = 0; j < d; ++j) {
                out[static_cast<size_t>(j)] = static_cast<double>(n.h_head.value()[j]);
                out[static_cast<size_t>(d + j)] = static_cast<double>(n.h_rel.value()[j]);
                out[static_cast<size_t>(2 * d + j)] = static_cast<double>(n.h_tail.value()[j]);
            }
        };
        auto nearest = [&](const std::vector<double>& v) {
            int bj = -1;
            double bd = 0;
            for (int j = 0; j < kb.n_triples(); ++j) {
                const Triple& tr = kb.triples()[static_cast<size_t>(j)];
                const S* eh = embv.data.data() + static_cast<size_t>(tr.head) * d;
                const S* er = embv.data.data() + static_cast<size_t>(tr.relation) * d;
                const S* et = embv.data.data() + static_cast<size_t>(tr.tail) * d;
                double acc = 0;
                for (int k = 0; k < d; ++k) {
                    double x = v[static_cast<size_t>(k)] - static_cast<double>(eh[k]);
                    acc += x * x;
                }
                for (int k = 0; k < d; ++k) {
                    double x = v[static_cast<size_t>(d + k)] - static_cast<double>(er[k]);
                    acc += x * x;
                }
                for (int k = 0; k < d; ++k) {
                    double x = v[static_cast<size_t>(2 * d + k)] - static_cast<double>(et[k]);
                    acc += x * x;
                }
                if (bj < 0 || acc < bd) {
                    bj = j;
                    bd = acc;
                }
            }
            return std::make_pair(bj, std::sqrt(bd));
        };

        int lo = mode == BeliefMode::FixedDepth ? D : 0;
        int best_level = -1, achieved_node = -1, achieved_kb = -1;
        double best_worst = 0;
        std::vector<std::tuple<int, int, float>> best_leaf_info;
        std::vector<double> buf;
        for (int lvl = lo; lvl <= D; ++lvl) {
            double worst = -1;
            int worst_node = -1, worst_kb = -1;
            std::vector<std::tuple<int, int, float>> info;
            for (int ni : tree.levels[static_cast<size_t>(lvl)]) {
                node_vec(tree.nodes[static_cast<size_t>(ni)], buf);
                auto [j, dist] = nearest(buf);
                info.emplace_back(ni, j, static_cast<float>(dist));
                if (dist > worst) {
                    worst = dist;
                    worst_node = ni;
                    worst_kb = j;
                }
            }
            if (best_level < 0 || worst < best_worst) {
                best_level = lvl;
                best_worst = worst;
                achieved_node = worst_node;
                achieved_kb = worst_kb;
                best_leaf_info = std::move(info);
            }
        }

        const ProofNodeT<S>& n = tree.nodes[static_cast<size_t>(achieved_node)];
        const Triple& tr = kb.triples()[static_cast<size_t>(achieved_kb)];
        auto embt = t.param(ps, emb_cp);
        auto leaf = concat(std::vector<VarT<S>>{n.h_head, n.h_rel, n.h_tail});
        auto fact = concat(std::vector<VarT<S>>{row(embt, tr.head), row(embt, tr.relation),
                                                row(embt, tr.tail)});
        BeliefResultT<S> res;
        res.alpha = exp_neg(euclid(leaf, fact));
        res.value = static_cast<float>(res.alpha.value()[0]);
        res.best_depth = best_level;
        res.per_leaf_best = std::move(best_leaf_info);
        return res;
    }

private:
    void expand_rec(TapeT<S>& t, ParamStoreT<S>& ps, ProofTreeT<S>& tree, int idx, int D,
                    const KnowledgeBase& kb, const TensorT<S>& embv) const {
        if (tree.nodes[static_cast<size_t>(idx)].depth >= D) return;
        auto head = tree.nodes[static_cast<size_t>(idx)].h_head;
        auto rel = tree.nodes[static_cast<size_t>(idx)].h_rel;
        auto tail = tree.nodes[static_cast<size_t>(idx)].h_tail;
        auto ctx = concat(std::vector<VarT<S>>{head, rel, tail});
        auto private_head = [&](int wa, int wb) {
            return matvec(t.param(ps, wb), leaky_relu(matvec(t.param(ps, wa), ctx)));
        };
        auto h_z = private_head(w5z, w6z);
        auto h_r1 = private_head(w5r1, w6r1);
        auto h_r2 = private_head(w5r2, w6r2);
        int z_tok = decode_vector(h_z.value(), kb, embv, TokenKind::Entity);
        int r1_tok = decode_vector(h_r1.value(), kb, embv, TokenKind::Relation);
        int r2_tok = decode_vector(h_r2.value(), kb, embv, TokenKind::Relation);
        int depth = tree.nodes[static_cast<size_t>(idx)].depth;
        const Triple parent_decoded = tree.nodes[static_cast<size_t>(idx)].decoded;

        ProofNodeT<S> left;
        left.h_head = head;
        left.h_rel = h_r1;
        left.h_tail = h_z;
        left.decoded = {parent_decoded.head, r1_tok, z_tok};
        left.depth = depth + 1;
        int li = static_cast<int>(tree.nodes.size());
        tree.nodes[static_cast<size_t>(idx)].left = li;
        tree.nodes.push_back(left);
        tree.levels[static_cast<size_t>(depth + 1)].push_back(li);
        expand_rec(t, ps, tree, li, D, kb, embv);

        ProofNodeT<S> right;
        right.h_head = h_z;
        right.h_rel = h_r2;
        right.h_tail = tail;
        right.decoded = {z_tok, r2_tok, parent_decoded.tail};
        right.depth = depth + 1;
        int ri = static_cast<int>(tree.nodes.size());
        tree.nodes[static_cast<size_t>(idx)].right = ri;
        tree.nodes.push_back(right);
        tree.levels[static_cast<size_t>(depth + 1)].push_back(ri);
        expand_rec(t, ps, tree, ri, D, kb, embv);
    }
};

// Candidate tokens paired with their tree's belief; colliding candidates keep
// the larger score. Empty hypothesis set yields an all-zero channel.
template <class S>
VarT<S> kb_distribution(TapeT<S>& t, const std::vector<SynthesizedHypT<S>>& hyps,
                        const std::vector<BeliefResultT<S>>& beliefs, int n_kb) {
    if (hyps.size() != beliefs.size())
        throw std::invalid_argument("kb_distribution: hypothesis/belief length mismatch");
    if (hyps.empty()) return t.constant(TensorT<S>({n_kb}));
    std::vector<VarT<S>> alphas;
    std::vector<int> slots;
    for (size_t i = 0; i < hyps.size(); ++i) {
        alphas.push_back(beliefs[i].alpha);
        slots.push_back(hyps[i].candidate);
    }
    return scatter_max(alphas, slots, n_kb);
}

}  // namespace nsdial
