#pragma once

#include <functional>

#include "nsdial/reasoner.hpp"

namespace testutil {

// Complete binary proof tree with random node vectors, preorder with DFS
// level lists, matching the builder's layout.
template <class S>
nsdial::ProofTreeT<S> random_tree(nsdial::TapeT<S>& t, nsdial::Rng& rng, int depth, int dim,
                                  double spread) {
    using nsdial::ProofNodeT;
    using nsdial::ProofTreeT;
    using nsdial::TensorT;
    ProofTreeT<S> tree;
    tree.depth_limit = depth;
    tree.levels.resize(static_cast<size_t>(depth) + 1);
    auto mkv = [&] {
        TensorT<S> v({dim});
        for (int i = 0; i < dim; ++i) v[i] = static_cast<S>(rng.uniform(-spread, spread));
        return t.constant(std::move(v));
    };
    std::function<int(int)> build = [&](int d) {
        int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(ProofNodeT<S>{});
        tree.nodes[static_cast<size_t>(idx)].h_head = mkv();
        tree.nodes[static_cast<size_t>(idx)].h_rel = mkv();
        tree.nodes[static_cast<size_t>(idx)].h_tail = mkv();
        tree.nodes[static_cast<size_t>(idx)].depth = d;
        tree.levels[static_cast<size_t>(d)].push_back(idx);
        if (d < depth) {
            int l = build(d + 1);
            int r = build(d + 1);
            tree.nodes[static_cast<size_t>(idx)].left = l;
            tree.nodes[static_cast<size_t>(idx)].right = r;
        }
        return idx;
    };
    build(0);
    return tree;
}

// Copy of the tree with every node's (head, rel, tail) moved halfway toward
// its nearest KB triple's embeddings: every node distance shrinks.
template <class S>
nsdial::ProofTreeT<S> contract_tree(nsdial::TapeT<S>& t, const nsdial::ProofTreeT<S>& tree,
                                    const nsdial::KnowledgeBase& kb,
                                    const nsdial::TensorT<S>& emb) {
    using nsdial::TensorT;
    int dim = emb.dim(1);
    auto tree2 = tree;
    for (auto& n : tree2.nodes) {
        const auto& h = n.h_head.value();
        const auto& r = n.h_rel.value();
        const auto& tl = n.h_tail.value();
        int best = -1;
        double best_d = 0;
        for (int ti = 0; ti < kb.n_triples(); ++ti) {
            const auto& tr = kb.triples()[static_cast<size_t>(ti)];
            double acc = 0;
            for (int j = 0; j < dim; ++j) {
                double dh = h[j] - emb[tr.head * dim + j];
                double dr = r[j] - emb[tr.relation * dim + j];
                double dt = tl[j] - emb[tr.tail * dim + j];
                acc += dh * dh + dr * dr + dt * dt;
            }
            if (best < 0 || acc < best_d) {
                best = ti;
                best_d = acc;
            }
        }
        const auto& tr = kb.triples()[static_cast<size_t>(best)];
        TensorT<S> nh({dim}), nr({dim}), nt({dim});
        for (int j = 0; j < dim; ++j) {
            nh[j] = static_cast<S>(emb[tr.head * dim + j] + 0.5 * (h[j] - emb[tr.head * dim + j]));
            nr[j] = static_cast<S>(emb[tr.relation * dim + j] +
                                   0.5 * (r[j] - emb[tr.relation * dim + j]));
            nt[j] = static_cast<S>(emb[tr.tail * dim + j] + 0.5 * (tl[j] - emb[tr.tail * dim + j]));
        }
        n.h_head = t.constant(std::move(nh));
        n.h_rel = t.constant(std::move(nr));
        n.h_tail = t.constant(std::move(nt));
    }
    return tree2;
}

}  // namespace testutil
