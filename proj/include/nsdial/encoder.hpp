#pragma once

#include <vector>

#include "nsdial/layers.hpp"
#include "nsdial/vocab.hpp"

namespace nsdial {

template <class S>
struct EncoderOutT {
    VarT<S> h_cls_proj;  // projected sentinel state, decoder init
    VarT<S> states_proj; // (M+1) x hidden matrix
    int n_states = 0;
};

// Two recurrent passes over the history with a sentinel token in front; the
// concatenated states are projected down to the decoder width. The sentinel's
// backward-direction state sees the whole sequence, giving the summary the
// decoder is initialized from.
template <class S>
struct EncoderT {
    GRUCellT<S> fwd, bwd;
    int proj = -1;  // hidden x 2*hidden
    int hid = 0;

    EncoderT() = default;
    EncoderT(ParamStoreT<S>& ps, const std::string& prefix, int emb_dim, int hidden, Rng& rng)
        : fwd(ps, prefix + ".fwd", emb_dim, hidden, rng),
          bwd(ps, prefix + ".bwd", emb_dim, hidden, rng),
          hid(hidden) {
        S a = static_cast<S>(1.0 / std::sqrt(static_cast<double>(2 * hidden)));
        proj = ps.add_uniform(prefix + ".proj", {hidden, 2 * hidden}, rng, a);
    }

    // token_ids are rows of the word embedding table; a sentinel row is
    // prepended here.
    EncoderOutT<S> encode(TapeT<S>& t, ParamStoreT<S>& ps, int emb_param,
                          const std::vector<int>& token_ids, S drop_rate, Rng& rng,
                          bool train) const {
        if (token_ids.empty()) throw std::invalid_argument("encoder: empty history");
        auto embt = t.param(ps, emb_param);
        int n_rows = embt.value().dim(0);
        std::vector<VarT<S>> xs;
        xs.push_back(row(embt, Vocabulary::kCls));
        for (int id : token_ids) {
            if (id < 0 || id >= n_rows) throw std::out_of_range("encoder: token id out of table");
            xs.push_back(row(embt, id));
        }
        if (train && drop_rate > S(0))
            for (auto& x : xs) x = dropout(x, drop_rate, rng, true);

        int m = static_cast<int>(xs.size());
        auto h0 = t.constant(TensorT<S>({hid}));
        std::vector<VarT<S>> hf(static_cast<size_t>(m)), hb(static_cast<size_t>(m));
        VarT<S> h = h0;
        for (int i = 0; i < m; ++i) {
            h = fwd.step(t, ps, xs[static_cast<size_t>(i)], h);
            hf[static_cast<size_t>(i)] = h;
        }
        h = h0;
        for (int i = m - 1; i >= 0; --i) {
            h = bwd.step(t, ps, xs[static_cast<size_t>(i)], h);
            hb[static_cast<size_t>(i)] = h;
        }
        auto pw = t.param(ps, proj);
        std::vector<VarT<S>> projected(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i)
            projected[static_cast<size_t>(i)] =
                matvec(pw, concat(hf[static_cast<size_t>(i)], hb[static_cast<size_t>(i)]));
        EncoderOutT<S> out;
        out.h_cls_proj = projected[0];
        out.states_proj = stack_rows(projected);
        out.n_states = m;
        return out;
    }
};

template <class S>
struct DecoderStepT {
    VarT<S> h_dec;
    VarT<S> h_attn;
    VarT<S> context;  // [h_dec, h_attn]
    VarT<S> weights;  // attention over encoder states
};

// Dot attention over the projected encoder states.
template <class S>
DecoderStepT<S> attend(TapeT<S>& t, VarT<S> h_dec, const EncoderOutT<S>& enc) {
    (void)t;
    auto scores = matvec(enc.states_proj, h_dec);
    auto w = softmax(scores);
    auto h_attn = matvec_t(enc.states_proj, w);
    DecoderStepT<S> step;
    step.h_dec = h_dec;
    step.h_attn = h_attn;
    step.context = concat(h_dec, h_attn);
    step.weights = w;
    return step;
}

}  // namespace nsdial
