#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nsdial/rng.hpp"
#include "nsdial/tape.hpp"

namespace nsdial {

namespace detail {
template <class S>
void require_same_shape(const VarT<S>& a, const VarT<S>& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                                    " vs " + b.value().shape_str());
}
template <class S>
bool any_grad(std::initializer_list<const VarT<S>*> vs) {
    for (auto* v : vs)
        if (v->tape->needs_grad(v->idx)) return true;
    return false;
}
}  // namespace detail

template <class S>
VarT<S> add(VarT<S> a, VarT<S> b) {
    detail::require_same_shape(a, b, "add");
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    bool ng = detail::any_grad<S>({&a, &b});
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, bi](TapeT<S>& t, const TensorT<S>& g) {
                            t.add_grad(ai, g);
                            t.add_grad(bi, g);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
    detail::require_same_shape(a, b, "sub");
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    bool ng = detail::any_grad<S>({&a, &b});
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, bi](TapeT<S>& t, const TensorT<S>& g) {
                            t.add_grad(ai, g);
                            TensorT<S> nb(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i) nb[i] = -g[i];
                            t.add_grad(bi, nb);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
    detail::require_same_shape(a, b, "mul");
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    bool ng = detail::any_grad<S>({&a, &b});
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, bi](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& av = t.value(ai);
                            const auto& bv = t.value(bi);
                            TensorT<S> ga(g.shape), gb(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i) {
                                ga[i] = g[i] * bv[i];
                                gb[i] = g[i] * av[i];
                            }
                            t.add_grad(ai, ga);
                            t.add_grad(bi, gb);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// scalar var times vector var
template <class S>
VarT<S> smul(VarT<S> s, VarT<S> v) {
    if (s.value().numel() != 1) throw std::invalid_argument("smul: first arg must be scalar");
    S sv = s.value()[0];
    TensorT<S> out(v.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = sv * v.value()[i];
    bool ng = detail::any_grad<S>({&s, &v});
    int si = s.idx, vi = v.idx;
    return v.tape->push(std::move(out),
                        ng ? [si, vi](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& vv = t.value(vi);
                            S svv = t.value(si)[0];
                            S gs = S(0);
                            TensorT<S> gv(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i) {
                                gs += g[i] * vv[i];
                                gv[i] = g[i] * svv;
                            }
                            TensorT<S> gst({1});
                            gst[0] = gs;
                            t.add_grad(si, gst);
                            t.add_grad(vi, gv);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> scale(VarT<S> a, S c) {
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = c * a.value()[i];
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, c](TapeT<S>& t, const TensorT<S>& g) {
                            TensorT<S> ga(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = c * g[i];
                            t.add_grad(ai, ga);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// y = W x, W rank-2 (m x n), x rank-1 (n)
template <class S>
VarT<S> matvec(VarT<S> W, VarT<S> x) {
    const auto& wv = W.value();
    const auto& xv = x.value();
    if (wv.rank() != 2 || xv.rank() != 1 || wv.dim(1) != xv.dim(0))
        throw std::invalid_argument("matvec: shape mismatch " + wv.shape_str() + " vs " +
                                    xv.shape_str());
    int m = wv.dim(0), n = wv.dim(1);
    TensorT<S> out({m});
    for (int i = 0; i < m; ++i) {
        S acc = S(0);
        const S* wr = wv.data.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += wr[j] * xv[j];
        out[i] = acc;
    }
    bool ng = detail::any_grad<S>({&W, &x});
    int wi = W.idx, xi = x.idx;
    return W.tape->push(std::move(out),
                        ng ? [wi, xi, m, n](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& wv2 = t.value(wi);
                            const auto& xv2 = t.value(xi);
                            if (t.needs_grad(wi)) {
                                TensorT<S> gw({m, n});
                                for (int i = 0; i < m; ++i)
                                    for (int j = 0; j < n; ++j)
                                        gw.at(i, j) = g[i] * xv2[j];
                                t.add_grad(wi, gw);
                            }
                            if (t.needs_grad(xi)) {
                                TensorT<S> gx({n});
                                for (int i = 0; i < m; ++i) {
                                    const S* wr = wv2.data.data() + static_cast<size_t>(i) * n;
                                    for (int j = 0; j < n; ++j) gx[j] += g[i] * wr[j];
                                }
                                t.add_grad(xi, gx);
                            }
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// y = W^T x, W rank-2 (m x n), x rank-1 (m), y rank-1 (n)
template <class S>
VarT<S> matvec_t(VarT<S> W, VarT<S> x) {
    const auto& wv = W.value();
    const auto& xv = x.value();
    if (wv.rank() != 2 || xv.rank() != 1 || wv.dim(0) != xv.dim(0))
        throw std::invalid_argument("matvec_t: shape mismatch " + wv.shape_str() + " vs " +
                                    xv.shape_str());
    int m = wv.dim(0), n = wv.dim(1);
    TensorT<S> out({n});
    for (int i = 0; i < m; ++i) {
        const S* wr = wv.data.data() + static_cast<size_t>(i) * n;
        S xi_ = xv[i];
        if (xi_ == S(0)) continue;
        for (int j = 0; j < n; ++j) out[j] += xi_ * wr[j];
    }
    bool ng = detail::any_grad<S>({&W, &x});
    int wi = W.idx, xi = x.idx;
    return W.tape->push(std::move(out),
                        ng ? [wi, xi, m, n](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& wv2 = t.value(wi);
                            const auto& xv2 = t.value(xi);
                            if (t.needs_grad(wi)) {
                                TensorT<S> gw({m, n});
                                for (int i = 0; i < m; ++i)
                                    for (int j = 0; j < n; ++j)
                                        gw.at(i, j) = xv2[i] * g[j];
                                t.add_grad(wi, gw);
                            }
                            if (t.needs_grad(xi)) {
                                TensorT<S> gx({m});
                                for (int i = 0; i < m; ++i) {
                                    const S* wr = wv2.data.data() + static_cast<size_t>(i) * n;
                                    S acc = S(0);
                                    for (int j = 0; j < n; ++j) acc += wr[j] * g[j];
                                    gx[i] = acc;
                                }
                                t.add_grad(xi, gx);
                            }
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// y = W x (+ b)
template <class S>
VarT<S> linear(VarT<S> W, VarT<S> x) {
    return matvec(W, x);
}
template <class S>
VarT<S> linear(VarT<S> W, VarT<S> b, VarT<S> x) {
    return add(matvec(W, x), b);
}

// row i of a rank-2 var (embedding lookup)
template <class S>
VarT<S> row(VarT<S> W, int i) {
    const auto& wv = W.value();
    if (wv.rank() != 2 || i < 0 || i >= wv.dim(0))
        throw std::invalid_argument("row: index out of range");
    int n = wv.dim(1);
    TensorT<S> out({n});
    std::copy_n(wv.data.data() + static_cast<size_t>(i) * n, n, out.data.data());
    bool ng = W.tape->needs_grad(W.idx);
    int wi = W.idx;
    return W.tape->push(std::move(out),
                        ng ? [wi, i, n](TapeT<S>& t, const TensorT<S>& g) {
                            for (int j = 0; j < n; ++j)
                                t.add_grad_at(wi, static_cast<int64_t>(i) * n + j, g[j]);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// stack k rank-1 vars of equal length into a (k x n) matrix
template <class S>
VarT<S> stack_rows(const std::vector<VarT<S>>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    int n = rows[0].value().dim(0);
    int k = static_cast<int>(rows.size());
    TensorT<S> out({k, n});
    bool ng = false;
    std::vector<int> idxs(rows.size());
    for (int r = 0; r < k; ++r) {
        if (rows[static_cast<size_t>(r)].value().rank() != 1 ||
            rows[static_cast<size_t>(r)].value().dim(0) != n)
            throw std::invalid_argument("stack_rows: ragged input");
        std::copy_n(rows[static_cast<size_t>(r)].value().data.data(), n,
                    out.data.data() + static_cast<size_t>(r) * n);
        idxs[static_cast<size_t>(r)] = rows[static_cast<size_t>(r)].idx;
        ng = ng || rows[static_cast<size_t>(r)].tape->needs_grad(rows[static_cast<size_t>(r)].idx);
    }
    return rows[0].tape->push(std::move(out),
                              ng ? [idxs, n](TapeT<S>& t, const TensorT<S>& g) {
                                  for (size_t r = 0; r < idxs.size(); ++r) {
                                      TensorT<S> gr({n});
                                      std::copy_n(g.data.data() + r * static_cast<size_t>(n), n,
                                                  gr.data.data());
                                      t.add_grad(idxs[r], gr);
                                  }
                              } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                              ng);
}

template <class S>
VarT<S> concat(const std::vector<VarT<S>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty");
    int total = 0;
    for (const auto& p : parts) {
        if (p.value().rank() != 1) throw std::invalid_argument("concat: rank-1 only");
        total += p.value().dim(0);
    }
    TensorT<S> out({total});
    std::vector<int> idxs, lens;
    int off = 0;
    bool ng = false;
    for (const auto& p : parts) {
        int len = p.value().dim(0);
        std::copy_n(p.value().data.data(), len, out.data.data() + off);
        idxs.push_back(p.idx);
        lens.push_back(len);
        off += len;
        ng = ng || p.tape->needs_grad(p.idx);
    }
    return parts[0].tape->push(std::move(out),
                               ng ? [idxs, lens](TapeT<S>& t, const TensorT<S>& g) {
                                   int o = 0;
                                   for (size_t k = 0; k < idxs.size(); ++k) {
                                       TensorT<S> gp({lens[k]});
                                       std::copy_n(g.data.data() + o, lens[k], gp.data.data());
                                       t.add_grad(idxs[k], gp);
                                       o += lens[k];
                                   }
                               } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                               ng);
}

template <class S>
VarT<S> concat(VarT<S> a, VarT<S> b) {
    return concat(std::vector<VarT<S>>{a, b});
}

template <class S>
VarT<S> leaky_relu(VarT<S> a, S slope = S(0.01)) {
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = a.value()[i];
        out[i] = v >= S(0) ? v : slope * v;
    }
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, slope](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& av = t.value(ai);
                            TensorT<S> ga(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i)
                                ga[i] = av[i] >= S(0) ? g[i] : slope * g[i];
                            t.add_grad(ai, ga);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> sigmoid(VarT<S> a) {
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = static_cast<double>(a.value()[i]);
        out[i] = static_cast<S>(1.0 / (1.0 + std::exp(-v)));
    }
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    TensorT<S> saved = out;
    return a.tape->push(std::move(out),
                        ng ? [ai, saved](TapeT<S>& t, const TensorT<S>& g) {
                            TensorT<S> ga(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i)
                                ga[i] = g[i] * saved[i] * (S(1) - saved[i]);
                            t.add_grad(ai, ga);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> vtanh(VarT<S> a) {
    TensorT<S> out(a.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<S>(std::tanh(static_cast<double>(a.value()[i])));
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& av = t.value(ai);
                            TensorT<S> ga(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i) {
                                S y = static_cast<S>(std::tanh(static_cast<double>(av[i])));
                                ga[i] = g[i] * (S(1) - y * y);
                            }
                            t.add_grad(ai, ga);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> softmax(VarT<S> a) {
    const auto& av = a.value();
    if (av.rank() != 1) throw std::invalid_argument("softmax: rank-1 only");
    TensorT<S> out(av.shape);
    S mx = av[0];
    for (int64_t i = 1; i < av.numel(); ++i) mx = std::max(mx, av[i]);
    double z = 0;
    for (int64_t i = 0; i < av.numel(); ++i) {
        double e = std::exp(static_cast<double>(av[i] - mx));
        out[i] = static_cast<S>(e);
        z += e;
    }
    for (int64_t i = 0; i < av.numel(); ++i) out[i] = static_cast<S>(out[i] / z);
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    TensorT<S> saved = out;
    return a.tape->push(std::move(out),
                        ng ? [ai, saved](TapeT<S>& t, const TensorT<S>& g) {
                            S dot = S(0);
                            for (int64_t i = 0; i < g.numel(); ++i) dot += g[i] * saved[i];
                            TensorT<S> ga(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i)
                                ga[i] = saved[i] * (g[i] - dot);
                            t.add_grad(ai, ga);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

template <class S>
VarT<S> pick(VarT<S> a, int i) {
    const auto& av = a.value();
    if (av.rank() != 1 || i < 0 || i >= av.dim(0))
        throw std::invalid_argument("pick: index out of range");
    TensorT<S> out({1});
    out[0] = av[i];
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, i](TapeT<S>& t, const TensorT<S>& g) {
                            t.add_grad_at(ai, i, g[0]);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// -log(max(p[gold], floor)); zero slope inside the clamp
template <class S>
VarT<S> neg_log_pick_clamped(VarT<S> p, int gold, S floor = S(1e-12)) {
    const auto& pv = p.value();
    if (pv.rank() != 1 || gold < 0 || gold >= pv.dim(0))
        throw std::invalid_argument("neg_log_pick_clamped: index out of range");
    S pg = pv[gold];
    TensorT<S> out({1});
    out[0] = static_cast<S>(-std::log(static_cast<double>(std::max(pg, floor))));
    bool ng = p.tape->needs_grad(p.idx);
    int pi = p.idx;
    return p.tape->push(std::move(out),
                        ng ? [pi, gold, floor](TapeT<S>& t, const TensorT<S>& g) {
                            S pg2 = t.value(pi)[gold];
                            if (pg2 > floor) t.add_grad_at(pi, gold, -g[0] / pg2);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// mean over i of BCE(sigmoid(x_i), y_i), computed in the stable log1p form
template <class S>
VarT<S> mean_bce_with_logits(VarT<S> logits, const std::vector<S>& labels) {
    const auto& xv = logits.value();
    if (xv.rank() != 1 || static_cast<size_t>(xv.dim(0)) != labels.size())
        throw std::invalid_argument("mean_bce_with_logits: label count mismatch");
    int64_t n = xv.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double x = static_cast<double>(xv[i]), y = static_cast<double>(labels[static_cast<size_t>(i)]);
        acc += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    TensorT<S> out({1});
    out[0] = static_cast<S>(acc / static_cast<double>(n));
    bool ng = logits.tape->needs_grad(logits.idx);
    int xi = logits.idx;
    return logits.tape->push(std::move(out),
                             ng ? [xi, labels, n](TapeT<S>& t, const TensorT<S>& g) {
                                 const auto& xv2 = t.value(xi);
                                 TensorT<S> gx(xv2.shape);
                                 for (int64_t i = 0; i < n; ++i) {
                                     double x = static_cast<double>(xv2[i]);
                                     double s = 1.0 / (1.0 + std::exp(-x));
                                     gx[i] = static_cast<S>(
                                         g[0] * (s - static_cast<double>(labels[static_cast<size_t>(i)])) /
                                         static_cast<double>(n));
                                 }
                                 t.add_grad(xi, gx);
                             } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                             ng);
}

// y = softmax((logits + noise) / tau). hard=true emits the one-hot argmax but
// keeps the soft backward (straight-through).
template <class S>
VarT<S> gumbel_softmax(VarT<S> logits, S tau, const std::vector<S>& noise, bool hard = false) {
    const auto& lv = logits.value();
    if (lv.rank() != 1 || static_cast<size_t>(lv.dim(0)) != noise.size())
        throw std::invalid_argument("gumbel_softmax: noise length mismatch");
    if (tau <= S(0)) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
    int64_t n = lv.numel();
    TensorT<S> z({static_cast<int>(n)});
    for (int64_t i = 0; i < n; ++i) z[i] = (lv[i] + noise[static_cast<size_t>(i)]) / tau;
    S mx = z[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, z[i]);
    double zsum = 0;
    TensorT<S> soft(z.shape);
    for (int64_t i = 0; i < n; ++i) {
        double e = std::exp(static_cast<double>(z[i] - mx));
        soft[i] = static_cast<S>(e);
        zsum += e;
    }
    int64_t amax = 0;
    for (int64_t i = 0; i < n; ++i) {
        soft[i] = static_cast<S>(soft[i] / zsum);
        if (soft[i] > soft[amax]) amax = i;
    }
    TensorT<S> out = soft;
    if (hard) {
        out.fill(S(0));
        out[amax] = S(1);
    }
    bool ng = logits.tape->needs_grad(logits.idx);
    int li = logits.idx;
    return logits.tape->push(std::move(out),
                             ng ? [li, soft, tau](TapeT<S>& t, const TensorT<S>& g) {
                                 S dot = S(0);
                                 for (int64_t i = 0; i < g.numel(); ++i) dot += g[i] * soft[i];
                                 TensorT<S> gl(g.shape);
                                 for (int64_t i = 0; i < g.numel(); ++i)
                                     gl[i] = soft[i] * (g[i] - dot) / tau;
                                 t.add_grad(li, gl);
                             } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                             ng);
}

template <class S>
VarT<S> gumbel_softmax(VarT<S> logits, S tau, Rng& rng, bool hard = false) {
    std::vector<S> noise(static_cast<size_t>(logits.value().numel()));
    for (auto& v : noise) v = static_cast<S>(rng.gumbel());
    return gumbel_softmax(logits, tau, noise, hard);
}

// inverted dropout; identity when not training
template <class S>
VarT<S> dropout(VarT<S> x, S rate, Rng& rng, bool train) {
    if (!train || rate <= S(0)) return x;
    if (rate >= S(1)) throw std::invalid_argument("dropout: rate must be < 1");
    const auto& xv = x.value();
    std::vector<S> mask(static_cast<size_t>(xv.numel()));
    S keep = S(1) - rate;
    for (auto& m : mask) m = static_cast<S>(rng.uniform()) >= rate ? S(1) / keep : S(0);
    TensorT<S> out(xv.shape);
    for (int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * mask[static_cast<size_t>(i)];
    bool ng = x.tape->needs_grad(x.idx);
    int xi = x.idx;
    return x.tape->push(std::move(out),
                        ng ? [xi, mask](TapeT<S>& t, const TensorT<S>& g) {
                            TensorT<S> gx(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i)
                                gx[i] = g[i] * mask[static_cast<size_t>(i)];
                            t.add_grad(xi, gx);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// Euclidean distance between two equal-length vectors, as a scalar
template <class S>
VarT<S> euclid(VarT<S> a, VarT<S> b) {
    detail::require_same_shape(a, b, "euclid");
    double acc = 0;
    for (int64_t i = 0; i < a.value().numel(); ++i) {
        double d = static_cast<double>(a.value()[i]) - static_cast<double>(b.value()[i]);
        acc += d * d;
    }
    TensorT<S> out({1});
    out[0] = static_cast<S>(std::sqrt(acc));
    bool ng = detail::any_grad<S>({&a, &b});
    int ai = a.idx, bi = b.idx;
    return a.tape->push(std::move(out),
                        ng ? [ai, bi](TapeT<S>& t, const TensorT<S>& g) {
                            const auto& av = t.value(ai);
                            const auto& bv = t.value(bi);
                            double acc2 = 0;
                            for (int64_t i = 0; i < av.numel(); ++i) {
                                double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
                                acc2 += d * d;
                            }
                            double dist = std::sqrt(acc2);
                            if (dist <= 1e-12) return;  // subgradient 0 at coincident points
                            TensorT<S> ga(av.shape), gb(bv.shape);
                            for (int64_t i = 0; i < av.numel(); ++i) {
                                S v = static_cast<S>(g[0] * (av[i] - bv[i]) / dist);
                                ga[i] = v;
                                gb[i] = -v;
                            }
                            t.add_grad(ai, ga);
                            t.add_grad(bi, gb);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// e^{-x} elementwise
template <class S>
VarT<S> exp_neg(VarT<S> x) {
    TensorT<S> out(x.value().shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<S>(std::exp(-static_cast<double>(x.value()[i])));
    bool ng = x.tape->needs_grad(x.idx);
    int xi = x.idx;
    TensorT<S> saved = out;
    return x.tape->push(std::move(out),
                        ng ? [xi, saved](TapeT<S>& t, const TensorT<S>& g) {
                            TensorT<S> gx(g.shape);
                            for (int64_t i = 0; i < g.numel(); ++i) gx[i] = -g[i] * saved[i];
                            t.add_grad(xi, gx);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

// out[slot[k]] = max over k of scalar alphas[k]; untouched slots stay 0.
// Ties keep the earliest writer, and the gradient follows the kept one.
template <class S>
VarT<S> scatter_max(const std::vector<VarT<S>>& alphas, const std::vector<int>& slots, int n) {
    if (alphas.size() != slots.size()) throw std::invalid_argument("scatter_max: size mismatch");
    if (alphas.empty()) throw std::invalid_argument("scatter_max: empty");
    TensorT<S> out({n});
    std::vector<int> winner(static_cast<size_t>(n), -1);
    for (size_t k = 0; k < alphas.size(); ++k) {
        if (alphas[k].value().numel() != 1)
            throw std::invalid_argument("scatter_max: alphas must be scalars");
        int s = slots[k];
        if (s < 0 || s >= n) throw std::invalid_argument("scatter_max: slot out of range");
        S v = alphas[k].value()[0];
        if (winner[static_cast<size_t>(s)] < 0 || v > out[s]) {
            out[s] = v;
            winner[static_cast<size_t>(s)] = alphas[k].idx;
        }
    }
    bool ng = false;
    for (const auto& a : alphas) ng = ng || a.tape->needs_grad(a.idx);
    return alphas[0].tape->push(std::move(out),
                                ng ? [winner](TapeT<S>& t, const TensorT<S>& g) {
                                    for (size_t s = 0; s < winner.size(); ++s)
                                        if (winner[s] >= 0)
                                            t.add_grad_at(winner[s], 0, g[static_cast<int64_t>(s)]);
                                } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                                ng);
}

// out_j = p_gen * p_vocab_j [j < V]  +  (1 - p_gen) * sum_{kb2joint[i]=j} p_kb_i / sum(p_kb).
// When the KB channel carries no mass the vocab side passes through alone.
template <class S>
VarT<S> fuse_soft_switch(VarT<S> p_vocab, VarT<S> p_kb, VarT<S> p_gen,
                         const std::vector<int>& kb2joint, int joint_size) {
    const auto& vv = p_vocab.value();
    const auto& kv = p_kb.value();
    if (p_gen.value().numel() != 1) throw std::invalid_argument("fuse: p_gen must be scalar");
    int V = vv.dim(0);
    if (joint_size < V) throw std::invalid_argument("fuse: joint smaller than vocab");
    if (static_cast<size_t>(kv.dim(0)) != kb2joint.size())
        throw std::invalid_argument("fuse: kb map length mismatch");
    for (int j : kb2joint)
        if (j < 0 || j >= joint_size) throw std::invalid_argument("fuse: kb map out of range");
    double s = 0;
    for (int64_t i = 0; i < kv.numel(); ++i) s += static_cast<double>(kv[i]);
    S gate = p_gen.value()[0];
    TensorT<S> out({joint_size});
    if (s > 0) {
        for (int j = 0; j < V; ++j) out[j] = gate * vv[j];
        for (size_t i = 0; i < kb2joint.size(); ++i)
            out[kb2joint[i]] += static_cast<S>((1.0 - static_cast<double>(gate)) *
                                               static_cast<double>(kv[static_cast<int64_t>(i)]) / s);
    } else {
        for (int j = 0; j < V; ++j) out[j] = vv[j];
    }
    bool ng = detail::any_grad<S>({&p_vocab, &p_kb, &p_gen});
    int vi = p_vocab.idx, ki = p_kb.idx, gi = p_gen.idx;
    bool live = s > 0;
    double ssum = s;
    return p_vocab.tape->push(
        std::move(out),
        ng ? [vi, ki, gi, kb2joint, V, live, ssum](TapeT<S>& t, const TensorT<S>& g) {
            const auto& vv2 = t.value(vi);
            const auto& kv2 = t.value(ki);
            if (!live) {
                if (t.needs_grad(vi)) {
                    TensorT<S> gv(vv2.shape);
                    for (int j = 0; j < V; ++j) gv[j] = g[j];
                    t.add_grad(vi, gv);
                }
                return;  // degenerate branch: gate bypassed, kb all-zero
            }
            S gate2 = t.value(gi)[0];
            double B = 0;  // sum_j g_j * A_j / s == sum_i g_{m(i)} * k_i / s
            for (size_t i = 0; i < kb2joint.size(); ++i)
                B += static_cast<double>(g[kb2joint[i]]) *
                     static_cast<double>(kv2[static_cast<int64_t>(i)]) / ssum;
            if (t.needs_grad(vi)) {
                TensorT<S> gv(vv2.shape);
                for (int j = 0; j < V; ++j) gv[j] = g[j] * gate2;
                t.add_grad(vi, gv);
            }
            if (t.needs_grad(ki)) {
                TensorT<S> gk(kv2.shape);
                for (size_t i = 0; i < kb2joint.size(); ++i)
                    gk[static_cast<int64_t>(i)] = static_cast<S>(
                        (1.0 - static_cast<double>(gate2)) *
                        (static_cast<double>(g[kb2joint[i]]) - B) / ssum);
                t.add_grad(ki, gk);
            }
            if (t.needs_grad(gi)) {
                double dg = -B;
                for (int j = 0; j < V; ++j)
                    dg += static_cast<double>(g[j]) * static_cast<double>(vv2[j]);
                TensorT<S> gg({1});
                gg[0] = static_cast<S>(dg);
                t.add_grad(gi, gg);
            }
        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
        ng);
}

// Gate-free variant: raw sum of both channels renormalized to a distribution.
template <class S>
VarT<S> fuse_sum(VarT<S> p_vocab, VarT<S> p_kb, const std::vector<int>& kb2joint, int joint_size) {
    const auto& vv = p_vocab.value();
    const auto& kv = p_kb.value();
    int V = vv.dim(0);
    if (joint_size < V) throw std::invalid_argument("fuse_sum: joint smaller than vocab");
    if (static_cast<size_t>(kv.dim(0)) != kb2joint.size())
        throw std::invalid_argument("fuse_sum: kb map length mismatch");
    TensorT<S> r({joint_size});
    for (int j = 0; j < V; ++j) r[j] = vv[j];
    for (size_t i = 0; i < kb2joint.size(); ++i) {
        int j = kb2joint[i];
        if (j < 0 || j >= joint_size) throw std::invalid_argument("fuse_sum: kb map out of range");
        r[j] += kv[static_cast<int64_t>(i)];
    }
    double T = 0;
    for (int j = 0; j < joint_size; ++j) T += static_cast<double>(r[j]);
    if (T <= 0) throw std::invalid_argument("fuse_sum: no mass");
    TensorT<S> out({joint_size});
    for (int j = 0; j < joint_size; ++j) out[j] = static_cast<S>(r[j] / T);
    bool ng = detail::any_grad<S>({&p_vocab, &p_kb});
    int vi = p_vocab.idx, ki = p_kb.idx;
    TensorT<S> saved = out;
    return p_vocab.tape->push(
        std::move(out),
        ng ? [vi, ki, kb2joint, V, T, saved](TapeT<S>& t, const TensorT<S>& g) {
            double C = 0;
            for (int64_t j = 0; j < g.numel(); ++j)
                C += static_cast<double>(g[j]) * static_cast<double>(saved[j]);
            if (t.needs_grad(vi)) {
                TensorT<S> gv(t.value(vi).shape);
                for (int j = 0; j < V; ++j)
                    gv[j] = static_cast<S>((static_cast<double>(g[j]) - C) / T);
                t.add_grad(vi, gv);
            }
            if (t.needs_grad(ki)) {
                TensorT<S> gk(t.value(ki).shape);
                for (size_t i = 0; i < kb2joint.size(); ++i)
                    gk[static_cast<int64_t>(i)] =
                        static_cast<S>((static_cast<double>(g[kb2joint[i]]) - C) / T);
                t.add_grad(ki, gk);
            }
        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
        ng);
}

template <class S>
VarT<S> vsum(VarT<S> a) {
    S s = S(0);
    for (int64_t i = 0; i < a.value().numel(); ++i) s += a.value()[i];
    TensorT<S> out({1});
    out[0] = s;
    bool ng = a.tape->needs_grad(a.idx);
    int ai = a.idx;
    int64_t n = a.value().numel();
    return a.tape->push(std::move(out),
                        ng ? [ai, n](TapeT<S>& t, const TensorT<S>& g) {
                            TensorT<S> ga(t.value(ai).shape);
                            for (int64_t i = 0; i < n; ++i) ga[i] = g[0];
                            t.add_grad(ai, ga);
                        } : std::function<void(TapeT<S>&, const TensorT<S>&)>(),
                        ng);
}

}  // namespace nsdial
