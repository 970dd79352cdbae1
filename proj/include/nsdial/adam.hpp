#pragma once

#include <cmath>
#include <stdexcept>

#include "nsdial/tape.hpp"

namespace nsdial {

// Global-norm clip over every gradient in the store. Returns the pre-clip norm.
template <class S>
double clip_grad_norm(ParamStoreT<S>& store, double max_norm) {
    double sq = 0;
    for (int i = 0; i < store.size(); ++i) {
        const auto& g = store.grad(i);
        for (int64_t k = 0; k < g.numel(); ++k) sq += static_cast<double>(g[k]) * g[k];
    }
    double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        S sc = static_cast<S>(max_norm / norm);
        for (int i = 0; i < store.size(); ++i) {
            auto& g = store.entry(i).grad;
            for (int64_t k = 0; k < g.numel(); ++k) g[k] *= sc;
        }
    }
    return norm;
}

template <class S>
class AdamT {
public:
    AdamT(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        if (lr <= S(0)) throw std::invalid_argument("adam: lr must be > 0");
    }

    void step(ParamStoreT<S>& store) {
        ++t_;
        double bc1 = 1.0 - std::pow(static_cast<double>(b1_), t_);
        double bc2 = 1.0 - std::pow(static_cast<double>(b2_), t_);
        for (int i = 0; i < store.size(); ++i) {
            auto& e = store.entry(i);
            for (int64_t k = 0; k < e.value.numel(); ++k) {
                double g = static_cast<double>(e.grad[k]);
                double m = static_cast<double>(b1_) * e.m[k] + (1.0 - static_cast<double>(b1_)) * g;
                double v = static_cast<double>(b2_) * e.v[k] + (1.0 - static_cast<double>(b2_)) * g * g;
                e.m[k] = static_cast<S>(m);
                e.v[k] = static_cast<S>(v);
                double mhat = m / bc1;
                double vhat = v / bc2;
                e.value[k] -= static_cast<S>(static_cast<double>(lr_) * mhat /
                                             (std::sqrt(vhat) + static_cast<double>(eps_)));
            }
        }
    }

    int64_t steps() const { return t_; }
    S lr() const { return lr_; }
    void set_lr(S lr) {
        if (lr <= S(0)) throw std::invalid_argument("adam: lr must be > 0");
        lr_ = lr;
    }

private:
    S lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace nsdial
