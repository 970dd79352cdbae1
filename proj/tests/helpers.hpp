#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "nsdial/ops.hpp"

namespace testutil {

using D = double;
using PSD = nsdial::ParamStoreT<D>;
using TapeD = nsdial::TapeT<D>;
using VarD = nsdial::VarT<D>;

// Builds the loss on a fresh tape from the store's current values. Must be
// deterministic in the values (reseed any rng inside).
using LossFn = std::function<VarD(TapeD&, PSD&)>;

inline double eval_loss(const LossFn& f, PSD& ps) {
    TapeD t;
    return f(t, ps).value()[0];
}

// Central finite differences against the tape gradients, every element of
// every parameter.
inline void check_grads(PSD& ps, const LossFn& f, double tol = 1e-3, double h = 1e-6) {
    TapeD t;
    VarD loss = f(t, ps);
    ps.zero_grads();
    t.backward(loss);
    std::vector<std::vector<D>> analytic(static_cast<size_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i) analytic[static_cast<size_t>(i)] = ps.grad(i).data;
    int checked = 0;
    for (int i = 0; i < ps.size(); ++i) {
        auto& e = ps.entry(i);
        for (int64_t k = 0; k < e.value.numel(); ++k) {
            D keep = e.value[k];
            e.value[k] = keep + h;
            double fp = eval_loss(f, ps);
            e.value[k] = keep - h;
            double fm = eval_loss(f, ps);
            e.value[k] = keep;
            double fd = (fp - fm) / (2 * h);
            double an = analytic[static_cast<size_t>(i)][static_cast<size_t>(k)];
            double denom = std::max({1e-6, std::abs(fd), std::abs(an)});
            INFO(e.name << "[" << k << "] analytic=" << an << " fd=" << fd);
            REQUIRE(std::abs(an - fd) / denom < tol);
            ++checked;
        }
    }
    REQUIRE(checked > 0);
}

}  // namespace testutil
