#pragma once

#include <cmath>
#include <string>

#include "nsdial/ops.hpp"

namespace nsdial {

// Standard gated recurrent cell. Weight names are stable for checkpoints.
template <class S>
struct GRUCellT {
    int wz = -1, wr = -1, wn = -1, uz = -1, ur = -1, un = -1, bz = -1, br = -1, bn = -1;

    GRUCellT() = default;
    GRUCellT(ParamStoreT<S>& ps, const std::string& prefix, int in_dim, int hid, Rng& rng) {
        S a = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hid)));
        wz = ps.add_uniform(prefix + ".wz", {hid, in_dim}, rng, a);
        wr = ps.add_uniform(prefix + ".wr", {hid, in_dim}, rng, a);
        wn = ps.add_uniform(prefix + ".wn", {hid, in_dim}, rng, a);
        uz = ps.add_uniform(prefix + ".uz", {hid, hid}, rng, a);
        ur = ps.add_uniform(prefix + ".ur", {hid, hid}, rng, a);
        un = ps.add_uniform(prefix + ".un", {hid, hid}, rng, a);
        bz = ps.add_uniform(prefix + ".bz", {hid}, rng, a);
        br = ps.add_uniform(prefix + ".br", {hid}, rng, a);
        bn = ps.add_uniform(prefix + ".bn", {hid}, rng, a);
    }

    VarT<S> step(TapeT<S>& t, ParamStoreT<S>& ps, VarT<S> x, VarT<S> h) const {
        auto z = sigmoid(add(add(matvec(t.param(ps, wz), x), matvec(t.param(ps, uz), h)),
                             t.param(ps, bz)));
        auto r = sigmoid(add(add(matvec(t.param(ps, wr), x), matvec(t.param(ps, ur), h)),
                             t.param(ps, br)));
        auto n = vtanh(add(add(matvec(t.param(ps, wn), x), mul(r, matvec(t.param(ps, un), h))),
                           t.param(ps, bn)));
        return add(n, mul(z, sub(h, n)));  // (1-z)n + zh
    }
};

}  // namespace nsdial
