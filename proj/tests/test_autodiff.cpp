#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "nsdial/ops.hpp"

using namespace nsdial;
using testutil::check_grads;
using testutil::PSD;
using testutil::TapeD;
using testutil::VarD;

TEST_CASE("elementwise op gradients", "[autodiff]") {
    PSD ps;
    Rng rng(3);
    ps.add_uniform("a", {4}, rng, 0.5);
    ps.add_uniform("b", {4}, rng, 0.5);
    ps.add_uniform("s", {1}, rng, 0.5);
    check_grads(ps, [](TapeD& t, PSD& p) {
        auto a = t.param(p, 0), b = t.param(p, 1), s = t.param(p, 2);
        auto x = mul(add(a, b), sub(a, scale(b, 0.7)));
        return vsum(add(x, smul(s, a)));
    });
}

TEST_CASE("matrix op gradients", "[autodiff]") {
    PSD ps;
    Rng rng(5);
    ps.add_uniform("W", {3, 4}, rng, 0.5);
    ps.add_uniform("x", {4}, rng, 0.5);
    ps.add_uniform("u", {3}, rng, 0.5);
    ps.add_uniform("bias", {3}, rng, 0.5);
    ps.add_uniform("E", {5, 2}, rng, 0.5);
    check_grads(ps, [](TapeD& t, PSD& p) {
        auto W = t.param(p, 0), x = t.param(p, 1), u = t.param(p, 2);
        auto bias = t.param(p, 3), E = t.param(p, 4);
        auto parts = concat(std::vector<VarD>{linear(W, bias, x), matvec_t(W, u), row(E, 2)});
        auto stacked = matvec(stack_rows(std::vector<VarD>{row(E, 0), row(E, 3)}), row(E, 1));
        return add(vsum(vtanh(parts)), vsum(stacked));
    });
}

TEST_CASE("activation gradients and values", "[autodiff]") {
    PSD ps;
    int zid = ps.add("z", {4});
    ps.value(zid).data = {-0.4, -0.2, 0.3, 0.5};  // clear of the leaky kink
    check_grads(ps, [](TapeD& t, PSD& p) {
        auto z = t.param(p, 0);
        auto l = vsum(leaky_relu(z));
        auto s = vsum(sigmoid(z));
        auto y = pick(softmax(z), 1);
        return add(add(l, scale(s, 0.5)), y);
    });

    TapeD t;
    auto z = t.input(nsdial::TensorT<double>::vec({0.0, -1.0, 1.0}));
    REQUIRE(sigmoid(z).value()[0] == Catch::Approx(0.5));
    REQUIRE(leaky_relu(z).value()[1] == Catch::Approx(-0.01));
    REQUIRE(vtanh(z).value()[0] == 0.0);
    auto sm = softmax(t.input(nsdial::TensorT<double>::vec({2.0, 2.0, 2.0})));
    for (int i = 0; i < 3; ++i) REQUIRE(sm.value()[i] == Catch::Approx(1.0 / 3));
}

TEST_CASE("nll and bce gradients", "[autodiff]") {
    PSD ps;
    Rng rng(9);
    ps.add_uniform("z", {4}, rng, 1.0);
    std::vector<double> labels{0.0, 1.0, 0.5, 1.0};
    check_grads(ps, [labels](TapeD& t, PSD& p) {
        auto z = t.param(p, 0);
        auto nll = neg_log_pick_clamped(softmax(z), 2);
        return add(nll, mean_bce_with_logits(z, labels));
    });

    TapeD t;
    auto zero = t.input(nsdial::TensorT<double>::vec({0.0}));
    REQUIRE(mean_bce_with_logits(zero, {0.5}).value()[0] == Catch::Approx(std::log(2.0)));
}

TEST_CASE("nll clamp floor engages", "[autodiff]") {
    PSD ps;
    int zid = ps.add("z", {3});
    ps.value(zid).data = {50.0, 0.0, -50.0};
    TapeD t;
    auto loss = neg_log_pick_clamped(softmax(t.param(ps, 0)), 2);
    REQUIRE(loss.value()[0] == Catch::Approx(-std::log(1e-12)));
    ps.zero_grads();
    t.backward(loss);
    for (int k = 0; k < 3; ++k) REQUIRE(ps.grad(0)[k] == 0.0);
}

TEST_CASE("gumbel softmax with fixed noise", "[autodiff]") {
    PSD ps;
    Rng rng(13);
    ps.add_uniform("z", {3}, rng, 1.0);
    std::vector<double> noise{0.3, -0.1, 0.7};
    check_grads(ps, [noise](TapeD& t, PSD& p) {
        auto y = gumbel_softmax(t.param(p, 0), 0.5, noise);
        return pick(y, 0);
    });

    // hard mode: one-hot forward, soft backward
    TapeD t;
    auto z = t.param(ps, 0);
    auto hard = gumbel_softmax(z, 0.5, noise, true);
    double total = 0;
    int ones = 0;
    for (int i = 0; i < 3; ++i) {
        total += hard.value()[i];
        ones += hard.value()[i] == 1.0 ? 1 : 0;
    }
    REQUIRE(total == 1.0);
    REQUIRE(ones == 1);
    ps.zero_grads();
    t.backward(pick(hard, 0));
    auto hard_grad = ps.grad(0).data;

    TapeD t2;
    auto soft = gumbel_softmax(t2.param(ps, 0), 0.5, noise, false);
    ps.zero_grads();
    t2.backward(pick(soft, 0));
    for (int k = 0; k < 3; ++k) REQUIRE(hard_grad[static_cast<size_t>(k)] == ps.grad(0)[k]);

    REQUIRE_THROWS(gumbel_softmax(z, 0.0, noise));
}

TEST_CASE("gumbel argmax matches softmax frequencies", "[autodiff]") {
    // P(argmax = i) under Gumbel noise equals softmax(logits)_i
    nsdial::Tape t;
    auto z = t.input(nsdial::Tensor::vec({std::log(2.0f), 0.0f}));
    Rng rng(77);
    const int n = 10000;
    int hits = 0;
    for (int d = 0; d < n; ++d) {
        auto y = gumbel_softmax(z, 0.1f, rng);
        if (y.value()[0] > y.value()[1]) ++hits;
    }
    REQUIRE(std::abs(hits / double(n) - 2.0 / 3.0) < 0.02);
}

TEST_CASE("dropout gradients and eval identity", "[autodiff]") {
    PSD ps;
    Rng init(21);
    ps.add_uniform("x", {8}, init, 0.5);
    check_grads(ps, [](TapeD& t, PSD& p) {
        Rng rng(100);  // fixed mask across finite-difference evals
        auto d = dropout(t.param(p, 0), 0.5, rng, true);
        return vsum(d);
    });
    TapeD t;
    Rng rng(100);
    auto x = t.param(ps, 0);
    auto same = dropout(x, 0.5, rng, false);
    REQUIRE(same.idx == x.idx);
    REQUIRE_THROWS(dropout(x, 1.0, rng, true));
}

TEST_CASE("distance and belief kernel gradients", "[autodiff]") {
    PSD ps;
    Rng rng(31);
    ps.add_uniform("a", {5}, rng, 0.5);
    ps.add_uniform("b", {5}, rng, 0.5);
    check_grads(ps, [](TapeD& t, PSD& p) {
        return exp_neg(euclid(t.param(p, 0), t.param(p, 1)));
    });

    // coincident points: distance 0, belief exactly 1, finite (zero) gradient
    PSD ps2;
    int aid = ps2.add("a", {3});
    int bid = ps2.add("b", {3});
    ps2.value(aid).data = {0.25, -0.5, 1.0};
    ps2.value(bid).data = {0.25, -0.5, 1.0};
    TapeD t;
    auto alpha = exp_neg(euclid(t.param(ps2, 0), t.param(ps2, 1)));
    REQUIRE(alpha.value()[0] == 1.0);
    ps2.zero_grads();
    t.backward(alpha);
    for (int k = 0; k < 3; ++k) {
        REQUIRE(std::isfinite(ps2.grad(0)[k]));
        REQUIRE(ps2.grad(0)[k] == 0.0);
    }
}

TEST_CASE("scatter max picks winners and routes gradient", "[autodiff]") {
    PSD ps;
    int zid = ps.add("z", {4});
    ps.value(zid).data = {0.9, 0.1, 0.6, 0.3};
    check_grads(ps, [](TapeD& t, PSD& p) {
        auto z = t.param(p, 0);
        std::vector<VarD> alphas{pick(z, 0), pick(z, 1), pick(z, 2), pick(z, 3)};
        auto out = scatter_max(alphas, {0, 2, 2, 1}, 4);
        return vsum(mul(out, out));
    });

    TapeD t;
    auto z = t.param(ps, 0);
    std::vector<VarD> alphas{pick(z, 0), pick(z, 1), pick(z, 2), pick(z, 3)};
    auto out = scatter_max(alphas, {0, 2, 2, 1}, 4);
    REQUIRE(out.value()[0] == 0.9);
    REQUIRE(out.value()[1] == 0.3);
    REQUIRE(out.value()[2] == 0.6);  // max(0.1, 0.6)
    REQUIRE(out.value()[3] == 0.0);  // untouched slot

    // tie: earliest writer keeps the slot and the whole gradient
    TapeD t2;
    auto z2 = t2.param(ps, 0);
    std::vector<VarD> dup{pick(z2, 0), pick(z2, 0)};
    auto out2 = scatter_max(dup, {1, 1}, 2);
    ps.zero_grads();
    t2.backward(pick(out2, 1));
    REQUIRE(ps.grad(0)[0] == 1.0);
}

TEST_CASE("soft switch fusion gradients and mass", "[autodiff]") {
    PSD ps;
    Rng rng(41);
    ps.add_uniform("zv", {4}, rng, 1.0);
    ps.add_uniform("zk", {3}, rng, 1.0);
    ps.add_uniform("zg", {1}, rng, 1.0);
    std::vector<int> kb2joint{1, 4, 5};
    check_grads(ps, [kb2joint](TapeD& t, PSD& p) {
        auto pv = softmax(t.param(p, 0));
        auto pk = sigmoid(t.param(p, 1));
        auto pg = sigmoid(t.param(p, 2));
        auto out = fuse_soft_switch(pv, pk, pick(pg, 0), kb2joint, 6);
        return add(pick(out, 4), scale(pick(out, 1), 0.5));
    });

    TapeD t;
    auto pv = softmax(t.param(ps, 0));
    auto pk = sigmoid(t.param(ps, 1));
    auto pg = sigmoid(t.param(ps, 2));
    auto out = fuse_soft_switch(pv, pk, pick(pg, 0), kb2joint, 6);
    double mass = 0;
    for (int j = 0; j < 6; ++j) mass += out.value()[j];
    REQUIRE(mass == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("soft switch with empty kb channel", "[autodiff]") {
    PSD ps;
    Rng rng(43);
    ps.add_uniform("zv", {4}, rng, 1.0);
    ps.add_uniform("zg", {1}, rng, 1.0);
    std::vector<int> kb2joint{1, 4, 5};
    TapeD t;
    auto pv = softmax(t.param(ps, 0));
    auto pk = scale(sigmoid(t.input(nsdial::TensorT<double>::vec({0.3, 0.1, -0.2}), true)), 0.0);
    auto pg = pick(sigmoid(t.param(ps, 1)), 0);
    auto out = fuse_soft_switch(pv, pk, pg, kb2joint, 6);
    for (int j = 0; j < 4; ++j) REQUIRE(out.value()[j] == pv.value()[j]);
    REQUIRE(out.value()[4] == 0.0);
    REQUIRE(out.value()[5] == 0.0);
    ps.zero_grads();
    t.backward(pick(out, 2));
    for (int k = 0; k < 1; ++k) REQUIRE(ps.grad(1)[k] == 0.0);  // gate is bypassed
    double gv = 0;
    for (int k = 0; k < 4; ++k) gv += std::abs(ps.grad(0)[k]);
    REQUIRE(gv > 0.0);
}

TEST_CASE("sum fusion gradients and mass", "[autodiff]") {
    PSD ps;
    Rng rng(47);
    ps.add_uniform("zv", {4}, rng, 1.0);
    ps.add_uniform("zk", {3}, rng, 1.0);
    std::vector<int> kb2joint{0, 4, 5};
    check_grads(ps, [kb2joint](TapeD& t, PSD& p) {
        auto pv = softmax(t.param(p, 0));
        auto pk = sigmoid(t.param(p, 1));
        auto out = fuse_sum(pv, pk, kb2joint, 6);
        return add(pick(out, 4), scale(pick(out, 0), 0.25));
    });

    TapeD t;
    auto out = fuse_sum(softmax(t.param(ps, 0)), sigmoid(t.param(ps, 1)), kb2joint, 6);
    double mass = 0;
    for (int j = 0; j < 6; ++j) mass += out.value()[j];
    REQUIRE(mass == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("two layer chain end to end", "[autodiff]") {
    PSD ps;
    Rng rng(7);
    ps.add_uniform("W1", {8, 5}, rng, 0.5);
    ps.add_uniform("b1", {8}, rng, 0.5);
    ps.add_uniform("W2", {6, 8}, rng, 0.5);
    ps.add_uniform("b2", {6}, rng, 0.5);
    ps.add_uniform("x", {5}, rng, 0.5);
    check_grads(ps, [](TapeD& t, PSD& p) {
        auto h = leaky_relu(linear(t.param(p, 0), t.param(p, 1), t.param(p, 4)));
        auto logits = linear(t.param(p, 2), t.param(p, 3), h);
        return neg_log_pick_clamped(softmax(logits), 3);
    });
}

TEST_CASE("parameter reuse accumulates", "[autodiff]") {
    PSD ps;
    int aid = ps.add("a", {3});
    ps.value(aid).data = {1.0, 2.0, 3.0};
    TapeD t;
    auto a1 = t.param(ps, 0);
    auto a2 = t.param(ps, 0);
    REQUIRE(a1.idx == a2.idx);  // cached leaf
    auto loss = vsum(add(a1, a2));
    ps.zero_grads();
    t.backward(loss);
    for (int k = 0; k < 3; ++k) REQUIRE(ps.grad(0)[k] == 2.0);
}

TEST_CASE("shape and usage errors", "[autodiff]") {
    TapeD t;
    auto a = t.input(nsdial::TensorT<double>::vec({1.0, 2.0}));
    auto b = t.input(nsdial::TensorT<double>::vec({1.0, 2.0, 3.0}));
    REQUIRE_THROWS_AS(add(a, b), std::invalid_argument);
    auto W = t.input(nsdial::TensorT<double>({2, 3}));
    REQUIRE_THROWS_AS(matvec(W, a), std::invalid_argument);
    REQUIRE_THROWS_AS(pick(a, 5), std::invalid_argument);
    REQUIRE_THROWS_AS(stack_rows(std::vector<VarD>{a, b}), std::invalid_argument);
    REQUIRE_THROWS_AS(t.backward(a), std::invalid_argument);
    PSD ps;
    ps.add("p", {2});
    REQUIRE_THROWS(ps.add("p", {2}));
}
