#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "predann/attention.hpp"
#include "predann/nn.hpp"
#include "testutil.hpp"

using namespace predann;
using testutil::GradCheck;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0, double min_abs = 0.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) {
        do {
            v = rng.normal() * scale;
        } while (std::fabs(v) < min_abs);
    }
    return t;
}

}  // namespace

TEST_CASE("linear gradient check") {
    Rng rng(1);
    Linear<double> lin(5, 7, rng);
    Tensor<double> x = random_tensor({4, 5}, rng);
    auto w = testutil::loss_weights(4 * 7);

    auto fwd = [&] { return testutil::weighted_sum(lin.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> y = lin.forward(x);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = lin.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&x, &lin.weight, &lin.bias}) < 1e-4);
}

TEST_CASE("conv1d identity kernel passes input through") {
    Rng rng(2);
    Conv1d<double> conv(1, 1, 1, 1, rng);
    conv.weight.data = {1.0};
    conv.bias.data = {0.0};
    Tensor<double> x = random_tensor({2, 1, 9}, rng);
    Tensor<double> y = conv.forward(x);
    REQUIRE(y.shape == x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("conv1d gradient check (kernel 3, stride 2)") {
    Rng rng(3);
    Conv1d<double> conv(2, 3, 3, 2, rng);
    Tensor<double> x = random_tensor({2, 2, 11}, rng);
    const int lo = Conv1d<double>::out_len(11, 3, 2);
    auto w = testutil::loss_weights(static_cast<std::size_t>(2 * 3 * lo));

    auto fwd = [&] { return testutil::weighted_sum(conv.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> y = conv.forward(x);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = conv.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&x, &conv.weight, &conv.bias}) < 1e-4);
}

TEST_CASE("layer norm of constant vector is zero pre-affine") {
    LayerNorm<double> ln(6);
    Tensor<double> x = Tensor<double>::full({2, 6}, 3.25);
    Tensor<double> y = ln.forward(x);
    for (double v : y.data) CHECK(std::fabs(v) < 1e-9);
}

TEST_CASE("layer norm gradient check") {
    Rng rng(4);
    LayerNorm<double> ln(6);
    ln.gamma.data = random_tensor({6}, rng, 0.5).data;
    ln.beta.data = random_tensor({6}, rng, 0.5).data;
    Tensor<double> x = random_tensor({5, 6}, rng);
    auto w = testutil::loss_weights(5 * 6);

    auto fwd = [&] { return testutil::weighted_sum(ln.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> y = ln.forward(x);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = ln.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&x, &ln.gamma, &ln.beta}) < 1e-4);
}

TEST_CASE("group norm gradient check") {
    Rng rng(5);
    GroupNorm<double> gn(8, 4);
    gn.gamma.data = random_tensor({8}, rng, 0.5).data;
    gn.beta.data = random_tensor({8}, rng, 0.5).data;
    Tensor<double> x = random_tensor({2, 8, 5}, rng);
    auto w = testutil::loss_weights(2 * 8 * 5);

    auto fwd = [&] { return testutil::weighted_sum(gn.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> y = gn.forward(x);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = gn.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&x, &gn.gamma, &gn.beta}) < 1e-4);
}

TEST_CASE("batch norm training-mode gradient check") {
    Rng rng(6);
    BatchNorm1d<double> bn(4);
    bn.gamma.data = random_tensor({4}, rng, 0.5).data;
    bn.beta.data = random_tensor({4}, rng, 0.5).data;
    Tensor<double> x = random_tensor({6, 4}, rng);
    auto w = testutil::loss_weights(6 * 4);

    // freeze the running-stat side effect: stats update on each forward but
    // do not influence training-mode outputs
    auto fwd = [&] { return testutil::weighted_sum(bn.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> y = bn.forward(x);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = bn.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&x, &bn.gamma, &bn.beta}) < 1e-4);
}

TEST_CASE("batch norm inference mode is a fixed affine map") {
    Rng rng(7);
    BatchNorm1d<double> bn(3);
    Tensor<double> x = random_tensor({8, 3}, rng);
    bn.forward(x);  // populate running stats
    bn.training = false;

    Tensor<double> a = random_tensor({2, 3}, rng);
    Tensor<double> b = a;
    Tensor<double> ya = bn.forward(a);
    Tensor<double> yb = bn.forward(b);
    for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya.data[i] == yb.data[i]);

    // affine: f(x+dx) - f(x) is linear in dx
    Tensor<double> shifted = a;
    for (auto& v : shifted.data) v += 0.5;
    Tensor<double> ys = bn.forward(shifted);
    const double slope0 = (ys.data[0] - ya.data[0]) / 0.5;
    Tensor<double> shifted2 = a;
    for (auto& v : shifted2.data) v += 1.0;
    Tensor<double> ys2 = bn.forward(shifted2);
    CHECK((ys2.data[0] - ya.data[0]) / 1.0 == doctest::Approx(slope0).epsilon(1e-12));
}

TEST_CASE("batch norm rejects training batch of one") {
    BatchNorm1d<double> bn(3);
    Tensor<double> x({1, 3});
    CHECK_THROWS(bn.forward(x));
}

TEST_CASE("gelu and relu gradient checks") {
    Rng rng(8);
    Tensor<double> x = random_tensor({3, 7}, rng, 1.0, 0.05);  // keep away from relu kink
    auto w = testutil::loss_weights(3 * 7);
    GradCheck gc;

    {
        Gelu<double> g;
        auto fwd = [&] { return testutil::weighted_sum(g.forward(x).data, w); };
        auto bwd = [&] {
            Tensor<double> y = g.forward(x);
            Tensor<double> dy(y.shape);
            dy.data.assign(w.begin(), w.end());
            Tensor<double> dx = g.backward(dy);
            x.ensure_grad();
            for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
        };
        CHECK(gc.run(fwd, bwd, {&x}) < 1e-4);
    }
    {
        Relu<double> r;
        auto fwd = [&] { return testutil::weighted_sum(r.forward(x).data, w); };
        auto bwd = [&] {
            Tensor<double> y = r.forward(x);
            Tensor<double> dy(y.shape);
            dy.data.assign(w.begin(), w.end());
            Tensor<double> dx = r.backward(dy);
            x.ensure_grad();
            x.zero_grad();
            for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
        };
        CHECK(gc.run(fwd, bwd, {&x}) < 1e-4);
    }
}

TEST_CASE("softmax rows are probability vectors") {
    Rng rng(9);
    Softmax<double> sm;
    Tensor<double> x = random_tensor({20, 11}, rng, 3.0);
    Tensor<double> p = sm.forward(x);
    for (int i = 0; i < 20; ++i) {
        double sum = 0;
        for (int j = 0; j < 11; ++j) {
            CHECK(p(i, j) >= 0.0);
            sum += p(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax gradient check") {
    Rng rng(10);
    Softmax<double> sm;
    Tensor<double> x = random_tensor({4, 6}, rng);
    auto w = testutil::loss_weights(4 * 6);
    auto fwd = [&] { return testutil::weighted_sum(sm.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> p = sm.forward(x);
        Tensor<double> dy(p.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = sm.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&x}) < 1e-4);
}

TEST_CASE("embedding lookup gradient check") {
    Rng rng(11);
    Embedding<double> emb(5, 4, rng, 0.5);
    std::vector<int> idx{0, 3, 3, 1};
    auto w = testutil::loss_weights(4 * 4);
    auto fwd = [&] { return testutil::weighted_sum(emb.forward(idx).data, w); };
    auto bwd = [&] {
        Tensor<double> y = emb.forward(idx);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        emb.backward(dy);
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&emb.table}) < 1e-4);
}

TEST_CASE("cross entropy values") {
    CrossEntropy<double> ce;

    SUBCASE("uniform logits give ln C") {
        Tensor<double> logits = Tensor<double>::zeros({1, 10});
        CHECK(ce.forward(logits, {3}) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    }
    SUBCASE("logits (10, 0), target 0") {
        Tensor<double> logits({1, 2});
        logits.data = {10.0, 0.0};
        const double expected = std::log(1.0 + std::exp(-10.0));
        CHECK(ce.forward(logits, {0}) == doctest::Approx(expected).epsilon(1e-9));
        CHECK(ce.forward(logits, {0}) == doctest::Approx(4.5399e-5).epsilon(1e-3));
    }
    SUBCASE("invalid target rejected") {
        Tensor<double> logits = Tensor<double>::zeros({1, 4});
        CHECK_THROWS(ce.forward(logits, {4}));
    }
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
    Rng rng(12);
    CrossEntropy<double> ce;
    Tensor<double> logits = random_tensor({3, 5}, rng);
    std::vector<int> targets{1, 4, 0};
    ce.forward(logits, targets);
    Tensor<double> dl = ce.backward();

    Softmax<double> sm;
    Tensor<double> p = sm.forward(logits);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) {
            const double expected = (p(i, j) - (targets[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0)) / 3.0;
            CHECK(dl(i, j) == doctest::Approx(expected).epsilon(1e-12));
        }

    // and against finite differences
    auto fwd = [&] { return ce.forward(logits, targets); };
    auto bwd = [&] {
        ce.forward(logits, targets);
        Tensor<double> d = ce.backward();
        logits.ensure_grad();
        for (std::size_t i = 0; i < logits.size(); ++i) logits.grad[i] += d.data[i];
    };
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, {&logits}) < 1e-4);
}

TEST_CASE("attention single token returns value row through projection") {
    Rng rng(13);
    MultiHeadSelfAttention<double> attn(8, 2, rng);
    // identity output projection to expose the context directly
    attn.wo.weight = Tensor<double>::zeros({8, 8});
    for (int i = 0; i < 8; ++i) attn.wo.weight(i, i) = 1.0;
    attn.wo.bias = Tensor<double>::zeros({8});
    attn.wo.weight.ensure_grad();
    attn.wo.bias.ensure_grad();

    Tensor<double> x = random_tensor({1, 8}, rng);
    Tensor<double> y = attn.forward(x);
    Tensor<double> v = attn.wv.forward(x);
    REQUIRE(y.shape == std::vector<int>{1, 8});
    for (int j = 0; j < 8; ++j) CHECK(y(0, j) == doctest::Approx(v(0, j)).epsilon(1e-12));
}

TEST_CASE("attention is invariant to key/value permutation") {
    Rng rng(14);
    MultiHeadSelfAttention<double> attn(8, 2, rng);
    Tensor<double> x = random_tensor({5, 8}, rng);
    Tensor<double> y = attn.forward(x);

    // permuting all tokens permutes outputs identically (no positional order)
    std::vector<int> perm{3, 0, 4, 1, 2};
    Tensor<double> xp({5, 8});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j) xp(i, j) = x(perm[static_cast<std::size_t>(i)], j);
    Tensor<double> yp = attn.forward(xp);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(yp(i, j) == doctest::Approx(y(perm[static_cast<std::size_t>(i)], j)).epsilon(1e-9));
}

TEST_CASE("attention gradient check (3 tokens, 2 heads, d=8)") {
    Rng rng(15);
    MultiHeadSelfAttention<double> attn(8, 2, rng);
    Tensor<double> x = random_tensor({3, 8}, rng);
    auto w = testutil::loss_weights(3 * 8);
    ParamList<double> params;
    attn.collect(params, "attn");

    auto fwd = [&] { return testutil::weighted_sum(attn.forward(x).data, w); };
    auto bwd = [&] {
        Tensor<double> y = attn.forward(x);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = attn.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    std::vector<Tensor<double>*> tensors{&x};
    for (auto& p : params) tensors.push_back(p.tensor);
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, tensors) < 1e-4);
}

TEST_CASE("transformer block gradient check") {
    Rng rng(16);
    TransformerBlock<double> block(8, 2, 16, 0.0, rng);
    Rng fwd_rng(0);
    Tensor<double> x = random_tensor({4, 8}, rng);
    auto w = testutil::loss_weights(4 * 8);
    ParamList<double> params;
    block.collect(params, "block");

    auto fwd = [&] { return testutil::weighted_sum(block.forward(x, fwd_rng).data, w); };
    auto bwd = [&] {
        Tensor<double> y = block.forward(x, fwd_rng);
        Tensor<double> dy(y.shape);
        dy.data.assign(w.begin(), w.end());
        Tensor<double> dx = block.backward(dy);
        x.ensure_grad();
        for (std::size_t i = 0; i < x.size(); ++i) x.grad[i] += dx.data[i];
    };
    std::vector<Tensor<double>*> tensors{&x};
    for (auto& p : params) tensors.push_back(p.tensor);
    GradCheck gc;
    CHECK(gc.run(fwd, bwd, tensors) < 1e-4);
}

TEST_CASE("adam first step moves a scalar by roughly lr") {
    Tensor<double> p = Tensor<double>::full({1}, 1.0);
    p.ensure_grad();
    p.grad[0] = 0.37;  // any nonzero gradient: bias-corrected m/sqrt(v) = sign(g)
    ParamList<double> params{{"p", &p}};
    Adam<double> opt;
    opt.lr = 0.003;
    opt.init(params);
    opt.step(params);
    CHECK(p.data[0] == doctest::Approx(1.0 - 0.003).epsilon(1e-4));
}

TEST_CASE("adam leaves parameters unchanged for zero gradient") {
    Tensor<double> p = Tensor<double>::full({3}, 2.0);
    p.ensure_grad();
    ParamList<double> params{{"p", &p}};
    Adam<double> opt;
    opt.init(params);
    opt.step(params);
    for (double v : p.data) CHECK(v == 2.0);
}

TEST_CASE("adam rejects non-finite gradients") {
    Tensor<double> p = Tensor<double>::full({1}, 0.0);
    p.ensure_grad();
    p.grad[0] = std::numeric_limits<double>::quiet_NaN();
    ParamList<double> params{{"p", &p}};
    Adam<double> opt;
    opt.init(params);
    CHECK_THROWS(opt.step(params));
}

TEST_CASE("adam minimizes a quadratic bowl") {
    Tensor<double> p({2});
    p.data = {3.0, -2.0};
    p.ensure_grad();
    ParamList<double> params{{"p", &p}};
    Adam<double> opt;
    opt.lr = 0.05;
    opt.init(params);
    double loss = 0;
    for (int step = 0; step < 2000; ++step) {
        loss = 0.5 * (p.data[0] * p.data[0] + 4.0 * p.data[1] * p.data[1]);
        if (loss < 1e-6) break;
        p.grad[0] = p.data[0];
        p.grad[1] = 4.0 * p.data[1];
        opt.step(params);
    }
    CHECK(loss < 1e-6);
}

TEST_CASE("softmax rejects NaN and +inf but accepts -inf") {
    Tensor<double> bad({1, 2});
    bad.data = {0.0, std::numeric_limits<double>::quiet_NaN()};
    Softmax<double> sm;
    CHECK_THROWS(sm.forward(bad));

    bad.data = {0.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS(sm.forward(bad));

    Tensor<double> ok({1, 3});
    ok.data = {0.0, -std::numeric_limits<double>::infinity(), 0.0};
    Tensor<double> p = sm.forward(ok);
    CHECK(p(0, 1) == 0.0);
    CHECK(p(0, 0) == doctest::Approx(0.5));
}
