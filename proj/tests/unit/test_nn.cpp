#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "obsr/nn.hpp"

using namespace obsr;
using namespace obsr::nn;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, CounterRng& rng, double scale = 1.0) {
    Tensor2 t(r, c);
    for (double& x : t.data()) x = rng.uniform(-scale, scale);
    return t;
}

// fixed random projection of an output to a scalar, so every output element
// contributes to the checked loss with a distinct weight
double project(const Tensor2& y, const Tensor2& w, Tensor2* dy) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
    if (dy) *dy = w;
    return s;
}

// Copies an input tensor into the store so finite differences also cover dx.
Param& as_param(ParamStore& store, const std::string& name, const Tensor2& x) {
    Param& p = store.add(name, x.rows(), x.cols());
    p.value = x;
    return p;
}

void add_grad(Param& p, const Tensor2& g) {
    for (std::size_t i = 0; i < g.size(); ++i) p.grad.data()[i] += g.data()[i];
    p.has_grad = true;
}

}  // namespace

TEST_CASE("matmul kernels agree with a naive triple loop and with each other") {
    CounterRng rng(1);
    const Tensor2 a = random_tensor(37, 19, rng), b = random_tensor(19, 23, rng), c = random_tensor(37, 23, rng);
    Tensor2 naive(37, 23);
    for (std::size_t i = 0; i < 37; ++i)
        for (std::size_t j = 0; j < 23; ++j)
            for (std::size_t k = 0; k < 19; ++k) naive(i, j) += a(i, k) * b(k, j);
    const Tensor2 par = matmul(a, b, Exec::parallel);
    const Tensor2 ser = matmul(a, b, Exec::serial);
    CHECK(par == ser);
    for (std::size_t i = 0; i < naive.size(); ++i) CHECK(par.data()[i] == doctest::Approx(naive.data()[i]).epsilon(1e-12));

    Tensor2 tn_par, tn_ser, nt_par, nt_ser;
    matmul_tn(a, c, tn_par, false, Exec::parallel);
    matmul_tn(a, c, tn_ser, false, Exec::serial);
    CHECK(tn_par == tn_ser);
    CHECK(tn_par.rows() == 19);
    const Tensor2 tn_ref = matmul(transpose(a), c, Exec::serial);
    for (std::size_t i = 0; i < tn_ref.size(); ++i) CHECK(tn_par.data()[i] == doctest::Approx(tn_ref.data()[i]).epsilon(1e-12));
    matmul_nt(c, b, nt_par, false, Exec::parallel);
    matmul_nt(c, b, nt_ser, false, Exec::serial);
    CHECK(nt_par == nt_ser);
    CHECK(nt_par.cols() == 19);

    CHECK_THROWS_AS(matmul(a, a), Error);
    Tensor2 wrong(2, 2);
    CHECK_THROWS_AS(matmul(a, b, wrong, true), Error);
}

TEST_CASE("dense forward and backward") {
    Tensor2 eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const Tensor2 x(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(dense_forward(x, eye, Tensor2(1, 3)) == x);

    const Tensor2 x1(1, 1, {2.0}), w1(1, 1, {3.0}), b1(1, 1, {1.0});
    CHECK(dense_forward(x1, w1, b1)(0, 0) == 7.0);
    const auto g = dense_backward(x1, w1, Tensor2(1, 1, {1.0}));
    CHECK(g.dw(0, 0) == 2.0);
    CHECK(g.db(0, 0) == 1.0);
    CHECK(g.dx(0, 0) == 3.0);

    CHECK_THROWS_AS(dense_forward(x, w1, b1), Error);
    try {
        dense_forward(x, eye, Tensor2(1, 2));
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("dense gradients match finite differences") {
    CounterRng rng(2);
    ParamStore store;
    Dense layer(store, "d", 4, 3, rng);
    Param& x = as_param(store, "x", random_tensor(5, 4, rng));
    const Tensor2 target = random_tensor(5, 3, rng);
    auto loss = [&](bool grad) {
        const Tensor2 y = layer.forward(x.value);
        double l = 0.0;
        Tensor2 dy(5, 3);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double e = y.data()[i] - target.data()[i];
            l += 0.5 * e * e;
            dy.data()[i] = e;
        }
        if (grad) add_grad(x, layer.backward(x.value, dy));
        return l;
    };
    const auto rep = grad_check(store, loss, 1e-6);
    CHECK(rep.passed);
    CHECK(rep.worst < 1e-8);
    CHECK(rep.rel_error.size() == 3);
}

TEST_CASE("activations") {
    const Tensor2 x(1, 3, {-1.0, 0.0, 2.0});
    const Tensor2 r = relu(x);
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 2) == 2.0);
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(std::isfinite(sigmoid(-800.0)));

    CounterRng rng(3);
    ParamStore store;
    Param& p = as_param(store, "x", random_tensor(4, 5, rng, 2.0));
    const Tensor2 w = random_tensor(4, 5, rng);
    auto loss = [&](bool grad) {
        Tensor2 dy;
        const Tensor2 s = sigmoid(p.value);
        const Tensor2 rl = relu(p.value);
        double l = project(s, w, &dy);
        if (grad) add_grad(p, sigmoid_backward(s, dy));
        l += project(rl, w, &dy);
        if (grad) add_grad(p, relu_backward(p.value, dy));
        return l;
    };
    CHECK(grad_check(store, loss, 1e-6).passed);
}

TEST_CASE("dropout") {
    CounterRng rng(4);
    const Tensor2 x = random_tensor(3, 4, rng);
    CHECK(dropout(x, 0.0, true, rng) == x);
    CHECK(dropout(x, 0.7, false, rng) == x);
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), Error);

    const Tensor2 ones(1000, 100, 1.0);
    Tensor2 mask;
    const Tensor2 y = dropout(ones, 0.2, true, rng, &mask);
    std::size_t zeros = 0;
    double sum = 0.0;
    for (double v : y.data()) {
        zeros += v == 0.0;
        sum += v;
        CHECK((v == 0.0 || v == doctest::Approx(1.25)));
    }
    const double rate = static_cast<double>(zeros) / 1e5;
    CHECK(std::abs(rate - 0.2) < 0.01);
    CHECK(sum / 1e5 == doctest::Approx(1.0).epsilon(0.02));
    CHECK(hadamard(ones, mask) == y);
}

TEST_CASE("regression losses") {
    const auto a = smooth_l1(Tensor2(1, 1, {0.5}), Tensor2(1, 1, {0.0}));
    CHECK(a.value == doctest::Approx(0.125));
    const auto b = smooth_l1(Tensor2(1, 1, {2.0}), Tensor2(1, 1, {0.0}));
    CHECK(b.value == doctest::Approx(1.5));
    CHECK(b.grad(0, 0) == 1.0);
    const auto c = smooth_l1(Tensor2(1, 2, {0.5, -2.0}), Tensor2(1, 2));
    CHECK(c.value == doctest::Approx((0.125 + 1.5) / 2));
    CHECK(c.grad(0, 0) == doctest::Approx(0.25));
    CHECK(c.grad(0, 1) == doctest::Approx(-0.5));

    const auto d = l1(Tensor2(1, 3, {1.0, -2.0, 3.0}), Tensor2(1, 3, {0.0, 0.0, 3.0}));
    CHECK(d.value == doctest::Approx(1.0));
    CHECK(d.grad(0, 1) == doctest::Approx(-1.0 / 3));
    CHECK(d.grad(0, 2) == 0.0);
    CHECK_THROWS_AS(l1(Tensor2(1, 2), Tensor2(2, 1)), Error);
}

TEST_CASE("softmax and cross-entropy") {
    const Tensor2 uniform(2, 6, 0.3);
    const std::vector<int> cls{0, 5};
    CHECK(cross_entropy(uniform, cls).value == doctest::Approx(std::log(6.0)).epsilon(1e-12));

    CounterRng rng(5);
    const Tensor2 logits = random_tensor(10, 6, rng, 20.0);
    const Tensor2 p = softmax_rows(logits);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(p(i, j) >= 0.0);
            s += p(i, j);
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const Tensor2 huge(1, 2, {1000.0, -1000.0});
    CHECK(std::isfinite(cross_entropy(huge, std::vector<int>{1}).value));

    try {
        cross_entropy(uniform, std::vector<int>{0, 6});
        FAIL("expected ClassOutOfRange");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ClassOutOfRange);
    }
    CHECK_THROWS_AS(cross_entropy(uniform, std::vector<int>{0}), Error);

    // masked rows do not contribute
    const std::vector<double> mask{1.0, 0.0};
    Tensor2 l2 = uniform;
    l2(1, 0) = 50.0;
    const auto masked = cross_entropy(l2, cls, mask);
    CHECK(masked.value == doctest::Approx(std::log(6.0)));
    for (std::size_t j = 0; j < 6; ++j) CHECK(masked.grad(1, j) == 0.0);
}

TEST_CASE("hybrid loss endpoints and gradients") {
    CounterRng rng(6);
    const Tensor2 logits = random_tensor(4, 6, rng, 2.0);
    const Tensor2 cost = random_tensor(4, 6, rng, 3.0);
    const std::vector<int> cls{1, 0, 5, 3};
    const auto ce = cross_entropy(logits, cls);
    CHECK(hybrid_loss(logits, cls, cost, 0.0).value == doctest::Approx(ce.value).epsilon(1e-14));
    const Tensor2 p = softmax_rows(logits);
    double geo = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 6; ++c) geo += p(i, c) * cost(i, c);
    CHECK(hybrid_loss(logits, cls, cost, 1.0).value == doctest::Approx(geo / 4).epsilon(1e-12));

    ParamStore store;
    Param& z = as_param(store, "logits", logits);
    const std::vector<double> weights{1.0, 0.5, 0.0, 2.0};
    auto loss = [&](bool grad) {
        const auto out = hybrid_loss(z.value, cls, cost, 0.7, weights);
        if (grad) add_grad(z, out.grad);
        return out.value;
    };
    CHECK(grad_check(store, loss, 1e-6).passed);
}

TEST_CASE("lstm step by hand with zero weights") {
    CounterRng rng(7);
    ParamStore store;
    LstmLayer layer(store, "l", 3, 4, rng);
    for (auto& p : store.params()) p.value.fill(0.0);
    const Tensor2 x(1, 3, {0.3, -0.2, 0.9});
    const auto s0 = layer.step(x, layer.zero_state(1));
    for (double v : s0.h.data()) CHECK(v == 0.0);
    for (double v : s0.c.data()) CHECK(v == 0.0);

    LstmState prev{Tensor2(1, 4), Tensor2(1, 4, 0.8)};
    const auto s1 = layer.step(x, prev);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(s1.c(0, j) == doctest::Approx(0.4));
        CHECK(s1.h(0, j) == doctest::Approx(0.5 * std::tanh(0.4)));
    }
}

TEST_CASE("lstm sequence of length one equals a single step; stack step equals forward") {
    CounterRng rng(8);
    ParamStore store;
    LstmStack stack(store, "s", 3, 5, 2, rng);
    const Tensor2 xs = random_tensor(4 * 2, 3, rng);  // T=4, B=2
    LstmStack::Cache cache;
    const Tensor2 out = stack.forward(xs, 4, cache);
    auto states = stack.zero_state(2);
    for (std::size_t t = 0; t < 4; ++t) {
        Tensor2 x(2, 3);
        std::copy(xs.row(t * 2), xs.row(t * 2) + 6, x.data().begin());
        const Tensor2 h = stack.step(x, states);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t j = 0; j < 5; ++j) CHECK(h(b, j) == out(t * 2 + b, j));
    }

    ParamStore s2;
    LstmLayer layer(s2, "l", 3, 5, rng);
    const Tensor2 x1 = random_tensor(2, 3, rng);
    LstmLayer::Cache c1;
    CHECK(layer.forward(x1, 1, c1) == layer.step(x1, layer.zero_state(2)).h);
    CHECK(s2.get("l.b").value(0, 5) == 1.0);
    CHECK(s2.get("l.b").value(0, 0) == 0.0);
}

TEST_CASE("lstm backpropagation through time matches finite differences") {
    CounterRng rng(9);
    ParamStore store;
    LstmStack stack(store, "s", 3, 4, 2, rng);
    Param& x = as_param(store, "x", random_tensor(3 * 2, 3, rng));  // T=3, B=2
    const Tensor2 w = random_tensor(6, 4, rng);
    auto loss = [&](bool grad) {
        LstmStack::Cache cache;
        const Tensor2 h = stack.forward(x.value, 3, cache);
        Tensor2 dh;
        const double l = project(h, w, &dh);
        if (grad) add_grad(x, stack.backward(cache, dh));
        return l;
    };
    const auto rep = grad_check(store, loss, 1e-5);
    CHECK(rep.passed);
}

TEST_CASE("attention basics") {
    CounterRng rng(10);
    ParamStore store;
    CHECK_THROWS_AS(MultiHeadAttention(store, "bad", 6, 4, true, rng), Error);
    MultiHeadAttention mha(store, "a", 4, 2, true, rng);

    // one position: output is the projected value
    const Tensor2 x = random_tensor(1, 4, rng);
    MultiHeadAttention::Cache cache;
    const Tensor2 y = mha.forward(x, x, x, 1, cache);
    const Tensor2 v = dense_forward(x, store.get("a.wv").value, store.get("a.bv").value);
    const Tensor2 expect = dense_forward(v, store.get("a.wo").value, store.get("a.bo").value);
    for (std::size_t j = 0; j < 4; ++j) CHECK(y(0, j) == doctest::Approx(expect(0, j)).epsilon(1e-14));

    // identical keys: uniform weights
    ParamStore s2;
    MultiHeadAttention full(s2, "a", 4, 2, false, rng);
    Tensor2 keys(3, 4);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t j = 0; j < 4; ++j) keys(t, j) = 0.5 + j;
    MultiHeadAttention::Cache c2;
    full.forward(random_tensor(3, 4, rng), keys, random_tensor(3, 4, rng), 3, c2);
    for (const auto& p : c2.probs)
        for (double w : p.data()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // causal rows only see the past
    const Tensor2 seq = random_tensor(5, 4, rng);
    MultiHeadAttention::Cache c3;
    mha.forward(seq, seq, seq, 5, c3);
    for (const auto& p : c3.probs)
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                if (j > i) CHECK(p(i, j) == 0.0);
                CHECK(p(i, j) >= 0.0);
                s += p(i, j);
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
}

TEST_CASE("incremental attention equals the last row of a causal forward") {
    CounterRng rng(11);
    ParamStore store;
    MultiHeadAttention mha(store, "a", 8, 4, true, rng);
    const Tensor2 seq = random_tensor(6, 8, rng);
    MultiHeadAttention::Cache cache;
    const Tensor2 full = mha.forward(seq, seq, seq, 6, cache, Exec::serial);
    MultiHeadAttention::Incremental inc;
    for (std::size_t t = 0; t < 6; ++t) {
        Tensor2 row(1, 8);
        std::copy(seq.row(t), seq.row(t) + 8, row.data().begin());
        const Tensor2 y = mha.step(row, inc);
        for (std::size_t j = 0; j < 8; ++j) CHECK(y(0, j) == doctest::Approx(full(t, j)).epsilon(1e-13));
    }
}

TEST_CASE("attention gradients match finite differences; parallel equals serial") {
    CounterRng rng(12);
    for (bool causal : {true, false}) {
        ParamStore store;
        MultiHeadAttention mha(store, "a", 4, 2, causal, rng);
        Param& q = as_param(store, "q", random_tensor(3 * 2, 4, rng));
        Param& k = as_param(store, "k", random_tensor(3 * 2, 4, rng));
        Param& v = as_param(store, "v", random_tensor(3 * 2, 4, rng));
        const Tensor2 w = random_tensor(6, 4, rng);
        auto loss = [&](bool grad) {
            MultiHeadAttention::Cache cache;
            const Tensor2 y = mha.forward(q.value, k.value, v.value, 3, cache);
            Tensor2 dy;
            const double l = project(y, w, &dy);
            if (grad) {
                const auto g = mha.backward(cache, dy);
                add_grad(q, g.dq);
                add_grad(k, g.dk);
                add_grad(v, g.dv);
            }
            return l;
        };
        const auto rep = grad_check(store, loss, 1e-5);
        CHECK(rep.passed);

        MultiHeadAttention::Cache cp, cs;
        const Tensor2 yp = mha.forward(q.value, k.value, v.value, 3, cp, Exec::parallel);
        const Tensor2 ys = mha.forward(q.value, k.value, v.value, 3, cs, Exec::serial);
        CHECK(yp == ys);
        const auto gp = mha.backward(cp, w, Exec::parallel);
        const auto gs = mha.backward(cs, w, Exec::serial);
        CHECK(gp.dq == gs.dq);
        CHECK(gp.dk == gs.dk);
        CHECK(gp.dv == gs.dv);
    }
}

TEST_CASE("lstm, attention and classifier together pass the gradient check") {
    CounterRng rng(13);
    ParamStore store;
    LstmStack lstm(store, "lstm", 3, 8, 2, rng);
    MultiHeadAttention mha(store, "mha", 8, 4, true, rng);
    Dense head(store, "head", 8, 6, rng);
    const Tensor2 xs = random_tensor(4 * 2, 3, rng);
    const std::vector<int> cls{0, 1, 2, 3, 4, 5, 0, 1};
    const std::vector<double> mask{1, 1, 1, 1, 1, 1, 1, 0};
    const Tensor2 cost = random_tensor(8, 6, rng, 1.0);
    auto loss = [&](bool grad) {
        LstmStack::Cache lc;
        MultiHeadAttention::Cache ac;
        const Tensor2 h = lstm.forward(xs, 4, lc);
        const Tensor2 a = mha.forward(h, h, h, 4, ac);
        const Tensor2 z = head.forward(a);
        const auto out = hybrid_loss(z, cls, cost, 0.7, mask);
        if (grad) {
            const Tensor2 da = head.backward(a, out.grad);
            const auto g = mha.backward(ac, da);
            Tensor2 dh = g.dq;
            for (std::size_t i = 0; i < dh.size(); ++i) dh.data()[i] += g.dk.data()[i] + g.dv.data()[i];
            lstm.backward(lc, dh);
        }
        return out.value;
    };
    const auto rep = grad_check(store, loss, 1e-4);
    CHECK(rep.passed);
}

TEST_CASE("gradient checker catches a corrupted gradient and a nondeterministic loss") {
    CounterRng rng(14);
    ParamStore store;
    Dense layer(store, "d", 2, 1, rng);
    const Tensor2 x = random_tensor(3, 2, rng);
    auto loss = [&](bool grad) {
        const Tensor2 y = layer.forward(x);
        Tensor2 dy;
        const double l = project(y, Tensor2(3, 1, 1.0), &dy);
        if (grad) {
            layer.backward(x, dy);
            layer.weight().grad(0, 0) += 0.5;
        }
        return l;
    };
    CHECK_FALSE(grad_check(store, loss, 1e-4).passed);

    int calls = 0;
    auto noisy = [&](bool) { return static_cast<double>(++calls); };
    try {
        grad_check(store, noisy, 1e-4);
        FAIL("expected NonDeterministicModel");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NonDeterministicModel);
    }
}

TEST_CASE("adam") {
    ParamStore store;
    Param& w = store.add("w", 1, 3);
    AdamConfig cfg;
    try {
        adam_step(store, cfg);
        FAIL("expected UninitializedGrads");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UninitializedGrads);
    }

    w.grad = Tensor2(1, 3, {0.3, -20.0, 0.0});
    w.has_grad = true;
    adam_step(store, cfg);
    CHECK(w.value(0, 0) == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(w.value(0, 1) == doctest::Approx(0.001).epsilon(1e-6));
    CHECK(w.value(0, 2) == 0.0);
    CHECK(store.step() == 1);
    for (double g : w.grad.data()) CHECK(g == 0.0);

    // zero gradient everywhere is a no-op on fresh moments
    ParamStore s2;
    Param& z = s2.add("z", 2, 2);
    z.value.fill(1.5);
    z.has_grad = true;
    adam_step(s2, cfg);
    for (double v : z.value.data()) CHECK(v == 1.5);

    ParamStore s3;
    Param& q = s3.add("q", 1, 1);
    AdamConfig fast;
    fast.lr = 0.1;
    for (int i = 0; i < 200; ++i) {
        q.grad(0, 0) = 2.0 * (q.value(0, 0) - 3.0);
        q.has_grad = true;
        adam_step(s3, fast);
    }
    CHECK(std::abs(q.value(0, 0) - 3.0) < 0.05);
}

TEST_CASE("train config validation and round trip") {
    TrainConfig c;
    CHECK(c.lr == 0.001);
    CHECK(c.batch_size == 32);
    CHECK(c.geo_weight == 0.7);
    CHECK(c.dropout_p == 0.2);
    c.loss = LossKind::hybrid_hmp;
    c.epochs = 10;
    const auto back = train_config_from_json(to_json(c));
    CHECK(back.loss == LossKind::hybrid_hmp);
    CHECK(back.epochs == 10);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"lr", -1.0}}), Error);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"geo_weight", 1.5}}), Error);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"batch_size", 0}}), Error);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"loss", "hinge"}}), Error);
}

TEST_CASE("checkpoints restore values, moments and step") {
    CounterRng rng(15);
    ParamStore a;
    Dense da(a, "d", 3, 2, rng);
    da.weight().grad.fill(0.1);
    da.weight().has_grad = true;
    adam_step(a, AdamConfig{});
    const auto path = std::filesystem::temp_directory_path() / ("obsr_ckpt_" + std::to_string(::getpid()) + ".json");
    save_checkpoint(a, nlohmann::ordered_json{{"model", "toy"}}, path.string());

    ParamStore b;
    CounterRng other(99);
    Dense db(b, "d", 3, 2, other);
    CHECK_FALSE(db.weight().value == da.weight().value);
    const auto cfg = load_checkpoint(b, path.string());
    CHECK(cfg["model"] == "toy");
    CHECK(db.weight().value == da.weight().value);
    CHECK(db.weight().m == da.weight().m);
    CHECK(b.step() == 1);

    ParamStore c;
    Dense dc(c, "d", 2, 2, other);
    CHECK_THROWS_AS(load_checkpoint(c, path.string()), Error);
    std::filesystem::remove(path);
}

TEST_CASE("non-finite values are rejected") {
    Tensor2 t(1, 2, {1.0, std::nan("")});
    CHECK_THROWS_AS(check_finite(t, "t"), Error);
    ParamStore s;
    Param& p = s.add("p", 1, 1);
    p.grad(0, 0) = INFINITY;
    p.has_grad = true;
    CHECK_THROWS_AS(adam_step(s, AdamConfig{}), Error);
}
