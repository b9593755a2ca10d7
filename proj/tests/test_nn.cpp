#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tsfb/nn.hpp"

using namespace tsfb;

TEST_CASE("adam single-step hand example") {
    // one scalar, grad 1, lr 0.1: mhat = 1, vhat = 1, update = -lr/(1+eps)
    Rng rng(1);
    ParamStore ps;
    Var w = ps.create("w", 1, 1, 0.0, rng);
    w->val.at(0, 0) = 5.0;
    w->ensure_grad().at(0, 0) = 1.0;
    Adam opt({0.1});
    opt.step(ps);
    CHECK(w->val.at(0, 0) == doctest::Approx(5.0 - 0.1 / (1.0 + 1e-8)));
}

TEST_CASE("adam lr 0 is a no-op and missing grads count as zero") {
    Rng rng(2);
    ParamStore ps;
    Var w = ps.create("w", 2, 2, 0.3, rng);
    Tensor before = w->val;
    Adam opt({0.0});
    ps.zero_grad();
    opt.step(ps);
    for (size_t i = 0; i < before.size(); ++i) CHECK(w->val.data[i] == before.data[i]);
}

TEST_CASE("adam throws on non-finite gradient naming the parameter") {
    Rng rng(3);
    ParamStore ps;
    Var w = ps.create("bad.weight", 1, 1, 0.0, rng);
    w->ensure_grad().at(0, 0) = std::nan("");
    Adam opt;
    try {
        opt.step(ps);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
    }
}

TEST_CASE("adam converges on a quadratic") {
    Rng rng(4);
    ParamStore ps;
    Var w = ps.create("w", 1, 1, 0.0, rng);
    w->val.at(0, 0) = 3.0;
    Adam opt({0.05});
    for (int i = 0; i < 500; ++i) {
        ps.zero_grad();
        Var loss = mul(w, w);
        backward(loss);
        opt.step(ps);
    }
    CHECK(std::fabs(w->val.at(0, 0)) < 1e-2);
}

TEST_CASE("causal attention: future inputs cannot change earlier outputs") {
    Rng rng(5);
    AttentionConfig cfg{2, 8, 4, true};
    std::vector<Var> wq, wk, wv;
    ParamStore ps;
    for (int h = 0; h < cfg.n_heads; ++h) {
        wq.push_back(ps.create("q" + std::to_string(h), 8, 4, 0.2, rng));
        wk.push_back(ps.create("k" + std::to_string(h), 8, 4, 0.2, rng));
        wv.push_back(ps.create("v" + std::to_string(h), 8, 4, 0.2, rng));
    }
    Var wo = ps.create("o", 8, 8, 0.2, rng);

    Tensor x(6, 8);
    for (auto& v : x.data) v = rng.normal();
    Tensor x2 = x;
    for (int j = 0; j < 8; ++j) x2.at(5, j) += 10.0;  // perturb only the last step

    Var y1 = multi_head_attention(constant(x), wq, wk, wv, wo, cfg);
    Var y2 = multi_head_attention(constant(x2), wq, wk, wv, wo, cfg);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j) CHECK(y1->val.at(i, j) == y2->val.at(i, j));
    bool last_changed = false;
    for (int j = 0; j < 8; ++j)
        if (y1->val.at(5, j) != y2->val.at(5, j)) last_changed = true;
    CHECK(last_changed);
}

TEST_CASE("fresh transformer block is the identity map") {
    Rng rng(6);
    ParamStore ps;
    AttentionConfig cfg{2, 8, 4, true};
    TransformerStack stack(ps, "enc", 2, cfg, 16, rng);
    Tensor x(5, 8);
    for (auto& v : x.data) v = rng.normal();
    Var y = stack.forward(constant(x));
    for (size_t i = 0; i < x.size(); ++i) CHECK(y->val.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("transformer trains: loss decreases on a toy regression") {
    Rng rng(7);
    ParamStore ps;
    AttentionConfig cfg{1, 4, 4, true};
    TransformerStack stack(ps, "m", 1, cfg, 8, rng);
    Var w_out = ps.create("w_out", 4, 1, 0.1, rng);

    Tensor x(8, 4);
    for (auto& v : x.data) v = rng.normal();
    Tensor y(8, 1);
    for (int i = 0; i < 8; ++i) y.at(i, 0) = x.at(i, 0) - 0.5 * x.at(i, 2);
    Var xc = constant(x), yc = constant(y);

    TrainSchedule sched{200, 8, 1e-2};
    TrainResult res = train_loop(ps, sched, [&](int) {
        return mse(matmul(stack.forward(xc), w_out), yc);
    });
    REQUIRE(!res.aborted_nan);
    CHECK(res.steps_completed == 200);
    CHECK(res.loss_trajectory.back() < 0.2 * res.loss_trajectory.front());
}

TEST_CASE("train_loop aborts on nan loss keeping last good params") {
    Rng rng(8);
    ParamStore ps;
    Var w = ps.create("w", 1, 1, 0.0, rng);
    w->val.at(0, 0) = 1.0;
    TrainSchedule sched{10, 1, 0.1};
    TrainResult res = train_loop(ps, sched, [&](int step) -> Var {
        if (step == 3) {
            Tensor t(1, 1);
            t.data = {std::nan("")};
            return constant(t);
        }
        return mul(w, w);
    });
    CHECK(res.aborted_nan);
    CHECK(res.steps_completed == 3);
    CHECK(std::isfinite(w->val.at(0, 0)));
}

TEST_CASE("param store is name-sorted and counts scalars") {
    Rng rng(9);
    ParamStore ps;
    ps.create("zeta", 2, 3, 0.1, rng);
    ps.create("alpha", 1, 4, 0.1, rng);
    std::vector<std::string> names;
    for (const auto& [n, v] : ps.all()) names.push_back(n);
    CHECK(names == std::vector<std::string>{"alpha", "zeta"});
    CHECK(ps.count_scalars() == 10);
    CHECK_THROWS_AS(ps.get("missing"), ConfigError);
}
