#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "klora/encoder.hpp"
#include "klora/errors.hpp"
#include "klora/losses.hpp"
#include "klora/optim.hpp"
#include "support/gradcheck.hpp"

using namespace klora;

namespace {

Matrix random_batch(int n, int d, Rng& rng) {
    Matrix m(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = rng.uniform(-1.5, 1.5);
    return m;
}

} // namespace

TEST_CASE("encoder_apply zero network and constant mode") {
    EncoderSpec spec;
    spec.input_dim = 2;
    spec.hidden = {4};
    spec.modes = 3;
    spec.activation = Graph::Act::tanh;
    ParamVector params;
    auto blocks = encoder_register_params(spec, params, "f");
    Rng rng(1);
    Matrix batch = random_batch(5, 2, rng);
    Matrix out = encoder_apply(spec, params, blocks, batch);
    CHECK(out.rows() == 5);
    CHECK(out.cols() == 3);
    CHECK(out.max_abs() == 0.0);

    spec.prepend_constant = true;
    Matrix out2 = encoder_apply(spec, params, blocks, batch);
    CHECK(out2.cols() == 4);
    for (int i = 0; i < 5; ++i) CHECK(out2(i, 0) == 1.0);
}

TEST_CASE("encoder_apply identity layer") {
    EncoderSpec spec;
    spec.input_dim = 3;
    spec.modes = 3;
    ParamVector params;
    auto blocks = encoder_register_params(spec, params, "f");
    params.set_block(blocks[0], Matrix::identity(3));
    Rng rng(2);
    Matrix batch = random_batch(4, 3, rng);
    Matrix out = encoder_apply(spec, params, blocks, batch);
    CHECK((out - batch).max_abs() == 0.0);
}

TEST_CASE("graph forward matches plain encoder forward") {
    EncoderSpec spec;
    spec.input_dim = 2;
    spec.hidden = {5, 4};
    spec.modes = 3;
    spec.activation = Graph::Act::leaky_relu;
    spec.prepend_constant = true;
    ParamVector params;
    auto blocks = encoder_register_params(spec, params, "f");
    Rng rng(3);
    encoder_init_params(spec, params, blocks, rng);
    Matrix batch = random_batch(6, 2, rng);

    Graph g;
    NodeId out = encoder_forward(g, spec, params, blocks, g.constant(batch));
    Matrix plain = encoder_apply(spec, params, blocks, batch);
    CHECK((g.value(out) - plain).max_abs() == 0.0);
}

TEST_CASE("backward on parameter sum and constants") {
    ParamVector params;
    const int b = params.add_block("w", 2, 3);
    for (double& v : params.values) v = 0.7;
    Graph g;
    NodeId w = g.param(params, b);
    NodeId loss = g.sum(w);
    std::vector<double> grad(params.size(), 0.0);
    g.backward(loss, grad);
    for (double gv : grad) CHECK(gv == 1.0);

    // loss independent of the parameters
    Graph g2;
    (void)g2.param(params, b);
    NodeId c = g2.constant(Matrix::identity(2));
    NodeId loss2 = g2.trace(c);
    std::vector<double> grad2(params.size(), 0.0);
    g2.backward(loss2, grad2);
    for (double gv : grad2) CHECK(gv == 0.0);
}

TEST_CASE("stop_gradient zeroes sensitivity but keeps values") {
    ParamVector params;
    const int b = params.add_block("w", 1, 4);
    Rng rng(4);
    for (double& v : params.values) v = rng.uniform(-1, 1);

    auto build = [&](const ParamVector& p, bool stopped, std::vector<double>* grad) {
        Graph g;
        NodeId w = g.param(p, b);
        NodeId u = stopped ? g.stop_gradient(w) : w;
        // <w, sg[w]>-style pairing
        NodeId loss = g.sum(g.hadamard(w, u));
        if (grad) g.backward(loss, *grad);
        return g.scalar(loss);
    };
    std::vector<double> grad_plain(params.size(), 0.0), grad_stop(params.size(), 0.0);
    const double v_plain = build(params, false, &grad_plain);
    const double v_stop = build(params, true, &grad_stop);
    CHECK(v_plain == v_stop);
    for (size_t i = 0; i < params.size(); ++i) {
        CHECK(grad_plain[i] == doctest::Approx(2.0 * params.values[i]));
        CHECK(grad_stop[i] == doctest::Approx(params.values[i]));
    }
}

TEST_CASE("gradient of the low-rank objective matches finite differences") {
    EncoderSpec spec;
    spec.input_dim = 1;
    spec.hidden = {8};
    spec.modes = 3;
    spec.activation = Graph::Act::tanh;
    ParamVector params;
    auto blocks = encoder_register_params(spec, params, "f");
    auto gblocks = encoder_register_params(spec, params, "g");
    Rng rng(5);
    encoder_init_params(spec, params, blocks, rng);
    encoder_init_params(spec, params, gblocks, rng);
    Matrix bx = random_batch(16, 1, rng);
    Matrix bxp = random_batch(16, 1, rng);

    auto loss_of = [&](const ParamVector& p) {
        Graph g;
        LossBatchNodes nodes;
        nodes.f_x = encoder_forward(g, spec, p, blocks, g.constant(bx));
        nodes.g_xp = encoder_forward(g, spec, p, gblocks, g.constant(bxp));
        nodes.f_rho0 = nodes.f_x;
        nodes.g_rho1 = nodes.g_xp;
        return g.scalar(lora_loss(g, nodes));
    };
    auto loss_grad = [&](const ParamVector& p, std::vector<double>& grad) {
        Graph g;
        LossBatchNodes nodes;
        nodes.f_x = encoder_forward(g, spec, p, blocks, g.constant(bx));
        nodes.g_xp = encoder_forward(g, spec, p, gblocks, g.constant(bxp));
        nodes.f_rho0 = nodes.f_x;
        nodes.g_rho1 = nodes.g_xp;
        NodeId l = lora_loss(g, nodes);
        g.backward(l, grad);
        return g.scalar(l);
    };
    const double err = testsupport::gradient_check(loss_of, loss_grad, params);
    CHECK(err < 1e-6);
}

TEST_CASE("adam first step and zero-gradient behavior") {
    ParamVector params;
    params.add_block("w", 1, 4);
    for (double& v : params.values) v = 1.0;
    AdamState st = AdamState::create(params.size(), 0.1);
    st.eps = 1e-16;

    std::vector<double> zero(params.size(), 0.0);
    adam_step(st, params, zero);
    CHECK(st.step == 1);
    for (double v : params.values) CHECK(v == 1.0);

    // bias-corrected first step has unit normalized gradient
    AdamState fresh = AdamState::create(params.size(), 0.1);
    fresh.eps = 1e-16;
    std::vector<double> ones(params.size(), 1.0);
    adam_step(fresh, params, ones);
    for (double v : params.values) CHECK(v == doctest::Approx(0.9).epsilon(1e-10));

    // two successive identical gradients keep the descent direction
    ParamVector p2;
    p2.add_block("w", 1, 2);
    AdamState st2 = AdamState::create(p2.size(), 0.05);
    std::vector<double> g2{0.3, -0.7};
    adam_step(st2, p2, g2);
    adam_step(st2, p2, g2);
    CHECK(p2.values[0] < 0.0);
    CHECK(p2.values[1] > 0.0);
}

TEST_CASE("adam rejects non-finite gradients naming the block") {
    ParamVector params;
    params.add_block("f.W0", 1, 2);
    AdamState st = AdamState::create(params.size(), 0.1);
    std::vector<double> bad{1.0, std::nan("")};
    try {
        adam_step(st, params, bad);
        CHECK(false);
    } catch (const numerical_error& e) {
        CHECK(std::string(e.what()).find("f.W0") != std::string::npos);
    }
}

TEST_CASE("ema_update basics and fixed point") {
    std::vector<double> shadow{0.0};
    ema_update(shadow, {1.0}, 0.995);
    CHECK(shadow[0] == doctest::Approx(0.005));

    std::vector<double> s2{0.3};
    ema_update(s2, {1.0}, 0.0);
    CHECK(s2[0] == 1.0);

    std::vector<double> s3{0.0};
    for (int i = 0; i < 5000; ++i) ema_update(s3, {2.5}, 0.99);
    CHECK(s3[0] == doctest::Approx(2.5).epsilon(1e-8));
}

TEST_CASE("fd_jet stencil and encoder jets") {
    // exact on quadratics for any step
    Jet2 j = jet_from_stencil(1.21, 1.0, 0.81, 0.1); // f = x^2 around x = 1... f(1.1)=1.21
    CHECK(j.d2 == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(j.d1 == doctest::Approx(2.0).epsilon(1e-10));

    // cubic at x = 2 with h = 1e-4
    const double x = 2.0, h = 1e-4;
    auto cube = [](double v) { return v * v * v; };
    Jet2 jc = jet_from_stencil(cube(x + h), cube(x), cube(x - h), h);
    CHECK(std::fabs(jc.d1 - 12.0) <= 1e-6);
    CHECK(std::fabs(jc.d2 - 12.0) <= 1e-3);

    // constant mode has vanishing jets
    EncoderSpec spec;
    spec.input_dim = 1;
    spec.hidden = {6};
    spec.modes = 2;
    spec.activation = Graph::Act::celu;
    spec.prepend_constant = true;
    ParamVector params;
    auto blocks = encoder_register_params(spec, params, "f");
    Rng rng(6);
    encoder_init_params(spec, params, blocks, rng);
    auto jets = fd_jet(spec, params, blocks, 0.37, 1e-3);
    CHECK(jets.size() == 3);
    CHECK(jets[0].value == 1.0);
    CHECK(jets[0].d1 == 0.0);
    CHECK(jets[0].d2 == 0.0);

    // first derivative against a tanh-net analytic slope
    EncoderSpec lin;
    lin.input_dim = 1;
    lin.modes = 1;
    ParamVector lp;
    auto lb = encoder_register_params(lin, lp, "f");
    Matrix w(1, 1);
    w(0, 0) = 3.0;
    lp.set_block(lb[0], w);
    auto lj = fd_jet(lin, lp, lb, 0.2, 1e-4);
    CHECK(lj[0].d1 == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(std::fabs(lj[0].d2) < 1e-4);
}

TEST_CASE("deterministic training trajectory for identical seeds") {
    EncoderSpec spec;
    spec.input_dim = 1;
    spec.hidden = {6};
    spec.modes = 2;
    ParamVector p1, p2;
    auto b1 = encoder_register_params(spec, p1, "f");
    auto b2 = encoder_register_params(spec, p2, "f");
    Rng r1(99), r2(99);
    encoder_init_params(spec, p1, b1, r1);
    encoder_init_params(spec, p2, b2, r2);
    AdamState a1 = AdamState::create(p1.size(), 1e-2);
    AdamState a2 = AdamState::create(p2.size(), 1e-2);
    Rng batch_rng1(7), batch_rng2(7);
    for (int step = 0; step < 25; ++step) {
        Matrix bx1 = random_batch(8, 1, batch_rng1);
        Matrix bx2 = random_batch(8, 1, batch_rng2);
        for (ParamVector* p : {&p1, &p2}) {
            Graph g;
            NodeId f = encoder_forward(g, spec, *p, b1, g.constant(p == &p1 ? bx1 : bx2));
            NodeId loss = g.frobenius_sq(f);
            std::vector<double> grad(p->size(), 0.0);
            g.backward(loss, grad);
            adam_step(p == &p1 ? a1 : a2, *p, grad);
        }
    }
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1.values[i] == p2.values[i]);
}
