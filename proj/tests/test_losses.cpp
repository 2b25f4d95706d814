#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "klora/encoder.hpp"
#include "klora/errors.hpp"
#include "klora/losses.hpp"
#include "klora/optim.hpp"
#include "support/chains.hpp"
#include "support/gradcheck.hpp"

using namespace klora;
using testsupport::chain_moments;
using testsupport::two_state_chain;

namespace {

Matrix random_batch(int n, int d, Rng& rng) {
    Matrix m(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = rng.uniform(-1.5, 1.5);
    return m;
}

// Exact singular-function tables of the symmetric two-state chain:
// phi = psi = {1, +-1} with sigma = (1, 1 - 2q).
Matrix chain_singular_table(double sigma2, bool scaled) {
    const double s = scaled ? std::sqrt(sigma2) : 1.0;
    return Matrix::from_rows({{1.0, s}, {1.0, -s}});
}

struct EncoderPair {
    EncoderSpec spec;
    ParamVector params;
    std::vector<int> fb, gb;
};

EncoderPair make_encoders(uint64_t seed, int k = 3, Graph::Act act = Graph::Act::tanh) {
    EncoderPair e;
    e.spec.input_dim = 1;
    e.spec.hidden = {6};
    e.spec.modes = k;
    e.spec.activation = act;
    e.fb = encoder_register_params(e.spec, e.params, "f");
    e.gb = encoder_register_params(e.spec, e.params, "g");
    Rng rng(seed);
    encoder_init_params(e.spec, e.params, e.fb, rng);
    encoder_init_params(e.spec, e.params, e.gb, rng);
    return e;
}

double run_loss(const LossConfig& cfg, const EncoderPair& e, const ParamVector& params,
                const Matrix& bx, const Matrix& bxp, std::vector<double>* grad) {
    Graph g;
    LossBatchNodes nodes;
    nodes.f_x = encoder_forward(g, e.spec, params, e.fb, g.constant(bx));
    nodes.g_xp = encoder_forward(g, e.spec, params, e.gb, g.constant(bxp));
    nodes.f_rho0 = nodes.f_x;
    nodes.g_rho1 = nodes.g_xp;
    NodeId loss = build_loss(g, cfg, nodes);
    if (grad) g.backward(loss, *grad);
    return g.scalar(loss);
}

} // namespace

TEST_CASE("lora value on constants, optimum and zero features") {
    auto chain = two_state_chain(0.25);

    Matrix const_table(2, 1);
    const_table(0, 0) = const_table(1, 0) = 1.0;
    auto mc = chain_moments(chain, const_table, const_table);
    CHECK(lora_value(mc.t_fg, mc.m_f, mc.m_g) == doctest::Approx(-1.0).epsilon(1e-14));

    // f_i = sqrt(sigma_i) phi_i, g_i = sqrt(sigma_i) psi_i attains -sum sigma^2
    Matrix ftab = chain_singular_table(0.5, true);
    auto mo = chain_moments(chain, ftab, ftab);
    CHECK(lora_value(mo.t_fg, mo.m_f, mo.m_g) == doctest::Approx(-1.25).epsilon(1e-14));

    Matrix zero(2, 2);
    auto mz = chain_moments(chain, zero, zero);
    CHECK(lora_value(mz.t_fg, mz.m_f, mz.m_g) == 0.0);
}

TEST_CASE("low-rank objective equals the Hilbert-Schmidt identity on an enumerated chain") {
    auto chain = testsupport::random_chain(8, 20260811, false);
    const Matrix kmat = testsupport::kernel_matrix(chain);
    const double k_hs = testsupport::hs_norm_sq(chain, kmat);
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix ftab(8, 3), gtab(8, 3);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 3; ++j) {
                ftab(i, j) = rng.uniform(-1, 1);
                gtab(i, j) = rng.uniform(-1, 1);
            }
        auto m = chain_moments(chain, ftab, gtab);
        const double loss = lora_value(m.t_fg, m.m_f, m.m_g);
        const Matrix resid = kmat - matmul_nt(ftab, gtab);
        const double direct = testsupport::hs_norm_sq(chain, resid);
        CHECK(std::fabs(loss + k_hs - direct) < 1e-10);
    }
}

TEST_CASE("sequential nesting keeps the forward value and k=1 gradient") {
    auto e = make_encoders(21);
    Rng rng(22);
    Matrix bx = random_batch(16, 1, rng);
    Matrix bxp = random_batch(16, 1, rng);

    LossConfig plain;
    plain.kind = LossKind::lora;
    LossConfig seq;
    seq.kind = LossKind::lora_seq;
    const double v_plain = run_loss(plain, e, e.params, bx, bxp, nullptr);
    const double v_seq = run_loss(seq, e, e.params, bx, bxp, nullptr);
    CHECK(v_plain == doctest::Approx(v_seq).epsilon(1e-14));

    auto e1 = make_encoders(23, 1);
    std::vector<double> g_plain(e1.params.size(), 0.0), g_seq(e1.params.size(), 0.0);
    run_loss(plain, e1, e1.params, bx, bxp, &g_plain);
    run_loss(seq, e1, e1.params, bx, bxp, &g_seq);
    for (size_t i = 0; i < g_plain.size(); ++i) {
        CHECK(g_plain[i] == doctest::Approx(g_seq[i]).epsilon(1e-12));
    }
}

TEST_CASE("sequential nesting: leading mode gradient ignores later modes") {
    // independent per-mode parameterization: table features over a 4-state
    // space, one parameter block per mode column
    auto chain = testsupport::random_chain(4, 5, false);
    auto pairs = testsupport::enumerate_pairs(chain);
    auto onehot = testsupport::onehot_map(4);
    const Matrix ox = onehot(pairs.x);
    const Matrix oxp = onehot(pairs.xp);
    // embed enumeration weights by row scaling: sqrt-weight trick keeps
    // M = F^T W F form exact for uniform 1/n scaling replaced by sum
    // -> instead evaluate with uniform weights over an expanded batch is
    // overkill; gradients only need *a* batch, so use the rows directly.
    Rng rng(31);

    ParamVector params2;
    const int wf2 = params2.add_block("wf", 4, 2);
    const int wg2 = params2.add_block("wg", 4, 2);
    for (double& v : params2.values) v = rng.uniform(-1, 1);

    ParamVector params1;
    params1.add_block("wf", 4, 1);
    params1.add_block("wg", 4, 1);
    // copy column 0
    for (int i = 0; i < 4; ++i) {
        params1.values[i] = params2.values[static_cast<size_t>(i) * 2];
        params1.values[4 + i] = params2.values[8 + static_cast<size_t>(i) * 2];
    }

    auto grad_of = [&](const ParamVector& p, bool seq) {
        Graph g;
        NodeId fx = g.matmul(g.constant(ox), g.param(p, 0));
        NodeId gxp = g.matmul(g.constant(oxp), g.param(p, 1));
        LossBatchNodes nodes{fx, gxp, fx, gxp};
        NodeId loss = seq ? lora_seq_loss(g, nodes) : lora_loss(g, nodes);
        std::vector<double> grad(p.size(), 0.0);
        g.backward(loss, grad);
        return grad;
    };
    const std::vector<double> g2 = grad_of(params2, true);
    const std::vector<double> g1 = grad_of(params1, false);
    // column 0 of the k=2 sequential gradient equals the k=1 plain gradient
    for (int i = 0; i < 4; ++i) {
        CHECK(g2[static_cast<size_t>(i) * 2] == doctest::Approx(g1[i]).epsilon(1e-12));
        CHECK(g2[8 + static_cast<size_t>(i) * 2] == doctest::Approx(g1[4 + i]).epsilon(1e-12));
    }
    (void)wf2;
    (void)wg2;
}

TEST_CASE("joint nesting equals the brute-force prefix sum") {
    auto e = make_encoders(41, 4);
    Rng rng(42);
    Matrix bx = random_batch(24, 1, rng);
    Matrix bxp = random_batch(24, 1, rng);

    for (bool uniform : {true, false}) {
        std::vector<double> w =
            uniform ? uniform_nesting_weights(4) : std::vector<double>{0.4, 0.3, 0.2, 0.1};
        LossConfig joint;
        joint.kind = LossKind::lora_joint;
        joint.nesting_weights = w;
        const double v_joint = run_loss(joint, e, e.params, bx, bxp, nullptr);

        // brute force: sum_i alpha_i * lora(f_{1:i}, g_{1:i}) via truncated tables
        const Matrix fx = encoder_apply(e.spec, e.params, e.fb, bx);
        const Matrix gxp = encoder_apply(e.spec, e.params, e.gb, bxp);
        double v_sum = 0.0;
        for (int i = 1; i <= 4; ++i) {
            Matrix fi(fx.rows(), i), gi(gxp.rows(), i);
            for (int r = 0; r < fx.rows(); ++r)
                for (int c = 0; c < i; ++c) {
                    fi(r, c) = fx(r, c);
                    gi(r, c) = gxp(r, c);
                }
            v_sum += w[i - 1] * lora_value(joint_moment(fi, gi), second_moment(fi), second_moment(gi));
        }
        CHECK(v_joint == doctest::Approx(v_sum).epsilon(1e-12));
    }

    // k = 1 and the all-ones mask both reduce to the plain objective
    auto e1 = make_encoders(43, 1);
    LossConfig joint1;
    joint1.kind = LossKind::lora_joint;
    LossConfig plain;
    plain.kind = LossKind::lora;
    CHECK(run_loss(joint1, e1, e1.params, bx, bxp, nullptr) ==
          doctest::Approx(run_loss(plain, e1, e1.params, bx, bxp, nullptr)).epsilon(1e-14));

    NestingMasks all_ones;
    all_ones.vector_mask.assign(4, 1.0);
    all_ones.matrix_mask = Matrix(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) all_ones.matrix_mask(i, j) = 1.0;
    Graph g;
    LossBatchNodes nodes;
    nodes.f_x = encoder_forward(g, e.spec, e.params, e.fb, g.constant(bx));
    nodes.g_xp = encoder_forward(g, e.spec, e.params, e.gb, g.constant(bxp));
    nodes.f_rho0 = nodes.f_x;
    nodes.g_rho1 = nodes.g_xp;
    const double v_mask = g.scalar(lora_joint_loss(g, nodes, all_ones));
    CHECK(v_mask == doctest::Approx(run_loss(plain, e, e.params, bx, bxp, nullptr)).epsilon(1e-13));
}

TEST_CASE("generator objective on constants, zero and a Hermite mode") {
    // f identically 1: L annihilates constants, loss = ||M||^2 = 1
    const int n = 64;
    Matrix fx(n, 1), lfx(n, 1);
    for (int i = 0; i < n; ++i) fx(i, 0) = 1.0;
    Graph g;
    NodeId f = g.constant(fx);
    NodeId lf = g.constant(lfx);
    // constants carry no gradient; attach a parameter so backward is defined
    CHECK(g.scalar(lora_generator_loss(g, f, lf, f, false)) == doctest::Approx(1.0));

    Graph g0;
    Matrix zx(n, 1);
    NodeId fz = g0.constant(zx);
    CHECK(g0.scalar(lora_generator_loss(g0, fz, fz, fz, false)) == 0.0);

    // Ornstein-Uhlenbeck: f(x) = x has Lf = -x, unit norm under N(0,1); the
    // mode contributes 2<f, Lf> + <f, f>^2 = -1
    Rng rng(51);
    Matrix hx(20000, 1), lhx(20000, 1);
    for (int i = 0; i < hx.rows(); ++i) {
        const double x = rng.normal();
        hx(i, 0) = x;
        lhx(i, 0) = -x;
    }
    Graph g1;
    NodeId fh = g1.constant(hx);
    NodeId lfh = g1.constant(lhx);
    const double v = g1.scalar(lora_generator_loss(g1, fh, lfh, fh, false));
    CHECK(v == doctest::Approx(-1.0).epsilon(0.05));
}

TEST_CASE("generator training drops below the constant-mode value on a mixed basis") {
    // Ornstein-Uhlenbeck samples; k = 2 with pinned constant. The best value
    // is 1 (constant) - 1 (first Hermite mode) = 0.
    EncoderSpec spec;
    spec.input_dim = 1;
    spec.hidden = {8};
    spec.modes = 1;
    spec.activation = Graph::Act::celu;
    spec.prepend_constant = true;
    ParamVector params;
    auto blocks = encoder_register_params(spec, params, "f");
    Rng rng(61);
    encoder_init_params(spec, params, blocks, rng);
    AdamState adam = AdamState::create(params.size(), 1e-2);

    Matrix states(4000, 1);
    for (int i = 0; i < states.rows(); ++i) states(i, 0) = rng.normal();

    double last = HUGE_VAL;
    for (int it = 0; it < 400; ++it) {
        Matrix bx(128, 1), bp(128, 1), bm(128, 1);
        std::vector<double> drift(128);
        const double h = 1e-3;
        for (int i = 0; i < 128; ++i) {
            const double x = states(static_cast<int>(rng.below(states.rows())), 0);
            bx(i, 0) = x;
            bp(i, 0) = x + h;
            bm(i, 0) = x - h;
            drift[i] = -x; // U = x^2/2, gamma = 1
        }
        Graph g;
        NodeId f = encoder_forward(g, spec, params, blocks, g.constant(bx));
        NodeId fp = encoder_forward(g, spec, params, blocks, g.constant(bp));
        NodeId fm = encoder_forward(g, spec, params, blocks, g.constant(bm));
        NodeId d1 = g.scale(g.sub(fp, fm), 1.0 / (2.0 * h));
        NodeId d2 = g.scale(g.sub(g.add(fp, fm), g.scale(f, 2.0)), 1.0 / (h * h));
        NodeId lf = g.add(g.scale_rows(d1, drift), d2);
        NodeId loss = lora_generator_loss(g, f, lf, f, true);
        last = g.scalar(loss);
        std::vector<double> grad(params.size(), 0.0);
        g.backward(loss, grad);
        adam_step(adam, params, grad);
    }
    CHECK(last < 0.6); // well below the constant-mode value of 1
}

TEST_CASE("metric distortion values") {
    CHECK(metric_distortion(Matrix::identity(3)) == doctest::Approx(0.0));
    std::vector<double> d{2.0, 1.0};
    CHECK(metric_distortion(Matrix::diag(d)) == doctest::Approx(2.0 - std::log(2.0)).epsilon(1e-12));

    Rng rng(71);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix b = random_batch(6, 4, rng);
        Matrix m = second_moment(b) + Matrix::identity(4) * 0.05;
        CHECK(metric_distortion(m) >= -1e-12);
    }
    std::vector<double> dz{1.0, 0.0};
    CHECK_THROWS_AS(metric_distortion(Matrix::diag(dz)), invalid_input_error);
}

TEST_CASE("vamp values on whitened features and the exact chain") {
    std::vector<double> sig{1.0, 0.5};
    Matrix t = Matrix::diag(sig);
    Matrix eye = Matrix::identity(2);
    CHECK(vamp_value(t, eye, eye, 1, 0.0) == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(vamp_value(t, eye, eye, 2, 0.0) == doctest::Approx(-1.25).epsilon(1e-12));

    auto chain = two_state_chain(0.25);
    Matrix onehot = Matrix::identity(2);
    auto m = chain_moments(chain, onehot, onehot);
    CHECK(vamp_value(m.t_fg, m.m_f, m.m_g, 2, 0.0) == doctest::Approx(-1.25).epsilon(1e-12));
}

TEST_CASE("dp reduces to vamp-2 at gamma 0 and adds distortions") {
    auto chain = two_state_chain(0.25);
    Matrix ftab = chain_singular_table(0.5, false); // unit-norm singular functions
    auto m = chain_moments(chain, ftab, ftab);
    CHECK(dp_value(m.t_fg, m.m_f, m.m_g, 0.0, 0.0) ==
          doctest::Approx(vamp_value(m.t_fg, m.m_f, m.m_g, 2, 0.0)).epsilon(1e-12));
    // whitened optimal features: distortion terms vanish for any gamma
    CHECK(dp_value(m.t_fg, m.m_f, m.m_g, 3.7, 0.0) == doctest::Approx(-1.25).epsilon(1e-10));

    std::vector<double> d{2.0, 1.0};
    Matrix md = Matrix::diag(d);
    std::vector<double> s{0.5, 0.25};
    Matrix ts = Matrix::diag(s);
    const double base = vamp_value(ts, md, md, 2, 0.0);
    CHECK(dp_value(ts, md, md, 1.0, 0.0) ==
          doctest::Approx(base + 2.0 * (2.0 - std::log(2.0))).epsilon(1e-12));
}

TEST_CASE("dp_relaxed values, homogeneity and constants") {
    auto chain = two_state_chain(0.25);
    Matrix ftab = chain_singular_table(0.5, false);
    auto m = chain_moments(chain, ftab, ftab);
    CHECK(dp_relaxed_value(m.t_fg, m.m_f, m.m_g, 0.0) == doctest::Approx(-1.25).epsilon(1e-12));

    // scaling f by c > 0 leaves the gamma = 0 term invariant
    const double c = 2.3;
    Matrix ftab_scaled = ftab;
    ftab_scaled *= c;
    auto ms = chain_moments(chain, ftab_scaled, ftab);
    CHECK(dp_relaxed_value(ms.t_fg, ms.m_f, ms.m_g, 0.0) ==
          doctest::Approx(-1.25).epsilon(1e-12));

    Matrix const_table(2, 1);
    const_table(0, 0) = const_table(1, 0) = 1.0;
    auto mc = chain_moments(chain, const_table, const_table);
    CHECK(dp_relaxed_value(mc.t_fg, mc.m_f, mc.m_g, 0.7) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("gradient suite: every objective matches finite differences") {
    std::vector<LossConfig> configs;
    {
        LossConfig c;
        c.kind = LossKind::lora;
        configs.push_back(c);
        c.kind = LossKind::lora_seq;
        configs.push_back(c);
        c.kind = LossKind::lora_joint;
        configs.push_back(c);
        c.kind = LossKind::vamp;
        c.vamp_r = 2;
        c.lambda = 1e-3;
        configs.push_back(c);
        c.vamp_r = 1;
        configs.push_back(c);
        c.kind = LossKind::dp;
        c.gamma = 1.0;
        configs.push_back(c);
        c.kind = LossKind::dp_relaxed;
        configs.push_back(c);
    }
    for (const LossConfig& cfg : configs) {
        for (uint64_t seed = 1; seed <= 5; ++seed) {
            auto e = make_encoders(100 + seed);
            Rng rng(200 + seed);
            Matrix bx = random_batch(16, 1, rng);
            Matrix bxp = random_batch(16, 1, rng);
            auto loss_of = [&](const ParamVector& p) {
                return run_loss(cfg, e, p, bx, bxp, nullptr);
            };
            auto loss_grad = [&](const ParamVector& p, std::vector<double>& grad) {
                return run_loss(cfg, e, p, bx, bxp, &grad);
            };
            const double err = testsupport::gradient_check(loss_of, loss_grad, e.params);
            INFO("loss ", loss_kind_name(cfg.kind), " r=", cfg.vamp_r, " seed ", seed);
            CHECK(err <= 1e-5);
        }
    }

    // generator objective gradient, through the jet stencil
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        EncoderSpec spec;
        spec.input_dim = 1;
        spec.hidden = {6};
        spec.modes = 2;
        spec.activation = Graph::Act::celu;
        spec.prepend_constant = true;
        ParamVector params;
        auto blocks = encoder_register_params(spec, params, "f");
        Rng rng(300 + seed);
        encoder_init_params(spec, params, blocks, rng);
        Matrix bx = random_batch(16, 1, rng);
        const double h = 1e-3;
        Matrix bp = bx, bm = bx;
        std::vector<double> drift(16);
        for (int i = 0; i < 16; ++i) {
            bp(i, 0) += h;
            bm(i, 0) -= h;
            drift[i] = -bx(i, 0);
        }
        auto build = [&](const ParamVector& p, std::vector<double>* grad) {
            Graph g;
            NodeId f = encoder_forward(g, spec, p, blocks, g.constant(bx));
            NodeId fp = encoder_forward(g, spec, p, blocks, g.constant(bp));
            NodeId fm = encoder_forward(g, spec, p, blocks, g.constant(bm));
            NodeId d1 = g.scale(g.sub(fp, fm), 1.0 / (2.0 * h));
            NodeId d2 = g.scale(g.sub(g.add(fp, fm), g.scale(f, 2.0)), 1.0 / (h * h));
            NodeId lf = g.add(g.scale_rows(d1, drift), d2);
            NodeId loss = lora_generator_loss(g, f, lf, f, true);
            if (grad) g.backward(loss, *grad);
            return g.scalar(loss);
        };
        const double err = testsupport::gradient_check(
            [&](const ParamVector& p) { return build(p, nullptr); },
            [&](const ParamVector& p, std::vector<double>& grad) { return build(p, &grad); },
            params);
        INFO("generator seed ", seed);
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("full-batch gradient descent decreases every objective") {
    for (LossKind kind : {LossKind::lora, LossKind::lora_seq, LossKind::lora_joint, LossKind::vamp,
                          LossKind::dp, LossKind::dp_relaxed}) {
        LossConfig cfg;
        cfg.kind = kind;
        cfg.vamp_r = 2;
        cfg.lambda = 1e-3;
        cfg.gamma = kind == LossKind::dp || kind == LossKind::dp_relaxed ? 1.0 : 0.0;
        auto e = make_encoders(400 + static_cast<int>(kind), 2);
        Rng rng(77);
        Matrix bx = random_batch(64, 1, rng);
        Matrix bxp = random_batch(64, 1, rng);
        ParamVector p = e.params;
        double prev = HUGE_VAL;
        bool monotone = true;
        const double lr = 2e-3;
        for (int step = 0; step < 50; ++step) {
            std::vector<double> grad(p.size(), 0.0);
            const double v = run_loss(cfg, e, p, bx, bxp, &grad);
            if (v > prev + 1e-12) monotone = false;
            prev = v;
            for (size_t i = 0; i < p.size(); ++i) p.values[i] -= lr * grad[i];
        }
        INFO("loss ", loss_kind_name(kind));
        CHECK(monotone);
    }
}

TEST_CASE("vamp-1 raises on degenerate singular-value gaps") {
    // engineered coincident singular values: f = g makes the whitened matrix
    // have sigma = (1, 1)
    Graph g;
    Matrix feat(8, 2);
    Rng rng(80);
    for (int i = 0; i < 8; ++i) {
        feat(i, 0) = rng.uniform(-1, 1);
        feat(i, 1) = rng.uniform(-1, 1);
    }
    ParamVector p;
    const int blk = p.add_block("w", 2, 2);
    p.set_block(blk, Matrix::identity(2));
    NodeId w = g.param(p, blk);
    NodeId fx = g.matmul(g.constant(feat), w);
    LossBatchNodes nodes{fx, fx, fx, fx};
    CHECK_THROWS_AS((void)vamp_loss(g, nodes, 1, 0.0), numerical_error);
}

TEST_CASE("free linear encoders reach the exact chain optimum (small budget)") {
    // enumeration realized as an 8-sample dataset: weights are eighths
    auto chain = two_state_chain(0.25);
    Matrix bx(8, 1), bxp(8, 1);
    int row = 0;
    auto push = [&](int a, int b, int count) {
        for (int c = 0; c < count; ++c, ++row) {
            bx(row, 0) = a;
            bxp(row, 0) = b;
        }
    };
    push(0, 0, 3);
    push(0, 1, 1);
    push(1, 0, 1);
    push(1, 1, 3);

    // one-hot input encoding via a 2-state table: linear encoder over
    // indicator coordinates
    EncoderSpec spec;
    spec.input_dim = 2;
    spec.modes = 2;
    ParamVector params;
    auto fb = encoder_register_params(spec, params, "f");
    auto gb = encoder_register_params(spec, params, "g");
    Rng rng(90);
    encoder_init_params(spec, params, fb, rng);
    encoder_init_params(spec, params, gb, rng);

    Matrix ox(8, 2), oxp(8, 2);
    for (int i = 0; i < 8; ++i) {
        ox(i, static_cast<int>(bx(i, 0))) = 1.0;
        oxp(i, static_cast<int>(bxp(i, 0))) = 1.0;
    }
    AdamState adam = AdamState::create(params.size(), 0.05);
    double last = 0.0;
    for (int step = 0; step < 800; ++step) {
        Graph g;
        LossBatchNodes nodes;
        nodes.f_x = encoder_forward(g, spec, params, fb, g.constant(ox));
        nodes.g_xp = encoder_forward(g, spec, params, gb, g.constant(oxp));
        nodes.f_rho0 = nodes.f_x;
        nodes.g_rho1 = nodes.g_xp;
        NodeId loss = lora_loss(g, nodes);
        last = g.scalar(loss);
        std::vector<double> grad(params.size(), 0.0);
        g.backward(loss, grad);
        adam_step(adam, params, grad);
    }
    CHECK(last < -1.249);
}
