#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dujad/unfolded.hpp"
#include "oracles.hpp"

using namespace dujad;

namespace {

const double B = std::sqrt(0.5);

LayerParams layer(double tau, double eta) {
    LayerParams lp;
    lp.tau_h = lp.tau_x = tau;
    lp.eta_h = lp.eta_x = eta;
    return lp;
}

UnfoldedParams random_params(Rng& rng, int K) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    UnfoldedParams p;
    p.P_a = 0.3;
    for (int k = 0; k < K; ++k) {
        LayerParams l;
        l.tau_h = 0.02 + 0.02 * u(rng);
        l.tau_x = 0.02 + 0.02 * u(rng);
        l.eta_h = 0.3 * u(rng);
        l.eta_x = 0.3 * u(rng);
        l.mu_h = 0.5 + u(rng);
        l.lambda = 1.2 + u(rng);
        l.nu = 2.0 + u(rng);
        l.log_Ne = u(rng) - 0.5;
        p.layers.push_back(l);
    }
    return p;
}

}  // namespace

TEST_CASE("forward step") {
    Rng rng(1);
    const Instance inst = oracle::random_instance(rng, 2, 2, 4, 3, 3, B);
    const SolverState s = oracle::random_state(rng, inst, B);

    const SolverState same = forward_step(s, inst, layer(0.0, 0.0));
    CHECK(same.H == s.H);
    CHECK(same.XD == s.XD);

    const Gradient g = grad_f(s, inst);
    const SolverState plain = forward_step(s, inst, layer(0.07, 0.0));
    CHECK((plain.H - (s.H - 0.07 * g.H)).norm() < 1e-12);
    CHECK((plain.XD - (s.XD - 0.07 * g.XD)).norm() < 1e-12);

    // Two layers with eta = 0.5, unrolled by hand.
    const LayerParams lp = layer(0.05, 0.5);
    const SolverState one = forward_step(s, inst, lp);
    const SolverState two = forward_step(one, inst, lp);
    const Gradient g1 = grad_f(one, inst);
    const CMatrix Dh1 = -0.05 * g.H;
    const CMatrix Dx1 = -0.05 * g.XD;
    const CMatrix Dh2 = -0.05 * g1.H + 0.5 * Dh1;
    const CMatrix Dx2 = -0.05 * g1.XD + 0.5 * Dx1;
    CHECK((one.D_h - Dh1).norm() < 1e-12);
    CHECK((two.D_h - Dh2).norm() < 1e-12);
    CHECK((two.D_x - Dx2).norm() < 1e-12);
    CHECK((two.H - (one.H + Dh2)).norm() < 1e-12);
    CHECK((two.XD - (one.XD + Dx2)).norm() < 1e-12);
}

TEST_CASE("channel backward step") {
    Rng rng(2);
    CMatrix H(4, 3);
    for (Eigen::Index i = 0; i < H.size(); ++i) H(i) = complex_gaussian(rng, 1.0);
    LayerParams lp;
    lp.tau_h = 0.5;
    lp.mu_h = 0.0;
    CHECK(backward_h(H, lp, 2) == H);
    lp.mu_h = 100.0;
    CHECK(backward_h(H, lp, 2).norm() == 0.0);
    CMatrix one = CMatrix::Zero(2, 1);
    one(0, 0) = 1.0;
    lp.mu_h = 0.5;
    const CMatrix out = backward_h(one, lp, 2);
    CHECK(std::abs(out(0, 0) - Complex(0.75, 0.0)) < 1e-15);
    CHECK(out(1, 0) == Complex(0.0));
}

TEST_CASE("exact posterior mean") {
    CVector target(2);
    target << Complex(B, -B), Complex(-B, -B);
    const CVector sharp = pme_exact_row(target * 1.05, 1e-3, 0.2, B);
    CHECK((sharp - target).norm() < 1e-9);

    const CVector sym = pme_exact_row(CVector::Zero(3), 0.7, 0.4, B);
    CHECK(std::abs(sym.sum()) < 1e-15);

    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        CVector x(2);
        x << complex_gaussian(rng, 1.0), complex_gaussian(rng, 1.0);
        CHECK((pme_exact_row(x, 1.0, 0.2, B) - oracle::sparse_qpsk_posterior_mean(x, 1.0, 0.2, B)).norm() < 1e-12);
    }
    CHECK_THROWS(pme_exact_row(CVector::Zero(9), 1.0, 0.2, B));
}

TEST_CASE("approximate posterior mean") {
    LayerParams lp;
    lp.lambda = 1.5;
    lp.nu = 0.3;
    const auto zero = pme_approx_row(CVector::Zero(3), lp, B);
    CHECK(zero.x.norm() == 0.0);
    CHECK(zero.alpha == 0.0);

    CVector x(3);
    x << Complex(0.2, -0.01), Complex(-0.3, 0.4), Complex(1e-3, -2.0);
    lp.log_Ne = -40.0;
    lp.lambda = 10.0;
    const auto hard = pme_approx_row(x, lp, B);
    CHECK(hard.alpha == 1.0);
    for (int r = 0; r < 3; ++r) {
        CHECK(hard.x(r).real() == doctest::Approx(std::copysign(B, x(r).real())));
        CHECK(hard.x(r).imag() == doctest::Approx(std::copysign(B, x(r).imag())));
    }

    // alpha = (lambda l1 - nu) / l1 inside the clamps.
    lp.log_Ne = 0.0;
    lp.lambda = 0.8;
    lp.nu = 0.1;
    const double l1 = x.cwiseAbs().sum();
    CHECK(pme_approx_row(x, lp, B).alpha == doctest::Approx((0.8 * l1 - 0.1) / l1));

    Rng rng(4);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int t = 0; t < 2000; ++t) {
        LayerParams q;
        q.lambda = nd(rng);
        q.nu = nd(rng);
        q.log_Ne = nd(rng);
        CVector v(4);
        for (int r = 0; r < 4; ++r) v(r) = Complex(nd(rng), nd(rng));
        const auto out = pme_approx_row(v, q, B);
        CHECK(out.alpha >= 0.0);
        CHECK(out.alpha <= 1.0);
        CHECK(out.x.real().cwiseAbs().maxCoeff() <= B);
        CHECK(out.x.imag().cwiseAbs().maxCoeff() <= B);
    }
}

TEST_CASE("network") {
    Rng rng(5);
    const Instance inst = oracle::random_instance(rng, 2, 2, 4, 3, 3, B);
    SolverState init = oracle::random_state(rng, inst, B);
    UnfoldedParams idle;
    idle.layers.assign(3, layer(0.0, 0.0));
    idle.layers[0].lambda = 1.0;
    const auto out = run_network(inst, idle, init, B, {DataBackward::identity});
    CHECK(out.state.H == init.H);
    CHECK(out.state.XD == init.XD);

    // One layer, momentum off, alpha = 1, N_e -> 0: a plain FBS forward step
    // followed by rounding.
    UnfoldedParams one;
    one.layers.assign(1, layer(0.05, 0.0));
    one.layers[0].mu_h = 0.4;
    one.layers[0].lambda = 1e6;
    one.layers[0].log_Ne = -60.0;
    ObjectiveParams op;
    op.mu_h = 0.4;
    op.B = 1e300;
    const SolverState ref = fbs_step(init, inst, op, 0.05);
    const auto net = run_network(inst, one, init, B);
    CHECK((net.state.H - ref.H).norm() < 1e-12);
    for (Eigen::Index i = 0; i < ref.XD.size(); ++i) {
        CHECK(net.state.XD(i).real() == std::copysign(B, ref.XD(i).real()));
        CHECK(net.state.XD(i).imag() == std::copysign(B, ref.XD(i).imag()));
    }

    UnfoldedParams bad;
    bad.layers.assign(2, layer(1e200, 0.0));
    CHECK_THROWS_AS(run_network(inst, bad, init, B), NetworkError);

    UnfoldedParams p = random_params(rng, 4);
    const auto a = run_network(inst, p, init, B, {DataBackward::approx_pme, 0.0, true});
    const auto b = run_network(inst, p, init, B);
    CHECK(a.state.XD == b.state.XD);
    CHECK(a.alpha.rows() == 4);
    CHECK((a.alpha.array() >= 0.0).all());
    CHECK((a.alpha.array() <= 1.0).all());
    CHECK(UnfoldedParams::unflatten(p.flatten(), p.P_a).flatten() == p.flatten());
    CHECK(unfolded_params_from_json(to_json(p)).flatten() == p.flatten());
    CHECK(UnfoldedParams{std::vector<LayerParams>(10), 0.2}.num_trainable() == 80);
}

TEST_CASE("reverse-mode gradient matches finite differences") {
    Rng rng(6);
    for (int t = 0; t < 4; ++t) {
        const Instance inst = oracle::random_instance(rng, 2, 3, 5, 4, 6, B);
        const SolverState init = oracle::random_state(rng, inst, B);
        const UnfoldedParams p = random_params(rng, 3);
        const auto g = network_loss_gradient(inst, p, init, B, inst.X_D);
        CHECK(g.loss == doctest::Approx((run_network(inst, p, init, B).state.XD - inst.X_D).squaredNorm()));
        const auto flat = p.flatten();
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(flat[i]));
            auto up = flat, down = flat;
            up[i] += h;
            down[i] -= h;
            const CMatrix lp = run_network(inst, UnfoldedParams::unflatten(up, p.P_a), init, B).state.XD - inst.X_D;
            const CMatrix lm = run_network(inst, UnfoldedParams::unflatten(down, p.P_a), init, B).state.XD - inst.X_D;
            const double fd = (lp.squaredNorm() - lm.squaredNorm()) / (2.0 * h);
            CHECK(std::abs(fd - g.grad[i]) <= 1e-5 * std::max(1e-2, std::abs(fd)));
        }
    }
}
