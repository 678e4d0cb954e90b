#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dujad/aud.hpp"
#include "oracles.hpp"

using namespace dujad;

namespace {

const double B = std::sqrt(0.5);

// N UEs with R_D symbols, the first `active` of them active, all data +B+jB.
Instance toy(int N, int R_D, int active) {
    Instance inst;
    inst.M = 1;
    inst.P = 1;
    inst.xi.assign(static_cast<std::size_t>(N), 0);
    inst.X_D = CMatrix::Zero(N, R_D);
    inst.H = CMatrix::Zero(1, N);
    inst.X_P = CMatrix::Zero(N, 1);
    for (int n = 0; n < active; ++n) {
        inst.xi[static_cast<std::size_t>(n)] = 1;
        inst.X_D.row(n).setConstant(Complex(B, B));
        inst.H(0, n) = 1.0;
    }
    return inst;
}

}  // namespace

TEST_CASE("activity likelihood") {
    SolverState s = SolverState::from_channel(CMatrix::Zero(2, 3), 2);
    s.H(0, 1) = std::sqrt(2.0);
    AudParams ap;
    CHECK((activity_likelihood(s, ap).array() == 0.5).all());
    ap.omega_h = 1.0;
    ap.T_th = 1.0;
    CHECK(activity_likelihood(s, ap)(1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    ap.T_th = 1e6;
    CHECK(activity_likelihood(s, ap).maxCoeff() < 1e-300);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(std::isfinite(sigmoid(-1e308)));
}

TEST_CASE("activity decisions") {
    RVector L(2);
    L << 0.3, 0.7;
    CHECK(decide_activity(L, 0.5) == Activity{0, 1});
    CHECK(decide_activity(L, 0.0) == Activity{1, 1});
    CHECK(decide_activity(L, 1.0) == Activity{0, 0});

    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RVector many(50);
    for (auto& v : many) v = u(rng);
    int last = 51;
    for (double bar = 0.0; bar <= 1.0; bar += 0.05) {
        const int on = count_active(decide_activity(many, bar));
        CHECK(on <= last);
        last = on;
    }

    // Positive rescaling of the head keeps every decision at 0.5.
    SolverState s = SolverState::from_channel(CMatrix::Zero(2, 6), 3);
    for (Eigen::Index i = 0; i < s.H.size(); ++i) s.H(i) = complex_gaussian(rng, 1.0);
    for (Eigen::Index i = 0; i < s.XD.size(); ++i) s.XD(i) = complex_gaussian(rng, 0.3);
    AudParams ap{0.8, 1.3, 2.0, 0.5};
    AudParams scaled{8.0, 13.0, 20.0, 0.5};
    CHECK(decide_activity(activity_likelihood(s, ap), 0.5) == decide_activity(activity_likelihood(s, scaled), 0.5));
}

TEST_CASE("nearest symbols and gating") {
    CMatrix X(1, 2);
    X << Complex(0.1, 0.9), Complex(0.0, 0.0);
    const CMatrix q = nearest_symbols(X, B);
    CHECK(q(0, 0) == Complex(B, B));
    CHECK(q(0, 1) == Complex(B, B));

    Rng rng(2);
    CMatrix R(4, 5);
    for (Eigen::Index i = 0; i < R.size(); ++i) R(i) = complex_gaussian(rng, 1.0);
    const CMatrix near = nearest_symbols(R, B);
    const Complex symbols[4] = {{B, B}, {B, -B}, {-B, B}, {-B, -B}};
    for (Eigen::Index i = 0; i < R.size(); ++i) {
        double best = 1e300;
        for (const auto& c : symbols) best = std::min(best, std::abs(R(i) - c));
        CHECK(std::abs(R(i) - near(i)) == doctest::Approx(best));
    }

    CHECK(gate_by_activity(near, Activity{1, 1, 1, 1}) == near);
    CHECK(gate_by_activity(near, Activity{0, 0, 0, 0}).norm() == 0.0);
    const CMatrix mixed = gate_by_activity(near, Activity{1, 0, 1, 0});
    CHECK(mixed.row(0) == near.row(0));
    CHECK(mixed.row(1).norm() == 0.0);
    CHECK(mixed.row(2) == near.row(2));
    CHECK(mixed.row(3).norm() == 0.0);
}

TEST_CASE("metrics by hand") {
    Instance inst = toy(4, 8, 1);
    CMatrix tilde = inst.X_D;
    auto m = compute_metrics(inst, inst.xi, tilde);
    CHECK(m.uder == 0.0);
    CHECK(m.aser == 0.0);

    tilde(0, 2) = Complex(-B, B);
    tilde(0, 5) = Complex(B, -B);
    m = compute_metrics(inst, inst.xi, tilde);
    CHECK(m.aser == 0.25);

    Activity flipped(4);
    for (std::size_t n = 0; n < 4; ++n) flipped[n] = inst.xi[n] ? 0 : 1;
    CHECK(compute_metrics(inst, flipped, tilde).uder == 1.0);
    // Gating does not enter ASER.
    CHECK(compute_metrics(inst, flipped, tilde).aser == 0.25);

    const Instance quiet = toy(3, 2, 0);
    const auto q = compute_metrics(quiet, Activity{0, 1, 0}, CMatrix::Zero(3, 2));
    CHECK(q.aser == 0.0);
    CHECK(q.aser_undefined);
    CHECK(q.uder == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics are permutation invariant") {
    Rng rng(3);
    Instance inst = toy(6, 4, 3);
    CMatrix tilde = nearest_symbols(inst.X_D + CMatrix::Random(6, 4), B);
    Activity guess{1, 0, 1, 1, 0, 0};
    const auto m = compute_metrics(inst, guess, tilde);
    std::vector<int> perm{5, 2, 0, 4, 1, 3};
    Instance p = inst;
    CMatrix pt = tilde;
    Activity pg = guess;
    for (int i = 0; i < 6; ++i) {
        p.xi[static_cast<std::size_t>(i)] = inst.xi[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        p.X_D.row(i) = inst.X_D.row(perm[static_cast<std::size_t>(i)]);
        pt.row(i) = tilde.row(perm[static_cast<std::size_t>(i)]);
        pg[static_cast<std::size_t>(i)] = guess[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const auto mp = compute_metrics(p, pg, pt);
    CHECK(mp.uder == m.uder);
    CHECK(mp.aser == m.aser);
}

TEST_CASE("energy threshold calibration") {
    const std::vector<double> e{0.1, 0.2, 4.0, 9.0};
    const std::vector<std::uint8_t> truth{0, 0, 1, 1};
    const double t = calibrate_energy_threshold(e, truth);
    CHECK(t == doctest::Approx(std::sqrt(0.2 * 4.0)));
    CHECK(count_active(energy_activity(CMatrix::Identity(2, 2) * 3.0, t)) == 2);

    CMatrix H = CMatrix::Zero(2, 3);
    H(0, 0) = 3.0;
    H(1, 2) = Complex(0.0, 1.0);
    const RVector ch = channel_energies(H);
    CHECK(ch(0) == 9.0);
    CHECK(ch(1) == 0.0);
    CHECK(ch(2) == 1.0);
    CHECK(data_energies(H.transpose())(2) == 1.0);
}

TEST_CASE("detection chain") {
    Instance inst = toy(3, 2, 2);
    SolverState s = SolverState::from_channel(inst.H, 2);
    s.XD = inst.X_D * 0.9;
    const AudParams ap{1.0, 0.0, 0.5, 0.5};
    const auto rep = detect(inst, s, ap, B);
    CHECK(rep.xi_hat == inst.xi);
    CHECK(rep.uder == 0.0);
    CHECK(rep.aser == 0.0);
    CHECK(rep.XD_hat.row(2).norm() == 0.0);
    const auto j = to_json(rep);
    CHECK(j.at("uder").get<double>() == 0.0);
}
