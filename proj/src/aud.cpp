#include "dujad/aud.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dujad {

void AudParams::validate() const {
    if (!(L_bar >= 0.0 && L_bar <= 1.0)) throw std::invalid_argument("AudParams: L_bar must lie in [0, 1]");
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double activity_likelihood(double channel_energy, double data_energy, const AudParams& ap) {
    return sigmoid(ap.omega_h * channel_energy + ap.omega_x * data_energy - ap.T_th);
}

RVector channel_energies(const CMatrix& H) { return H.colwise().squaredNorm().transpose(); }

RVector data_energies(const CMatrix& XD) { return XD.rowwise().squaredNorm(); }

RVector activity_likelihood(const SolverState& state, const AudParams& ap) {
    const RVector eh = channel_energies(state.H);
    const RVector ex = data_energies(state.XD);
    RVector L(eh.size());
    for (Eigen::Index n = 0; n < L.size(); ++n) L(n) = activity_likelihood(eh(n), ex(n), ap);
    return L;
}

Activity decide_activity(const RVector& L, double L_bar) {
    Activity xi(static_cast<std::size_t>(L.size()));
    for (Eigen::Index n = 0; n < L.size(); ++n) xi[static_cast<std::size_t>(n)] = L(n) > L_bar ? 1 : 0;
    return xi;
}

CMatrix nearest_symbols(const CMatrix& XD, double B) {
    return XD.unaryExpr([B](const Complex& v) {
        return Complex(v.real() < 0.0 ? -B : B, v.imag() < 0.0 ? -B : B);
    });
}

CMatrix gate_by_activity(const CMatrix& XD_tilde, const Activity& xi_hat) {
    if (static_cast<Eigen::Index>(xi_hat.size()) != XD_tilde.rows()) {
        throw std::invalid_argument("gate_by_activity: length mismatch");
    }
    CMatrix out = XD_tilde;
    for (Eigen::Index n = 0; n < out.rows(); ++n)
        if (!xi_hat[static_cast<std::size_t>(n)]) out.row(n).setZero();
    return out;
}

Metrics compute_metrics(const Instance& inst, const Activity& xi_hat, const CMatrix& XD_tilde) {
    const auto N = inst.N();
    if (static_cast<int>(xi_hat.size()) != N || XD_tilde.rows() != N || XD_tilde.cols() != inst.R_D()) {
        throw std::invalid_argument("compute_metrics: shape mismatch");
    }
    Metrics m;
    int wrong_activity = 0;
    long wrong_symbols = 0;
    for (int n = 0; n < N; ++n) {
        wrong_activity += inst.xi[n] != xi_hat[n] ? 1 : 0;
        if (!inst.xi[n]) continue;
        for (int r = 0; r < inst.R_D(); ++r) wrong_symbols += inst.X_D(n, r) != XD_tilde(n, r) ? 1 : 0;
    }
    m.uder = static_cast<double>(wrong_activity) / N;
    const int active = inst.num_active();
    if (active == 0) {
        m.aser = 0.0;
        m.aser_undefined = true;
    } else {
        m.aser = static_cast<double>(wrong_symbols) / (static_cast<double>(inst.R_D()) * active);
    }
    return m;
}

DetectionReport detect(const Instance& inst, const SolverState& state, const AudParams& ap, double B) {
    ap.validate();
    DetectionReport rep;
    rep.L = activity_likelihood(state, ap);
    rep.xi_hat = decide_activity(rep.L, ap.L_bar);
    rep.XD_tilde = nearest_symbols(state.XD, B);
    rep.XD_hat = gate_by_activity(rep.XD_tilde, rep.xi_hat);
    const auto m = compute_metrics(inst, rep.xi_hat, rep.XD_tilde);
    rep.uder = m.uder;
    rep.aser = m.aser;
    rep.aser_undefined = m.aser_undefined;
    return rep;
}

Activity energy_activity(const CMatrix& H_hat, double threshold) {
    const RVector e = channel_energies(H_hat);
    Activity xi(static_cast<std::size_t>(e.size()));
    for (Eigen::Index n = 0; n < e.size(); ++n) xi[static_cast<std::size_t>(n)] = e(n) > threshold ? 1 : 0;
    return xi;
}

double calibrate_energy_threshold(std::span<const double> energies, std::span<const std::uint8_t> truth) {
    if (energies.size() != truth.size()) throw std::invalid_argument("calibrate_energy_threshold: length mismatch");
    if (energies.empty()) return 0.0;
    std::vector<std::size_t> order(energies.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return energies[a] < energies[b]; });

    // Energies spread over decades, so cuts sit at geometric midpoints.
    // Threshold below everything: every sample declared active.
    long errors = 0;
    for (auto t : truth) errors += t ? 0 : 1;
    long best_errors = errors;
    double best = energies[order.front()] - 1.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        // Moving the threshold past sample i declares it inactive.
        errors += truth[order[i]] ? 1 : -1;
        const bool last = i + 1 == order.size();
        if (!last && energies[order[i + 1]] == energies[order[i]]) continue;
        if (errors < best_errors) {
            best_errors = errors;
            const double lo = energies[order[i]];
            best = last ? lo : lo >= 0.0 ? std::sqrt(lo * energies[order[i + 1]]) : 0.5 * (lo + energies[order[i + 1]]);
        }
    }
    return best;
}

nlohmann::json to_json(const DetectionReport& report) {
    nlohmann::json j;
    j["uder"] = report.uder;
    j["aser"] = report.aser;
    j["aser_undefined"] = report.aser_undefined;
    j["xi_hat"] = report.xi_hat;
    std::vector<double> L(report.L.data(), report.L.data() + report.L.size());
    j["L"] = L;
    j["detected_active"] = count_active(report.xi_hat);
    return j;
}

}  // namespace dujad
