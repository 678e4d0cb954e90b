#pragma once

#include <span>

#include <json.hpp>

#include "dujad/fbs.hpp"
#include "dujad/linalg.hpp"
#include "dujad/scenario.hpp"

namespace dujad {

// Soft-output activity head: L_n = sigmoid(omega_h ||h_n||^2 + omega_x ||x_n||^2 - T_th).
struct AudParams {
    double omega_h = 0.0;
    double omega_x = 0.0;
    double T_th = 0.0;
    double L_bar = 0.5;  // decision threshold, not trained

    void validate() const;
};

struct Metrics {
    double uder = 0.0;
    double aser = 0.0;
    bool aser_undefined = false;  // no truly active UE; aser reported as 0
};

struct DetectionReport {
    RVector L;         // activity likelihoods (empty for hard-decision baselines)
    Activity xi_hat;
    CMatrix XD_tilde;  // nearest QPSK symbols, before gating
    CMatrix XD_hat;    // XD_tilde with undetected rows zeroed
    double uder = 0.0;
    double aser = 0.0;
    bool aser_undefined = false;
};

double sigmoid(double x);

RVector activity_likelihood(const SolverState& state, const AudParams& ap);
// Feature form used by training: L_n from precomputed energies.
double activity_likelihood(double channel_energy, double data_energy, const AudParams& ap);

// xi_hat_n = 1 iff L_n > L_bar.
Activity decide_activity(const RVector& L, double L_bar);

// Elementwise nearest point of {+-B +- jB}; zero components map to +B.
CMatrix nearest_symbols(const CMatrix& XD, double B);

// diag(xi_hat) * XD_tilde
CMatrix gate_by_activity(const CMatrix& XD_tilde, const Activity& xi_hat);

// UDER = mean |xi - xi_hat|. ASER counts symbol errors of XD_tilde over truly
// active rows only, normalized by R_D * N_a.
Metrics compute_metrics(const Instance& inst, const Activity& xi_hat, const CMatrix& XD_tilde);

// Full soft-output detection chain on a network output.
DetectionReport detect(const Instance& inst, const SolverState& state, const AudParams& ap, double B);

// Baseline activity rule: ||h_n||^2 > threshold.
Activity energy_activity(const CMatrix& H_hat, double threshold);
RVector channel_energies(const CMatrix& H);
RVector data_energies(const CMatrix& XD);

// Threshold minimizing the number of misclassified samples of `energies`
// against `truth`, placed at the geometric midpoint of the neighbouring sorted
// energies (non-negative inputs).
double calibrate_energy_threshold(std::span<const double> energies, std::span<const std::uint8_t> truth);

nlohmann::json to_json(const DetectionReport& report);

}  // namespace dujad
