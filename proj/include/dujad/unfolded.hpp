#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dujad/fbs.hpp"
#include "dujad/linalg.hpp"
#include "dujad/scenario.hpp"

namespace dujad {

// Trainable scalars of one unfolded FBS module.
struct LayerParams {
    double tau_h = 0.0;
    double tau_x = 0.0;
    double eta_h = 0.0;
    double eta_x = 0.0;
    double mu_h = 0.0;    // clamped at 0 when used
    double lambda = 1.0;
    double nu = 0.0;
    double log_Ne = 0.0;  // N_e = exp(log_Ne) > 0

    static constexpr int kCount = 8;
    static const std::array<const char*, kCount>& names();

    double Ne() const { return std::exp(log_Ne); }
    std::array<double, kCount> to_array() const;
    static LayerParams from_array(const std::array<double, kCount>& a);
};

struct UnfoldedParams {
    std::vector<LayerParams> layers;  // K entries
    double P_a = 0.2;                 // activity prior, used by the exact PME

    static constexpr int kDefaultLayers = 10;

    int K() const { return static_cast<int>(layers.size()); }
    std::size_t num_trainable() const { return layers.size() * LayerParams::kCount; }
    std::vector<double> flatten() const;
    static UnfoldedParams unflatten(const std::vector<double>& flat, double P_a);
    void validate() const;
};

// Momentum forward step:
//   D_h <- tau_h (Y - H X) X^H + eta_h D_h,      H_hat  = H + D_h
//   D_x <- tau_x H^H (Y_D - H X_D) + eta_x D_x,  XD_hat = X_D + D_x
// Buffers carry over between layers.
SolverState forward_step(const SolverState& state, const Instance& inst, const LayerParams& lp);

// prox_h on every M-block with threshold tau_h * max(mu_h, 0).
CMatrix backward_h(const CMatrix& H_hat, const LayerParams& lp, int block_size);

// Exact posterior mean over Q^{R_D} u {0} with prior P_a / 4^{R_D} per QPSK
// vector and 1 - P_a on zero, Gaussian kernel exp(-||x - x_hat||^2 / N_e).
// Exponential in R_D; refuses R_D > 8.
CVector pme_exact_row(const Eigen::Ref<const CVector>& x_hat, double Ne, double Pa, double B);

struct ApproxPme {
    CVector x;     // alpha * x_check
    double alpha;  // in [0, 1]
};

// alpha = min(max(lambda ||x_hat||_1 - nu, 0) / ||x_hat||_1, 1), alpha = 0 when
// ||x_hat||_1 = 0. The data-conditional mean x_check factorizes per entry into
// B tanh(2 B Re(x_hat)/N_e) + j B tanh(2 B Im(x_hat)/N_e).
ApproxPme pme_approx_row(const Eigen::Ref<const CVector>& x_hat, const LayerParams& lp, double B);

// How the data part of each layer is finished. approx_pme is the network;
// the other two exist for equivalence checks against the classic solver.
enum class DataBackward { approx_pme, identity, box_prox };

struct NetworkOptions {
    DataBackward data_backward = DataBackward::approx_pme;
    double mu_x = 0.0;  // box_prox only: threshold tau_x * mu_x
    bool record_alpha = false;
};

struct NetworkOutput {
    SolverState state;  // S^{K+1}
    RMatrix alpha;      // K x N when record_alpha, else empty
};

class NetworkError : public std::runtime_error {
public:
    NetworkError(const std::string& what, int layer)
        : std::runtime_error(what + " at layer " + std::to_string(layer)), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

// K layers of forward_step -> backward_h -> data backward. Throws NetworkError
// naming the first layer that produced a non-finite value.
NetworkOutput run_network(const Instance& inst, const UnfoldedParams& params, const SolverState& init, double B,
                          const NetworkOptions& options = {});

struct NetworkGradient {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as UnfoldedParams::flatten()
};

// ||XD_out - target||_F^2 of the approx-PME network and its exact gradient with
// respect to every layer parameter, by reverse accumulation through the K
// layers. Kinks (prox threshold, alpha clamps, mu_h clamp) take the one-sided
// derivative of the active branch.
NetworkGradient network_loss_gradient(const Instance& inst, const UnfoldedParams& params, const SolverState& init,
                                      double B, const CMatrix& target);

nlohmann::json to_json(const LayerParams& lp);
nlohmann::json to_json(const UnfoldedParams& params);
LayerParams layer_params_from_json(const nlohmann::json& j);
UnfoldedParams unfolded_params_from_json(const nlohmann::json& j);

}  // namespace dujad
