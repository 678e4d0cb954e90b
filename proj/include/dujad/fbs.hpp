#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dujad/linalg.hpp"
#include "dujad/scenario.hpp"

namespace dujad {

// Iterate of the joint channel/data problem. The stacked variable is
// S = [H; X_D^H], (MP + R_D) x N. Momentum buffers are only used by the
// unfolded network and stay zero for the classic solver.
struct SolverState {
    CMatrix H;    // MP x N
    CMatrix XD;   // N x R_D
    CMatrix D_h;  // MP x N
    CMatrix D_x;  // N x R_D
    int k = 0;

    // Channel estimate with X_D = 0 and zeroed momentum (k = 0).
    static SolverState from_channel(CMatrix H, int R_D);
    CMatrix stacked() const;
};

struct ObjectiveParams {
    double mu_h = 0.0;  // group-sparsity weight on per-AP channel blocks
    double mu_x = 0.0;  // row-sparsity weight on data rows
    double B = 0.70710678118654752440;
    double tau = 1.0;   // step size for StepRule::fixed

    void validate() const;
};

struct Gradient {
    CMatrix H;   // MP x N
    CMatrix XD;  // N x R_D
};

// 0.5 ||Y - H [X_P, X_D]||_F^2
double eval_f(const SolverState& state, const Instance& inst);

// mu_h sum ||h_{n,p}|| + mu_x sum ||x_{D,n}||, or +inf if any data entry leaves
// the box |Re|, |Im| <= B. `block_size` is M.
double eval_g(const SolverState& state, const ObjectiveParams& params, int block_size);

// Real gradient (d/dRe + j d/dIm) of eval_f:
//   grad_H  = -(Y - H X) X^H
//   grad_XD = -H^H (Y_D - H X_D)
// The data block is the N x R_D arrangement of the S-block (Y_D - H X_D)^H H.
Gradient grad_f(const SolverState& state, const Instance& inst);

// Group soft threshold max(||v|| - t, 0) v / ||v||.
CVector prox_h(const Eigen::Ref<const CVector>& block, double threshold);
// prox_h on every length-`block_size` segment of every column.
void prox_h_blocks(CMatrix& H, int block_size, double threshold);

// Data backward step: group shrinkage of the row followed by clipping real and
// imaginary parts to [-B, B].
CVector prox_xd_row(const Eigen::Ref<const CVector>& row, double threshold, double B);
// Exact prox of threshold*||x|| + box indicator. The minimizer is
// x = clip(v * rho / (rho + t)) with rho = ||x||, solved for rho by bisection.
CVector prox_xd_row_exact(const Eigen::Ref<const CVector>& row, double threshold, double B);

enum class StepRule { barzilai_borwein, fixed };
enum class DataProx { shrink_then_clip, exact };

struct FbsOptions {
    int max_iter = 200;
    double tol = 1e-3;
    StepRule step_rule = StepRule::barzilai_borwein;
    DataProx data_prox = DataProx::shrink_then_clip;
    int max_backtracks = 40;
    int nonmonotone_window = 1;  // >1: backtracking compares against the max f of this many iterates
    bool record_trace = false;
};

struct TraceEntry {
    int iteration = 0;
    double f = 0.0;
    double g = 0.0;
    double step = 0.0;
};

struct FbsResult {
    SolverState state;
    int iterations = 0;
    double objective = 0.0;
    bool converged = false;
    std::vector<TraceEntry> trace;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, int iteration, double objective, double step)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ", objective " +
                             std::to_string(objective) + ", step " + std::to_string(step) + ")"),
          iteration_(iteration) {}
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

// One plain FBS iterate with step tau: forward step, per-block channel prox,
// per-row data prox.
SolverState fbs_step(const SolverState& state, const Instance& inst, const ObjectiveParams& params, double tau,
                     DataProx data_prox = DataProx::shrink_then_clip);

// Box-constrained FBS for joint channel and data estimation. Stops when the
// relative change of S drops below tol or after max_iter accepted steps.
FbsResult fbs_solve(const Instance& inst, const ObjectiveParams& params, const SolverState& init,
                    const FbsOptions& options = {});

struct PilotEstimate {
    CMatrix H;
    int iterations = 0;
    double objective = 0.0;
    bool converged = false;
    std::vector<TraceEntry> trace;
};

// FBS on 0.5 ||Y_P - H X_P||^2 + mu_h sum ||h_{n,p}|| over H alone.
PilotEstimate pilot_only_estimate(const Instance& inst, const ObjectiveParams& params, const FbsOptions& options = {});

struct ZfResult {
    CMatrix XD;                   // N x R_D, zero rows for inactive UEs
    bool rank_deficient = false;  // active channel had deficient column rank
};

// Least squares on the active columns of H_hat, then nearest QPSK symbol.
ZfResult zf_detect(const CMatrix& H_hat, const Activity& active, const CMatrix& Y_D, double B);

void write_trace_csv(const std::string& path, const std::vector<TraceEntry>& trace);

}  // namespace dujad
