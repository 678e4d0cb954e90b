#include "dujad/fbs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>

#include "dujad/aud.hpp"

namespace dujad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clip(double v, double B) { return std::clamp(v, -B, B); }

double block_norm_sum(const CMatrix& H, int block_size) {
    double sum = 0.0;
    const auto blocks = H.rows() / block_size;
    for (Eigen::Index n = 0; n < H.cols(); ++n)
        for (Eigen::Index p = 0; p < blocks; ++p) sum += H.col(n).segment(p * block_size, block_size).norm();
    return sum;
}

void check_shapes(const SolverState& s, const Instance& inst) {
    if (s.H.rows() != inst.Y.rows() || s.H.cols() != inst.N() || s.XD.rows() != inst.N() ||
        s.XD.cols() != inst.R_D()) {
        throw std::invalid_argument("solver state does not match instance dimensions");
    }
}

// Smooth part, gradient, prox and g of a composite problem over SolverState.
struct JointProblem {
    const Instance& inst;
    const ObjectiveParams& params;
    DataProx data_prox;

    double f(const SolverState& s) const { return eval_f(s, inst); }
    Gradient grad(const SolverState& s) const { return grad_f(s, inst); }
    double g(const SolverState& s) const { return eval_g(s, params, inst.M); }
    void prox(SolverState& s, double tau) const {
        prox_h_blocks(s.H, inst.M, tau * params.mu_h);
        const double t = tau * params.mu_x;
        for (Eigen::Index n = 0; n < s.XD.rows(); ++n) {
            CVector row = s.XD.row(n).transpose();
            s.XD.row(n) = (data_prox == DataProx::exact ? prox_xd_row_exact(row, t, params.B)
                                                        : prox_xd_row(row, t, params.B))
                              .transpose();
        }
    }
};

struct PilotProblem {
    const Instance& inst;
    const ObjectiveParams& params;

    double f(const SolverState& s) const { return 0.5 * (inst.Y_P() - s.H * inst.X_P).squaredNorm(); }
    Gradient grad(const SolverState& s) const {
        Gradient g;
        g.H = -(inst.Y_P() - s.H * inst.X_P) * inst.X_P.adjoint();
        g.XD = CMatrix(s.XD.rows(), 0);
        return g;
    }
    double g(const SolverState& s) const { return params.mu_h * block_norm_sum(s.H, inst.M); }
    void prox(SolverState& s, double tau) const { prox_h_blocks(s.H, inst.M, tau * params.mu_h); }
};

double squared_norm(const SolverState& s) { return s.H.squaredNorm() + s.XD.squaredNorm(); }
double squared_norm(const Gradient& g) { return g.H.squaredNorm() + g.XD.squaredNorm(); }

double real_dot(const Gradient& a, const Gradient& b) {
    return dujad::real_dot(a.H, b.H) + dujad::real_dot(a.XD, b.XD);
}

SolverState forward(const SolverState& s, const Gradient& g, double tau) {
    SolverState out = s;
    out.H -= tau * g.H;
    out.XD -= tau * g.XD;
    return out;
}

Gradient difference(const SolverState& a, const SolverState& b) { return {a.H - b.H, a.XD - b.XD}; }
Gradient difference(const Gradient& a, const Gradient& b) { return {a.H - b.H, a.XD - b.XD}; }

struct EngineResult {
    SolverState state;
    int iterations = 0;
    double objective = 0.0;
    bool converged = false;
    std::vector<TraceEntry> trace;
};

// Forward-backward splitting. With StepRule::barzilai_borwein the step comes
// from the adaptive BB rule and is halved until the quadratic upper bound on f
// holds. With the default window of 1 the bound is taken at the current
// iterate, which also makes f + g non-increasing.
template <class Problem>
EngineResult run_fbs(const Problem& problem, SolverState x, double fixed_tau, const FbsOptions& opt) {
    if (opt.max_iter < 1) throw std::invalid_argument("fbs: max_iter must be >= 1");
    if (!(opt.tol > 0.0)) throw std::invalid_argument("fbs: tol must be positive");
    if (opt.nonmonotone_window < 1) throw std::invalid_argument("fbs: nonmonotone_window must be >= 1");

    EngineResult res;
    double fx = problem.f(x);
    double gx = problem.g(x);
    if (!std::isfinite(gx)) {
        problem.prox(x, 0.0);
        fx = problem.f(x);
        gx = problem.g(x);
    }
    if (!std::isfinite(fx) || !std::isfinite(gx)) throw SolverError("non-finite initial objective", 0, fx + gx, 0.0);
    Gradient grad = problem.grad(x);

    double tau = fixed_tau;
    if (opt.step_rule == StepRule::barzilai_borwein) {
        const double gnorm = std::sqrt(squared_norm(grad));
        if (gnorm == 0.0) {
            tau = 1.0;
        } else {
            // Local curvature from a small probe along the gradient.
            const double eps = 1e-4 * std::max(1.0, std::sqrt(squared_norm(x))) / gnorm;
            SolverState probe = forward(x, grad, eps);
            Gradient gp = problem.grad(probe);
            const double lip = std::sqrt(squared_norm(difference(gp, grad))) / (eps * gnorm);
            tau = lip > 0.0 && std::isfinite(lip) ? 1.0 / lip : 1.0;
        }
    }

    if (opt.record_trace) res.trace.push_back({0, fx, gx, tau});
    std::deque<double> recent{fx};

    for (int it = 1; it <= opt.max_iter; ++it) {
        SolverState next;
        double fn = 0.0;
        double gn = 0.0;
        bool accepted = false;
        for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
            next = forward(x, grad, tau);
            problem.prox(next, tau);
            fn = problem.f(next);
            gn = problem.g(next);
            if (opt.step_rule == StepRule::fixed) {
                accepted = true;
                break;
            }
            // Quadratic upper bound around the worst of the recent iterates
            // (non-monotone; a window of 1 is classic backtracking).
            const Gradient d = difference(next, x);
            const double ref = *std::max_element(recent.begin(), recent.end());
            const double model = ref + real_dot(grad, d) + squared_norm(d) / (2.0 * tau);
            if (std::isfinite(fn) && fn <= model + 1e-12 * std::abs(ref)) {
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if (!std::isfinite(fn) || !std::isfinite(gn)) {
            throw SolverError("objective became non-finite", it, fn + gn, tau);
        }
        if (!accepted) {
            // No step size satisfies the bound: x is stationary to working precision.
            res.converged = true;
            break;
        }

        const Gradient step = difference(next, x);
        const double step_norm = std::sqrt(squared_norm(step));
        const double x_norm = std::sqrt(squared_norm(x));
        Gradient grad_next = problem.grad(next);

        if (opt.step_rule == StepRule::barzilai_borwein) {
            const Gradient y = difference(grad_next, grad);
            const double sy = real_dot(step, y);
            const double ss = squared_norm(step);
            const double yy = squared_norm(y);
            if (sy > 0.0 && yy > 0.0) {
                const double tau_s = ss / sy;
                const double tau_m = sy / yy;
                tau = 2.0 * tau_m > tau_s ? tau_m : tau_s - 0.5 * tau_m;
            } else {
                tau *= 2.0;
            }
        }

        x = std::move(next);
        x.k = it;
        fx = fn;
        gx = gn;
        recent.push_back(fx);
        if (static_cast<int>(recent.size()) > opt.nonmonotone_window) recent.pop_front();
        grad = std::move(grad_next);
        res.iterations = it;
        if (opt.record_trace) res.trace.push_back({it, fx, gx, tau});

        if (step_norm == 0.0 || step_norm <= opt.tol * x_norm) {
            res.converged = true;
            break;
        }
    }
    res.state = std::move(x);
    res.objective = fx + gx;
    return res;
}

}  // namespace

SolverState SolverState::from_channel(CMatrix H, int R_D) {
    SolverState s;
    const auto N = H.cols();
    s.D_h = CMatrix::Zero(H.rows(), N);
    s.H = std::move(H);
    s.XD = CMatrix::Zero(N, R_D);
    s.D_x = CMatrix::Zero(N, R_D);
    s.k = 0;
    return s;
}

CMatrix SolverState::stacked() const {
    CMatrix s(H.rows() + XD.cols(), H.cols());
    s << H, XD.adjoint();
    return s;
}

void ObjectiveParams::validate() const {
    if (!(mu_h >= 0.0)) throw std::invalid_argument("ObjectiveParams: mu_h must be >= 0");
    if (!(mu_x >= 0.0)) throw std::invalid_argument("ObjectiveParams: mu_x must be >= 0");
    if (!(B > 0.0)) throw std::invalid_argument("ObjectiveParams: B must be > 0");
    if (!(tau > 0.0)) throw std::invalid_argument("ObjectiveParams: tau must be > 0");
}

double eval_f(const SolverState& state, const Instance& inst) {
    check_shapes(state, inst);
    const CMatrix resid_p = inst.Y_P() - state.H * inst.X_P;
    const CMatrix resid_d = inst.Y_D() - state.H * state.XD;
    return 0.5 * (resid_p.squaredNorm() + resid_d.squaredNorm());
}

double eval_g(const SolverState& state, const ObjectiveParams& params, int block_size) {
    for (Eigen::Index c = 0; c < state.XD.cols(); ++c)
        for (Eigen::Index r = 0; r < state.XD.rows(); ++r) {
            const Complex v = state.XD(r, c);
            if (std::abs(v.real()) > params.B || std::abs(v.imag()) > params.B) return kInf;
        }
    double rows = 0.0;
    for (Eigen::Index n = 0; n < state.XD.rows(); ++n) rows += state.XD.row(n).norm();
    return params.mu_h * block_norm_sum(state.H, block_size) + params.mu_x * rows;
}

Gradient grad_f(const SolverState& state, const Instance& inst) {
    check_shapes(state, inst);
    const auto R_P = inst.R_P();
    CMatrix resid(inst.Y.rows(), inst.Y.cols());
    resid.leftCols(R_P) = inst.Y_P() - state.H * inst.X_P;
    resid.rightCols(inst.R_D()) = inst.Y_D() - state.H * state.XD;

    Gradient g;
    g.H.noalias() = -(resid.leftCols(R_P) * inst.X_P.adjoint());
    g.H.noalias() -= resid.rightCols(inst.R_D()) * state.XD.adjoint();
    g.XD.noalias() = -(state.H.adjoint() * resid.rightCols(inst.R_D()));
    return g;
}

CVector prox_h(const Eigen::Ref<const CVector>& block, double threshold) {
    const double norm = block.norm();
    if (norm == 0.0 || norm <= threshold) return CVector::Zero(block.size());
    return ((norm - threshold) / norm) * block;
}

void prox_h_blocks(CMatrix& H, int block_size, double threshold) {
    const auto blocks = H.rows() / block_size;
    for (Eigen::Index n = 0; n < H.cols(); ++n) {
        for (Eigen::Index p = 0; p < blocks; ++p) {
            auto seg = H.col(n).segment(p * block_size, block_size);
            const double norm = seg.norm();
            if (norm == 0.0 || norm <= threshold) {
                seg.setZero();
            } else {
                seg *= (norm - threshold) / norm;
            }
        }
    }
}

CVector prox_xd_row(const Eigen::Ref<const CVector>& row, double threshold, double B) {
    CVector out = prox_h(row, threshold);
    for (Eigen::Index r = 0; r < out.size(); ++r) out(r) = Complex(clip(out(r).real(), B), clip(out(r).imag(), B));
    return out;
}

CVector prox_xd_row_exact(const Eigen::Ref<const CVector>& row, double threshold, double B) {
    auto clipped = [&](double scale) {
        CVector out(row.size());
        for (Eigen::Index r = 0; r < row.size(); ++r)
            out(r) = Complex(clip(scale * row(r).real(), B), clip(scale * row(r).imag(), B));
        return out;
    };
    const double norm = row.norm();
    if (norm == 0.0 || norm <= threshold) return CVector::Zero(row.size());
    if (threshold == 0.0) return clipped(1.0);

    // psi(rho) = ||clip(v rho / (rho + t))|| / rho is decreasing; find psi = 1.
    double lo = 0.0;
    double hi = clipped(1.0).norm();
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (clipped(mid / (mid + threshold)).norm() > mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double rho = 0.5 * (lo + hi);
    return clipped(rho / (rho + threshold));
}

SolverState fbs_step(const SolverState& state, const Instance& inst, const ObjectiveParams& params, double tau,
                     DataProx data_prox) {
    JointProblem problem{inst, params, data_prox};
    SolverState next = forward(state, problem.grad(state), tau);
    problem.prox(next, tau);
    next.k = state.k + 1;
    return next;
}

FbsResult fbs_solve(const Instance& inst, const ObjectiveParams& params, const SolverState& init,
                    const FbsOptions& options) {
    params.validate();
    check_shapes(init, inst);
    JointProblem problem{inst, params, options.data_prox};
    auto r = run_fbs(problem, init, params.tau, options);
    FbsResult out;
    out.state = std::move(r.state);
    out.iterations = r.iterations;
    out.objective = r.objective;
    out.converged = r.converged;
    out.trace = std::move(r.trace);
    return out;
}

PilotEstimate pilot_only_estimate(const Instance& inst, const ObjectiveParams& params, const FbsOptions& options) {
    params.validate();
    if (inst.R_P() < 1) throw std::invalid_argument("pilot_only_estimate: no pilot symbols");
    PilotProblem problem{inst, params};
    SolverState init;
    init.H = CMatrix::Zero(inst.Y.rows(), inst.N());
    init.XD = CMatrix(inst.N(), 0);
    auto r = run_fbs(problem, init, params.tau, options);
    PilotEstimate out;
    out.H = std::move(r.state.H);
    out.iterations = r.iterations;
    out.objective = r.objective;
    out.converged = r.converged;
    out.trace = std::move(r.trace);
    return out;
}

ZfResult zf_detect(const CMatrix& H_hat, const Activity& active, const CMatrix& Y_D, double B) {
    if (static_cast<Eigen::Index>(active.size()) != H_hat.cols()) {
        throw std::invalid_argument("zf_detect: activity length does not match channel");
    }
    ZfResult out;
    out.XD = CMatrix::Zero(H_hat.cols(), Y_D.cols());
    std::vector<Eigen::Index> idx;
    for (std::size_t n = 0; n < active.size(); ++n)
        if (active[n]) idx.push_back(static_cast<Eigen::Index>(n));
    if (idx.empty()) return out;

    CMatrix Ha(H_hat.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) Ha.col(static_cast<Eigen::Index>(j)) = H_hat.col(idx[j]);
    Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(Ha);
    out.rank_deficient = cod.rank() < Ha.cols();
    const CMatrix equalized = nearest_symbols(cod.solve(Y_D), B);
    for (std::size_t j = 0; j < idx.size(); ++j) out.XD.row(idx[j]) = equalized.row(static_cast<Eigen::Index>(j));
    return out;
}

void write_trace_csv(const std::string& path, const std::vector<TraceEntry>& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "iteration,f,g,step_size\n" << std::setprecision(9);
    for (const auto& t : trace) out << t.iteration << ',' << t.f << ',' << t.g << ',' << t.step << '\n';
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace dujad
