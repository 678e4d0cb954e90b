#include "dujad/unfolded.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dujad {

const std::array<const char*, LayerParams::kCount>& LayerParams::names() {
    static const std::array<const char*, kCount> n = {"tau_h", "tau_x", "eta_h", "eta_x",
                                                      "mu_h",  "lambda", "nu",   "log_Ne"};
    return n;
}

std::array<double, LayerParams::kCount> LayerParams::to_array() const {
    return {tau_h, tau_x, eta_h, eta_x, mu_h, lambda, nu, log_Ne};
}

LayerParams LayerParams::from_array(const std::array<double, kCount>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]};
}

std::vector<double> UnfoldedParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(num_trainable());
    for (const auto& lp : layers)
        for (double v : lp.to_array()) flat.push_back(v);
    return flat;
}

UnfoldedParams UnfoldedParams::unflatten(const std::vector<double>& flat, double P_a) {
    if (flat.size() % LayerParams::kCount != 0) throw std::invalid_argument("unflatten: size is not a multiple of 8");
    UnfoldedParams p;
    p.P_a = P_a;
    for (std::size_t i = 0; i < flat.size(); i += LayerParams::kCount) {
        std::array<double, LayerParams::kCount> a{};
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i), LayerParams::kCount, a.begin());
        p.layers.push_back(LayerParams::from_array(a));
    }
    return p;
}

void UnfoldedParams::validate() const {
    if (layers.empty()) throw std::invalid_argument("UnfoldedParams: at least one layer required");
    if (!(P_a >= 0.0 && P_a <= 1.0)) throw std::invalid_argument("UnfoldedParams: P_a must lie in [0, 1]");
    for (const auto& lp : layers)
        for (double v : lp.to_array())
            if (!std::isfinite(v)) throw std::invalid_argument("UnfoldedParams: non-finite parameter");
}

SolverState forward_step(const SolverState& state, const Instance& inst, const LayerParams& lp) {
    const auto R_P = inst.R_P();
    const auto R_D = inst.R_D();
    CMatrix resid(inst.Y.rows(), inst.Y.cols());
    resid.leftCols(R_P) = inst.Y_P() - state.H * inst.X_P;
    resid.rightCols(R_D) = inst.Y_D() - state.H * state.XD;

    SolverState next;
    CMatrix corr_h = resid.leftCols(R_P) * inst.X_P.adjoint();
    corr_h.noalias() += resid.rightCols(R_D) * state.XD.adjoint();
    const CMatrix corr_x = state.H.adjoint() * resid.rightCols(R_D);

    next.D_h = lp.tau_h * corr_h + lp.eta_h * state.D_h;
    next.D_x = lp.tau_x * corr_x + lp.eta_x * state.D_x;
    next.H = state.H + next.D_h;
    next.XD = state.XD + next.D_x;
    next.k = state.k;
    return next;
}

CMatrix backward_h(const CMatrix& H_hat, const LayerParams& lp, int block_size) {
    CMatrix out = H_hat;
    prox_h_blocks(out, block_size, std::max(0.0, lp.tau_h * std::max(lp.mu_h, 0.0)));
    return out;
}

CVector pme_exact_row(const Eigen::Ref<const CVector>& x_hat, double Ne, double Pa, double B) {
    const auto R = x_hat.size();
    if (R > 8) throw std::invalid_argument("pme_exact_row: R_D > 8 is too large to enumerate");
    if (!(Ne > 0.0)) throw std::invalid_argument("pme_exact_row: N_e must be positive");

    const long count = 1L << (2 * R);
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    const double log_prior_qpsk = Pa > 0.0 ? std::log(Pa) - std::log(static_cast<double>(count)) : kNegInf;
    const double log_prior_zero = Pa < 1.0 ? std::log1p(-Pa) : kNegInf;

    // Log-weights first, then a max-shifted sum.
    std::vector<double> logw(static_cast<std::size_t>(count) + 1);
    CVector x(R);
    auto symbol_vector = [&](long code) {
        for (Eigen::Index r = 0; r < R; ++r) {
            const long bits = (code >> (2 * r)) & 3L;
            x(r) = Complex(bits & 1L ? -B : B, bits & 2L ? -B : B);
        }
    };
    double top = kNegInf;
    for (long c = 0; c < count; ++c) {
        symbol_vector(c);
        logw[static_cast<std::size_t>(c)] = log_prior_qpsk - (x - x_hat).squaredNorm() / Ne;
        top = std::max(top, logw[static_cast<std::size_t>(c)]);
    }
    logw.back() = log_prior_zero - x_hat.squaredNorm() / Ne;
    top = std::max(top, logw.back());

    CVector num = CVector::Zero(R);
    double den = 0.0;
    for (long c = 0; c < count; ++c) {
        const double w = std::exp(logw[static_cast<std::size_t>(c)] - top);
        symbol_vector(c);
        num += w * x;
        den += w;
    }
    den += std::exp(logw.back() - top);
    return num / den;
}

ApproxPme pme_approx_row(const Eigen::Ref<const CVector>& x_hat, const LayerParams& lp, double B) {
    const double l1 = x_hat.cwiseAbs().sum();
    double alpha = 0.0;
    if (l1 > 0.0) alpha = std::min(std::max(lp.lambda * l1 - lp.nu, 0.0) / l1, 1.0);
    const double gain = 2.0 * B / lp.Ne();
    CVector out(x_hat.size());
    for (Eigen::Index r = 0; r < x_hat.size(); ++r) {
        out(r) = alpha * Complex(B * std::tanh(gain * x_hat(r).real()), B * std::tanh(gain * x_hat(r).imag()));
    }
    return {std::move(out), alpha};
}

NetworkOutput run_network(const Instance& inst, const UnfoldedParams& params, const SolverState& init, double B,
                          const NetworkOptions& options) {
    params.validate();
    if (init.H.rows() != inst.Y.rows() || init.H.cols() != inst.N() || init.XD.rows() != inst.N() ||
        init.XD.cols() != inst.R_D() || init.D_h.rows() != init.H.rows() || init.D_h.cols() != init.H.cols() ||
        init.D_x.rows() != init.XD.rows() || init.D_x.cols() != init.XD.cols()) {
        throw std::invalid_argument("run_network: initial state does not match instance");
    }

    NetworkOutput out;
    if (options.record_alpha) out.alpha = RMatrix::Zero(params.K(), inst.N());
    SolverState s = init;
    for (int k = 0; k < params.K(); ++k) {
        const LayerParams& lp = params.layers[static_cast<std::size_t>(k)];
        s = forward_step(s, inst, lp);
        s.H = backward_h(s.H, lp, inst.M);
        switch (options.data_backward) {
            case DataBackward::approx_pme:
                for (Eigen::Index n = 0; n < s.XD.rows(); ++n) {
                    auto pme = pme_approx_row(s.XD.row(n).transpose(), lp, B);
                    s.XD.row(n) = pme.x.transpose();
                    if (options.record_alpha) out.alpha(k, n) = pme.alpha;
                }
                break;
            case DataBackward::identity:
                break;
            case DataBackward::box_prox: {
                const double t = lp.tau_x * options.mu_x;
                for (Eigen::Index n = 0; n < s.XD.rows(); ++n)
                    s.XD.row(n) = prox_xd_row(s.XD.row(n).transpose(), t, B).transpose();
                break;
            }
        }
        s.k = init.k + k + 1;
        if (!s.H.allFinite() || !s.XD.allFinite()) throw NetworkError("non-finite state", k + 1);
    }
    out.state = std::move(s);
    return out;
}

namespace {

// Re sum conj(a) .* b: the real inner product of complex arrays seen as R^2n.
double rdot(const CMatrix& a, const CMatrix& b) {
    return a.real().cwiseProduct(b.real()).sum() + a.imag().cwiseProduct(b.imag()).sum();
}

struct LayerTape {
    CMatrix resid;   // [Y_P - H X_P, Y_D - H X_D] at the layer input
    CMatrix corr_h;  // resid X^H
    CMatrix corr_x;  // H^H resid_D
    CMatrix H_hat;
    CMatrix XD_hat;
};

}  // namespace

NetworkGradient network_loss_gradient(const Instance& inst, const UnfoldedParams& params, const SolverState& init,
                                      double B, const CMatrix& target) {
    params.validate();
    const int K = params.K();
    const auto R_P = inst.R_P();
    const auto R_D = inst.R_D();
    const int M = inst.M;

    std::vector<SolverState> in(static_cast<std::size_t>(K) + 1);
    std::vector<LayerTape> tape(static_cast<std::size_t>(K));
    in[0] = init;
    for (int k = 0; k < K; ++k) {
        const auto& lp = params.layers[static_cast<std::size_t>(k)];
        const SolverState& s = in[static_cast<std::size_t>(k)];
        LayerTape& t = tape[static_cast<std::size_t>(k)];
        t.resid.resize(inst.Y.rows(), inst.Y.cols());
        t.resid.leftCols(R_P) = inst.Y_P() - s.H * inst.X_P;
        t.resid.rightCols(R_D) = inst.Y_D() - s.H * s.XD;
        t.corr_h = t.resid.leftCols(R_P) * inst.X_P.adjoint();
        t.corr_h.noalias() += t.resid.rightCols(R_D) * s.XD.adjoint();
        t.corr_x = s.H.adjoint() * t.resid.rightCols(R_D);

        SolverState& next = in[static_cast<std::size_t>(k) + 1];
        next.D_h = lp.tau_h * t.corr_h + lp.eta_h * s.D_h;
        next.D_x = lp.tau_x * t.corr_x + lp.eta_x * s.D_x;
        t.H_hat = s.H + next.D_h;
        t.XD_hat = s.XD + next.D_x;
        next.H = backward_h(t.H_hat, lp, M);
        next.XD.resize(t.XD_hat.rows(), t.XD_hat.cols());
        for (Eigen::Index n = 0; n < t.XD_hat.rows(); ++n)
            next.XD.row(n) = pme_approx_row(t.XD_hat.row(n).transpose(), lp, B).x.transpose();
        next.k = s.k + 1;
        if (!next.H.allFinite() || !next.XD.allFinite()) throw NetworkError("non-finite state", k + 1);
    }

    NetworkGradient out;
    const CMatrix err = in.back().XD - target;
    out.loss = err.squaredNorm();
    out.grad.assign(params.num_trainable(), 0.0);

    // Gradients (d/dRe + j d/dIm) of the loss with respect to the layer output.
    CMatrix gH = CMatrix::Zero(init.H.rows(), init.H.cols());
    CMatrix gXD = 2.0 * err;
    CMatrix gDh = CMatrix::Zero(init.H.rows(), init.H.cols());
    CMatrix gDx = CMatrix::Zero(init.XD.rows(), init.XD.cols());

    for (int k = K - 1; k >= 0; --k) {
        const auto& lp = params.layers[static_cast<std::size_t>(k)];
        const SolverState& s = in[static_cast<std::size_t>(k)];
        const LayerTape& t = tape[static_cast<std::size_t>(k)];
        double* g = out.grad.data() + static_cast<std::size_t>(k) * LayerParams::kCount;
        double& g_tau_h = g[0];
        double& g_tau_x = g[1];
        double& g_eta_h = g[2];
        double& g_eta_x = g[3];
        double& g_mu_h = g[4];
        double& g_lambda = g[5];
        double& g_nu = g[6];
        double& g_log_ne = g[7];

        // Data backward step.
        const double gain = 2.0 * B / lp.Ne();
        CMatrix g_xhat = CMatrix::Zero(t.XD_hat.rows(), t.XD_hat.cols());
        double g_gain = 0.0;
        for (Eigen::Index n = 0; n < t.XD_hat.rows(); ++n) {
            const CVector xh = t.XD_hat.row(n).transpose();
            const CVector go = gXD.row(n).transpose();
            const double l1 = xh.cwiseAbs().sum();
            double alpha = 0.0;
            bool interior = false;
            if (l1 > 0.0) {
                const double a = lp.lambda * l1 - lp.nu;
                alpha = std::min(std::max(a, 0.0) / l1, 1.0);
                interior = a > 0.0 && a < l1;
            }
            double g_alpha = 0.0;
            for (Eigen::Index r = 0; r < xh.size(); ++r) {
                const double tr = std::tanh(gain * xh(r).real());
                const double ti = std::tanh(gain * xh(r).imag());
                g_alpha += go(r).real() * B * tr + go(r).imag() * B * ti;
                const double sr = B * (1.0 - tr * tr), si = B * (1.0 - ti * ti);
                const double gr = alpha * go(r).real(), gi = alpha * go(r).imag();
                g_xhat(n, r) = Complex(gr * sr * gain, gi * si * gain);
                g_gain += gr * sr * xh(r).real() + gi * si * xh(r).imag();
            }
            if (interior) {
                // alpha = lambda - nu / ||x_hat||_1
                g_lambda += g_alpha;
                g_nu -= g_alpha / l1;
                const double g_l1 = g_alpha * lp.nu / (l1 * l1);
                for (Eigen::Index r = 0; r < xh.size(); ++r) {
                    const double m = std::abs(xh(r));
                    if (m > 0.0) g_xhat(n, r) += g_l1 * xh(r) / m;
                }
            }
        }
        g_log_ne -= g_gain * gain;

        // Channel backward step.
        const double mu = std::max(lp.mu_h, 0.0);
        const double thr = lp.tau_h * mu;
        CMatrix g_hhat = gH;
        if (thr > 0.0) {
            double g_thr = 0.0;
            for (Eigen::Index n = 0; n < t.H_hat.cols(); ++n) {
                for (Eigen::Index p = 0; p + M <= t.H_hat.rows(); p += M) {
                    const CVector v = t.H_hat.col(n).segment(p, M);
                    const CVector go = gH.col(n).segment(p, M);
                    const double nv = v.norm();
                    if (nv <= thr) {
                        g_hhat.col(n).segment(p, M).setZero();
                        continue;
                    }
                    const CVector u = v / nv;
                    const double ug = u.real().dot(go.real()) + u.imag().dot(go.imag());
                    g_hhat.col(n).segment(p, M) = go - (thr / nv) * (go - ug * u);
                    g_thr -= ug;
                }
            }
            g_tau_h += g_thr * mu;
            if (lp.mu_h > 0.0) g_mu_h += g_thr * lp.tau_h;
        }

        // Forward step with momentum.
        const CMatrix gdh = g_hhat + gDh;
        const CMatrix gdx = g_xhat + gDx;
        g_tau_h += rdot(gdh, t.corr_h);
        g_eta_h += rdot(gdh, s.D_h);
        g_tau_x += rdot(gdx, t.corr_x);
        g_eta_x += rdot(gdx, s.D_x);
        const CMatrix g_corr_h = lp.tau_h * gdh;
        const CMatrix g_corr_x = lp.tau_x * gdx;

        CMatrix gH_in = g_hhat;
        CMatrix gXD_in = g_xhat;
        const auto rD = t.resid.rightCols(R_D);
        const CMatrix g_rP = g_corr_h * inst.X_P;
        CMatrix g_rD = g_corr_h * s.XD;
        gXD_in.noalias() += g_corr_h.adjoint() * rD;
        gH_in.noalias() += rD * g_corr_x.adjoint();
        g_rD.noalias() += s.H * g_corr_x;
        gH_in.noalias() -= g_rP * inst.X_P.adjoint();
        gH_in.noalias() -= g_rD * s.XD.adjoint();
        gXD_in.noalias() -= s.H.adjoint() * g_rD;

        gH = std::move(gH_in);
        gXD = std::move(gXD_in);
        gDh = lp.eta_h * gdh;
        gDx = lp.eta_x * gdx;
    }
    return out;
}

nlohmann::json to_json(const LayerParams& lp) {
    nlohmann::json j;
    const auto a = lp.to_array();
    for (int i = 0; i < LayerParams::kCount; ++i) j[LayerParams::names()[i]] = a[i];
    return j;
}

nlohmann::json to_json(const UnfoldedParams& params) {
    nlohmann::json j;
    j["K"] = params.K();
    j["P_a"] = params.P_a;
    j["layers"] = nlohmann::json::array();
    for (int k = 0; k < params.K(); ++k) {
        auto row = to_json(params.layers[static_cast<std::size_t>(k)]);
        row["layer"] = k + 1;
        j["layers"].push_back(row);
    }
    return j;
}

LayerParams layer_params_from_json(const nlohmann::json& j) {
    std::array<double, LayerParams::kCount> a{};
    for (int i = 0; i < LayerParams::kCount; ++i) {
        const char* name = LayerParams::names()[i];
        if (!j.contains(name)) throw std::runtime_error(std::string("checkpoint layer is missing '") + name + "'");
        a[i] = j.at(name).get<double>();
    }
    return LayerParams::from_array(a);
}

UnfoldedParams unfolded_params_from_json(const nlohmann::json& j) {
    UnfoldedParams p;
    p.P_a = j.at("P_a").get<double>();
    for (const auto& row : j.at("layers")) p.layers.push_back(layer_params_from_json(row));
    if (j.contains("K") && j.at("K").get<int>() != p.K()) {
        throw std::runtime_error("checkpoint: K does not match the number of layers");
    }
    p.validate();
    return p;
}

}  // namespace dujad
