#include "dujad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "dujad/parallel.hpp"

namespace dujad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int resolve_workers(int requested) { return requested > 0 ? requested : worker_count(); }

LrSchedule parse_schedule(const std::string& s) {
    if (s == "fixed") return LrSchedule::fixed;
    if (s == "decaying") return LrSchedule::decaying;
    throw ConfigError("train.step_rule", "expected fixed or decaying, got '" + s + "'");
}

GradientEstimator parse_estimator(const std::string& s) {
    if (s == "spsa") return GradientEstimator::spsa;
    if (s == "fd" || s == "central_difference") return GradientEstimator::central_difference;
    if (s == "backprop") return GradientEstimator::backprop;
    throw ConfigError("train.estimator", "expected backprop, spsa or fd, got '" + s + "'");
}

// Maps normalized coordinates theta (0 at param_init) to layer parameters.
// Step sizes are multiplicative so they can never change sign.
class ParamSpace {
public:
    ParamSpace(const UnfoldedParams& init, double nu_scale) : P_a_(init.P_a), base_(init.flatten()) {
        scale_.resize(base_.size());
        log_.assign(base_.size(), 0);
        for (std::size_t i = 0; i < base_.size(); ++i) {
            const double b = base_[i];
            switch (i % LayerParams::kCount) {
                case 0:
                case 1:
                    if (b > 0.0) {
                        log_[i] = 1;
                        scale_[i] = 1.0;
                    } else {
                        scale_[i] = std::max(std::abs(b), 1e-6);
                    }
                    break;
                case 2:
                case 3: scale_[i] = 0.1; break;
                case 4: scale_[i] = 0.25 * std::max(std::abs(b), 1.0); break;
                case 5: scale_[i] = 0.25; break;
                case 6: scale_[i] = nu_scale; break;
                default: scale_[i] = 0.5; break;
            }
        }
    }

    std::size_t size() const { return base_.size(); }

    UnfoldedParams decode(const std::vector<double>& theta) const {
        std::vector<double> flat(base_.size());
        for (std::size_t i = 0; i < flat.size(); ++i)
            flat[i] = log_[i] ? base_[i] * std::exp(theta[i]) : base_[i] + scale_[i] * theta[i];
        return UnfoldedParams::unflatten(flat, P_a_);
    }

    // Chain rule from parameter gradients to theta gradients at theta.
    std::vector<double> pullback(const std::vector<double>& theta, const std::vector<double>& grad) const {
        std::vector<double> out(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i)
            out[i] = grad[i] * (log_[i] ? base_[i] * std::exp(theta[i]) : scale_[i]);
        return out;
    }

private:
    double P_a_;
    std::vector<double> base_;
    std::vector<double> scale_;
    std::vector<char> log_;
};

struct Adam {
    std::vector<double> m, v;
    int t = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void reset() {
        std::fill(m.begin(), m.end(), 0.0);
        std::fill(v.begin(), v.end(), 0.0);
        t = 0;
    }

    void step(std::vector<double>& theta, const std::vector<double>& grad, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

double schedule(const TrainConfig& cfg, int step, int total_steps) {
    if (cfg.step_rule == LrSchedule::fixed || total_steps <= 0) return cfg.base_lr;
    return cfg.base_lr / (1.0 + 3.0 * step / total_steps);
}

double batch_loss(const std::vector<TrainingSample>& samples, const std::vector<std::size_t>& idx,
                  const UnfoldedParams& params, double B, int workers) {
    std::vector<double> losses(idx.size(), kInf);
    parallel_for(
        idx.size(),
        [&](std::size_t i) {
            const auto& s = samples[idx[i]];
            try {
                losses[i] = loss_fbs(run_network(s.inst, params, s.init, B).state.XD, s.inst.X_D);
            } catch (const NetworkError&) {
                losses[i] = kInf;
            }
        },
        workers);
    double sum = 0.0;
    for (double l : losses) sum += l;
    return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
}

// Mean loss and mean parameter gradient over a batch; loss is +inf if any
// sample diverges.
NetworkGradient batch_gradient(const std::vector<TrainingSample>& samples, const std::vector<std::size_t>& idx,
                               const UnfoldedParams& params, double B, int workers) {
    std::vector<NetworkGradient> parts(idx.size());
    parallel_for(
        idx.size(),
        [&](std::size_t i) {
            const auto& s = samples[idx[i]];
            try {
                parts[i] = network_loss_gradient(s.inst, params, s.init, B, s.inst.X_D);
            } catch (const NetworkError&) {
                parts[i].loss = kInf;
            }
        },
        workers);
    NetworkGradient total;
    total.grad.assign(params.num_trainable(), 0.0);
    for (const auto& g : parts) {
        total.loss += g.loss;
        if (!std::isfinite(g.loss)) continue;
        for (std::size_t j = 0; j < total.grad.size(); ++j) total.grad[j] += g.grad[j];
    }
    const double n = static_cast<double>(std::max<std::size_t>(idx.size(), 1));
    total.loss /= n;
    for (auto& v : total.grad) v /= n;
    return total;
}

double spectral_norm_sq(const CMatrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::BDCSVD<CMatrix> svd(m);
    const double s = svd.singularValues()(0);
    return s * s;
}

void record_epoch(TrainTrace& trace, double train, double val) {
    const double prev = trace.best();
    const int prev_id = trace.best_checkpoint.empty() ? 0 : trace.best_checkpoint.back();
    trace.train_loss.push_back(train);
    trace.val_loss.push_back(val);
    if (std::isfinite(val) && val < prev) {
        trace.best_val.push_back(val);
        trace.best_checkpoint.push_back(trace.epochs());
    } else {
        trace.best_val.push_back(prev);
        trace.best_checkpoint.push_back(prev_id);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (n_train < 1) throw ConfigError("train.n_train", "must be at least 1");
    if (n_val < 1) throw ConfigError("train.n_val", "must be at least 1");
    if (batch_size < 1) throw ConfigError("train.batch_size", "must be at least 1");
    if (epochs < 0) throw ConfigError("train.epochs", "must be non-negative");
    if (!(base_lr > 0.0)) throw ConfigError("train.base_lr", "must be positive");
    if (!(spsa_perturb > 0.0)) throw ConfigError("train.spsa_perturb", "must be positive");
    if (spsa_samples < 1) throw ConfigError("train.spsa_samples", "must be at least 1");
    if (aud_epochs < 0) throw ConfigError("train.aud_epochs", "must be non-negative");
    if (!(aud_lr > 0.0)) throw ConfigError("train.aud_lr", "must be positive");
    if (max_failures < 1) throw ConfigError("train.max_failures", "must be at least 1");
    if (param_init != "baseline" && param_init != "zero_momentum") {
        throw ConfigError("train.param_init", "unknown preset '" + param_init + "'");
    }
}

const std::vector<std::string>& train_config_keys() {
    static const std::vector<std::string> keys = {
        "train.n_train",      "train.n_val",   "train.batch_size", "train.epochs",       "train.step_rule",
        "train.base_lr",      "train.spsa_perturb", "train.estimator", "train.spsa_samples", "train.aud_epochs",
        "train.aud_lr",       "train.aud_recalibrate", "train.seed",    "train.param_init", "train.max_failures"};
    return keys;
}

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig c) {
    c.n_train = static_cast<int>(kv.get_int("train.n_train", c.n_train));
    c.n_val = static_cast<int>(kv.get_int("train.n_val", c.n_val));
    c.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.batch_size));
    c.epochs = static_cast<int>(kv.get_int("train.epochs", c.epochs));
    if (kv.has("train.step_rule")) c.step_rule = parse_schedule(kv.get_string("train.step_rule", ""));
    c.base_lr = kv.get_double("train.base_lr", c.base_lr);
    c.spsa_perturb = kv.get_double("train.spsa_perturb", c.spsa_perturb);
    if (kv.has("train.estimator")) c.estimator = parse_estimator(kv.get_string("train.estimator", ""));
    c.spsa_samples = static_cast<int>(kv.get_int("train.spsa_samples", c.spsa_samples));
    c.aud_epochs = static_cast<int>(kv.get_int("train.aud_epochs", c.aud_epochs));
    c.aud_lr = kv.get_double("train.aud_lr", c.aud_lr);
    c.aud_recalibrate = kv.get_bool("train.aud_recalibrate", c.aud_recalibrate);
    c.seed = kv.get_uint("train.seed", c.seed);
    c.param_init = kv.get_string("train.param_init", c.param_init);
    c.max_failures = static_cast<int>(kv.get_int("train.max_failures", c.max_failures));
    c.validate();
    return c;
}

double loss_fbs(const CMatrix& XD_out, const CMatrix& XD_true) {
    if (XD_out.rows() != XD_true.rows() || XD_out.cols() != XD_true.cols()) {
        throw std::invalid_argument("loss_fbs: shape mismatch");
    }
    return (XD_out - XD_true).squaredNorm();
}

double loss_aud(const RVector& L, const Activity& xi, double eps) {
    if (static_cast<Eigen::Index>(xi.size()) != L.size()) throw std::invalid_argument("loss_aud: length mismatch");
    double loss = 0.0;
    for (Eigen::Index n = 0; n < L.size(); ++n) {
        const double l = std::clamp(L(n), eps, 1.0 - eps);
        loss -= xi[static_cast<std::size_t>(n)] ? std::log(l) : std::log1p(-l);
    }
    return loss;
}

UnfoldedParams initial_unfolded_params(const std::vector<TrainingSample>& train, int K, double mu_h, double P_a,
                                       double B, double step_scale) {
    if (K < 1) throw std::invalid_argument("initial_unfolded_params: K must be at least 1");
    if (train.empty()) throw std::invalid_argument("initial_unfolded_params: empty training set");
    double x_norm = 0.0, h_norm = 0.0;
    for (const auto& s : train) {
        CMatrix X(s.inst.N(), s.inst.R_P() + s.inst.R_D());
        X << s.inst.X_P, s.init.XD;
        x_norm += spectral_norm_sq(X);
        h_norm += spectral_norm_sq(s.init.H);
    }
    x_norm /= static_cast<double>(train.size());
    h_norm /= static_cast<double>(train.size());

    LayerParams lp;
    lp.tau_h = x_norm > 0.0 ? step_scale / x_norm : step_scale;
    lp.tau_x = h_norm > 0.0 ? step_scale / h_norm : step_scale;
    lp.mu_h = mu_h;
    lp.nu = 0.01 * static_cast<double>(train.front().inst.R_D()) * std::sqrt(2.0) * B;
    UnfoldedParams p;
    p.P_a = P_a;
    p.layers.assign(static_cast<std::size_t>(K), lp);
    return p;
}

AudParams initial_aud_params(int R_D, double B) {
    AudParams ap;
    ap.omega_x = 2.0 / (R_D * 2.0 * B * B);
    ap.T_th = 1.0;
    return ap;
}

double mean_fbs_loss(const std::vector<TrainingSample>& samples, const UnfoldedParams& params, double B,
                     int workers) {
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    return batch_loss(samples, idx, params, B, resolve_workers(workers));
}

FbsTraining train_fbs_layers(const TrainingSet& data, const UnfoldedParams& init, const TrainConfig& cfg) {
    cfg.validate();
    init.validate();
    if (data.train.empty() || data.val.empty()) throw std::invalid_argument("train_fbs_layers: empty dataset");
    const int workers = resolve_workers(cfg.workers);
    const double B = data.B;
    const double nu_scale = std::max(0.1, 0.1 * data.train.front().inst.R_D() * std::sqrt(2.0) * B);
    const ParamSpace space(init, nu_scale);
    const std::size_t d = space.size();

    FbsTraining out{init, {}};
    out.trace.initial_val = mean_fbs_loss(data.val, init, B, workers);
    if (!std::isfinite(out.trace.initial_val)) {
        throw TrainingError("train_fbs_layers: param_init diverges on the validation set", out.trace);
    }

    Rng rng = make_stream(cfg.seed, {0x66627374});
    std::vector<double> theta(d, 0.0), best_theta = theta;
    Adam adam(d);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(std::min<int>(cfg.batch_size, static_cast<int>(order.size())));
    const int steps_per_epoch = static_cast<int>((order.size() + batch - 1) / batch);
    const int total_steps = steps_per_epoch * cfg.epochs;

    double lr_factor = 1.0;
    double perturb = cfg.spsa_perturb;
    int failures = 0;
    int step = 0;
    std::bernoulli_distribution coin(0.5);
    auto loss_at = [&](const std::vector<double>& th, const std::vector<std::size_t>& idx) {
        return batch_loss(data.train, idx, space.decode(th), B, workers);
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int epoch_terms = 0;
        for (std::size_t start = 0; start < order.size(); start += batch, ++step) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch, order.size())));
            std::vector<double> grad(d, 0.0);
            int accepted = 0;
            std::vector<double> probe(d);
            if (cfg.estimator == GradientEstimator::backprop) {
                const auto bg = batch_gradient(data.train, idx, space.decode(theta), B, workers);
                bool ok = std::isfinite(bg.loss);
                for (double v : bg.grad) ok = ok && std::isfinite(v);
                if (ok) {
                    grad = space.pullback(theta, bg.grad);
                    epoch_loss += bg.loss;
                    ++epoch_terms;
                    accepted = 1;
                } else {
                    ++out.trace.rejected;
                    lr_factor *= 0.5;
                }
            } else if (cfg.estimator == GradientEstimator::spsa) {
                for (int s = 0; s < cfg.spsa_samples; ++s) {
                    std::vector<double> delta(d);
                    for (auto& v : delta) v = coin(rng) ? 1.0 : -1.0;
                    for (std::size_t i = 0; i < d; ++i) probe[i] = theta[i] + perturb * delta[i];
                    const double lp = loss_at(probe, idx);
                    for (std::size_t i = 0; i < d; ++i) probe[i] = theta[i] - perturb * delta[i];
                    const double lm = loss_at(probe, idx);
                    if (!std::isfinite(lp) || !std::isfinite(lm)) {
                        ++out.trace.rejected;
                        perturb *= 0.5;
                        lr_factor *= 0.5;
                        continue;
                    }
                    const double slope = (lp - lm) / (2.0 * perturb);
                    for (std::size_t i = 0; i < d; ++i) grad[i] += slope * delta[i];
                    epoch_loss += 0.5 * (lp + lm);
                    ++epoch_terms;
                    ++accepted;
                }
                if (accepted > 0)
                    for (auto& g : grad) g /= accepted;
            } else {
                bool ok = true;
                double mid = 0.0;
                for (std::size_t i = 0; i < d && ok; ++i) {
                    probe = theta;
                    probe[i] = theta[i] + perturb;
                    const double lp = loss_at(probe, idx);
                    probe[i] = theta[i] - perturb;
                    const double lm = loss_at(probe, idx);
                    ok = std::isfinite(lp) && std::isfinite(lm);
                    grad[i] = (lp - lm) / (2.0 * perturb);
                    mid += 0.5 * (lp + lm);
                }
                if (ok) {
                    accepted = 1;
                    epoch_loss += mid / static_cast<double>(d);
                    ++epoch_terms;
                } else {
                    ++out.trace.rejected;
                    perturb *= 0.5;
                    lr_factor *= 0.5;
                }
            }

            if (accepted == 0) {
                if (++failures >= cfg.max_failures) {
                    throw TrainingError("train_fbs_layers: no finite loss after " + std::to_string(failures) +
                                            " consecutive steps",
                                        out.trace);
                }
                continue;
            }
            failures = 0;
            adam.step(theta, grad, lr_factor * schedule(cfg, step, total_steps));
        }

        const double val = mean_fbs_loss(data.val, space.decode(theta), B, workers);
        const double train = epoch_terms > 0 ? epoch_loss / epoch_terms : kInf;
        const double before = out.trace.best();
        record_epoch(out.trace, train, val);
        if (out.trace.best() < before) best_theta = theta;
        if (!std::isfinite(val)) {
            // Diverged between checkpoints: restart from the best one, smaller steps.
            theta = best_theta;
            adam.reset();
            lr_factor *= 0.5;
            if (++failures >= cfg.max_failures) {
                throw TrainingError("train_fbs_layers: validation loss stayed non-finite", out.trace);
            }
        }
    }
    out.params = space.decode(best_theta);
    return out;
}

AudFeatures aud_features(const std::vector<TrainingSample>& samples, const UnfoldedParams& frozen, double B,
                         int workers) {
    AudFeatures f;
    f.channel.resize(samples.size());
    f.data.resize(samples.size());
    f.truth.resize(samples.size());
    parallel_for(
        samples.size(),
        [&](std::size_t i) {
            const auto out = run_network(samples[i].inst, frozen, samples[i].init, B);
            f.channel[i] = channel_energies(out.state.H);
            f.data[i] = data_energies(out.state.XD);
            f.truth[i] = samples[i].inst.xi;
        },
        resolve_workers(workers));
    return f;
}

double mean_aud_loss(const AudFeatures& features, const AudParams& ap) {
    if (features.truth.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < features.truth.size(); ++i) {
        const auto& eh = features.channel[i];
        const auto& ex = features.data[i];
        RVector L(eh.size());
        for (Eigen::Index n = 0; n < L.size(); ++n) L(n) = activity_likelihood(eh(n), ex(n), ap);
        sum += loss_aud(L, features.truth[i]);
    }
    return sum / static_cast<double>(features.truth.size());
}

AudTraining train_aud_head(const TrainingSet& data, const UnfoldedParams& frozen, const AudParams& init,
                           const TrainConfig& cfg) {
    const int workers = resolve_workers(cfg.workers);
    return train_aud_head(aud_features(data.train, frozen, data.B, workers),
                          aud_features(data.val, frozen, data.B, workers), init, cfg);
}

AudTraining train_aud_head(const AudFeatures& train, const AudFeatures& val, const AudParams& init,
                           const TrainConfig& cfg) {
    cfg.validate();
    init.validate();
    if (train.truth.empty() || val.truth.empty()) throw std::invalid_argument("train_aud_head: empty dataset");

    // Normalize both energies by their training mean so one learning rate fits all three coordinates.
    auto mean_of = [](const std::vector<RVector>& v) {
        double s = 0.0;
        long n = 0;
        for (const auto& e : v) {
            s += e.sum();
            n += e.size();
        }
        const double m = n > 0 ? s / static_cast<double>(n) : 0.0;
        return m > 0.0 && std::isfinite(m) ? m : 1.0;
    };
    const double sh = mean_of(train.channel);
    const double sx = mean_of(train.data);
    auto decode = [&](const std::array<double, 3>& th) {
        AudParams ap = init;
        ap.omega_h = th[0] / sh;
        ap.omega_x = th[1] / sx;
        ap.T_th = th[2];
        return ap;
    };

    AudTraining out{init, {}};
    out.trace.initial_val = mean_aud_loss(val, init);
    Eigen::Vector3d theta(init.omega_h * sh, init.omega_x * sx, init.T_th);
    // With zero steps the caller gets init back bit for bit, not a re-decoded copy.
    Eigen::Vector3d best_theta = theta;
    bool improved = false;
    auto decode_v = [&](const Eigen::Vector3d& th) { return decode({th(0), th(1), th(2)}); };

    // The loss is logistic regression on (e_h / sh, e_x / sx, -1): convex, so
    // damped Newton steps with exact derivatives converge in a few dozen steps
    // where first-order methods crawl along the badly scaled energy axes.
    double train_loss = mean_aud_loss(train, decode_v(theta));
    for (int epoch = 1; epoch <= cfg.aud_epochs; ++epoch) {
        Eigen::Vector3d grad = Eigen::Vector3d::Zero();
        Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
        for (std::size_t i = 0; i < train.truth.size(); ++i) {
            for (Eigen::Index n = 0; n < train.channel[i].size(); ++n) {
                const Eigen::Vector3d z(train.channel[i](n) / sh, train.data[i](n) / sx, -1.0);
                const double p = sigmoid(theta.dot(z));
                grad += (p - static_cast<double>(train.truth[i][static_cast<std::size_t>(n)])) * z;
                hess += p * (1.0 - p) * z * z.transpose();
            }
        }
        const double count = static_cast<double>(train.truth.size());
        grad /= count;
        hess /= count;
        hess += 1e-9 * (1.0 + hess.trace()) * Eigen::Matrix3d::Identity();
        const Eigen::Vector3d dir = -hess.ldlt().solve(grad);

        double t = cfg.aud_lr;
        double next_loss = train_loss;
        Eigen::Vector3d next = theta;
        for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
            const Eigen::Vector3d cand = theta + t * dir;
            const double l = mean_aud_loss(train, decode_v(cand));
            if (l < train_loss) {
                next = cand;
                next_loss = l;
                break;
            }
        }
        theta = next;
        train_loss = next_loss;
        const double val_loss = mean_aud_loss(val, decode_v(theta));
        const double before = out.trace.best();
        record_epoch(out.trace, train_loss, val_loss);
        if (out.trace.best() < before) {
            best_theta = theta;
            improved = true;
        }
    }
    if (improved) out.params = decode_v(best_theta);

    // Cross-entropy places the bias where probabilities are calibrated, not
    // where decisions at L_bar = 0.5 are fewest. Keep the fitted direction and
    // move the bias to the training cut with the fewest activity errors.
    if (cfg.aud_recalibrate && cfg.aud_epochs > 0 && out.params.L_bar == 0.5) {
        std::vector<double> score;
        std::vector<std::uint8_t> truth;
        for (std::size_t i = 0; i < train.truth.size(); ++i) {
            for (Eigen::Index n = 0; n < train.channel[i].size(); ++n) {
                score.push_back(out.params.omega_h * train.channel[i](n) + out.params.omega_x * train.data[i](n));
                truth.push_back(train.truth[i][static_cast<std::size_t>(n)]);
            }
        }
        out.params.T_th = calibrate_energy_threshold(score, truth);
    }
    out.val_loss = mean_aud_loss(val, out.params);
    return out;
}

void write_trace_csv(const std::string& path, const TrainTrace& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write training trace '" + path + "'");
    os.precision(9);
    os << "epoch,train_loss,val_loss,best_val,best_checkpoint\n";
    os << 0 << ",," << trace.initial_val << ',' << trace.initial_val << ",0\n";
    for (int e = 0; e < trace.epochs(); ++e) {
        const auto i = static_cast<std::size_t>(e);
        os << e + 1 << ',' << trace.train_loss[i] << ',' << trace.val_loss[i] << ',' << trace.best_val[i] << ','
           << trace.best_checkpoint[i] << '\n';
    }
    if (!os) throw std::runtime_error("failed writing training trace '" + path + "'");
}

}  // namespace dujad
