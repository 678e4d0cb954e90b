#include "dujad/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dujad {

namespace {

constexpr double kBoltzmann = 1.380649e-23;

void require(bool ok, const char* field, const std::string& message) {
    if (!ok) throw ConfigError(field, message);
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * tags.size());
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto t : tags) push(t);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

double ScenarioConfig::pilot_amplitude() const { return std::sqrt(pilot_power * R_P); }

void ScenarioConfig::validate() const {
    require(N >= 1, "N", "must be >= 1");
    require(P >= 1, "P", "must be >= 1");
    require(M >= 1, "M", "must be >= 1");
    require(R_P >= 1, "R_P", "must be >= 1");
    require(R_D >= 1, "R_D", "must be >= 1");
    require(P_a >= 0.0 && P_a <= 1.0, "P_a", "must lie in [0, 1]");
    require(B > 0.0, "B", "must be > 0");
    require(area_side > 0.0, "area_side", "must be > 0");
    require(ue_height >= 0.0, "ue_height", "must be >= 0");
    require(ap_height >= 0.0, "ap_height", "must be >= 0");
    require(tx_power > 0.0, "tx_power", "must be > 0");
    require(power_control_range >= 0.0, "power_control_range", "must be >= 0");
    require(!power_target_db || std::isfinite(*power_target_db), "power_target_db", "must be finite");
    require(shadow_std >= 0.0, "shadow_std", "must be >= 0");
    require(bandwidth > 0.0, "bandwidth", "must be > 0");
    require(carrier > 0.0, "carrier", "must be > 0");
    require(noise_temp > 0.0, "noise_temp", "must be > 0");
    require(pilot_power > 0.0, "pilot_power", "must be > 0");
    require(noise_scale >= 0.0, "noise_scale", "must be >= 0");
    require(pilot_iterations >= 0, "pilot_iterations", "must be >= 0");
}

const std::vector<std::string>& scenario_config_keys() {
    static const std::vector<std::string> keys = {
        "N", "P", "M", "R_P", "R_D", "P_a", "B", "area_side", "ue_height", "ap_height", "tx_power",
        "power_control_range", "power_target_db", "shadow_std", "noise_figure", "bandwidth", "carrier", "noise_temp",
        "pilot_power", "noise_scale", "pilot_iterations", "seed"};
    return keys;
}

ScenarioConfig scenario_from_config(const KeyValueConfig& kv, ScenarioConfig c) {
    c.N = static_cast<int>(kv.get_int("N", c.N));
    c.P = static_cast<int>(kv.get_int("P", c.P));
    c.M = static_cast<int>(kv.get_int("M", c.M));
    c.R_P = static_cast<int>(kv.get_int("R_P", c.R_P));
    c.R_D = static_cast<int>(kv.get_int("R_D", c.R_D));
    c.P_a = kv.get_double("P_a", c.P_a);
    c.B = kv.get_double("B", c.B);
    c.area_side = kv.get_double("area_side", c.area_side);
    c.ue_height = kv.get_double("ue_height", c.ue_height);
    c.ap_height = kv.get_double("ap_height", c.ap_height);
    c.tx_power = kv.get_double("tx_power", c.tx_power);
    c.power_control_range = kv.get_double("power_control_range", c.power_control_range);
    if (kv.has("power_target_db")) c.power_target_db = kv.get_double("power_target_db", 0.0);
    c.shadow_std = kv.get_double("shadow_std", c.shadow_std);
    c.noise_figure = kv.get_double("noise_figure", c.noise_figure);
    c.bandwidth = kv.get_double("bandwidth", c.bandwidth);
    c.carrier = kv.get_double("carrier", c.carrier);
    c.noise_temp = kv.get_double("noise_temp", c.noise_temp);
    c.pilot_power = kv.get_double("pilot_power", c.pilot_power);
    c.noise_scale = kv.get_double("noise_scale", c.noise_scale);
    c.pilot_iterations = static_cast<int>(kv.get_int("pilot_iterations", c.pilot_iterations));
    c.rng_seed = kv.get_uint("seed", c.rng_seed);
    c.validate();
    return c;
}

CMatrix Instance::X() const {
    CMatrix x(X_P.rows(), X_P.cols() + X_D.cols());
    x << X_P, X_D;
    return x;
}

double path_loss_db(double distance_3d) { return 30.5 + 36.7 * std::log10(distance_3d); }

double noise_power_dbm(const ScenarioConfig& cfg) {
    return 10.0 * std::log10(kBoltzmann * cfg.noise_temp * cfg.bandwidth * 1000.0) + cfg.noise_figure;
}

double large_scale_gain(double distance_3d, double shadow_db, const ScenarioConfig& cfg, double power_offset_db) {
    if (!(distance_3d > 0.0)) throw std::domain_error("large_scale_gain: distance must be positive");
    const double tx_dbm = 10.0 * std::log10(cfg.tx_power * 1000.0) + power_offset_db;
    const double gain_db = tx_dbm - path_loss_db(distance_3d) - shadow_db - noise_power_dbm(cfg);
    return std::pow(10.0, gain_db / 10.0);
}

Geometry generate_geometry(const ScenarioConfig& cfg, Rng& rng) {
    cfg.validate();
    std::uniform_real_distribution<double> coord(0.0, cfg.area_side);
    std::normal_distribution<double> shadow(0.0, cfg.shadow_std);

    Geometry geo;
    geo.ap_positions.resize(3, cfg.P);
    for (int p = 0; p < cfg.P; ++p) {
        const double x = coord(rng);
        const double y = coord(rng);
        geo.ap_positions.col(p) << x, y, cfg.ap_height;
    }
    geo.ue_positions.resize(3, cfg.N);
    for (int n = 0; n < cfg.N; ++n) {
        const double x = coord(rng);
        const double y = coord(rng);
        geo.ue_positions.col(n) << x, y, cfg.ue_height;
    }

    RMatrix distance(cfg.N, cfg.P);
    RMatrix shadow_db(cfg.N, cfg.P);
    for (int n = 0; n < cfg.N; ++n) {
        for (int p = 0; p < cfg.P; ++p) {
            distance(n, p) = (geo.ue_positions.col(n) - geo.ap_positions.col(p)).norm();
            shadow_db(n, p) = cfg.shadow_std > 0.0 ? shadow(rng) : 0.0;
        }
    }

    // Power control: bring every UE's strongest-AP gain down to the target
    // (by default the weakest UE's level), limited by the control range. UEs
    // below the target already transmit at full power.
    RVector best_db(cfg.N);
    for (int n = 0; n < cfg.N; ++n) {
        double best = -std::numeric_limits<double>::infinity();
        for (int p = 0; p < cfg.P; ++p) {
            best = std::max(best, 10.0 * std::log10(large_scale_gain(distance(n, p), shadow_db(n, p), cfg)));
        }
        best_db(n) = best;
    }
    const double target = cfg.power_target_db.value_or(best_db.minCoeff());
    geo.power_offset_db.resize(cfg.N);
    for (int n = 0; n < cfg.N; ++n) {
        geo.power_offset_db(n) = std::clamp(target - best_db(n), -cfg.power_control_range, 0.0);
    }

    geo.beta.resize(cfg.N, cfg.P);
    for (int n = 0; n < cfg.N; ++n) {
        for (int p = 0; p < cfg.P; ++p) {
            geo.beta(n, p) = large_scale_gain(distance(n, p), shadow_db(n, p), cfg, geo.power_offset_db(n));
        }
    }
    return geo;
}

Instance generate_instance(const ScenarioConfig& cfg, const Geometry& geo, const CMatrix& pilots, Rng& rng) {
    cfg.validate();
    if (geo.beta.rows() != cfg.N || geo.beta.cols() != cfg.P) {
        throw std::invalid_argument("generate_instance: geometry does not match configuration");
    }
    if (pilots.rows() != cfg.N || pilots.cols() != cfg.R_P) {
        throw std::invalid_argument("generate_instance: pilot matrix does not match configuration");
    }

    Instance inst;
    inst.M = cfg.M;
    inst.P = cfg.P;
    inst.X_P = pilots;

    std::bernoulli_distribution active(cfg.P_a);
    std::bernoulli_distribution sign(0.5);
    inst.xi.resize(cfg.N);
    for (int n = 0; n < cfg.N; ++n) inst.xi[n] = active(rng) ? 1 : 0;

    inst.H = CMatrix::Zero(cfg.MP(), cfg.N);
    for (int n = 0; n < cfg.N; ++n) {
        for (int p = 0; p < cfg.P; ++p) {
            for (int m = 0; m < cfg.M; ++m) {
                const Complex h = complex_gaussian(rng, geo.beta(n, p));
                if (inst.xi[n]) inst.H(p * cfg.M + m, n) = h;
            }
        }
    }

    inst.X_D = CMatrix::Zero(cfg.N, cfg.R_D);
    for (int n = 0; n < cfg.N; ++n) {
        for (int r = 0; r < cfg.R_D; ++r) {
            const double re = sign(rng) ? cfg.B : -cfg.B;
            const double im = sign(rng) ? cfg.B : -cfg.B;
            if (inst.xi[n]) inst.X_D(n, r) = Complex(re, im);
        }
    }

    inst.noise.resize(cfg.MP(), cfg.R());
    for (Eigen::Index c = 0; c < inst.noise.cols(); ++c) {
        for (Eigen::Index r = 0; r < inst.noise.rows(); ++r) {
            inst.noise(r, c) = cfg.noise_scale * complex_gaussian(rng, 1.0);
        }
    }

    if (cfg.noise_scale == 0.0) {
        inst.noise.setZero();
        inst.Y = inst.H * inst.X();
    } else {
        inst.Y = inst.H * inst.X() + inst.noise;
    }
    return inst;
}

Instance generate_instance(const ScenarioConfig& cfg, const Geometry& geo, Rng& rng) {
    Rng pilot_rng = make_stream(cfg.rng_seed, {0x70696c6f74ULL});
    return generate_instance(cfg, geo, generate_pilots(cfg, pilot_rng), rng);
}

}  // namespace dujad
