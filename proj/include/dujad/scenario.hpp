#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dujad/config.hpp"
#include "dujad/linalg.hpp"

namespace dujad {

// Dimensions and physical constants of a cell-free grant-free uplink.
// Defaults are the full-scale deployment (400 UEs, 4-antenna APs,
// 50 pilot + 200 QPSK data symbols, 20 MHz at 1.9 GHz).
struct ScenarioConfig {
    int N = 400;    // UEs
    int P = 20;     // APs
    int M = 4;      // antennas per AP
    int R_P = 50;   // pilot symbols
    int R_D = 200;  // data symbols
    double P_a = 0.2;
    double B = 0.70710678118654752440;  // QPSK half-amplitude, sqrt(0.5)

    double area_side = 500.0;  // m
    double ue_height = 1.65;   // m
    double ap_height = 15.0;   // m
    double tx_power = 0.1;     // W
    double power_control_range = 12.0;  // dB
    // Strongest-AP SNR that power control aims for. Unset: the weakest UE's
    // level in each geometry, so the operating point moves with the draw.
    std::optional<double> power_target_db;
    double shadow_std = 8.0;   // dB
    double noise_figure = 9.0; // dB
    double bandwidth = 20e6;   // Hz
    double carrier = 1.9e9;    // Hz; the path-loss fit below is for ~2 GHz
    double noise_temp = 290.0; // K

    // Energy per pilot symbol; each pilot row has norm sqrt(pilot_power * R_P).
    double pilot_power = 1.0;
    // Multiplies the unit-variance receiver noise. 1 is the physical model;
    // 0 gives noise-free instances for recovery tests.
    double noise_scale = 1.0;
    int pilot_iterations = 500;

    std::uint64_t rng_seed = 1;

    int R() const { return R_P + R_D; }
    int MP() const { return M * P; }
    double pilot_amplitude() const;

    // Throws ConfigError naming the first invalid field.
    void validate() const;
};

// Reads every scenario key from `kv` (keys as in ScenarioConfig) on top of `base`.
ScenarioConfig scenario_from_config(const KeyValueConfig& kv, ScenarioConfig base = {});
const std::vector<std::string>& scenario_config_keys();

struct Geometry {
    Eigen::Matrix3Xd ap_positions;  // 3 x P, meters
    Eigen::Matrix3Xd ue_positions;  // 3 x N, meters
    RMatrix beta;                   // N x P, linear gain in noise-normalized units
    RVector power_offset_db;        // per-UE power-control adjustment (<= 0)
};

// One channel realization. Y = H [X_P, X_D] + noise holds exactly.
struct Instance {
    int M = 0;
    int P = 0;
    CMatrix Y;      // MP x R
    CMatrix H;      // MP x N, column n = xi_n h_n
    CMatrix X_P;    // N x R_P
    CMatrix X_D;    // N x R_D, row n = xi_n x_n
    CMatrix noise;  // MP x R
    Activity xi;

    int N() const { return static_cast<int>(H.cols()); }
    int R_P() const { return static_cast<int>(X_P.cols()); }
    int R_D() const { return static_cast<int>(X_D.cols()); }
    int num_active() const { return count_active(xi); }

    auto Y_P() const { return Y.leftCols(R_P()); }
    auto Y_D() const { return Y.rightCols(R_D()); }
    CMatrix X() const;  // [X_P, X_D]
};

double path_loss_db(double distance_3d);
double noise_power_dbm(const ScenarioConfig& cfg);

// Large-scale gain 10^(G/10), G = tx - PL(d) - shadow - noise (all dB), so that
// receiver noise has unit variance. `power_offset_db` is the UE's power-control
// adjustment. Throws std::domain_error for non-positive distance.
double large_scale_gain(double distance_3d, double shadow_db, const ScenarioConfig& cfg,
                        double power_offset_db = 0.0);

Geometry generate_geometry(const ScenarioConfig& cfg, Rng& rng);

// N x R_P near-equiangular pilot matrix (see pilots.cpp).
CMatrix generate_pilots(const ScenarioConfig& cfg, Rng& rng);

// Largest off-diagonal |<x_i, x_j>| / (|x_i||x_j|) over pilot rows.
double max_cross_correlation(const CMatrix& pilots);
double welch_bound(int num_vectors, int dimension);

Instance generate_instance(const ScenarioConfig& cfg, const Geometry& geo, const CMatrix& pilots, Rng& rng);
// Pilots drawn from a stream fixed by cfg.rng_seed.
Instance generate_instance(const ScenarioConfig& cfg, const Geometry& geo, Rng& rng);

// Instance files: "DUJADSET" magic, u32 version, u64 count, u64 N, M, P, R_P, R_D,
// then per instance: N activity bytes followed by Y, H, X_P, X_D, noise as
// row-major (re, im) pairs. All multi-byte values are little-endian.
void write_instances(const std::string& path, std::span<const Instance> instances);
std::vector<Instance> read_instances(const std::string& path);

}  // namespace dujad
