#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dujad/harness.hpp"

namespace dujad::acceptance {

struct Options {
    bool full = true;           // include training and the desk-scale sweep
    std::uint64_t seed = 2024;  // seed of the oracle checks
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// Shipped profiles; configs/desk.cfg and configs/tiny.cfg hold the same values.
ExperimentConfig desk_config();
ExperimentConfig tiny_config();

CheckResult check_gradient(std::uint64_t seed);
CheckResult check_prox(std::uint64_t seed);
CheckResult check_pme(std::uint64_t seed);
CheckResult check_layer_equivalence(std::uint64_t seed);
CheckResult check_noise_free_recovery();
CheckResult check_metrics();

// Trains the desk profile once and evaluates it.
struct DeskRun {
    TrainReport training;
    std::vector<ResultRow> rows;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
};
DeskRun run_desk(const ExperimentConfig& cfg);
CheckResult check_desk_reproduction(const ExperimentConfig& cfg, const DeskRun& run);
CheckResult check_training_sanity(const ExperimentConfig& cfg, const DeskRun& run);

// Runs eval twice (different worker counts) and compares the CSV bytes.
CheckResult check_determinism(const ExperimentConfig& cfg, const Checkpoint& ckpt);

// Prints one PASS/FAIL line per check; returns the number of failures.
int run_all(const Options& opt, std::ostream& os);

}  // namespace dujad::acceptance
