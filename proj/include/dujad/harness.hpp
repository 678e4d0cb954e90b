#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dujad/checkpoint.hpp"
#include "dujad/config.hpp"
#include "dujad/fbs.hpp"
#include "dujad/scenario.hpp"
#include "dujad/trainer.hpp"

namespace dujad {

enum class Method { baseline1, baseline4_200it, baseline4_10it, dujad };

std::string method_name(Method m);
// Throws ConfigError("methods") for an unknown name.
Method parse_method(const std::string& name);

// Hand-tuned settings of the classic solvers. Baseline 1 estimates channels
// from pilots only, thresholds their energy and detects data by zero forcing.
// Baseline 4 runs the joint FBS solver from the Baseline-1 channels.
struct BaselineSettings {
    double mu_h = 6.0;
    double mu_x = 0.5;
    int ce_iter = 200;     // pilot-only channel estimation
    int long_iter = 200;
    int short_iter = 10;
    double tol = 1e-4;
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    std::vector<Method> methods = {Method::baseline1, Method::baseline4_200it, Method::baseline4_10it, Method::dujad};
    int trials = 500;
    std::vector<int> P_sweep = {4, 8, 12};
    std::string checkpoint;
    std::string output = "results.csv";
    std::uint64_t seed = 1;
    BaselineSettings baseline;
    TrainConfig train;
    int K = UnfoldedParams::kDefaultLayers;
    double L_bar = 0.5;
    // Instances used to fit baseline thresholds when no checkpoint provides them.
    int calibration_trials = 50;
    // Off by default so that result files are byte-reproducible.
    bool record_wall_time = false;
    int workers = 0;  // 0: worker_count()

    void validate() const;
    bool needs_checkpoint() const;
};

// Parses the key-value schema; unknown keys and invalid values raise
// ConfigError naming the field.
ExperimentConfig experiment_from_config(const KeyValueConfig& kv);
ExperimentConfig load_experiment(const std::string& path);

struct ResultRow {
    std::string method;
    int P = 0;
    int trial = 0;
    double uder = 0.0;
    double aser = 0.0;
    int iterations = 0;
    double wall_time = 0.0;

    bool operator==(const ResultRow&) const = default;
};

// Deterministic streams. Evaluation, training and calibration draw from
// disjoint tag paths of the same experiment seed.
Rng trial_stream(std::uint64_t seed, int P, int trial);
Rng train_stream(std::uint64_t seed, int P, int index, bool validation);
CMatrix experiment_pilots(const ScenarioConfig& scenario, std::uint64_t seed);

// Pilot-only channel estimate wrapped as a state with X_D = 0.
SolverState baseline1_init(const Instance& inst, const BaselineSettings& b, double B, int* iterations = nullptr);

// Completes the Baseline-1 result: energy-threshold activity, then zero-forcing
// data for the detected UEs. Every iterative method starts from this state.
void attach_baseline1_data(TrainingSample& s, double threshold, double B);

// Fresh instance with its channel estimate; data still to be attached.
TrainingSample make_sample(const ScenarioConfig& scenario, const CMatrix& pilots, const BaselineSettings& b, Rng& rng);

// Energy thresholds for every baseline method, fitted on `samples`. The
// Baseline-1 threshold is fitted first and used to attach data to the samples.
std::map<std::string, double> calibrate_baselines(std::vector<TrainingSample>& samples, const BaselineSettings& b,
                                                  double B, int workers = 0);

// Runs one method on one sample. `model` supplies the baseline thresholds and,
// for dujad, the trained network and head.
ResultRow run_method(Method m, const TrainingSample& sample, const ExperimentConfig& cfg, const ModelEntry& model);

// Paired Monte-Carlo sweep. Checks checkpoint and output path before any work.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const Checkpoint* ckpt);

// Trains one model per P of the sweep.
struct TrainReport {
    Checkpoint checkpoint;
    std::vector<TrainTrace> fbs_traces;
    std::vector<TrainTrace> aud_traces;
};
TrainReport train_all(const ExperimentConfig& cfg, bool verbose = false);
// Training and validation samples for one P with complete starting states;
// the baseline thresholds fitted on the training part go to `thresholds`.
TrainingSet make_training_set(const ExperimentConfig& cfg, int P, const CMatrix& pilots,
                              std::map<std::string, double>* thresholds = nullptr);

struct SummaryRow {
    std::string method;
    int P = 0;
    int count = 0;
    double uder_mean = 0.0;
    double uder_stderr = 0.0;
    double aser_mean = 0.0;
    double aser_stderr = 0.0;
};

// Mean and standard error (sample deviation / sqrt(n)) per (method, P),
// groups in order of first appearance.
std::vector<SummaryRow> aggregate(const std::vector<ResultRow>& rows);

struct PairedDifference {
    int count = 0;
    double mean = 0.0;    // mean of (a - b) over trials present for both
    double std_error = 0.0;
};
// Per-trial ASER difference method_a - method_b at one P.
PairedDifference paired_aser_difference(const std::vector<ResultRow>& rows, const std::string& a,
                                        const std::string& b, int P);

// method,P,trial,uder,aser,iterations,wall_time with 9 significant digits.
void write_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void export_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> parse_csv(std::istream& is);
std::vector<ResultRow> import_csv(const std::string& path);

void write_summary(std::ostream& os, const std::vector<SummaryRow>& summary);

}  // namespace dujad
