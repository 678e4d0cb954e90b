#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dujad/aud.hpp"
#include "dujad/config.hpp"
#include "dujad/fbs.hpp"
#include "dujad/scenario.hpp"
#include "dujad/unfolded.hpp"

namespace dujad {

// An instance together with the Baseline-1 state the network starts from.
struct TrainingSample {
    Instance inst;
    SolverState init;
    int init_iterations = 0;  // iterations spent on the starting state
};

struct TrainingSet {
    std::vector<TrainingSample> train;
    std::vector<TrainingSample> val;
    double B = 0.70710678118654752440;
};

enum class LrSchedule { fixed, decaying };
enum class GradientEstimator { backprop, spsa, central_difference };

struct TrainConfig {
    int n_train = 200;
    int n_val = 50;
    int batch_size = 20;
    int epochs = 30;
    LrSchedule step_rule = LrSchedule::decaying;
    double base_lr = 0.05;      // Adam step in normalized parameter units
    double spsa_perturb = 0.05; // spsa / fd perturbation size in normalized units
    GradientEstimator estimator = GradientEstimator::backprop;
    int spsa_samples = 4;       // averaged perturbations per step
    int aud_epochs = 50;        // full-batch Newton steps of the AUD head
    double aud_lr = 1.0;        // first trial length of each Newton step
    bool aud_recalibrate = true; // refit the head bias for fewest training decision errors
    std::uint64_t seed = 7;
    std::string param_init = "baseline";  // "baseline" or "zero_momentum" (same preset)
    int max_failures = 8;       // consecutive rejected steps before aborting
    int workers = 0;            // 0: worker_count()

    void validate() const;
};

// Reads train.* keys on top of `base`.
TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig base = {});
const std::vector<std::string>& train_config_keys();

struct TrainTrace {
    double initial_val = 0.0;          // validation loss of param_init
    std::vector<double> train_loss;    // per epoch
    std::vector<double> val_loss;      // per epoch
    std::vector<double> best_val;      // best so far, including param_init
    std::vector<int> best_checkpoint;  // epoch of the best so far (0 = param_init)
    int rejected = 0;                  // perturbations dropped for non-finite loss

    int epochs() const { return static_cast<int>(val_loss.size()); }
    double best() const { return best_val.empty() ? initial_val : best_val.back(); }
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, TrainTrace trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const TrainTrace& trace() const noexcept { return trace_; }

private:
    TrainTrace trace_;
};

// ||XD_out - XD_true||_F^2
double loss_fbs(const CMatrix& XD_out, const CMatrix& XD_true);

// Binary cross-entropy summed over UEs, L clipped into [eps, 1 - eps].
double loss_aud(const RVector& L, const Activity& xi, double eps = 1e-12);

// Initialization preset: every layer starts as one plain FBS step with
// tau_h ~ c / ||X||^2, tau_x ~ c / ||H_init||^2 (means over the training set),
// no momentum, mu_h from the baseline solver, lambda = 1, N_e = 1 and nu at 1%
// of the l1 norm of a full QPSK row. A zero nu would put every row on the
// alpha = 1 clamp, where lambda and nu get no gradient.
UnfoldedParams initial_unfolded_params(const std::vector<TrainingSample>& train, int K, double mu_h, double P_a,
                                       double B, double step_scale = 0.5);

// AUD head start: data energy of a full-amplitude row maps to +1, zero to -1.
AudParams initial_aud_params(int R_D, double B);

// Mean loss_fbs of run_network over `samples`; +inf if any sample diverges.
double mean_fbs_loss(const std::vector<TrainingSample>& samples, const UnfoldedParams& params, double B,
                     int workers = 0);

struct FbsTraining {
    UnfoldedParams params;
    TrainTrace trace;
};

// Adam on exact gradients (or SPSA / central differences) in a per-parameter normalized space:
// step sizes move multiplicatively, everything else additively on a scale
// derived from param_init and the data. Returns the best-validation checkpoint.
FbsTraining train_fbs_layers(const TrainingSet& data, const UnfoldedParams& init, const TrainConfig& cfg);

// Per-UE energies of a frozen network, computed once per instance.
struct AudFeatures {
    std::vector<RVector> channel;  // ||h_n||^2 per instance
    std::vector<RVector> data;     // ||x_n||^2 per instance
    std::vector<Activity> truth;
};
AudFeatures aud_features(const std::vector<TrainingSample>& samples, const UnfoldedParams& frozen, double B,
                         int workers = 0);

// Mean per-instance loss_aud over precomputed features.
double mean_aud_loss(const AudFeatures& features, const AudParams& ap);

struct AudTraining {
    AudParams params;
    TrainTrace trace;       // of the cross-entropy fit
    double val_loss = 0.0;  // mean_aud_loss of `params` on the validation set
};

AudTraining train_aud_head(const TrainingSet& data, const UnfoldedParams& frozen, const AudParams& init,
                           const TrainConfig& cfg);
// Same, on features that were already computed.
AudTraining train_aud_head(const AudFeatures& train, const AudFeatures& val, const AudParams& init,
                           const TrainConfig& cfg);

void write_trace_csv(const std::string& path, const TrainTrace& trace);

}  // namespace dujad
