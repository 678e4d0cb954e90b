#pragma once

#include <map>
#include <string>
#include <vector>

#include "dujad/aud.hpp"
#include "dujad/unfolded.hpp"

namespace dujad {

// Everything evaluation needs for one AP count.
struct ModelEntry {
    int P = 0;
    UnfoldedParams network;
    AudParams aud;
    // Energy thresholds of the hard-decision baselines, keyed by method name.
    std::map<std::string, double> thresholds;
    double fbs_initial_val = 0.0;
    double fbs_best_val = 0.0;
    double aud_initial_val = 0.0;
    double aud_best_val = 0.0;
};

// One trained model per AP count. Dimensions are stored so a checkpoint
// cannot be silently applied to a different scenario.
struct Checkpoint {
    int N = 0;
    int M = 0;
    int R_P = 0;
    int R_D = 0;
    std::vector<ModelEntry> models;

    const ModelEntry* find(int P) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dujad
