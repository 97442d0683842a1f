#pragma once

#include <vector>

#include "trajmask/dataset.hpp"
#include "trajmask/model.hpp"

namespace trajmask {

// k-step dynamic prediction: from the frozen features of s_t, a two-layer
// head regresses the factored state at t+k, each component divided by its
// maximum value. Probing reads observations and factored states only.
struct ProbeConfig {
    std::vector<int> horizons = {1, 2, 5, 10, 20};
    int head_hidden = 64;
    int epochs = 30;
    double lr = 1e-3;
    int batch_size = 128;
    double train_fraction = 0.8;  // split by trajectory
    std::uint64_t seed = 0;

    void validate() const;
};

struct ProbeResult {
    int horizon = 0;
    double test_mse = 0;
    std::int64_t train_pairs = 0;
    std::int64_t test_pairs = 0;
};

// One result per horizon that has at least one train and one test pair;
// horizons no trajectory can serve are skipped.
std::vector<ProbeResult> probe_dynamics(FrozenEncoder& encoder, const TrajectoryDataset& ds,
                                        const ProbeConfig& cfg);

}  // namespace trajmask
