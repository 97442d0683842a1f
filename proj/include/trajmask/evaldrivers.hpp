#pragma once

#include <string>
#include <vector>

#include "trajmask/dqn.hpp"
#include "trajmask/pretrain.hpp"
#include "trajmask/probe.hpp"

namespace trajmask {

// ----------------------------- score normalization -----------------------------

struct BaselineScores {
    double random_return = 0;
    double reference_return = 0;
};

// Random-policy mean return plus a reference policy (DQN trained for
// reference_mult x budget on the layout). Results are cached as a small CSV
// in cache_dir so repeated evaluations share one reference run.
BaselineScores compute_baselines(const GridWorldSpec& spec, int budget, int reference_mult,
                                 std::uint64_t seed, const std::string& cache_dir);

// ----------------------------- single RL arm -----------------------------

struct RlArmResult {
    EncoderMode mode = EncoderMode::Scratch;
    std::uint64_t seed = 0;
    DqnResult dqn;
    double normalized = 0;
};

RlArmResult run_rl_arm(const GridWorldSpec& spec, EncoderMode mode, const ModelParams* checkpoint,
                       DqnConfig cfg, std::uint64_t seed, const BaselineScores& base);

// ----------------------------- artifact cache -----------------------------

// Datasets and pretrained checkpoints keyed by their parameters; files are
// reused when present (runs are deterministic, so the cache is sound).
struct ArtifactCache {
    std::string dir;
    std::uint64_t data_seed = 11;
    std::uint64_t pretrain_seed = 7;
    int mixed_checkpoints = 5;

    std::string dataset_path(Tier tier, int layout, std::int64_t size) const;
    TrajectoryDataset dataset(Tier tier, int layout, std::int64_t size) const;
    std::string checkpoint_path(const std::string& tag) const;
    // pretrains on the given datasets if the checkpoint is missing
    ModelParams pretrained(const std::string& tag, const std::vector<std::string>& dataset_paths,
                           PretrainConfig cfg) const;
};

// ----------------------------- scaling sweep -----------------------------

struct ScalingCell {
    Tier tier = Tier::Mixed;
    std::int64_t size = 40000;
    EncoderScale scale = EncoderScale::Medium;
};

struct ScalingConfig {
    int layout = 0;
    std::vector<ScalingCell> cells;
    PretrainConfig pretrain;  // steps, mask, model defaults per cell (scale overridden)
    DqnConfig dqn;            // frozen-mode downstream runs
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string work_dir;
    int jobs = 1;
};

struct ScalingRow {
    ScalingCell cell;
    std::uint64_t seed = 0;
    double score = 0;  // normalized
};

std::vector<ScalingRow> scaling_sweep(const ScalingConfig& cfg);
void write_scaling_csv(const std::vector<ScalingRow>& rows, const std::string& path);

// ----------------------------- transfer -----------------------------

struct TransferConfig {
    std::vector<int> train_layouts = {0, 1, 2, 3, 4, 5};
    std::vector<int> holdout_layouts = {6, 7};
    std::int64_t per_layout_transitions = 6000;
    PretrainConfig pretrain;
    DqnConfig dqn;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string work_dir;
};

struct TransferRow {
    int layout = 0;
    std::string arm;  // same | transfer | scratch
    std::uint64_t seed = 0;
    int step = 0;
    double ret = 0;
};

struct TransferOutcome {
    std::vector<TransferRow> curve_rows;             // eval curves for transfer.csv
    // final mean return per (layout, arm) over seeds
    std::vector<std::tuple<int, std::string, double>> final_means;
};

// Guard: refuses a checkpoint whose recorded layouts intersect the eval
// layout.
void check_transfer_guard(const ModelParams& ckpt, int eval_layout);

TransferOutcome transfer_eval(const TransferConfig& cfg);
void write_transfer_csv(const std::vector<TransferRow>& rows, const std::string& path);

// ----------------------------- probe driver -----------------------------

struct ProbeDriverConfig {
    ProbeConfig probe;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct ProbeRow {
    int horizon = 0;
    std::string encoder;  // pretrained | random
    std::uint64_t seed = 0;
    double mse = 0;
};

// Runs the probe with the pretrained encoder and a random-initialized
// encoder of the same architecture, per seed.
std::vector<ProbeRow> probe_compare(const ModelParams& checkpoint, const TrajectoryDataset& ds,
                                    const ProbeDriverConfig& cfg);
void write_probe_csv(const std::vector<ProbeRow>& rows, const std::string& path);

}  // namespace trajmask
