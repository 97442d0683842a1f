#pragma once

#include <string>
#include <vector>

#include "trajmask/model.hpp"
#include "trajmask/optim.hpp"

namespace trajmask {

// Second denominator of the symmetric loss: AsWritten contrasts g(y_t)
// against transformer outputs g(z_tau); SymmetricY swaps in encoder targets
// g(y_tau) in case the printed asymmetry is a typo.
enum class LossVariant : std::uint8_t { AsWritten, SymmetricY };

const char* loss_variant_name(LossVariant v);
LossVariant loss_variant_from_name(const std::string& name);

struct PretrainConfig {
    MaskConfig mask;
    ModelConfig model;
    int batch_size = 16;  // segments per step
    int steps = 5000;
    nn::AdamConfig adam;
    double temperature = 1.0;  // tau_c; 1.0 reproduces the temperature-free form
    LossVariant variant = LossVariant::AsWritten;
    std::uint64_t seed = 0;
    int eval_interval = 250;
    double holdout_fraction = 0.10;  // held out by trajectory
    int eval_max_segments = 64;
    std::string out_dir;  // when set: ckpt_best.rpmc, ckpt_final.rpmc, metrics.csv

    void validate() const;
};

struct PretrainMetricsRow {
    int step = 0;
    double loss = 0;
    bool has_acc = false;
    double retrieval_acc = 0;
    double wall_ms = 0;
};

struct PretrainResult {
    ModelParams final_params;
    ModelParams best_params;
    int best_step = 0;
    double best_retrieval = 0;
    double final_retrieval = 0;
    double final_chance = 0;  // mean over eval masked positions of 1/(M-1)
    std::vector<PretrainMetricsRow> metrics;
};

// Symmetric masked-prediction contrastive loss over one sequence. Both
// denominators range over the other positions (tau != t) of the same
// sequence; cosine similarities are computed on the projected vectors and
// divided by the temperature.
nn::Tensor contrastive_loss(const nn::Tensor& proj_y, const nn::Tensor& proj_z,
                            const std::vector<int>& masked, LossVariant variant,
                            double temperature);
nn::Tensor contrastive_loss(const SequenceForward& f, LossVariant variant, double temperature);

struct RetrievalStats {
    double accuracy = 0;  // masked predictions whose nearest target is their own position
    double chance = 0;    // mean 1/(M-1)
    std::int64_t masked_count = 0;
};
RetrievalStats retrieval_accuracy(const ModelParams& params, const RewardFreeView& view,
                                  const std::vector<TokenSequence>& eval_seqs);

PretrainResult pretrain(const RewardFreeView& data, const PretrainConfig& cfg);

// Builds deterministic eval token sequences from a list of trajectories.
std::vector<TokenSequence> build_eval_sequences(const RewardFreeView& view,
                                                const std::vector<int>& traj_refs,
                                                const MaskConfig& mask, std::uint64_t seed,
                                                int max_segments);

FrozenEncoder extract_state_encoder(const ModelParams& checkpoint);
FrozenEncoder extract_state_encoder(const std::string& checkpoint_path);

}  // namespace trajmask
