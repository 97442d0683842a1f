#pragma once

#include <cstdint>
#include <vector>

#include "trajmask/dataset.hpp"

namespace trajmask {

// Token positions interleave states and actions: with 0-based indexing,
// even positions are states and odd positions are actions, so a segment of
// K' states spans 2K'-1 positions (s a s a ... s).

enum class ReplacementScheme : std::uint8_t { Bert, FixedOnly };
enum class Replacement : std::uint8_t { FixedToken, RandomSameKind, Unchanged };

struct MaskConfig {
    double anchor_prob = 0.10;  // p: each item independently starts a masked run
    int max_run = 3;            // n: run length ~ Unif{1..n}
    int segment_states = 50;    // K: states per segment, upper bound
    ReplacementScheme scheme = ReplacementScheme::Bert;
    std::uint64_t seed = 0;

    double expected_masked_fraction() const {
        return anchor_prob * (max_run + 1) / 2.0;
    }
    void validate() const;
};

struct Segment {
    int traj_ref = 0;    // index into RewardFreeView::trajs
    int offset = 0;      // first state index inside the trajectory
    int num_states = 0;  // K', 2 <= K' <= K
    int seq_len() const { return 2 * num_states - 1; }
};

struct MaskPlan {
    std::vector<int> masked_indices;        // sorted, 0-based sequence positions
    std::vector<Replacement> replacements;  // parallel to masked_indices
    std::vector<int> sampled_runs;          // diagnostic: run lengths before clip/merge
};

struct TokenSlot {
    bool is_state = false;
    bool masked = false;
    // original item (the loss target)
    int orig_t = 0;       // state index within the source trajectory
    int orig_action = 0;  // action index
    // payload the model sees after masking
    bool input_fixed = false;  // fixed-token marker (states)
    int in_traj = 0, in_t = 0;  // state payload (view trajectory + time)
    int in_action = 0;          // action payload; == num_actions for the fixed token
};

struct TokenSequence {
    int traj_ref = 0;
    int offset = 0;
    int num_states = 0;
    std::vector<TokenSlot> slots;  // 2*num_states - 1

    int seq_len() const { return static_cast<int>(slots.size()); }
    std::vector<int> masked_positions() const;
};

// Random partition of [0, traj_len) into chunks of 2..K states; covers the
// trajectory without overlap. Trajectories shorter than 2 yield no segments.
// (With K == 2 and odd length no exact partition exists; the final state is
// dropped.)
std::vector<std::pair<int, int>> cut_offsets(int traj_len, int K, Rng& rng);
std::vector<Segment> cut_segments(const RewardFreeView& view, int traj_ref, int K, Rng& rng);

// Anchor sampling + run masking + replacement draw. Never returns an empty
// plan: one resample pass, then a forced single anchor.
MaskPlan sample_mask_plan(int seq_len, const MaskConfig& cfg, Rng& rng);

// Materializes the token stream: originals for every position plus masked
// payloads per the plan (fixed token / random item from the whole dataset /
// unchanged).
TokenSequence apply_mask(const RewardFreeView& view, const Segment& seg, const MaskPlan& plan,
                         Rng& rng);

}  // namespace trajmask
