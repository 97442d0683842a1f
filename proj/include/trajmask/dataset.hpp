#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trajmask/gridworld.hpp"

namespace trajmask {

enum class Tier : std::uint8_t { Random = 0, Weak = 1, Mixed = 2 };

const char* tier_name(Tier t);
Tier tier_from_name(const std::string& name);

// One episode (possibly truncated by the collection budget): T observations,
// T-1 actions/rewards, and the factored state (x, y, steps remaining) that
// plays the role of emulator RAM for the dynamics probe.
struct Trajectory {
    std::vector<float> obs;                         // T * obs_size, concatenated
    std::vector<std::uint8_t> actions;              // T-1
    std::vector<std::array<std::uint16_t, 3>> factored;  // T
    std::vector<float> rewards;                     // T-1

    int length() const { return static_cast<int>(factored.size()); }
    const float* obs_at(int t, std::size_t obs_size) const {
        return obs.data() + static_cast<std::size_t>(t) * obs_size;
    }
    float episode_return() const {
        float r = 0;
        for (float v : rewards) r += v;
        return r;
    }
};

struct TrajectoryDataset {
    GridWorldSpec spec;
    Tier tier = Tier::Random;
    std::vector<Trajectory> trajectories;
    std::int64_t total_transitions = 0;

    std::int64_t recount_transitions() const {
        std::int64_t n = 0;
        for (const auto& t : trajectories) n += t.length() - 1;
        return n;
    }
    void validate() const;  // invariants: counts, action range, obs range
    double mean_episode_return() const;
};

// Diagnostics from collection, for distribution checks. `completed_runs`
// holds action-repeat lengths that were not cut short by an episode ending,
// i.e. unbiased draws from the repeat distribution.
struct CollectStats {
    std::vector<int> completed_runs;
    std::vector<int> all_runs;
};

// Uniform actions repeated for Geometric(p=1/3) consecutive steps.
TrajectoryDataset collect_random(const GridWorldSpec& spec, std::int64_t num_transitions,
                                 std::uint64_t seed, CollectStats* stats = nullptr);

// First num_transitions transitions of a fresh online DQN run.
TrajectoryDataset collect_weak(const GridWorldSpec& spec, std::int64_t num_transitions,
                               std::uint64_t seed);

// Even policy snapshots across a full DQN training run, each contributing
// num_transitions / num_checkpoints transitions.
TrajectoryDataset collect_mixed(const GridWorldSpec& spec, std::int64_t num_transitions,
                                int num_checkpoints, std::uint64_t seed,
                                int train_budget = 60000);

// Binary container (see format notes in dataset_io.cpp). Round-trips are
// byte-exact; malformed files raise ParseError with the failing offset.
void save_dataset(const TrajectoryDataset& ds, const std::string& path);
TrajectoryDataset load_dataset(const std::string& path);

// Reward-free access surface handed to pretraining: states and actions only.
struct RewardFreeTraj {
    const float* obs = nullptr;  // T * obs_size
    const std::uint8_t* actions = nullptr;
    int length = 0;
    int dataset_index = 0;
    int traj_index = 0;
};

struct RewardFreeView {
    std::vector<RewardFreeTraj> trajs;
    std::size_t obs_size = 0;
    int num_actions = 0;
    std::vector<int> layout_ids;  // distinct layouts backing the view

    // prefix sums over trajectories, for uniform sampling of items
    std::vector<std::int64_t> state_prefix;   // trajs.size()+1
    std::vector<std::int64_t> action_prefix;  // trajs.size()+1

    std::int64_t total_states() const { return state_prefix.back(); }
    std::int64_t total_actions() const { return action_prefix.back(); }
    std::pair<int, int> locate_state(std::int64_t global) const;   // -> (traj, t)
    std::pair<int, int> locate_action(std::int64_t global) const;  // -> (traj, t)

    const float* state_obs(int traj, int t) const {
        return trajs[static_cast<std::size_t>(traj)].obs + static_cast<std::size_t>(t) * obs_size;
    }

    static RewardFreeView from(const std::vector<const TrajectoryDataset*>& datasets);
    static RewardFreeView from(const TrajectoryDataset& ds) { return from({&ds}); }
};

}  // namespace trajmask
