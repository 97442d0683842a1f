#include "trajmask/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace trajmask {

const char* tier_name(Tier t) {
    switch (t) {
        case Tier::Random: return "random";
        case Tier::Weak: return "weak";
        case Tier::Mixed: return "mixed";
    }
    return "?";
}

Tier tier_from_name(const std::string& name) {
    if (name == "random") return Tier::Random;
    if (name == "weak") return Tier::Weak;
    if (name == "mixed") return Tier::Mixed;
    throw ConfigError("unknown tier '" + name + "' (expected random|weak|mixed)");
}

void TrajectoryDataset::validate() const {
    if (total_transitions != recount_transitions())
        throw ContractError("dataset: total_transitions " + std::to_string(total_transitions) +
                            " != recount " + std::to_string(recount_transitions()));
    const std::size_t obs_size = spec.obs_size();
    for (const auto& t : trajectories) {
        if (t.length() < 2) throw ContractError("dataset: trajectory shorter than 2 states");
        if (t.actions.size() != static_cast<std::size_t>(t.length() - 1) ||
            t.rewards.size() != t.actions.size() ||
            t.obs.size() != static_cast<std::size_t>(t.length()) * obs_size)
            throw ContractError("dataset: inconsistent trajectory field lengths");
        for (std::uint8_t a : t.actions)
            if (a >= GridWorldSpec::kNumActions)
                throw ContractError("dataset: action index " + std::to_string(a) + " out of range");
        for (float v : t.obs)
            if (!(v >= 0.0f && v <= 1.0f))
                throw ContractError("dataset: observation value outside [0,1]");
    }
}

double TrajectoryDataset::mean_episode_return() const {
    if (trajectories.empty()) return 0.0;
    double s = 0;
    for (const auto& t : trajectories) s += t.episode_return();
    return s / static_cast<double>(trajectories.size());
}

TrajectoryDataset collect_random(const GridWorldSpec& spec, std::int64_t num_transitions,
                                 std::uint64_t seed, CollectStats* stats) {
    if (num_transitions <= 0) throw ContractError("collect_random: num_transitions must be > 0");
    TrajectoryDataset ds;
    ds.spec = spec;
    ds.tier = Tier::Random;
    Rng rng(derive_seed(seed, 0xd47a));
    GridWorld env(spec);
    const std::size_t obs_size = spec.obs_size();
    std::int64_t remaining = num_transitions;
    std::vector<float> frame(obs_size);

    while (remaining > 0) {
        env.reset(rng);
        Trajectory traj;
        env.render(frame.data());
        traj.obs.insert(traj.obs.end(), frame.begin(), frame.end());
        auto f = env.factored();
        traj.factored.push_back({static_cast<std::uint16_t>(f[0]), static_cast<std::uint16_t>(f[1]),
                                 static_cast<std::uint16_t>(f[2])});
        while (!env.done() && remaining > 0) {
            int action = static_cast<int>(rng.uniform_int(0, GridWorldSpec::kNumActions - 1));
            int run = rng.geometric(1.0 / 3.0);
            int executed = 0;
            for (int r = 0; r < run && !env.done() && remaining > 0; ++r) {
                StepResult res = env.step(action);
                ++executed;
                --remaining;
                traj.actions.push_back(static_cast<std::uint8_t>(action));
                traj.rewards.push_back(res.reward);
                env.render(frame.data());
                traj.obs.insert(traj.obs.end(), frame.begin(), frame.end());
                f = env.factored();
                traj.factored.push_back({static_cast<std::uint16_t>(f[0]),
                                         static_cast<std::uint16_t>(f[1]),
                                         static_cast<std::uint16_t>(f[2])});
            }
            if (stats != nullptr) {
                stats->all_runs.push_back(run);
                if (executed == run) stats->completed_runs.push_back(run);
            }
        }
        if (traj.length() >= 2) ds.trajectories.push_back(std::move(traj));
    }
    ds.total_transitions = ds.recount_transitions();
    ds.validate();
    return ds;
}

RewardFreeView RewardFreeView::from(const std::vector<const TrajectoryDataset*>& datasets) {
    RewardFreeView v;
    if (datasets.empty()) throw ContractError("RewardFreeView: no datasets");
    v.obs_size = datasets[0]->spec.obs_size();
    v.num_actions = GridWorldSpec::kNumActions;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const auto& ds = *datasets[d];
        if (ds.spec.obs_size() != v.obs_size)
            throw ContractError("RewardFreeView: observation size mismatch across datasets");
        if (std::find(v.layout_ids.begin(), v.layout_ids.end(), ds.spec.layout_id) ==
            v.layout_ids.end())
            v.layout_ids.push_back(ds.spec.layout_id);
        for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
            const auto& t = ds.trajectories[i];
            RewardFreeTraj rt;
            rt.obs = t.obs.data();
            rt.actions = t.actions.data();
            rt.length = t.length();
            rt.dataset_index = static_cast<int>(d);
            rt.traj_index = static_cast<int>(i);
            v.trajs.push_back(rt);
        }
    }
    std::sort(v.layout_ids.begin(), v.layout_ids.end());
    v.state_prefix.assign(1, 0);
    v.action_prefix.assign(1, 0);
    for (const auto& t : v.trajs) {
        v.state_prefix.push_back(v.state_prefix.back() + t.length);
        v.action_prefix.push_back(v.action_prefix.back() + t.length - 1);
    }
    return v;
}

std::pair<int, int> RewardFreeView::locate_state(std::int64_t global) const {
    auto it = std::upper_bound(state_prefix.begin(), state_prefix.end(), global);
    int traj = static_cast<int>(it - state_prefix.begin()) - 1;
    return {traj, static_cast<int>(global - state_prefix[static_cast<std::size_t>(traj)])};
}

std::pair<int, int> RewardFreeView::locate_action(std::int64_t global) const {
    auto it = std::upper_bound(action_prefix.begin(), action_prefix.end(), global);
    int traj = static_cast<int>(it - action_prefix.begin()) - 1;
    return {traj, static_cast<int>(global - action_prefix[static_cast<std::size_t>(traj)])};
}

}  // namespace trajmask
