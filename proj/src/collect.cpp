#include <cstring>
#include <unordered_map>

#include "trajmask/dataset.hpp"
#include "trajmask/dqn.hpp"

namespace trajmask {

namespace {

constexpr int kPolicyTrainBudget = 60000;  // env steps for a full learner run
constexpr double kRolloutEps = 0.05;

class TrajectoryRecorder : public EnvRecorder {
public:
    TrajectoryRecorder(const GridWorldSpec& spec, std::int64_t cap)
        : spec_(spec), cap_(cap), frame_(spec.obs_size()) {}

    void episode_start(const GridWorld& env) override {
        close_open();
        open_ = true;
        cur_ = Trajectory{};
        append_state(env);
    }

    void transition(const GridWorld& env, int action, float reward, bool done) override {
        if (count_ >= cap_ || !open_) return;
        cur_.actions.push_back(static_cast<std::uint8_t>(action));
        cur_.rewards.push_back(reward);
        append_state(env);
        ++count_;
        if (done || count_ >= cap_) close_open();
    }

    std::int64_t count() const { return count_; }
    std::vector<Trajectory> take() {
        close_open();
        return std::move(done_);
    }

private:
    void append_state(const GridWorld& env) {
        env.render(frame_.data());
        cur_.obs.insert(cur_.obs.end(), frame_.begin(), frame_.end());
        auto f = env.factored();
        cur_.factored.push_back({static_cast<std::uint16_t>(f[0]), static_cast<std::uint16_t>(f[1]),
                                 static_cast<std::uint16_t>(f[2])});
    }
    void close_open() {
        if (open_ && cur_.length() >= 2) done_.push_back(std::move(cur_));
        open_ = false;
        cur_ = Trajectory{};
    }

    const GridWorldSpec& spec_;
    std::int64_t cap_;
    std::int64_t count_ = 0;
    std::vector<float> frame_;
    Trajectory cur_;
    bool open_ = false;
    std::vector<Trajectory> done_;
};

DqnConfig collector_dqn_config(std::int64_t eps_horizon, std::uint64_t seed) {
    DqnConfig c;
    c.mode = EncoderMode::Scratch;
    c.scale = EncoderScale::Small;
    c.update_period = 2;
    c.eval_interval = 0;
    c.eps_decay_steps = static_cast<int>(std::max<std::int64_t>(1, eps_horizon));
    c.warmup = static_cast<int>(std::min<std::int64_t>(500, std::max<std::int64_t>(1, eps_horizon / 5)));
    c.seed = seed;
    return c;
}

// eps-greedy rollout with the agent's current (fixed) policy; Q-values are
// cached per observation since the policy does not change during a rollout
void rollout_policy(DqnAgent& agent, const GridWorldSpec& spec, std::int64_t transitions,
                    Rng& rng, TrajectoryRecorder& rec) {
    GridWorld env(spec);
    std::vector<float> obs(spec.obs_size());
    std::unordered_map<std::uint64_t, int> greedy_cache;
    std::int64_t taken = 0;
    while (taken < transitions) {
        env.reset(rng);
        rec.episode_start(env);
        while (!env.done() && taken < transitions) {
            env.render(obs.data());
            int action;
            if (rng.bernoulli(kRolloutEps)) {
                action = static_cast<int>(rng.uniform_int(0, GridWorldSpec::kNumActions - 1));
            } else {
                std::uint64_t key = fnv1a64(obs.data(), obs.size() * sizeof(float));
                auto it = greedy_cache.find(key);
                if (it == greedy_cache.end())
                    it = greedy_cache.emplace(key, agent.greedy_action(obs.data())).first;
                action = it->second;
            }
            StepResult res = env.step(action);
            rec.transition(env, action, res.reward, res.done);
            ++taken;
        }
    }
}

}  // namespace

TrajectoryDataset collect_weak(const GridWorldSpec& spec, std::int64_t num_transitions,
                               std::uint64_t seed) {
    if (num_transitions <= 0) throw ContractError("collect_weak: num_transitions must be > 0");
    // the weak tier records the first transitions of an ordinary learner run,
    // so the epsilon schedule follows the full training budget, not the cutoff
    DqnConfig c = collector_dqn_config(kPolicyTrainBudget / 2, derive_seed(seed, 0x3ea));
    c.budget = static_cast<int>(num_transitions);
    DqnAgent agent(spec, c, nullptr);
    TrajectoryRecorder rec(spec, num_transitions);
    agent.run(&rec);

    TrajectoryDataset ds;
    ds.spec = spec;
    ds.tier = Tier::Weak;
    ds.trajectories = rec.take();
    ds.total_transitions = ds.recount_transitions();
    if (ds.total_transitions != num_transitions)
        throw ContractError("collect_weak: recorded " + std::to_string(ds.total_transitions) +
                            " transitions, wanted " + std::to_string(num_transitions));
    ds.validate();
    return ds;
}

TrajectoryDataset collect_mixed(const GridWorldSpec& spec, std::int64_t num_transitions,
                                int num_checkpoints, std::uint64_t seed, int train_budget) {
    if (num_transitions <= 0) throw ContractError("collect_mixed: num_transitions must be > 0");
    if (num_checkpoints < 2) throw ConfigError("collect_mixed: num_checkpoints must be >= 2");
    if (num_transitions < num_checkpoints)
        throw ConfigError("collect_mixed: fewer transitions than checkpoints");
    if (train_budget < num_checkpoints) throw ConfigError("collect_mixed: train budget too small");

    DqnConfig c = collector_dqn_config(train_budget / 2, derive_seed(seed, 0x317ed));
    c.budget = train_budget;
    DqnAgent agent(spec, c, nullptr);
    TrajectoryRecorder rec(spec, num_transitions);
    Rng rollout_rng(derive_seed(seed, 0x4011));

    const std::int64_t per = num_transitions / num_checkpoints;
    for (int k = 1; k <= num_checkpoints; ++k) {
        int upto = static_cast<int>(static_cast<std::int64_t>(train_budget) * k /
                                    num_checkpoints);
        agent.run_steps(upto - agent.steps_done());
        std::int64_t block =
            k < num_checkpoints ? per : num_transitions - per * (num_checkpoints - 1);
        rollout_policy(agent, spec, block, rollout_rng, rec);
    }

    TrajectoryDataset ds;
    ds.spec = spec;
    ds.tier = Tier::Mixed;
    ds.trajectories = rec.take();
    ds.total_transitions = ds.recount_transitions();
    if (ds.total_transitions != num_transitions)
        throw ContractError("collect_mixed: recorded " + std::to_string(ds.total_transitions) +
                            " transitions, wanted " + std::to_string(num_transitions));
    ds.validate();
    return ds;
}

}  // namespace trajmask
