#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "trajmask/model.hpp"

namespace trajmask {

enum class EncoderMode : std::uint8_t { Frozen = 0, FineTune = 1, Scratch = 2 };
const char* encoder_mode_name(EncoderMode m);
EncoderMode encoder_mode_from_name(const std::string& name);

struct DqnConfig {
    int budget = 20000;          // environment interaction steps
    int replay_capacity = 10000;
    int batch_size = 32;
    int update_period = 1;       // env steps per gradient update
    int warmup = 500;            // steps before updates begin
    double lr = 1e-3;
    double discount = 0.99;
    double eps_start = 1.0;
    double eps_end = 0.05;
    int eps_decay_steps = 0;     // 0: defaults to budget/2
    int target_sync = 500;
    int head_hidden = 128;
    EncoderMode mode = EncoderMode::Scratch;
    EncoderScale scale = EncoderScale::Medium;  // scratch/finetune encoder size
    int eval_episodes_final = 20;
    int eval_episodes_curve = 5;
    int eval_interval = 1000;    // 0 disables the learning curve
    std::uint64_t seed = 0;

    void validate() const;
};

struct EvalPoint {
    int step = 0;
    double mean_return = 0;
};

struct DqnResult {
    std::vector<EvalPoint> curve;
    double final_return = 0;
    std::vector<float> train_episode_returns;
    std::uint64_t encoder_fingerprint_before = 0;
    std::uint64_t encoder_fingerprint_after = 0;
};

// Receives every environment event of a training run (dataset collection).
struct EnvRecorder {
    virtual ~EnvRecorder() = default;
    virtual void episode_start(const GridWorld& env) = 0;
    virtual void transition(const GridWorld& env, int action, float reward, bool done) = 0;
};

// Double-DQN over Q(s,.) = head(encoder(s)). Frozen mode keeps the encoder
// fixed and trains the head on cached features; FineTune starts from the
// checkpoint and lets gradients through; Scratch trains a fresh encoder.
class DqnAgent {
public:
    DqnAgent(GridWorldSpec spec, DqnConfig cfg, const ModelParams* pretrained_encoder);
    ~DqnAgent();
    DqnAgent(const DqnAgent&) = delete;
    DqnAgent& operator=(const DqnAgent&) = delete;

    DqnResult run(EnvRecorder* recorder = nullptr);   // the full remaining budget
    void run_steps(int steps, EnvRecorder* recorder = nullptr);
    int steps_done() const { return global_step_; }

    double evaluate(int episodes, std::uint64_t eval_seed);  // greedy, isolated env
    std::vector<double> q_values(const float* obs);          // online net, no grad
    int greedy_action(const float* obs);

    std::uint64_t encoder_fingerprint() const;
    const GridWorldSpec& spec() const { return env_spec_; }
    const DqnConfig& config() const { return cfg_; }

private:
    struct Impl;
    void maybe_update();
    void sync_target();

    GridWorldSpec env_spec_;
    DqnConfig cfg_;
    int global_step_ = 0;
    std::unique_ptr<Impl> impl_;
};

struct NormalizedScore {
    double agent_return = 0;
    double random_return = 0;
    double reference_return = 0;
    double value() const;
};

double random_policy_return(const GridWorldSpec& spec, int episodes, std::uint64_t seed);

}  // namespace trajmask
