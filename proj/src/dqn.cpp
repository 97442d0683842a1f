#include "trajmask/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "trajmask/optim.hpp"

namespace trajmask {

using nn::Tensor;

const char* encoder_mode_name(EncoderMode m) {
    switch (m) {
        case EncoderMode::Frozen: return "frozen";
        case EncoderMode::FineTune: return "finetune";
        case EncoderMode::Scratch: return "scratch";
    }
    return "?";
}

EncoderMode encoder_mode_from_name(const std::string& name) {
    if (name == "frozen") return EncoderMode::Frozen;
    if (name == "finetune") return EncoderMode::FineTune;
    if (name == "scratch") return EncoderMode::Scratch;
    throw ConfigError("unknown encoder mode '" + name + "' (expected frozen|finetune|scratch)");
}

void DqnConfig::validate() const {
    if (budget < 1) throw ConfigError("dqn: budget must be >= 1");
    if (replay_capacity < batch_size) throw ConfigError("dqn: replay smaller than batch");
    if (batch_size < 1 || update_period < 1 || target_sync < 1 || head_hidden < 1)
        throw ConfigError("dqn: sizes must be positive");
    if (!(discount >= 0 && discount < 1)) throw ConfigError("dqn: discount must lie in [0,1)");
    if (eps_start < eps_end || eps_end < 0 || eps_start > 1)
        throw ConfigError("dqn: bad epsilon schedule");
}

double NormalizedScore::value() const {
    double denom = reference_return - random_return;
    if (std::abs(denom) < 1e-12)
        throw ContractError("normalized score: reference equals random baseline");
    return (agent_return - random_return) / denom;
}

double random_policy_return(const GridWorldSpec& spec, int episodes, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x4a2d0));
    GridWorld env(spec);
    double total = 0;
    for (int e = 0; e < episodes; ++e) {
        env.reset(rng);
        double ret = 0;
        while (!env.done()) {
            int a = static_cast<int>(rng.uniform_int(0, GridWorldSpec::kNumActions - 1));
            ret += env.step(a).reward;
        }
        total += ret;
    }
    return total / episodes;
}

// ----------------------------- agent internals -----------------------------

namespace {

struct Replay {
    std::size_t obs_size;
    int capacity;
    std::vector<float> obs, next_obs;
    std::vector<std::uint8_t> actions, dones;
    std::vector<float> rewards;
    int size = 0, pos = 0;

    Replay(std::size_t osz, int cap) : obs_size(osz), capacity(cap) {
        obs.resize(static_cast<std::size_t>(cap) * osz);
        next_obs.resize(static_cast<std::size_t>(cap) * osz);
        actions.resize(static_cast<std::size_t>(cap));
        dones.resize(static_cast<std::size_t>(cap));
        rewards.resize(static_cast<std::size_t>(cap));
    }
    void push(const float* s, int a, float r, const float* s2, bool done) {
        std::memcpy(obs.data() + static_cast<std::size_t>(pos) * obs_size, s,
                    obs_size * sizeof(float));
        std::memcpy(next_obs.data() + static_cast<std::size_t>(pos) * obs_size, s2,
                    obs_size * sizeof(float));
        actions[static_cast<std::size_t>(pos)] = static_cast<std::uint8_t>(a);
        rewards[static_cast<std::size_t>(pos)] = r;
        dones[static_cast<std::size_t>(pos)] = done ? 1 : 0;
        pos = (pos + 1) % capacity;
        size = std::min(size + 1, capacity);
    }
    const float* obs_at(int i) const { return obs.data() + static_cast<std::size_t>(i) * obs_size; }
    const float* next_at(int i) const {
        return next_obs.data() + static_cast<std::size_t>(i) * obs_size;
    }
};

ModelConfig encoder_config(const GridWorldSpec& spec, EncoderScale scale) {
    ModelConfig cfg;
    cfg.scale = scale;
    cfg.obs_channels = GridWorldSpec::kObsChannels;
    cfg.obs_height = spec.obs_height();
    cfg.obs_width = spec.obs_width();
    cfg.num_actions = GridWorldSpec::kNumActions;
    return cfg;
}

}  // namespace

struct DqnAgent::Impl {
    ModelParams net;          // f_s.* (unless frozen) + head.*
    ModelParams target;       // same structure, requires_grad off
    std::unique_ptr<FrozenEncoder> frozen;  // Frozen mode only
    std::unique_ptr<nn::Adam> opt;
    Replay replay;
    GridWorld env;
    Rng act_rng, sample_rng;
    std::vector<float> cur_obs, next_obs;
    double episode_return = 0;
    std::vector<float> episode_returns;
    bool episode_open = false;

    Impl(const GridWorldSpec& spec, int replay_cap, std::uint64_t seed)
        : replay(spec.obs_size(), replay_cap),
          env(spec),
          act_rng(derive_seed(seed, 0xac7)),
          sample_rng(derive_seed(seed, 0x5a3)),
          cur_obs(spec.obs_size()),
          next_obs(spec.obs_size()) {}
};

DqnAgent::DqnAgent(GridWorldSpec spec, DqnConfig cfg, const ModelParams* pretrained_encoder)
    : env_spec_(std::move(spec)), cfg_(cfg) {
    cfg_.validate();
    if (cfg_.eps_decay_steps <= 0) cfg_.eps_decay_steps = std::max(1, cfg_.budget / 2);
    if ((cfg_.mode == EncoderMode::Frozen || cfg_.mode == EncoderMode::FineTune) &&
        pretrained_encoder == nullptr)
        throw ConfigError("dqn: frozen/finetune mode needs a pretrained checkpoint");

    impl_ = std::make_unique<Impl>(env_spec_, cfg_.replay_capacity, cfg_.seed);
    Rng init_rng(derive_seed(cfg_.seed, 0x1417));

    ModelParams net;
    if (cfg_.mode == EncoderMode::Frozen) {
        impl_->frozen = std::make_unique<FrozenEncoder>(*pretrained_encoder);
        ModelConfig cfg_only = impl_->frozen->params().config();
        net.set_config(cfg_only);
    } else if (cfg_.mode == EncoderMode::FineTune) {
        ModelParams enc = *pretrained_encoder;
        net.set_config(enc.config());
        for (const auto& [name, t] : enc.entries()) {
            if (name.rfind("f_s.", 0) != 0) continue;
            Tensor c = t.detached_copy();
            c.set_requires_grad(true);
            net.add(name, c);
        }
    } else {
        ModelConfig enc_cfg = encoder_config(env_spec_, cfg_.scale);
        enc_cfg.validate();
        ModelParams fresh = ModelParams::init(enc_cfg, derive_seed(cfg_.seed, 0xf5e5));
        net.set_config(enc_cfg);
        for (const auto& [name, t] : fresh.entries()) {
            if (name.rfind("f_s.", 0) != 0) continue;
            net.add(name, t);
        }
    }
    auto add_head = [&](const std::string& name, std::vector<int> shape, double fan_in) {
        Tensor t = Tensor::randn(std::move(shape), init_rng, 1.0 / std::sqrt(fan_in));
        t.set_requires_grad(true);
        net.add(name, t);
    };
    const int dm = cfg_.mode == EncoderMode::Frozen ? impl_->frozen->d_model()
                                                    : net.config().d_model;
    add_head("head.w1", {cfg_.head_hidden, dm}, dm / 2.0);  // He: std sqrt(2/fan_in)
    Tensor b1 = Tensor::zeros({cfg_.head_hidden});
    b1.set_requires_grad(true);
    net.add("head.b1", b1);
    add_head("head.w2", {GridWorldSpec::kNumActions, cfg_.head_hidden}, cfg_.head_hidden);
    Tensor b2 = Tensor::zeros({GridWorldSpec::kNumActions});
    b2.set_requires_grad(true);
    net.add("head.b2", b2);

    impl_->net = std::move(net);
    impl_->target = impl_->net.clone();
    impl_->target.set_requires_grad(false);

    std::vector<Tensor> trainable;
    for (const auto& [name, t] : impl_->net.entries())
        if (t.requires_grad()) trainable.push_back(t);
    nn::AdamConfig ac;
    ac.lr = cfg_.lr;
    impl_->opt = std::make_unique<nn::Adam>(trainable, ac);
}

DqnAgent::~DqnAgent() = default;

std::uint64_t DqnAgent::encoder_fingerprint() const {
    if (cfg_.mode == EncoderMode::Frozen) return impl_->frozen->fingerprint();
    ModelParams enc;
    enc.set_config(impl_->net.config());
    for (const auto& [name, t] : impl_->net.entries())
        if (name.rfind("f_s.", 0) == 0) enc.add(name, t);
    return params_fingerprint(enc);
}

namespace {

// head(x) = w2 relu(w1 x + b1) + b2 on raw floats; used for action selection
void head_forward_raw(const ModelParams& p, const std::vector<float>& feat,
                      std::vector<double>& q) {
    Tensor w1 = p.param("head.w1"), b1 = p.param("head.b1");
    Tensor w2 = p.param("head.w2"), b2 = p.param("head.b2");
    const int hidden = w1.dim(0), d = w1.dim(1), na = w2.dim(0);
    const float* w1v = w1.data_f32();
    const float* b1v = b1.data_f32();
    const float* w2v = w2.data_f32();
    const float* b2v = b2.data_f32();
    std::vector<float> h(static_cast<std::size_t>(hidden));
    for (int i = 0; i < hidden; ++i) {
        float acc = b1v[i];
        const float* row = w1v + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) acc += row[j] * feat[static_cast<std::size_t>(j)];
        h[static_cast<std::size_t>(i)] = acc > 0 ? acc : 0;
    }
    q.assign(static_cast<std::size_t>(na), 0.0);
    for (int a = 0; a < na; ++a) {
        float acc = b2v[a];
        const float* row = w2v + static_cast<std::size_t>(a) * hidden;
        for (int j = 0; j < hidden; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
        q[static_cast<std::size_t>(a)] = acc;
    }
}

Tensor obs_tensor(const float* data, int n, const GridWorldSpec& spec) {
    Tensor t = Tensor::zeros({n, GridWorldSpec::kObsChannels, spec.obs_height(), spec.obs_width()});
    float* dst = t.mutable_f32();
    std::memcpy(dst, data, static_cast<std::size_t>(n) * spec.obs_size() * sizeof(float));
    return t;
}

Tensor head_forward(const ModelParams& p, const Tensor& feats) {
    Tensor h = nn::relu(nn::linear(feats, p.param("head.w1"), p.param("head.b1")));
    return nn::linear(h, p.param("head.w2"), p.param("head.b2"));
}

}  // namespace

std::vector<double> DqnAgent::q_values(const float* obs) {
    nn::NoGrad ng;
    std::vector<double> q;
    if (cfg_.mode == EncoderMode::Frozen) {
        const auto& feat = impl_->frozen->features(obs);
        head_forward_raw(impl_->net, feat, q);
        return q;
    }
    Tensor x = obs_tensor(obs, 1, env_spec_);
    Tensor feat = encode_states(impl_->net, x);
    std::vector<float> fv(static_cast<std::size_t>(feat.dim(1)));
    for (std::size_t i = 0; i < fv.size(); ++i) fv[i] = static_cast<float>(feat.at(i));
    head_forward_raw(impl_->net, fv, q);
    return q;
}

int DqnAgent::greedy_action(const float* obs) {
    std::vector<double> q = q_values(obs);
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

void DqnAgent::sync_target() { impl_->target.copy_from(impl_->net); }

void DqnAgent::maybe_update() {
    if (global_step_ < cfg_.warmup || impl_->replay.size < cfg_.batch_size) return;
    if (global_step_ % cfg_.update_period != 0) return;

    Replay& rp = impl_->replay;
    const int B = cfg_.batch_size;
    std::vector<int> idx(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i)
        idx[static_cast<std::size_t>(i)] =
            static_cast<int>(impl_->sample_rng.uniform_int(0, rp.size - 1));

    // targets via double-DQN: online argmax, target evaluation
    std::vector<double> y(static_cast<std::size_t>(B));
    std::vector<int> act(static_cast<std::size_t>(B));
    {
        nn::NoGrad ng;
        Tensor next_q_online, next_q_target;
        if (cfg_.mode == EncoderMode::Frozen) {
            std::vector<const float*> rows(static_cast<std::size_t>(B));
            for (int i = 0; i < B; ++i) rows[static_cast<std::size_t>(i)] = rp.next_at(idx[static_cast<std::size_t>(i)]);
            Tensor feats = impl_->frozen->feature_rows(rows);
            next_q_online = head_forward(impl_->net, feats);
            next_q_target = head_forward(impl_->target, feats);
        } else {
            std::vector<float> buf(static_cast<std::size_t>(B) * rp.obs_size);
            for (int i = 0; i < B; ++i)
                std::memcpy(buf.data() + static_cast<std::size_t>(i) * rp.obs_size,
                            rp.next_at(idx[static_cast<std::size_t>(i)]), rp.obs_size * sizeof(float));
            Tensor x = obs_tensor(buf.data(), B, env_spec_);
            next_q_online = head_forward(impl_->net, encode_states(impl_->net, x));
            next_q_target = head_forward(impl_->target, encode_states(impl_->target, x));
        }
        const int na = GridWorldSpec::kNumActions;
        for (int i = 0; i < B; ++i) {
            int k = idx[static_cast<std::size_t>(i)];
            act[static_cast<std::size_t>(i)] = rp.actions[static_cast<std::size_t>(k)];
            int best = 0;
            double best_v = next_q_online.at(static_cast<std::size_t>(i) * na);
            for (int a = 1; a < na; ++a) {
                double v = next_q_online.at(static_cast<std::size_t>(i) * na + static_cast<std::size_t>(a));
                if (v > best_v) {
                    best_v = v;
                    best = a;
                }
            }
            double qt = next_q_target.at(static_cast<std::size_t>(i) * na + static_cast<std::size_t>(best));
            double done = rp.dones[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
            y[static_cast<std::size_t>(i)] =
                rp.rewards[static_cast<std::size_t>(k)] + cfg_.discount * (1.0 - done) * qt;
        }
    }

    nn::Tape tape;
    Tensor q;
    if (cfg_.mode == EncoderMode::Frozen) {
        std::vector<const float*> rows(static_cast<std::size_t>(B));
        for (int i = 0; i < B; ++i) rows[static_cast<std::size_t>(i)] = rp.obs_at(idx[static_cast<std::size_t>(i)]);
        q = head_forward(impl_->net, impl_->frozen->feature_rows(rows));
    } else {
        std::vector<float> buf(static_cast<std::size_t>(B) * rp.obs_size);
        for (int i = 0; i < B; ++i)
            std::memcpy(buf.data() + static_cast<std::size_t>(i) * rp.obs_size,
                        rp.obs_at(idx[static_cast<std::size_t>(i)]), rp.obs_size * sizeof(float));
        Tensor x = obs_tensor(buf.data(), B, env_spec_);
        q = head_forward(impl_->net, encode_states(impl_->net, x));
    }
    Tensor qa = nn::take_per_row(q, act);
    Tensor target = Tensor::from_data({B}, y);
    Tensor diff = nn::sub(qa, target);
    Tensor loss = nn::mul_scalar(nn::sum(nn::mul(diff, diff)), 1.0 / B);
    tape.backward(loss);
    impl_->opt->step();
    impl_->opt->zero_grad();
}

void DqnAgent::run_steps(int steps, EnvRecorder* recorder) {
    Impl& im = *impl_;
    for (int s = 0; s < steps; ++s) {
        if (!im.episode_open) {
            im.env.reset(im.act_rng);
            im.env.render(im.cur_obs.data());
            im.episode_return = 0;
            im.episode_open = true;
            if (recorder != nullptr) recorder->episode_start(im.env);
        }
        double t = std::min(1.0, static_cast<double>(global_step_) / cfg_.eps_decay_steps);
        double eps = cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * t;
        int action = im.act_rng.bernoulli(eps)
                         ? static_cast<int>(im.act_rng.uniform_int(0, GridWorldSpec::kNumActions - 1))
                         : greedy_action(im.cur_obs.data());
        StepResult res = im.env.step(action);
        im.env.render(im.next_obs.data());
        im.replay.push(im.cur_obs.data(), action, res.reward, im.next_obs.data(), res.done);
        if (recorder != nullptr) recorder->transition(im.env, action, res.reward, res.done);
        im.episode_return += res.reward;
        std::swap(im.cur_obs, im.next_obs);
        ++global_step_;
        if (res.done) {
            im.episode_returns.push_back(static_cast<float>(im.episode_return));
            im.episode_open = false;
        }
        maybe_update();
        if (global_step_ % cfg_.target_sync == 0) sync_target();
    }
}

double DqnAgent::evaluate(int episodes, std::uint64_t eval_seed) {
    Rng rng(derive_seed(eval_seed, 0xe0a1));
    GridWorld env(env_spec_);
    std::vector<float> obs(env_spec_.obs_size());
    double total = 0;
    for (int e = 0; e < episodes; ++e) {
        env.reset(rng);
        double ret = 0;
        while (!env.done()) {
            env.render(obs.data());
            ret += env.step(greedy_action(obs.data())).reward;
        }
        total += ret;
    }
    return total / episodes;
}

DqnResult DqnAgent::run(EnvRecorder* recorder) {
    DqnResult res;
    res.encoder_fingerprint_before = encoder_fingerprint();
    const std::uint64_t eval_seed = derive_seed(cfg_.seed, 0xeba1);
    if (cfg_.eval_interval > 0)
        res.curve.push_back({0, evaluate(cfg_.eval_episodes_curve, eval_seed)});
    while (global_step_ < cfg_.budget) {
        int chunk = cfg_.eval_interval > 0
                        ? std::min(cfg_.eval_interval, cfg_.budget - global_step_)
                        : cfg_.budget - global_step_;
        run_steps(chunk, recorder);
        if (cfg_.eval_interval > 0)
            res.curve.push_back({global_step_, evaluate(cfg_.eval_episodes_curve, eval_seed)});
    }
    res.final_return = evaluate(cfg_.eval_episodes_final, derive_seed(cfg_.seed, 0xf19a1));
    res.train_episode_returns = impl_->episode_returns;
    res.encoder_fingerprint_after = encoder_fingerprint();
    return res;
}

}  // namespace trajmask
