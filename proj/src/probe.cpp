#include "trajmask/probe.hpp"

#include <algorithm>
#include <cmath>

#include "trajmask/optim.hpp"

namespace trajmask {

using nn::Tensor;

void ProbeConfig::validate() const {
    if (horizons.empty()) throw ConfigError("probe: no horizons given");
    for (int k : horizons)
        if (k < 0) throw ConfigError("probe: horizons must be >= 0");
    if (epochs < 1 || head_hidden < 1 || batch_size < 1)
        throw ConfigError("probe: sizes must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("probe: train_fraction must lie in (0,1)");
}

namespace {

struct PairSet {
    std::vector<const float*> obs;
    std::vector<double> targets;  // 3 per pair, normalized to [0,1]
};

void gather_pairs(const TrajectoryDataset& ds, const std::vector<int>& trajs, int k,
                  std::size_t obs_size, PairSet& out) {
    const double mx = ds.spec.width - 1;
    const double my = ds.spec.height - 1;
    const double ms = ds.spec.max_episode_len;
    for (int ti : trajs) {
        const Trajectory& tr = ds.trajectories[static_cast<std::size_t>(ti)];
        for (int t = 0; t + k < tr.length(); ++t) {
            out.obs.push_back(tr.obs_at(t, obs_size));
            const auto& f = tr.factored[static_cast<std::size_t>(t + k)];
            out.targets.push_back(f[0] / mx);
            out.targets.push_back(f[1] / my);
            out.targets.push_back(f[2] / ms);
        }
    }
}

double eval_mse(const ModelParams& head, const Tensor& feats, const Tensor& targets) {
    nn::NoGrad ng;
    Tensor h = nn::relu(nn::linear(feats, head.param("w1"), head.param("b1")));
    Tensor pred = nn::linear(h, head.param("w2"), head.param("b2"));
    Tensor diff = nn::sub(pred, targets);
    return nn::mean(nn::mul(diff, diff)).item();
}

}  // namespace

std::vector<ProbeResult> probe_dynamics(FrozenEncoder& encoder, const TrajectoryDataset& ds,
                                        const ProbeConfig& cfg) {
    cfg.validate();
    if (ds.trajectories.empty()) throw ConfigError("probe: empty dataset");
    const std::size_t obs_size = ds.spec.obs_size();

    // split by trajectory
    std::vector<int> order(ds.trajectories.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng split_rng(derive_seed(cfg.seed, 0x9a0b));
    split_rng.shuffle(order);
    std::size_t ntrain = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(order.size())));
    if (ntrain >= order.size()) ntrain = order.size() - 1;
    std::vector<int> train_trajs(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ntrain));
    std::vector<int> test_trajs(order.begin() + static_cast<std::ptrdiff_t>(ntrain), order.end());
    if (test_trajs.empty()) test_trajs = train_trajs;

    std::vector<ProbeResult> results;
    for (int k : cfg.horizons) {
        PairSet train, test;
        gather_pairs(ds, train_trajs, k, obs_size, train);
        gather_pairs(ds, test_trajs, k, obs_size, test);
        if (train.obs.empty() || test.obs.empty()) continue;  // horizon longer than every trajectory

        Tensor train_x = encoder.feature_rows(train.obs);
        Tensor test_x = encoder.feature_rows(test.obs);
        Tensor train_y = Tensor::from_data({static_cast<int>(train.obs.size()), 3}, train.targets);
        Tensor test_y = Tensor::from_data({static_cast<int>(test.obs.size()), 3}, test.targets);

        const int d = encoder.d_model();
        Rng init_rng(derive_seed(cfg.seed, 0x6ead, static_cast<std::uint64_t>(k)));
        ModelParams head;
        auto add = [&](const char* name, std::vector<int> shape, double std) {
            Tensor t = std == 0.0 ? Tensor::zeros(std::move(shape))
                                  : Tensor::randn(std::move(shape), init_rng, std);
            t.set_requires_grad(true);
            head.add(name, t);
        };
        add("w1", {cfg.head_hidden, d}, std::sqrt(2.0 / d));
        add("b1", {cfg.head_hidden}, 0.0);
        add("w2", {3, cfg.head_hidden}, std::sqrt(1.0 / cfg.head_hidden));
        add("b2", {3}, 0.0);

        nn::AdamConfig ac;
        ac.lr = cfg.lr;
        nn::Adam opt(head.tensors(), ac);

        const int n = static_cast<int>(train.obs.size());
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        Rng batch_rng(derive_seed(cfg.seed, 0xba7c4, static_cast<std::uint64_t>(k)));
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            batch_rng.shuffle(idx);
            for (int start = 0; start < n; start += cfg.batch_size) {
                int len = std::min(cfg.batch_size, n - start);
                std::vector<int> rows(idx.begin() + start, idx.begin() + start + len);
                nn::Tape tape;
                Tensor x = nn::gather_rows(train_x, rows);
                Tensor y = nn::gather_rows(train_y, rows);
                Tensor h = nn::relu(nn::linear(x, head.param("w1"), head.param("b1")));
                Tensor pred = nn::linear(h, head.param("w2"), head.param("b2"));
                Tensor diff = nn::sub(pred, y);
                Tensor loss = nn::mean(nn::mul(diff, diff));
                tape.backward(loss);
                opt.step();
                opt.zero_grad();
            }
        }

        ProbeResult r;
        r.horizon = k;
        r.test_mse = eval_mse(head, test_x, test_y);
        r.train_pairs = static_cast<std::int64_t>(train.obs.size());
        r.test_pairs = static_cast<std::int64_t>(test.obs.size());
        results.push_back(r);
    }
    return results;
}

}  // namespace trajmask
