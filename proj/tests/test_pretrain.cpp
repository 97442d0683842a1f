#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "test_util.hpp"
#include "trajmask/pretrain.hpp"

using namespace trajmask;
using namespace trajmask::nn;
using tmtest::scratch_dir;

namespace {

ModelConfig tiny_config(Dtype dt, int K) {
    ModelConfig cfg;
    cfg.scale = EncoderScale::Small;
    cfg.d_model = 8;
    cfg.d_proj = 4;
    cfg.num_blocks = 1;
    cfg.num_heads = 2;
    cfg.ff_hidden = 12;
    cfg.max_states = K;
    cfg.dtype = dt;
    return cfg;
}

Tensor rows(std::vector<int> shape, std::vector<double> vals) {
    return Tensor::from_data(std::move(shape), std::move(vals), Dtype::F64);
}

}  // namespace

TEST_CASE("loss with uniform similarities is 2 ln(M-1) per masked item") {
    // all projections identical: every pairwise cosine is 1
    Tensor y = rows({3, 2}, {1, 0, 1, 0, 1, 0});
    Tensor z = rows({3, 2}, {1, 0, 1, 0, 1, 0});
    double expected = 2.0 * std::log(2.0);  // M=3: denominators hold M-1=2 equal terms
    CHECK(contrastive_loss(y, z, {1}, LossVariant::AsWritten, 1.0).item() ==
          doctest::Approx(expected).epsilon(1e-9));
    // temperature cancels when all similarities are equal
    CHECK(contrastive_loss(y, z, {1}, LossVariant::AsWritten, 0.25).item() ==
          doctest::Approx(expected).epsilon(1e-9));
    CHECK(contrastive_loss(y, z, {1}, LossVariant::SymmetricY, 1.0).item() ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("loss with perfect prediction and orthogonal negatives") {
    // z_t == y_t exactly and all other targets orthogonal. As printed, the
    // positive pair is excluded from the denominator, so each log term is
    // ln 2 - 1 and the loss can go negative.
    Tensor y = rows({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor z = rows({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    double expected = 2.0 * (std::log(2.0) - 1.0);
    CHECK(contrastive_loss(y, z, {0}, LossVariant::AsWritten, 1.0).item() ==
          doctest::Approx(expected).epsilon(1e-9));
    // with z == y the two variants coincide
    CHECK(contrastive_loss(y, z, {0}, LossVariant::SymmetricY, 1.0).item() ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("loss is invariant to permuting negative positions") {
    Rng rng(3);
    const int M = 7, d = 5;
    std::vector<double> yv(M * d), zv(M * d);
    for (auto& v : yv) v = rng.normal();
    for (auto& v : zv) v = rng.normal();
    Tensor y = rows({M, d}, yv);
    Tensor z = rows({M, d}, zv);
    std::vector<int> masked = {2, 4};
    double base = contrastive_loss(y, z, masked, LossVariant::AsWritten, 0.7).item();

    // swap two non-masked positions (1 and 6) consistently in y and z
    auto swapped = [&](std::vector<double> v) {
        for (int c = 0; c < d; ++c)
            std::swap(v[static_cast<std::size_t>(1 * d + c)], v[static_cast<std::size_t>(6 * d + c)]);
        return v;
    };
    double perm = contrastive_loss(rows({M, d}, swapped(yv)), rows({M, d}, swapped(zv)), masked,
                                   LossVariant::AsWritten, 0.7)
                      .item();
    CHECK(perm == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("loss is invariant to rescaling all projections") {
    Rng rng(5);
    const int M = 9, d = 6;
    std::vector<double> yv(M * d), zv(M * d);
    for (auto& v : yv) v = rng.normal();
    for (auto& v : zv) v = rng.normal();
    std::vector<int> masked = {0, 3, 8};
    double base =
        contrastive_loss(rows({M, d}, yv), rows({M, d}, zv), masked, LossVariant::AsWritten, 1.0)
            .item();
    auto scaled = [&](const std::vector<double>& v, double c) {
        std::vector<double> out = v;
        for (auto& x : out) x *= c;
        return out;
    };
    double big = contrastive_loss(rows({M, d}, scaled(yv, 5.3)), rows({M, d}, scaled(zv, 5.3)),
                                  masked, LossVariant::AsWritten, 1.0)
                     .item();
    CHECK(big == doctest::Approx(base).epsilon(1e-9));
    CHECK(std::isfinite(base));
}

TEST_CASE("loss contract errors") {
    Tensor y = rows({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor z = rows({3, 2}, {1, 0, 0, 1, 1, 1});
    CHECK_THROWS_AS(contrastive_loss(y, z, {}, LossVariant::AsWritten, 1.0), ContractError);
    CHECK_THROWS_AS(contrastive_loss(y, z, {3}, LossVariant::AsWritten, 1.0), ContractError);
    CHECK_THROWS_AS(contrastive_loss(y, z, {0}, LossVariant::AsWritten, 0.0), ContractError);
}

TEST_CASE("full masked-prediction loss gradient vs finite differences") {
    TrajectoryDataset ds = collect_random(GridWorldSpec::layout(0), 80, 17);
    RewardFreeView view = RewardFreeView::from(ds);
    ModelConfig cfg = tiny_config(Dtype::F64, 3);
    ModelParams p = ModelParams::init(cfg, 51);

    Segment seg;
    seg.traj_ref = 0;
    seg.offset = 0;
    seg.num_states = 3;
    MaskPlan plan;
    plan.masked_indices = {0, 1, 2};  // state, action, state
    plan.replacements = {Replacement::FixedToken, Replacement::FixedToken,
                         Replacement::Unchanged};
    Rng rng(7);
    TokenSequence seq = apply_mask(view, seg, plan, rng);

    auto res = tmtest::grad_check(p.tensors(), [&] {
        SequenceForward f = forward_sequence(p, view, seq);
        return contrastive_loss(f, LossVariant::AsWritten, 1.0);
    });
    MESSAGE("full-loss gradcheck: ", res.checked, " grads, max rel err ", res.max_rel_err,
            " at ", res.worst);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("untrained loss sits at chance level for M=99") {
    TrajectoryDataset ds = collect_random(GridWorldSpec::layout(1), 800, 23);
    RewardFreeView view = RewardFreeView::from(ds);
    ModelConfig cfg;
    cfg.scale = EncoderScale::Small;
    cfg.d_model = 16;
    cfg.d_proj = 8;
    cfg.num_blocks = 1;
    cfg.num_heads = 2;
    cfg.ff_hidden = 32;
    cfg.max_states = 50;
    ModelParams p = ModelParams::init(cfg, 61);

    MaskConfig mc;
    Rng rng(9);
    std::vector<TokenSequence> seqs;
    for (std::size_t t = 0; t < view.trajs.size() && seqs.size() < 8; ++t) {
        if (view.trajs[t].length < 50) continue;
        Segment seg;
        seg.traj_ref = static_cast<int>(t);
        seg.offset = 0;
        seg.num_states = 50;
        MaskPlan plan = sample_mask_plan(seg.seq_len(), mc, rng);
        seqs.push_back(apply_mask(view, seg, plan, rng));
    }
    REQUIRE(seqs.size() >= 4);

    NoGrad ng;
    auto fwds = forward_batch(p, view, seqs);
    double mean = 0;
    for (const auto& f : fwds) mean += contrastive_loss(f, LossVariant::AsWritten, 1.0).item();
    mean /= static_cast<double>(fwds.size());
    double chance = 2.0 * std::log(98.0);
    CHECK(mean > 0.9 * chance);
    CHECK(mean < 1.1 * chance);
}

TEST_CASE("pretraining smoke: learns, deterministic, writes artifacts") {
    TrajectoryDataset ds = collect_random(GridWorldSpec::layout(0), 500, 33);
    RewardFreeView view = RewardFreeView::from(ds);

    PretrainConfig cfg;
    cfg.mask.segment_states = 8;
    cfg.model = tiny_config(Dtype::F32, 8);
    cfg.model.d_model = 16;
    cfg.model.d_proj = 8;
    cfg.model.ff_hidden = 32;
    cfg.batch_size = 4;
    cfg.steps = 60;
    cfg.adam.lr = 3e-3;
    cfg.eval_interval = 20;
    cfg.seed = 2;
    std::string dir = scratch_dir("pretrain_smoke");
    cfg.out_dir = dir;

    PretrainResult res = pretrain(view, cfg);
    REQUIRE(res.metrics.size() == 60);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += res.metrics[static_cast<std::size_t>(i)].loss;
        last += res.metrics[static_cast<std::size_t>(50 + i)].loss;
    }
    CHECK(last < first);
    CHECK(res.final_retrieval >= 0.0);
    CHECK(res.final_retrieval <= 1.0);
    CHECK(res.final_chance > 0.0);
    CHECK(std::filesystem::exists(dir + "/ckpt_best.rpmc"));
    CHECK(std::filesystem::exists(dir + "/ckpt_final.rpmc"));
    CHECK(std::filesystem::exists(dir + "/metrics.csv"));

    cfg.out_dir.clear();
    PretrainResult res2 = pretrain(view, cfg);
    CHECK(res2.metrics.back().loss == res.metrics.back().loss);
    CHECK(params_fingerprint(res2.final_params) == params_fingerprint(res.final_params));
}

TEST_CASE("pretrain rejects a dataset with no usable trajectory") {
    TrajectoryDataset empty;
    empty.spec = GridWorldSpec::layout(0);
    RewardFreeView view = RewardFreeView::from(empty);
    PretrainConfig cfg;
    cfg.model = tiny_config(Dtype::F32, cfg.mask.segment_states);
    CHECK_THROWS_AS(pretrain(view, cfg), ConfigError);
}

TEST_CASE("extracted encoder matches the full model and stays frozen") {
    ModelConfig cfg = tiny_config(Dtype::F32, 4);
    ModelParams full = ModelParams::init(cfg, 71);
    FrozenEncoder enc = extract_state_encoder(full);

    GridWorldSpec spec = GridWorldSpec::layout(2);
    auto obs = spec.render_vec(4, 4);
    std::vector<double> v(obs.begin(), obs.end());
    Tensor x = Tensor::from_data({1, 3, 24, 24}, v, Dtype::F32);
    Tensor direct = encode_states(full, x);
    const auto& feat = enc.features(obs.data());
    for (int i = 0; i < cfg.d_model; ++i)
        CHECK(feat[static_cast<std::size_t>(i)] ==
              doctest::Approx(direct.at(static_cast<std::size_t>(i))).epsilon(1e-6));

    // training a head on top of frozen features leaves the encoder untouched
    std::uint64_t before = enc.fingerprint();
    Rng rng(5);
    Tensor w = Tensor::randn({3, cfg.d_model}, rng, 0.5);
    w.set_requires_grad(true);
    {
        Tape tape;
        Tensor f = enc.feature_rows({obs.data()});
        CHECK_FALSE(f.requires_grad());
        Tensor out = matmul_nt(f, w);
        tape.backward(sum(mul(out, out)));
    }
    CHECK(w.has_grad());
    for (const auto& [name, t] : enc.params().entries()) CHECK_FALSE(t.has_grad());
    CHECK(enc.fingerprint() == before);

    // round-trip through a checkpoint keeps outputs identical
    std::string dir = scratch_dir("extract");
    save_checkpoint(full, dir + "/full.rpmc");
    FrozenEncoder enc2 = extract_state_encoder(dir + "/full.rpmc");
    CHECK(enc2.features(obs.data()) == enc.features(obs.data()));
}

TEST_CASE("retrieval accuracy is a valid fraction with sane chance") {
    TrajectoryDataset ds = collect_random(GridWorldSpec::layout(0), 300, 81);
    RewardFreeView view = RewardFreeView::from(ds);
    ModelConfig mcfg = tiny_config(Dtype::F32, 6);
    ModelParams p = ModelParams::init(mcfg, 83);
    MaskConfig mc;
    mc.segment_states = 6;
    std::vector<int> refs;
    for (std::size_t i = 0; i < view.trajs.size(); ++i) refs.push_back(static_cast<int>(i));
    auto seqs = build_eval_sequences(view, refs, mc, 17, 32);
    REQUIRE_FALSE(seqs.empty());
    RetrievalStats st = retrieval_accuracy(p, view, seqs);
    CHECK(st.masked_count > 0);
    CHECK(st.accuracy >= 0.0);
    CHECK(st.accuracy <= 1.0);
    CHECK(st.chance > 0.0);
    CHECK(st.chance < 0.5);
}
