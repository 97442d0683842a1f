#include "trajmask/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "trajmask/csv.hpp"

namespace trajmask {

using nn::Tensor;

const char* loss_variant_name(LossVariant v) {
    return v == LossVariant::AsWritten ? "as-written" : "symmetric-y";
}

LossVariant loss_variant_from_name(const std::string& name) {
    if (name == "as-written") return LossVariant::AsWritten;
    if (name == "symmetric-y") return LossVariant::SymmetricY;
    throw ConfigError("unknown loss variant '" + name + "' (expected as-written|symmetric-y)");
}

void PretrainConfig::validate() const {
    mask.validate();
    model.validate();
    if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
    if (steps < 1) throw ConfigError("pretrain: steps must be >= 1");
    if (temperature <= 0) throw ConfigError("pretrain: temperature must be > 0");
    if (eval_interval < 1) throw ConfigError("pretrain: eval_interval must be >= 1");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        throw ConfigError("pretrain: holdout_fraction must lie in [0,1)");
    if (model.max_states != mask.segment_states)
        throw ConfigError("pretrain: model positional capacity (K=" +
                          std::to_string(model.max_states) + ") must match mask K=" +
                          std::to_string(mask.segment_states));
}

// ----------------------------- loss -----------------------------

namespace {

// -log( exp(num_i) / sum_{col != excluded_i} exp(S_ij) ) per row, summed.
Tensor excluded_softmax_nll(const Tensor& sims, const std::vector<int>& exclude,
                            const Tensor& numerators) {
    const int rows = sims.dim(0);
    const int cols = sims.dim(1);
    Tensor mx = nn::rows_max_detached(sims, exclude);  // constant shift for stability
    Tensor shifted = nn::sub(sims, nn::reshape(mx, {rows, 1}));
    Tensor e = nn::exp_op(shifted);
    std::vector<double> mask_v(static_cast<std::size_t>(rows) * cols, 1.0);
    for (int r = 0; r < rows; ++r)
        mask_v[static_cast<std::size_t>(r) * cols + exclude[static_cast<std::size_t>(r)]] = 0.0;
    Tensor mask = Tensor::from_data({rows, cols}, mask_v, sims.dtype());
    Tensor denom = nn::sum_rows(nn::mul(e, mask));
    Tensor lse = nn::add(nn::log_op(denom), mx);
    return nn::sum(nn::sub(lse, numerators));
}

}  // namespace

Tensor contrastive_loss(const Tensor& proj_y, const Tensor& proj_z, const std::vector<int>& masked,
                        LossVariant variant, double temperature) {
    if (proj_y.rank() != 2 || proj_z.rank() != 2 || proj_y.shape() != proj_z.shape())
        throw ShapeError("contrastive_loss: projections must share shape [M,d_proj], got " +
                         nn::shape_str(proj_y.shape()) + " vs " + nn::shape_str(proj_z.shape()));
    const int M = proj_y.dim(0);
    if (M < 2) throw ContractError("contrastive_loss: need sequence length >= 2");
    if (masked.empty()) throw ContractError("contrastive_loss: empty masked set");
    for (int t : masked)
        if (t < 0 || t >= M) throw ContractError("contrastive_loss: masked index out of range");
    if (temperature <= 0) throw ContractError("contrastive_loss: temperature must be > 0");

    const double inv_tau = 1.0 / temperature;
    Tensor ny = nn::row_normalize(proj_y);
    Tensor nz = nn::row_normalize(proj_z);
    Tensor nz_masked = nn::gather_rows(nz, masked);
    Tensor ny_masked = nn::gather_rows(ny, masked);

    // term 1: anchors g(z~_t), candidates g(y_tau)
    Tensor s1 = nn::mul_scalar(nn::matmul_nt(nz_masked, ny), inv_tau);
    Tensor num = nn::take_per_row(s1, masked);  // sim(g(z~_t), g(y_t)) / tau
    Tensor l1 = excluded_softmax_nll(s1, masked, num);

    // term 2: anchors g(y_t); candidates g(z_tau) as printed, g(y_tau) in the
    // SymmetricY variant
    const Tensor& cands = variant == LossVariant::AsWritten ? nz : ny;
    Tensor s2 = nn::mul_scalar(nn::matmul_nt(ny_masked, cands), inv_tau);
    Tensor l2 = excluded_softmax_nll(s2, masked, num);

    return nn::mul_scalar(nn::add(l1, l2), 1.0 / static_cast<double>(masked.size()));
}

Tensor contrastive_loss(const SequenceForward& f, LossVariant variant, double temperature) {
    return contrastive_loss(f.proj_y, f.proj_z, f.masked, variant, temperature);
}

// ----------------------------- retrieval -----------------------------

RetrievalStats retrieval_accuracy(const ModelParams& params, const RewardFreeView& view,
                                  const std::vector<TokenSequence>& eval_seqs) {
    RetrievalStats st;
    if (eval_seqs.empty()) return st;
    nn::NoGrad ng;
    auto fwds = forward_batch(params, view, eval_seqs);
    std::int64_t hits = 0;
    double chance_sum = 0;
    for (const auto& f : fwds) {
        const int M = f.proj_y.dim(0);
        Tensor ny = nn::row_normalize(f.proj_y);
        Tensor nz = nn::row_normalize(f.proj_z);
        Tensor sims = nn::matmul_nt(nn::gather_rows(nz, f.masked), ny);  // [Tm, M]
        for (std::size_t r = 0; r < f.masked.size(); ++r) {
            int best = 0;
            double best_v = sims.at(r * static_cast<std::size_t>(M));
            for (int c = 1; c < M; ++c) {
                double v = sims.at(r * static_cast<std::size_t>(M) + static_cast<std::size_t>(c));
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            if (best == f.masked[r]) ++hits;
            chance_sum += 1.0 / static_cast<double>(M - 1);
            ++st.masked_count;
        }
    }
    if (st.masked_count > 0) {
        st.accuracy = static_cast<double>(hits) / static_cast<double>(st.masked_count);
        st.chance = chance_sum / static_cast<double>(st.masked_count);
    }
    return st;
}

// ----------------------------- training loop -----------------------------

std::vector<TokenSequence> build_eval_sequences(const RewardFreeView& view,
                                                const std::vector<int>& traj_refs,
                                                const MaskConfig& mask, std::uint64_t seed,
                                                int max_segments) {
    std::vector<TokenSequence> out;
    Rng cut_rng(derive_seed(seed, 0xe7a1, 0));
    std::uint64_t counter = 0;
    for (int traj : traj_refs) {
        for (const Segment& seg : cut_segments(view, traj, mask.segment_states, cut_rng)) {
            if (static_cast<int>(out.size()) >= max_segments) return out;
            Rng seg_rng(derive_seed(seed, 0xe7a2, counter++));
            MaskPlan plan = sample_mask_plan(seg.seq_len(), mask, seg_rng);
            out.push_back(apply_mask(view, seg, plan, seg_rng));
        }
    }
    return out;
}

PretrainResult pretrain(const RewardFreeView& data, const PretrainConfig& cfg_in) {
    PretrainConfig cfg = cfg_in;
    cfg.model.num_actions = data.num_actions;
    cfg.validate();

    std::vector<int> usable;
    for (std::size_t i = 0; i < data.trajs.size(); ++i)
        if (data.trajs[i].length >= 2) usable.push_back(static_cast<int>(i));
    if (usable.empty())
        throw ConfigError("pretrain: dataset too small to form one segment");

    // held-out split by trajectory
    Rng split_rng(derive_seed(cfg.seed, 0x5b117));
    split_rng.shuffle(usable);
    std::size_t eval_count =
        usable.size() >= 2
            ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                           cfg.holdout_fraction * static_cast<double>(usable.size()))))
            : 0;
    if (eval_count >= usable.size()) eval_count = usable.size() - 1;
    std::vector<int> eval_trajs(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(eval_count));
    std::vector<int> train_trajs(usable.begin() + static_cast<std::ptrdiff_t>(eval_count), usable.end());
    if (train_trajs.empty()) train_trajs = usable;
    if (eval_trajs.empty()) eval_trajs = usable;
    std::sort(eval_trajs.begin(), eval_trajs.end());
    std::sort(train_trajs.begin(), train_trajs.end());

    std::vector<TokenSequence> eval_seqs =
        build_eval_sequences(data, eval_trajs, cfg.mask, cfg.seed, cfg.eval_max_segments);

    ModelParams params = ModelParams::init(cfg.model, derive_seed(cfg.seed, 0x30de1));
    params.layouts = data.layout_ids;
    nn::Adam opt(params.tensors(), cfg.adam);

    PretrainResult res;
    res.best_retrieval = -1.0;

    // segment pool, re-cut with fresh offsets every epoch
    std::vector<Segment> pool;
    std::size_t pool_pos = 0;
    int epoch = 0;
    auto refill = [&]() {
        pool.clear();
        pool_pos = 0;
        Rng cut_rng(derive_seed(cfg.seed, 0xc07, static_cast<std::uint64_t>(epoch)));
        for (int traj : train_trajs) {
            auto segs = cut_segments(data, traj, cfg.mask.segment_states, cut_rng);
            pool.insert(pool.end(), segs.begin(), segs.end());
        }
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5471e, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(pool);
        ++epoch;
    };
    refill();
    if (pool.empty()) throw ConfigError("pretrain: dataset too small to form one segment");

    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t seg_counter = 0;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<TokenSequence> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (pool_pos >= pool.size()) refill();
            const Segment& seg = pool[pool_pos++];
            Rng seg_rng(derive_seed(cfg.seed, 0x3a5c, seg_counter++));
            MaskPlan plan = sample_mask_plan(seg.seq_len(), cfg.mask, seg_rng);
            batch.push_back(apply_mask(data, seg, plan, seg_rng));
        }

        double loss_value = 0;
        {
            nn::Tape tape;
            auto fwds = forward_batch(params, data, batch);
            Tensor total = contrastive_loss(fwds[0], cfg.variant, cfg.temperature);
            for (std::size_t i = 1; i < fwds.size(); ++i)
                total = nn::add(total, contrastive_loss(fwds[i], cfg.variant, cfg.temperature));
            Tensor loss = nn::mul_scalar(total, 1.0 / static_cast<double>(fwds.size()));
            loss_value = loss.item();
            tape.backward(loss);
        }
        opt.step();
        opt.zero_grad();

        PretrainMetricsRow row;
        row.step = step;
        row.loss = loss_value;
        row.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (step % cfg.eval_interval == 0 || step == cfg.steps) {
            RetrievalStats st = retrieval_accuracy(params, data, eval_seqs);
            row.has_acc = true;
            row.retrieval_acc = st.accuracy;
            if (st.accuracy > res.best_retrieval) {
                res.best_retrieval = st.accuracy;
                res.best_step = step;
                res.best_params = params.clone();
            }
            if (step == cfg.steps) {
                res.final_retrieval = st.accuracy;
                res.final_chance = st.chance;
            }
        }
        res.metrics.push_back(row);
    }
    res.final_params = params.clone();
    if (res.best_retrieval < 0) {
        res.best_params = res.final_params.clone();
        res.best_step = cfg.steps;
    }

    if (!cfg.out_dir.empty()) {
        save_checkpoint(res.best_params, cfg.out_dir + "/ckpt_best.rpmc");
        save_checkpoint(res.final_params, cfg.out_dir + "/ckpt_final.rpmc");
        CsvWriter csv(cfg.out_dir + "/metrics.csv", {"step", "loss", "retrieval_acc", "wall_ms"});
        for (const auto& r : res.metrics)
            csv.row({std::to_string(r.step), format_double(r.loss),
                     r.has_acc ? format_double(r.retrieval_acc) : "",
                     format_double(r.wall_ms)});
        csv.close();
    }
    return res;
}

FrozenEncoder extract_state_encoder(const ModelParams& checkpoint) {
    return FrozenEncoder(checkpoint);
}

FrozenEncoder extract_state_encoder(const std::string& checkpoint_path) {
    return FrozenEncoder(load_checkpoint(checkpoint_path));
}

}  // namespace trajmask
