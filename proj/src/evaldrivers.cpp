#include "trajmask/evaldrivers.hpp"

#include <algorithm>
#include <filesystem>
#include <future>
#include <thread>

#include "trajmask/csv.hpp"

namespace trajmask {

namespace fs = std::filesystem;

// ----------------------------- baselines -----------------------------

BaselineScores compute_baselines(const GridWorldSpec& spec, int budget, int reference_mult,
                                 std::uint64_t seed, const std::string& cache_dir) {
    std::string cache_path;
    if (!cache_dir.empty()) {
        fs::create_directories(cache_dir);
        cache_path = cache_dir + "/baselines_l" + std::to_string(spec.layout_id) + "_b" +
                     std::to_string(budget) + "x" + std::to_string(reference_mult) + "_s" +
                     std::to_string(seed) + ".csv";
        if (fs::exists(cache_path)) {
            CsvTable t = read_csv(cache_path);
            require_columns(t, {"random_return", "reference_return"}, cache_path);
            BaselineScores b;
            b.random_return = t.num(0, t.col("random_return"));
            b.reference_return = t.num(0, t.col("reference_return"));
            return b;
        }
    }
    BaselineScores b;
    b.random_return = random_policy_return(spec, 200, derive_seed(seed, 0xbead));

    DqnConfig rc;
    rc.mode = EncoderMode::Scratch;
    rc.scale = EncoderScale::Small;
    rc.budget = budget * reference_mult;
    rc.update_period = 4;
    rc.eval_interval = 0;
    rc.seed = derive_seed(seed, 0x4ef);
    DqnAgent ref(spec, rc, nullptr);
    DqnResult rr = ref.run();
    b.reference_return = rr.final_return;

    if (!cache_path.empty()) {
        CsvWriter w(cache_path, {"random_return", "reference_return"});
        w.row({format_double(b.random_return), format_double(b.reference_return)});
        w.close();
    }
    return b;
}

// ----------------------------- RL arm -----------------------------

RlArmResult run_rl_arm(const GridWorldSpec& spec, EncoderMode mode, const ModelParams* checkpoint,
                       DqnConfig cfg, std::uint64_t seed, const BaselineScores& base) {
    cfg.mode = mode;
    cfg.seed = seed;
    DqnAgent agent(spec, cfg, checkpoint);
    RlArmResult out;
    out.mode = mode;
    out.seed = seed;
    out.dqn = agent.run();
    NormalizedScore ns;
    ns.agent_return = out.dqn.final_return;
    ns.random_return = base.random_return;
    ns.reference_return = base.reference_return;
    out.normalized = ns.value();
    return out;
}

// ----------------------------- artifact cache -----------------------------

std::string ArtifactCache::dataset_path(Tier tier, int layout, std::int64_t size) const {
    return dir + "/" + tier_name(tier) + "_l" + std::to_string(layout) + "_n" +
           std::to_string(size) + "_s" + std::to_string(data_seed) + ".rpmd";
}

TrajectoryDataset ArtifactCache::dataset(Tier tier, int layout, std::int64_t size) const {
    fs::create_directories(dir);
    std::string path = dataset_path(tier, layout, size);
    if (fs::exists(path)) return load_dataset(path);
    GridWorldSpec spec = GridWorldSpec::layout(layout);
    std::uint64_t seed = derive_seed(data_seed, static_cast<std::uint64_t>(tier),
                                     static_cast<std::uint64_t>(layout),
                                     static_cast<std::uint64_t>(size));
    TrajectoryDataset ds;
    switch (tier) {
        case Tier::Random: ds = collect_random(spec, size, seed); break;
        case Tier::Weak: ds = collect_weak(spec, size, seed); break;
        case Tier::Mixed: ds = collect_mixed(spec, size, mixed_checkpoints, seed); break;
    }
    save_dataset(ds, path);
    return ds;
}

std::string ArtifactCache::checkpoint_path(const std::string& tag) const {
    return dir + "/ckpt_" + tag + ".rpmc";
}

ModelParams ArtifactCache::pretrained(const std::string& tag,
                                      const std::vector<std::string>& dataset_paths,
                                      PretrainConfig cfg) const {
    fs::create_directories(dir);
    std::string path = checkpoint_path(tag);
    if (fs::exists(path)) return load_checkpoint(path);
    std::vector<TrajectoryDataset> datasets;
    datasets.reserve(dataset_paths.size());
    for (const auto& p : dataset_paths) datasets.push_back(load_dataset(p));
    std::vector<const TrajectoryDataset*> ptrs;
    for (const auto& d : datasets) ptrs.push_back(&d);
    RewardFreeView view = RewardFreeView::from(ptrs);
    cfg.seed = pretrain_seed;
    cfg.out_dir.clear();
    PretrainResult res = pretrain(view, cfg);
    save_checkpoint(res.final_params, path);
    return res.final_params;
}

// ----------------------------- scaling -----------------------------

std::vector<ScalingRow> scaling_sweep(const ScalingConfig& cfg) {
    if (cfg.cells.empty()) throw ConfigError("scaling: no cells requested");
    ArtifactCache cache{cfg.work_dir};
    GridWorldSpec spec = GridWorldSpec::layout(cfg.layout);
    BaselineScores base =
        compute_baselines(spec, cfg.dqn.budget, 10, cache.data_seed, cfg.work_dir);

    auto run_cell = [&](const ScalingCell& cell) -> std::vector<ScalingRow> {
        TrajectoryDataset ds = cache.dataset(cell.tier, cfg.layout, cell.size);
        PretrainConfig pc = cfg.pretrain;
        pc.model.scale = cell.scale;
        std::string tag = std::string(tier_name(cell.tier)) + "_l" + std::to_string(cfg.layout) +
                          "_n" + std::to_string(cell.size) + "_" + scale_name(cell.scale) + "_k" +
                          std::to_string(pc.mask.segment_states) + "_t" +
                          std::to_string(pc.steps);
        ModelParams ckpt =
            cache.pretrained(tag, {cache.dataset_path(cell.tier, cfg.layout, cell.size)}, pc);
        std::vector<ScalingRow> rows;
        for (std::uint64_t seed : cfg.seeds) {
            RlArmResult arm = run_rl_arm(spec, EncoderMode::Frozen, &ckpt, cfg.dqn, seed, base);
            rows.push_back({cell, seed, arm.normalized});
        }
        return rows;
    };

    std::vector<ScalingRow> all;
    int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        for (const auto& cell : cfg.cells) {
            auto rows = run_cell(cell);
            all.insert(all.end(), rows.begin(), rows.end());
        }
    } else {
        // bounded fan-out; each cell is fully isolated
        std::vector<std::future<std::vector<ScalingRow>>> futs;
        std::size_t next = 0;
        std::vector<std::vector<ScalingRow>> results(cfg.cells.size());
        while (next < cfg.cells.size() || !futs.empty()) {
            while (static_cast<int>(futs.size()) < jobs && next < cfg.cells.size()) {
                const ScalingCell& cell = cfg.cells[next];
                std::size_t slot = next++;
                futs.push_back(std::async(std::launch::async, [&, cell, slot]() {
                    auto rows = run_cell(cell);
                    results[slot] = rows;
                    return rows;
                }));
            }
            futs.front().wait();
            futs.erase(futs.begin());
        }
        for (const auto& rows : results) all.insert(all.end(), rows.begin(), rows.end());
    }
    return all;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, const std::string& path) {
    CsvWriter w(path, {"tier", "size", "scale", "seed", "score"});
    for (const auto& r : rows)
        w.row({tier_name(r.cell.tier), std::to_string(r.cell.size), scale_name(r.cell.scale),
               std::to_string(r.seed), format_double(r.score)});
    w.close();
}

// ----------------------------- transfer -----------------------------

void check_transfer_guard(const ModelParams& ckpt, int eval_layout) {
    for (int l : ckpt.layouts)
        if (l == eval_layout)
            throw ConfigError("transfer: checkpoint was pretrained on layout " +
                              std::to_string(eval_layout) + "; refusing to evaluate on it");
}

TransferOutcome transfer_eval(const TransferConfig& cfg) {
    if (cfg.holdout_layouts.empty()) throw ConfigError("transfer: no hold-out layouts");
    for (int h : cfg.holdout_layouts)
        for (int t : cfg.train_layouts)
            if (h == t)
                throw ConfigError("transfer: layout " + std::to_string(h) +
                                  " appears in both train and hold-out sets");
    ArtifactCache cache{cfg.work_dir};

    // multi-layout pretraining corpus
    std::vector<std::string> train_paths;
    for (int l : cfg.train_layouts) {
        cache.dataset(Tier::Mixed, l, cfg.per_layout_transitions);
        train_paths.push_back(cache.dataset_path(Tier::Mixed, l, cfg.per_layout_transitions));
    }
    std::string multi_tag = "transfer_multi_k" + std::to_string(cfg.pretrain.mask.segment_states) +
                            "_t" + std::to_string(cfg.pretrain.steps);
    ModelParams transfer_ckpt = cache.pretrained(multi_tag, train_paths, cfg.pretrain);

    TransferOutcome out;
    for (int layout : cfg.holdout_layouts) {
        check_transfer_guard(transfer_ckpt, layout);
        GridWorldSpec spec = GridWorldSpec::layout(layout);
        cache.dataset(Tier::Mixed, layout, cfg.per_layout_transitions);
        std::string same_tag = "transfer_same_l" + std::to_string(layout) + "_t" +
                               std::to_string(cfg.pretrain.steps);
        ModelParams same_ckpt = cache.pretrained(
            same_tag, {cache.dataset_path(Tier::Mixed, layout, cfg.per_layout_transitions)},
            cfg.pretrain);
        BaselineScores base =
            compute_baselines(spec, cfg.dqn.budget, 10, cache.data_seed, cfg.work_dir);

        struct Arm {
            const char* name;
            EncoderMode mode;
            const ModelParams* ckpt;
        };
        const Arm arms[] = {{"same", EncoderMode::Frozen, &same_ckpt},
                            {"transfer", EncoderMode::Frozen, &transfer_ckpt},
                            {"scratch", EncoderMode::Scratch, nullptr}};
        for (const Arm& arm : arms) {
            double sum_final = 0;
            for (std::uint64_t seed : cfg.seeds) {
                RlArmResult r = run_rl_arm(spec, arm.mode, arm.ckpt, cfg.dqn, seed, base);
                for (const auto& pt : r.dqn.curve)
                    out.curve_rows.push_back({layout, arm.name, seed, pt.step, pt.mean_return});
                sum_final += r.dqn.final_return;
            }
            out.final_means.emplace_back(layout, arm.name,
                                         sum_final / static_cast<double>(cfg.seeds.size()));
        }
    }
    return out;
}

void write_transfer_csv(const std::vector<TransferRow>& rows, const std::string& path) {
    CsvWriter w(path, {"layout", "arm", "seed", "step", "return"});
    for (const auto& r : rows)
        w.row({std::to_string(r.layout), r.arm, std::to_string(r.seed), std::to_string(r.step),
               format_double(r.ret)});
    w.close();
}

// ----------------------------- probe driver -----------------------------

std::vector<ProbeRow> probe_compare(const ModelParams& checkpoint, const TrajectoryDataset& ds,
                                    const ProbeDriverConfig& cfg) {
    std::vector<ProbeRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        ProbeConfig pc = cfg.probe;
        pc.seed = seed;

        FrozenEncoder pretrained(checkpoint);
        for (const auto& r : probe_dynamics(pretrained, ds, pc))
            rows.push_back({r.horizon, "pretrained", seed, r.test_mse});

        ModelConfig rc = checkpoint.config();
        ModelParams random_params = ModelParams::init(rc, derive_seed(seed, 0x4a9d0e));
        FrozenEncoder random_enc(random_params);
        for (const auto& r : probe_dynamics(random_enc, ds, pc))
            rows.push_back({r.horizon, "random", seed, r.test_mse});
    }
    return rows;
}

void write_probe_csv(const std::vector<ProbeRow>& rows, const std::string& path) {
    CsvWriter w(path, {"horizon", "encoder", "seed", "mse"});
    for (const auto& r : rows)
        w.row({std::to_string(r.horizon), r.encoder, std::to_string(r.seed),
               format_double(r.mse)});
    w.close();
}

}  // namespace trajmask
