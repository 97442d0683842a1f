#include "trajmask/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "trajmask/csv.hpp"
#include "trajmask/evaldrivers.hpp"
#include "trajmask/svgplot.hpp"

namespace trajmask {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "trajmask 0.1.0";

// ----------------------------- argument handling -----------------------------

struct ArgSpec {
    std::string key;      // flag name without the leading --
    std::string defval;   // empty + required=true means must be provided
    std::string help;
    bool required = false;
};

class Args {
public:
    Args(std::string command, std::vector<ArgSpec> spec)
        : command_(std::move(command)), spec_(std::move(spec)) {
        for (const auto& s : spec_) defined_.emplace(s.key, s.defval);
    }

    std::string usage() const {
        std::ostringstream os;
        os << "usage: trajmask " << command_ << " [--key value ...]\n  keys:\n";
        for (const auto& s : spec_) {
            os << "    --" << s.key;
            if (!s.defval.empty()) os << " (default " << s.defval << ")";
            if (s.required) os << " (required)";
            os << "  " << s.help << "\n";
        }
        os << "    --config FILE  key = value lines applied before flags\n";
        return os.str();
    }

    // config file first, then flags override
    void parse(const std::vector<std::string>& args) {
        std::vector<std::pair<std::string, std::string>> kv;
        for (std::size_t i = 0; i < args.size(); ++i) {
            std::string a = args[i];
            if (a.rfind("--", 0) != 0)
                throw ConfigError("unexpected argument '" + a + "'\n" + usage());
            a = a.substr(2);
            std::string val;
            auto eq = a.find('=');
            if (eq != std::string::npos) {
                val = a.substr(eq + 1);
                a = a.substr(0, eq);
            } else {
                if (i + 1 >= args.size())
                    throw ConfigError("flag --" + a + " needs a value\n" + usage());
                val = args[++i];
            }
            kv.emplace_back(a, val);
        }
        for (const auto& [k, v] : kv)
            if (k == "config") load_config(v);
        for (const auto& [k, v] : kv) {
            if (k == "config") continue;
            set(k, v);
        }
        for (const auto& s : spec_)
            if (s.required && values_.count(s.key) == 0)
                throw ConfigError("missing required flag --" + s.key + "\n" + usage());
    }

    bool has(const std::string& key) const {
        return values_.count(key) != 0 || !defined_.at(key).empty();
    }
    std::string str(const std::string& key) const {
        auto it = values_.find(key);
        if (it != values_.end()) return it->second;
        return defined_.at(key);
    }
    std::int64_t integer(const std::string& key) const {
        const std::string v = str(key);
        try {
            std::size_t pos = 0;
            std::int64_t r = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return r;
        } catch (...) {
            throw ConfigError("--" + key + ": expected an integer, got '" + v + "'");
        }
    }
    double number(const std::string& key) const {
        const std::string v = str(key);
        try {
            std::size_t pos = 0;
            double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return r;
        } catch (...) {
            throw ConfigError("--" + key + ": expected a number, got '" + v + "'");
        }
    }
    bool flag(const std::string& key) const {
        std::string v = str(key);
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        throw ConfigError("--" + key + ": expected a boolean (0/1), got '" + v + "'");
    }
    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        std::string v = str(key);
        std::string cur;
        for (char c : v) {
            if (c == ',') {
                if (!cur.empty()) out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    }
    std::vector<std::int64_t> int_list(const std::string& key) const {
        std::vector<std::int64_t> out;
        for (const auto& s : list(key)) {
            try {
                out.push_back(std::stoll(s));
            } catch (...) {
                throw ConfigError("--" + key + ": expected a comma-separated integer list");
            }
        }
        return out;
    }
    std::vector<std::uint64_t> seed_list(const std::string& key) const {
        std::vector<std::uint64_t> out;
        for (std::int64_t v : int_list(key)) out.push_back(static_cast<std::uint64_t>(v));
        if (out.empty()) throw ConfigError("--" + key + ": needs at least one seed");
        return out;
    }

    // resolved key/value map for the manifest
    std::map<std::string, std::string> resolved() const {
        std::map<std::string, std::string> out;
        for (const auto& s : spec_) {
            auto it = values_.find(s.key);
            out[s.key] = it != values_.end() ? it->second : s.defval;
        }
        return out;
    }
    const std::string& command() const { return command_; }

private:
    void set(const std::string& key, const std::string& val) {
        if (defined_.count(key) == 0)
            throw ConfigError("unknown flag --" + key + "\n" + usage());
        values_[key] = val;
    }
    void load_config(const std::string& path) {
        std::ifstream in(path);
        if (!in.is_open()) throw ConfigError("cannot open config file: " + path);
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                std::size_t a = s.find_first_not_of(" \t\r");
                std::size_t b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            std::string k = trim(line.substr(0, eq));
            std::string v = trim(line.substr(eq + 1));
            if (k.empty() || k.rfind("meta.", 0) == 0) continue;  // manifests replay cleanly
            set(k, v);
        }
    }

    std::string command_;
    std::vector<ArgSpec> spec_;
    std::map<std::string, std::string> defined_;  // key -> default
    std::map<std::string, std::string> values_;
};

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw ConfigError("missing input file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

void write_manifest(const std::string& path, const Args& args,
                    const std::vector<std::string>& input_files) {
    std::ostringstream os;
    os << "meta.command = " << args.command() << "\n";
    os << "meta.version = " << kVersion << "\n";
    for (std::size_t i = 0; i < input_files.size(); ++i) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(file_hash(input_files[i])));
        os << "meta.input_hash." << i << " = " << input_files[i] << ":" << hex << "\n";
    }
    for (const auto& [k, v] : args.resolved()) os << k << " = " << v << "\n";
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out.is_open()) throw ConfigError("cannot write manifest: " + path);
    out << os.str();
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

// ----------------------------- shared config builders -----------------------------

std::vector<ArgSpec> pretrain_arg_spec() {
    return {
        {"data", "", "dataset file(s), comma separated", true},
        {"out", "", "output directory", true},
        {"seed", "0", "run seed"},
        {"steps", "5000", "training steps"},
        {"batch", "16", "segments per step"},
        {"K", "50", "states per segment"},
        {"mask.p", "0.1", "anchor probability, in (0,1)"},
        {"mask.n", "3", "max run length, >= 1"},
        {"scheme", "bert", "replacement scheme: bert | fixed-only"},
        {"variant", "as-written", "loss variant: as-written | symmetric-y"},
        {"temperature", "1", "similarity temperature, > 0"},
        {"lr", "0.001", "adam learning rate"},
        {"scale", "medium", "encoder scale: small | medium | large"},
        {"d-model", "64", "embedding width"},
        {"d-proj", "32", "projection width"},
        {"blocks", "2", "transformer blocks"},
        {"heads", "4", "attention heads"},
        {"ff", "128", "feed-forward hidden width"},
        {"gate-bias", "2", "gate bias toward identity"},
        {"gtrxl", "1", "1: gated blocks, 0: original transformer blocks"},
        {"eval-interval", "250", "steps between held-out retrieval evals"},
    };
}

PretrainConfig pretrain_config_from(const Args& a) {
    PretrainConfig cfg;
    cfg.mask.anchor_prob = a.number("mask.p");
    cfg.mask.max_run = static_cast<int>(a.integer("mask.n"));
    cfg.mask.segment_states = static_cast<int>(a.integer("K"));
    std::string scheme = a.str("scheme");
    if (scheme == "bert")
        cfg.mask.scheme = ReplacementScheme::Bert;
    else if (scheme == "fixed-only")
        cfg.mask.scheme = ReplacementScheme::FixedOnly;
    else
        throw ConfigError("--scheme: expected bert | fixed-only, got '" + scheme + "'");
    if (!(cfg.mask.anchor_prob > 0.0 && cfg.mask.anchor_prob < 1.0))
        throw ConfigError("--mask.p: must lie in (0,1), got " + a.str("mask.p"));
    if (cfg.mask.max_run < 1) throw ConfigError("--mask.n: must be >= 1, got " + a.str("mask.n"));
    cfg.batch_size = static_cast<int>(a.integer("batch"));
    cfg.steps = static_cast<int>(a.integer("steps"));
    cfg.adam.lr = a.number("lr");
    cfg.temperature = a.number("temperature");
    cfg.variant = loss_variant_from_name(a.str("variant"));
    cfg.seed = static_cast<std::uint64_t>(a.integer("seed"));
    cfg.eval_interval = static_cast<int>(a.integer("eval-interval"));
    cfg.model.scale = scale_from_name(a.str("scale"));
    cfg.model.d_model = static_cast<int>(a.integer("d-model"));
    cfg.model.d_proj = static_cast<int>(a.integer("d-proj"));
    cfg.model.num_blocks = static_cast<int>(a.integer("blocks"));
    cfg.model.num_heads = static_cast<int>(a.integer("heads"));
    cfg.model.ff_hidden = static_cast<int>(a.integer("ff"));
    cfg.model.gate_bias = a.number("gate-bias");
    cfg.model.gtrxl = a.flag("gtrxl");
    cfg.model.max_states = cfg.mask.segment_states;
    return cfg;
}

DqnConfig dqn_config_from(const Args& a) {
    DqnConfig cfg;
    cfg.budget = static_cast<int>(a.integer("budget"));
    cfg.eval_interval = static_cast<int>(a.integer("eval-interval"));
    cfg.scale = scale_from_name(a.str("scale"));
    return cfg;
}

// ----------------------------- commands -----------------------------

int cmd_collect(const std::vector<std::string>& argv) {
    Args a("collect", {
                          {"tier", "", "random | weak | mixed", true},
                          {"layout", "0", "layout id 0..7"},
                          {"transitions", "", "transition count", true},
                          {"seed", "0", "collection seed"},
                          {"out", "", "output dataset file", true},
                          {"checkpoints", "5", "policy snapshots (mixed tier)"},
                          {"train-budget", "60000", "learner env steps (mixed tier)"},
                      });
    a.parse(argv);
    Tier tier = tier_from_name(a.str("tier"));
    GridWorldSpec spec = GridWorldSpec::layout(static_cast<int>(a.integer("layout")));
    std::int64_t n = a.integer("transitions");
    if (n <= 0) throw ConfigError("--transitions: must be > 0, got " + a.str("transitions"));
    std::uint64_t seed = static_cast<std::uint64_t>(a.integer("seed"));
    TrajectoryDataset ds;
    switch (tier) {
        case Tier::Random: ds = collect_random(spec, n, seed); break;
        case Tier::Weak: ds = collect_weak(spec, n, seed); break;
        case Tier::Mixed:
            ds = collect_mixed(spec, n, static_cast<int>(a.integer("checkpoints")), seed,
                               static_cast<int>(a.integer("train-budget")));
            break;
    }
    const std::string out = a.str("out");
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    save_dataset(ds, out);
    write_manifest(out + ".manifest", a, {});
    std::cout << "collected " << ds.total_transitions << " transitions ("
              << ds.trajectories.size() << " trajectories, mean return "
              << format_double(ds.mean_episode_return()) << ") -> " << out << "\n";
    return 0;
}

int cmd_pretrain(const std::vector<std::string>& argv) {
    Args a("pretrain", pretrain_arg_spec());
    a.parse(argv);
    PretrainConfig cfg = pretrain_config_from(a);
    const std::string out = a.str("out");
    ensure_dir(out);
    cfg.out_dir = out;

    std::vector<std::string> data_files = a.list("data");
    if (data_files.empty()) throw ConfigError("--data: needs at least one dataset file");
    std::vector<TrajectoryDataset> datasets;
    for (const auto& f : data_files) datasets.push_back(load_dataset(f));
    std::vector<const TrajectoryDataset*> ptrs;
    for (const auto& d : datasets) ptrs.push_back(&d);
    RewardFreeView view = RewardFreeView::from(ptrs);

    write_manifest(out + "/manifest", a, data_files);
    PretrainResult res = pretrain(view, cfg);
    std::cout << "pretrain done: final loss " << format_double(res.metrics.back().loss)
              << ", held-out retrieval " << format_double(res.final_retrieval) << " (chance "
              << format_double(res.final_chance) << ", best " << format_double(res.best_retrieval)
              << " @step " << res.best_step << ")\n"
              << "checkpoints: " << out << "/ckpt_final.rpmc, " << out << "/ckpt_best.rpmc\n";
    return 0;
}

int cmd_probe(const std::vector<std::string>& argv) {
    Args a("probe", {
                        {"ckpt", "", "pretrained checkpoint", true},
                        {"data", "", "dataset file", true},
                        {"out", "", "output directory", true},
                        {"horizons", "1,2,5,10,20", "prediction horizons"},
                        {"seeds", "1,2,3", "probe seeds"},
                        {"epochs", "30", "head training epochs"},
                        {"head-hidden", "64", "head hidden width"},
                        {"lr", "0.001", "head learning rate"},
                    });
    a.parse(argv);
    ModelParams ckpt = load_checkpoint(a.str("ckpt"));
    TrajectoryDataset ds = load_dataset(a.str("data"));
    ProbeDriverConfig cfg;
    cfg.probe.horizons.clear();
    for (std::int64_t h : a.int_list("horizons")) cfg.probe.horizons.push_back(static_cast<int>(h));
    cfg.probe.epochs = static_cast<int>(a.integer("epochs"));
    cfg.probe.head_hidden = static_cast<int>(a.integer("head-hidden"));
    cfg.probe.lr = a.number("lr");
    cfg.seeds = a.seed_list("seeds");

    const std::string out = a.str("out");
    ensure_dir(out);
    write_manifest(out + "/manifest", a, {a.str("ckpt"), a.str("data")});
    auto rows = probe_compare(ckpt, ds, cfg);
    write_probe_csv(rows, out + "/probe.csv");
    std::cout << "probe done: " << rows.size() << " rows -> " << out << "/probe.csv\n";
    return 0;
}

int cmd_rl(const std::vector<std::string>& argv) {
    Args a("rl", {
                     {"layout", "0", "layout id"},
                     {"modes", "frozen,scratch", "encoder modes to run"},
                     {"ckpt", "", "checkpoint (frozen/finetune modes)"},
                     {"budget", "20000", "environment steps"},
                     {"eval-interval", "1000", "steps between curve evals"},
                     {"scale", "medium", "scratch encoder scale"},
                     {"seeds", "1,2,3", "run seeds"},
                     {"out", "", "output directory", true},
                 });
    a.parse(argv);
    GridWorldSpec spec = GridWorldSpec::layout(static_cast<int>(a.integer("layout")));
    DqnConfig dq = dqn_config_from(a);
    const std::string out = a.str("out");
    ensure_dir(out);

    ModelParams ckpt;
    bool have_ckpt = !a.str("ckpt").empty();
    std::vector<std::string> inputs;
    if (have_ckpt) {
        ckpt = load_checkpoint(a.str("ckpt"));
        inputs.push_back(a.str("ckpt"));
    }
    write_manifest(out + "/manifest", a, inputs);

    BaselineScores base = compute_baselines(spec, dq.budget, 10, 11, out);
    CsvWriter curve(out + "/rl.csv", {"layout", "mode", "seed", "step", "return"});
    CsvWriter scores(out + "/rl_scores.csv",
                     {"layout", "mode", "seed", "final_return", "normalized_score"});
    for (const std::string& mode_name : a.list("modes")) {
        EncoderMode mode = encoder_mode_from_name(mode_name);
        if (mode != EncoderMode::Scratch && !have_ckpt)
            throw ConfigError("--ckpt: required for mode '" + mode_name + "'");
        for (std::uint64_t seed : a.seed_list("seeds")) {
            RlArmResult r = run_rl_arm(spec, mode, have_ckpt ? &ckpt : nullptr, dq, seed, base);
            for (const auto& pt : r.dqn.curve)
                curve.row({a.str("layout"), mode_name, std::to_string(seed),
                           std::to_string(pt.step), format_double(pt.mean_return)});
            scores.row({a.str("layout"), mode_name, std::to_string(seed),
                        format_double(r.dqn.final_return), format_double(r.normalized)});
            std::cout << "rl " << mode_name << " seed " << seed << ": return "
                      << format_double(r.dqn.final_return) << ", normalized "
                      << format_double(r.normalized) << "\n";
        }
    }
    curve.close();
    scores.close();
    return 0;
}

int cmd_transfer(const std::vector<std::string>& argv) {
    Args a("transfer", {
                           {"train-layouts", "0,1,2,3,4,5", "pretraining layouts"},
                           {"holdout", "6,7", "held-out layouts"},
                           {"per-layout", "6000", "transitions per layout"},
                           {"steps", "5000", "pretraining steps"},
                           {"K", "50", "states per segment"},
                           {"budget", "20000", "environment steps"},
                           {"eval-interval", "1000", "steps between curve evals"},
                           {"scale", "medium", "encoder scale"},
                           {"seeds", "1,2,3", "run seeds"},
                           {"out", "", "output directory", true},
                       });
    a.parse(argv);
    TransferConfig cfg;
    cfg.train_layouts.clear();
    for (std::int64_t l : a.int_list("train-layouts")) cfg.train_layouts.push_back(static_cast<int>(l));
    cfg.holdout_layouts.clear();
    for (std::int64_t l : a.int_list("holdout")) cfg.holdout_layouts.push_back(static_cast<int>(l));
    cfg.per_layout_transitions = a.integer("per-layout");
    cfg.pretrain.steps = static_cast<int>(a.integer("steps"));
    cfg.pretrain.mask.segment_states = static_cast<int>(a.integer("K"));
    cfg.pretrain.model.max_states = cfg.pretrain.mask.segment_states;
    cfg.pretrain.model.scale = scale_from_name(a.str("scale"));
    cfg.dqn = dqn_config_from(a);
    cfg.seeds = a.seed_list("seeds");
    cfg.work_dir = a.str("out");
    ensure_dir(cfg.work_dir);
    write_manifest(cfg.work_dir + "/manifest", a, {});

    TransferOutcome outcome = transfer_eval(cfg);
    write_transfer_csv(outcome.curve_rows, cfg.work_dir + "/transfer.csv");
    for (const auto& [layout, arm, mean_final] : outcome.final_means)
        std::cout << "transfer layout " << layout << " " << arm << ": mean final return "
                  << format_double(mean_final) << "\n";
    return 0;
}

int cmd_scaling(const std::vector<std::string>& argv) {
    Args a("scaling", {
                          {"layout", "0", "layout id"},
                          {"cells",
                           "mixed:40000:medium,weak:40000:medium,random:40000:medium,"
                           "mixed:10000:medium,mixed:40000:small,mixed:40000:large",
                           "tier:size:scale cells"},
                          {"steps", "5000", "pretraining steps per cell"},
                          {"K", "50", "states per segment"},
                          {"budget", "20000", "environment steps"},
                          {"eval-interval", "0", "curve evals (0: none)"},
                          {"scale", "medium", "unused placeholder for shared parsing"},
                          {"seeds", "1,2,3", "downstream seeds"},
                          {"jobs", "", "parallel cells (default TRAJMASK_THREADS)"},
                          {"out", "", "output directory", true},
                      });
    a.parse(argv);
    ScalingConfig cfg;
    cfg.layout = static_cast<int>(a.integer("layout"));
    for (const std::string& cell_str : a.list("cells")) {
        auto p1 = cell_str.find(':');
        auto p2 = cell_str.find(':', p1 == std::string::npos ? p1 : p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw ConfigError("--cells: expected tier:size:scale, got '" + cell_str + "'");
        ScalingCell cell;
        cell.tier = tier_from_name(cell_str.substr(0, p1));
        cell.size = std::stoll(cell_str.substr(p1 + 1, p2 - p1 - 1));
        cell.scale = scale_from_name(cell_str.substr(p2 + 1));
        cfg.cells.push_back(cell);
    }
    cfg.pretrain.steps = static_cast<int>(a.integer("steps"));
    cfg.pretrain.mask.segment_states = static_cast<int>(a.integer("K"));
    cfg.pretrain.model.max_states = cfg.pretrain.mask.segment_states;
    cfg.dqn = dqn_config_from(a);
    cfg.dqn.eval_interval = 0;
    cfg.seeds = a.seed_list("seeds");
    cfg.work_dir = a.str("out");
    cfg.jobs = a.str("jobs").empty() ? worker_threads() : static_cast<int>(a.integer("jobs"));
    ensure_dir(cfg.work_dir);
    write_manifest(cfg.work_dir + "/manifest", a, {});

    auto rows = scaling_sweep(cfg);
    write_scaling_csv(rows, cfg.work_dir + "/scaling.csv");
    std::cout << "scaling done: " << rows.size() << " rows -> " << cfg.work_dir
              << "/scaling.csv\n";
    return 0;
}

int cmd_plot(const std::vector<std::string>& argv) {
    Args a("plot", {
                       {"kind", "", "loss | probe | rl | scaling", true},
                       {"csv", "", "input csv", true},
                       {"out", "", "output svg", true},
                   });
    a.parse(argv);
    plot_csv(a.str("kind"), a.str("csv"), a.str("out"));
    std::cout << "wrote " << a.str("out") << "\n";
    return 0;
}

const char* kTopUsage =
    "usage: trajmask <command> [--key value ...]\n"
    "commands:\n"
    "  collect   build an offline trajectory dataset (random | weak | mixed)\n"
    "  pretrain  masked-prediction pretraining on a dataset\n"
    "  probe     k-step dynamics probe, pretrained vs random encoder\n"
    "  rl        double-DQN on a layout (frozen | finetune | scratch)\n"
    "  transfer  held-out layout evaluation of a multi-layout checkpoint\n"
    "  scaling   tier x size x scale sweep with frozen downstream runs\n"
    "  plot      render a csv as an svg chart\n";

}  // namespace

int worker_threads() {
    const char* env = std::getenv("TRAJMASK_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

int run_cli(const std::vector<std::string>& args) {
    try {
        if (args.empty()) {
            std::cerr << kTopUsage;
            return 2;
        }
        const std::string& cmd = args[0];
        std::vector<std::string> rest(args.begin() + 1, args.end());
        if (cmd == "collect") return cmd_collect(rest);
        if (cmd == "pretrain") return cmd_pretrain(rest);
        if (cmd == "probe") return cmd_probe(rest);
        if (cmd == "rl") return cmd_rl(rest);
        if (cmd == "transfer") return cmd_transfer(rest);
        if (cmd == "scaling") return cmd_scaling(rest);
        if (cmd == "plot") return cmd_plot(rest);
        if (cmd == "--help" || cmd == "help") {
            std::cout << kTopUsage;
            return 0;
        }
        std::cerr << "unknown command '" << cmd << "'\n" << kTopUsage;
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace trajmask
