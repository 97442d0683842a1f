#include "trajmask/model.hpp"

#include <cmath>
#include <cstring>

namespace trajmask {

using nn::Tensor;

const char* scale_name(EncoderScale s) {
    switch (s) {
        case EncoderScale::Small: return "small";
        case EncoderScale::Medium: return "medium";
        case EncoderScale::Large: return "large";
    }
    return "?";
}

EncoderScale scale_from_name(const std::string& name) {
    if (name == "small") return EncoderScale::Small;
    if (name == "medium") return EncoderScale::Medium;
    if (name == "large") return EncoderScale::Large;
    throw ConfigError("unknown encoder scale '" + name + "' (expected small|medium|large)");
}

ScaleDims scale_dims(EncoderScale s) {
    switch (s) {
        case EncoderScale::Small: return {8, 16, 1};
        case EncoderScale::Medium: return {16, 32, 2};
        case EncoderScale::Large: return {32, 64, 3};
    }
    throw ContractError("bad encoder scale");
}

namespace {

struct SpatialDims {
    int h1, w1, h2, w2, flat;
};

SpatialDims spatial_dims(const ModelConfig& cfg) {
    SpatialDims d;
    d.h1 = (cfg.obs_height - 3) / 2 + 1;
    d.w1 = (cfg.obs_width - 3) / 2 + 1;
    d.h2 = (d.h1 - 3) / 2 + 1;
    d.w2 = (d.w1 - 3) / 2 + 1;
    d.flat = scale_dims(cfg.scale).w2 * d.h2 * d.w2;
    return d;
}

}  // namespace

void ModelConfig::validate() const {
    if (d_model < 2 || d_proj < 1 || num_heads < 1 || num_blocks < 0 || ff_hidden < 1)
        throw ConfigError("model: dimensions must be positive");
    if (d_model % num_heads != 0)
        throw ConfigError("model: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(num_heads));
    if (d_proj >= d_model)
        throw ConfigError("model: d_proj must be smaller than d_model");
    if (max_states < 2) throw ConfigError("model: K must be >= 2");
    if (num_actions < 1) throw ConfigError("model: need at least one action");
    SpatialDims sd = spatial_dims(*this);
    if (sd.h2 < 1 || sd.w2 < 1)
        throw ConfigError("model: observation too small for the conv stem");
}

// ----------------------------- params -----------------------------

void ModelParams::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
}

Tensor ModelParams::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("missing parameter " + name);
    return entries_[it->second].second;
}

std::vector<Tensor> ModelParams::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
}

std::vector<Tensor> ModelParams::tensors_with_prefix(const std::string& prefix) const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : entries_)
        if (n.rfind(prefix, 0) == 0) out.push_back(t);
    return out;
}

void ModelParams::set_requires_grad(bool rg) {
    for (auto& [n, t] : entries_) t.set_requires_grad(rg);
}

void ModelParams::set_requires_grad_prefix(const std::string& prefix, bool rg) {
    for (auto& [n, t] : entries_)
        if (n.rfind(prefix, 0) == 0) t.set_requires_grad(rg);
}

std::int64_t ModelParams::count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += static_cast<std::int64_t>(t.numel());
    return n;
}

std::int64_t ModelParams::count_prefix(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_)
        if (name.rfind(prefix, 0) == 0) n += static_cast<std::int64_t>(t.numel());
    return n;
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    out.cfg_ = cfg_;
    out.layouts = layouts;
    for (const auto& [n, t] : entries_) {
        Tensor c = t.detached_copy();
        c.set_requires_grad(t.requires_grad());
        out.add(n, c);
    }
    return out;
}

void ModelParams::copy_from(const ModelParams& o) {
    if (entries_.size() != o.entries_.size())
        throw ContractError("copy_from: parameter sets differ");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        Tensor& dst = entries_[i].second;
        const Tensor& src = o.entries_[i].second;
        if (entries_[i].first != o.entries_[i].first || dst.numel() != src.numel())
            throw ContractError("copy_from: mismatched parameter " + entries_[i].first);
        for (std::size_t k = 0; k < dst.numel(); ++k) dst.set(k, src.at(k));
    }
}

std::uint64_t params_fingerprint(const ModelParams& p) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : p.entries()) {
        h = fnv1a64(name.data(), name.size(), h);
        if (t.dtype() == nn::Dtype::F32) {
            h = fnv1a64(t.data_f32(), t.numel() * sizeof(float), h);
        } else {
            h = fnv1a64(t.data_f64(), t.numel() * sizeof(double), h);
        }
    }
    return h;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg_ = cfg;
    Rng rng(derive_seed(seed, 0x90de1));
    const ScaleDims sc = scale_dims(cfg.scale);
    const SpatialDims sd = spatial_dims(cfg);
    const int d = cfg.d_model;

    auto w = [&](const std::string& name, std::vector<int> shape, double fan_in, double gain) {
        Tensor t = Tensor::randn(std::move(shape), rng, gain / std::sqrt(fan_in), cfg.dtype);
        t.set_requires_grad(true);
        p.add(name, t);
    };
    auto c = [&](const std::string& name, std::vector<int> shape, double value) {
        Tensor t = Tensor::full(std::move(shape), value, cfg.dtype);
        t.set_requires_grad(true);
        p.add(name, t);
    };
    const double kHe = std::sqrt(2.0);

    // state encoder
    w("f_s.conv1.w", {sc.w1, cfg.obs_channels, 3, 3}, cfg.obs_channels * 9.0, kHe);
    c("f_s.conv1.b", {sc.w1, 1, 1}, 0.0);
    for (int i = 0; i < sc.blocks; ++i) {
        std::string pre = "f_s.s1." + std::to_string(i) + ".";
        w(pre + "c1.w", {sc.w1, sc.w1, 1, 1}, sc.w1, kHe);
        c(pre + "c1.b", {sc.w1, 1, 1}, 0.0);
        w(pre + "c2.w", {sc.w1, sc.w1, 1, 1}, sc.w1, 1.0);
        c(pre + "c2.b", {sc.w1, 1, 1}, 0.0);
    }
    w("f_s.conv2.w", {sc.w2, sc.w1, 3, 3}, sc.w1 * 9.0, kHe);
    c("f_s.conv2.b", {sc.w2, 1, 1}, 0.0);
    for (int i = 0; i < sc.blocks; ++i) {
        std::string pre = "f_s.s2." + std::to_string(i) + ".";
        w(pre + "c1.w", {sc.w2, sc.w2, 1, 1}, sc.w2, kHe);
        c(pre + "c1.b", {sc.w2, 1, 1}, 0.0);
        w(pre + "c2.w", {sc.w2, sc.w2, 1, 1}, sc.w2, 1.0);
        c(pre + "c2.b", {sc.w2, 1, 1}, 0.0);
    }
    w("f_s.fc.w", {d, sd.flat}, sd.flat, 1.0);
    c("f_s.fc.b", {d}, 0.0);

    // action encoder (two-layer MLP over one-hot, extra index = fixed token)
    w("f_a.fc1.w", {d, cfg.num_actions + 1}, cfg.num_actions + 1.0, kHe);
    c("f_a.fc1.b", {d}, 0.0);
    w("f_a.fc2.w", {d, d}, d, 1.0);
    c("f_a.fc2.b", {d}, 0.0);

    // positions and the fixed state token (encoder bypass)
    w("pos", {cfg.seq_capacity(), d}, 1.0, 0.02);
    w("fixed_state", {1, d}, 1.0, 0.02);

    for (int b = 0; b < cfg.num_blocks; ++b) {
        std::string pre = "blk" + std::to_string(b) + ".";
        c(pre + "ln1.g", {d}, 1.0);
        c(pre + "ln1.b", {d}, 0.0);
        for (const char* nm : {"wq", "wk", "wv", "wo"}) w(pre + "attn." + nm, {d, d}, d, 1.0);
        for (const char* nm : {"bq", "bk", "bv", "bo"}) c(pre + "attn." + nm, {d}, 0.0);
        if (cfg.gtrxl) {
            for (const char* nm : {"wr", "ur", "wz", "uz"}) w(pre + "gate1." + nm, {d, d}, d, 1.0);
            c(pre + "gate1.bz", {d}, -cfg.gate_bias);
            for (const char* nm : {"wg", "ug"}) w(pre + "gate1." + nm, {d, d}, d, 1.0);
        }
        c(pre + "ln2.g", {d}, 1.0);
        c(pre + "ln2.b", {d}, 0.0);
        w(pre + "ff.w1", {cfg.ff_hidden, d}, d, kHe);
        c(pre + "ff.b1", {cfg.ff_hidden}, 0.0);
        w(pre + "ff.w2", {d, cfg.ff_hidden}, cfg.ff_hidden, 1.0);
        c(pre + "ff.b2", {d}, 0.0);
        if (cfg.gtrxl) {
            for (const char* nm : {"wr", "ur", "wz", "uz"}) w(pre + "gate2." + nm, {d, d}, d, 1.0);
            c(pre + "gate2.bz", {d}, -cfg.gate_bias);
            for (const char* nm : {"wg", "ug"}) w(pre + "gate2." + nm, {d, d}, d, 1.0);
        }
    }

    // projection head g
    w("g.p1.w", {d, d}, d, kHe);
    c("g.p1.b", {d}, 0.0);
    w("g.p2.w", {cfg.d_proj, d}, d, 1.0);
    c("g.p2.b", {cfg.d_proj}, 0.0);
    return p;
}

// ----------------------------- forward passes -----------------------------

namespace {

constexpr double kLnEps = 1e-5;

Tensor residual_block(const ModelParams& p, const std::string& pre, const Tensor& x) {
    Tensor t = nn::relu(nn::add(nn::conv2d(x, p.param(pre + "c1.w"), 1), p.param(pre + "c1.b")));
    Tensor u = nn::add(nn::conv2d(t, p.param(pre + "c2.w"), 1), p.param(pre + "c2.b"));
    return nn::relu(nn::add(x, u));
}

Tensor mha(const ModelParams& p, const std::string& pre, const Tensor& x) {
    const auto& cfg = p.config();
    const int hd = cfg.d_model / cfg.num_heads;
    Tensor q = nn::linear(x, p.param(pre + "wq"), p.param(pre + "bq"));
    Tensor k = nn::linear(x, p.param(pre + "wk"), p.param(pre + "bk"));
    Tensor v = nn::linear(x, p.param(pre + "wv"), p.param(pre + "bv"));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(cfg.num_heads));
    for (int h = 0; h < cfg.num_heads; ++h) {
        Tensor qh = nn::slice_cols(q, h * hd, hd);
        Tensor kh = nn::slice_cols(k, h * hd, hd);
        Tensor vh = nn::slice_cols(v, h * hd, hd);
        Tensor scores = nn::mul_scalar(nn::matmul_nt(qh, kh), 1.0 / std::sqrt(double(hd)));
        Tensor attn = nn::softmax(scores);  // bidirectional: no mask
        heads.push_back(nn::matmul(attn, vh));
    }
    Tensor ctx = nn::concat_cols(heads);
    return nn::linear(ctx, p.param(pre + "wo"), p.param(pre + "bo"));
}

Tensor feed_forward(const ModelParams& p, const std::string& pre, const Tensor& x) {
    Tensor h = nn::relu(nn::linear(x, p.param(pre + "w1"), p.param(pre + "b1")));
    return nn::linear(h, p.param(pre + "w2"), p.param(pre + "b2"));
}

// GRU-style gate g(x, y) = (1-z) (.) x + z (.) h; z is biased toward 0 so a
// fresh block starts near the identity map.
Tensor gru_gate(const ModelParams& p, const std::string& pre, const Tensor& x, const Tensor& y) {
    Tensor r = nn::sigmoid(nn::add(nn::matmul_nt(y, p.param(pre + "wr")),
                                   nn::matmul_nt(x, p.param(pre + "ur"))));
    Tensor z = nn::sigmoid(nn::add(
        nn::add(nn::matmul_nt(y, p.param(pre + "wz")), nn::matmul_nt(x, p.param(pre + "uz"))),
        p.param(pre + "bz")));
    Tensor h = nn::tanh_op(nn::add(nn::matmul_nt(y, p.param(pre + "wg")),
                                   nn::matmul_nt(nn::mul(r, x), p.param(pre + "ug"))));
    return nn::add(x, nn::mul(z, nn::sub(h, x)));
}

Tensor transformer_block(const ModelParams& p, int b, const Tensor& x) {
    const auto& cfg = p.config();
    std::string pre = "blk" + std::to_string(b) + ".";
    if (cfg.gtrxl) {
        Tensor a = mha(p, pre + "attn.", nn::layer_norm(x, p.param(pre + "ln1.g"),
                                                        p.param(pre + "ln1.b"), kLnEps));
        Tensor h = gru_gate(p, pre + "gate1.", x, nn::relu(a));
        Tensor f = feed_forward(p, pre + "ff.", nn::layer_norm(h, p.param(pre + "ln2.g"),
                                                               p.param(pre + "ln2.b"), kLnEps));
        return gru_gate(p, pre + "gate2.", h, nn::relu(f));
    }
    // original block: residual addition, post-norm
    Tensor a = mha(p, pre + "attn.", x);
    Tensor h = nn::layer_norm(nn::add(x, a), p.param(pre + "ln1.g"), p.param(pre + "ln1.b"),
                              kLnEps);
    Tensor f = feed_forward(p, pre + "ff.", h);
    return nn::layer_norm(nn::add(h, f), p.param(pre + "ln2.g"), p.param(pre + "ln2.b"), kLnEps);
}

}  // namespace

Tensor encode_states(const ModelParams& p, const Tensor& obs) {
    const auto& cfg = p.config();
    Tensor x = obs;
    if (x.rank() == 3) x = nn::reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
    if (x.rank() != 4 || x.dim(1) != cfg.obs_channels || x.dim(2) != cfg.obs_height ||
        x.dim(3) != cfg.obs_width)
        throw ShapeError("encode_states: expected observations [N," +
                         std::to_string(cfg.obs_channels) + "," + std::to_string(cfg.obs_height) +
                         "," + std::to_string(cfg.obs_width) + "], got " + nn::shape_str(obs.shape()));
    const ScaleDims sc = scale_dims(cfg.scale);
    Tensor h = nn::relu(nn::add(nn::conv2d(x, p.param("f_s.conv1.w"), 2), p.param("f_s.conv1.b")));
    for (int i = 0; i < sc.blocks; ++i) h = residual_block(p, "f_s.s1." + std::to_string(i) + ".", h);
    h = nn::relu(nn::add(nn::conv2d(h, p.param("f_s.conv2.w"), 2), p.param("f_s.conv2.b")));
    for (int i = 0; i < sc.blocks; ++i) h = residual_block(p, "f_s.s2." + std::to_string(i) + ".", h);
    const SpatialDims sd = spatial_dims(cfg);
    Tensor flat = nn::reshape(h, {h.dim(0), sd.flat});
    return nn::linear(flat, p.param("f_s.fc.w"), p.param("f_s.fc.b"));
}

Tensor encode_state(const ModelParams& p, const Tensor& obs) {
    if (obs.rank() != 3)
        throw ShapeError("encode_state: expected a single [C,H,W] observation, got " +
                         nn::shape_str(obs.shape()));
    Tensor e = encode_states(p, obs);  // [1, d]
    return nn::reshape(e, {e.dim(1)});
}

Tensor encode_actions_onehot(const ModelParams& p, const Tensor& onehot) {
    const auto& cfg = p.config();
    if (onehot.rank() != 2 || onehot.dim(1) != cfg.num_actions + 1)
        throw ShapeError("encode_actions_onehot: expected [N," +
                         std::to_string(cfg.num_actions + 1) + "], got " +
                         nn::shape_str(onehot.shape()));
    Tensor h = nn::relu(nn::linear(onehot, p.param("f_a.fc1.w"), p.param("f_a.fc1.b")));
    return nn::linear(h, p.param("f_a.fc2.w"), p.param("f_a.fc2.b"));
}

Tensor action_embedding_table(const ModelParams& p) {
    const auto& cfg = p.config();
    const int n = cfg.num_actions + 1;
    std::vector<double> eye(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eye[static_cast<std::size_t>(i) * n + i] = 1.0;
    Tensor one_hot = Tensor::from_data({n, n}, eye, cfg.dtype);
    return encode_actions_onehot(p, one_hot);
}

Tensor encode_action(const ModelParams& p, int action_index) {
    const auto& cfg = p.config();
    if (action_index < 0 || action_index > cfg.num_actions)
        throw ContractError("encode_action: index " + std::to_string(action_index) +
                            " outside [0," + std::to_string(cfg.num_actions) + "]");
    std::vector<double> row(static_cast<std::size_t>(cfg.num_actions) + 1, 0.0);
    row[static_cast<std::size_t>(action_index)] = 1.0;
    Tensor onehot = Tensor::from_data({1, cfg.num_actions + 1}, row, cfg.dtype);
    Tensor e = encode_actions_onehot(p, onehot);
    return nn::reshape(e, {e.dim(1)});
}

Tensor gtrxl_forward(const ModelParams& p, const Tensor& embeddings) {
    const auto& cfg = p.config();
    if (embeddings.rank() != 2 || embeddings.dim(1) != cfg.d_model)
        throw ShapeError("gtrxl_forward: expected [M," + std::to_string(cfg.d_model) + "], got " +
                         nn::shape_str(embeddings.shape()));
    const int M = embeddings.dim(0);
    if (M > cfg.seq_capacity())
        throw ContractError("gtrxl_forward: sequence length " + std::to_string(M) +
                            " exceeds positional table " + std::to_string(cfg.seq_capacity()));
    Tensor h = nn::add(embeddings, nn::slice_rows(p.param("pos"), 0, M));
    for (int b = 0; b < cfg.num_blocks; ++b) h = transformer_block(p, b, h);
    return h;
}

Tensor project(const ModelParams& p, const Tensor& x) {
    Tensor h = nn::relu(nn::linear(x, p.param("g.p1.w"), p.param("g.p1.b")));
    return nn::linear(h, p.param("g.p2.w"), p.param("g.p2.b"));
}

// ----------------------------- sequence forward -----------------------------

namespace {

// Deduplicates observation payloads by content so the conv encoder runs once
// per distinct image (the gridworld has a tiny observation space).
struct ObsPool {
    const RewardFreeView& view;
    std::vector<const float*> rows;
    std::unordered_map<std::uint64_t, int> by_position;            // (traj,t) -> row
    std::unordered_map<std::uint64_t, std::vector<int>> by_hash;   // content -> candidates

    explicit ObsPool(const RewardFreeView& v) : view(v) {}

    int row_of(int traj, int t) {
        std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(traj)) << 32) |
                            static_cast<std::uint32_t>(t);
        auto it = by_position.find(key);
        if (it != by_position.end()) return it->second;
        const float* obs = view.state_obs(traj, t);
        const std::size_t bytes = view.obs_size * sizeof(float);
        std::uint64_t h = fnv1a64(obs, bytes);
        int row = -1;
        auto& cands = by_hash[h];
        for (int c : cands) {
            if (std::memcmp(rows[static_cast<std::size_t>(c)], obs, bytes) == 0) {
                row = c;
                break;
            }
        }
        if (row < 0) {
            row = static_cast<int>(rows.size());
            rows.push_back(obs);
            cands.push_back(row);
        }
        by_position[key] = row;
        return row;
    }
};

}  // namespace

std::vector<SequenceForward> forward_batch(const ModelParams& p, const RewardFreeView& view,
                                           const std::vector<TokenSequence>& seqs) {
    const auto& cfg = p.config();
    if (seqs.empty()) throw ContractError("forward_batch: empty batch");
    ObsPool pool(view);
    for (const auto& seq : seqs) {
        for (const auto& slot : seq.slots) {
            if (!slot.is_state) continue;
            pool.row_of(seq.traj_ref, slot.orig_t);
            if (!slot.input_fixed) pool.row_of(slot.in_traj, slot.in_t);
        }
    }
    const int U = static_cast<int>(pool.rows.size());
    Tensor obs = Tensor::zeros({U, cfg.obs_channels, cfg.obs_height, cfg.obs_width}, cfg.dtype);
    for (int r = 0; r < U; ++r) {
        const float* src = pool.rows[static_cast<std::size_t>(r)];
        for (std::size_t i = 0; i < view.obs_size; ++i)
            obs.set(static_cast<std::size_t>(r) * view.obs_size + i, src[i]);
    }
    Tensor state_emb = encode_states(p, obs);                    // [U, d]
    Tensor action_emb = action_embedding_table(p);               // [A+1, d]
    Tensor src = nn::concat_rows({state_emb, action_emb, p.param("fixed_state")});
    const int action_base = U;
    const int fixed_state_row = U + cfg.num_actions + 1;

    std::vector<SequenceForward> out;
    out.reserve(seqs.size());
    for (const auto& seq : seqs) {
        std::vector<int> idx_orig, idx_in;
        idx_orig.reserve(seq.slots.size());
        idx_in.reserve(seq.slots.size());
        for (const auto& slot : seq.slots) {
            if (slot.is_state) {
                idx_orig.push_back(pool.row_of(seq.traj_ref, slot.orig_t));
                idx_in.push_back(slot.input_fixed ? fixed_state_row
                                                  : pool.row_of(slot.in_traj, slot.in_t));
            } else {
                idx_orig.push_back(action_base + slot.orig_action);
                idx_in.push_back(action_base + slot.in_action);
            }
        }
        SequenceForward f;
        f.targets_y = nn::gather_rows(src, idx_orig);
        Tensor inputs = nn::gather_rows(src, idx_in);
        f.outputs_z = gtrxl_forward(p, inputs);
        f.proj_y = project(p, f.targets_y);
        f.proj_z = project(p, f.outputs_z);
        f.masked = seq.masked_positions();
        out.push_back(std::move(f));
    }
    return out;
}

SequenceForward forward_sequence(const ModelParams& p, const RewardFreeView& view,
                                 const TokenSequence& seq) {
    return forward_batch(p, view, {seq})[0];
}

// ----------------------------- frozen encoder -----------------------------

FrozenEncoder::FrozenEncoder(const ModelParams& full) {
    // only the state encoder survives extraction; the action encoder,
    // transformer blocks and projection head are dropped
    ModelParams sub;
    sub.layouts = full.layouts;
    for (const auto& [name, t] : full.entries()) {
        if (name.rfind("f_s.", 0) != 0) continue;
        Tensor c = t.detached_copy();
        c.set_requires_grad(false);
        sub.add(name, c);
    }
    sub.set_config(full.config());
    params_ = std::move(sub);
    const auto& cfg = params_.config();
    obs_size_ = static_cast<std::size_t>(cfg.obs_channels) * cfg.obs_height * cfg.obs_width;
}

const std::vector<float>& FrozenEncoder::features(const float* obs) {
    std::uint64_t key = fnv1a64(obs, obs_size_ * sizeof(float));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const auto& cfg = params_.config();
    nn::NoGrad ng;
    Tensor x = Tensor::zeros({1, cfg.obs_channels, cfg.obs_height, cfg.obs_width}, cfg.dtype);
    for (std::size_t i = 0; i < obs_size_; ++i) x.set(i, obs[i]);
    Tensor e = encode_states(params_, x);
    std::vector<float> feat(static_cast<std::size_t>(cfg.d_model));
    for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = static_cast<float>(e.at(i));
    return cache_.emplace(key, std::move(feat)).first->second;
}

Tensor FrozenEncoder::feature_rows(const std::vector<const float*>& obs_rows) {
    const int d = d_model();
    Tensor out = Tensor::zeros({static_cast<int>(obs_rows.size()), d}, nn::Dtype::F32);
    for (std::size_t r = 0; r < obs_rows.size(); ++r) {
        const auto& f = features(obs_rows[r]);
        for (int i = 0; i < d; ++i) out.set(r * static_cast<std::size_t>(d) + i, f[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace trajmask
