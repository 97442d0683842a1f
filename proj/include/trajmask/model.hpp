#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "trajmask/masking.hpp"
#include "trajmask/tensor.hpp"

namespace trajmask {

enum class EncoderScale : std::uint8_t { Small = 0, Medium = 1, Large = 2 };

const char* scale_name(EncoderScale s);
EncoderScale scale_from_name(const std::string& name);

struct ScaleDims {
    int w1;      // stem width
    int w2;      // second stage width
    int blocks;  // residual blocks per stage
};
ScaleDims scale_dims(EncoderScale s);  // Small (8,16,1) / Medium (16,32,2) / Large (32,64,3)

struct ModelConfig {
    EncoderScale scale = EncoderScale::Medium;
    int d_model = 64;
    int d_proj = 32;
    int num_blocks = 2;  // L
    int num_heads = 4;
    int ff_hidden = 128;
    double gate_bias = 2.0;  // z-gate bias toward the identity path
    bool gtrxl = true;       // false: original post-norm transformer block
    int max_states = 50;     // K; positional table spans 2K-1 positions
    int num_actions = 5;
    int obs_channels = 3;
    int obs_height = 24;
    int obs_width = 24;
    nn::Dtype dtype = nn::Dtype::F32;

    int seq_capacity() const { return 2 * max_states - 1; }
    void validate() const;
};

// Named parameter collection with deterministic ordering (the checkpoint and
// optimizer both iterate it in creation order).
class ModelParams {
public:
    ModelParams() = default;
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    void set_config(const ModelConfig& c) { cfg_ = c; }
    nn::Tensor param(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::pair<std::string, nn::Tensor>>& entries() const { return entries_; }

    std::vector<nn::Tensor> tensors() const;
    std::vector<nn::Tensor> tensors_with_prefix(const std::string& prefix) const;
    void set_requires_grad(bool rg);
    void set_requires_grad_prefix(const std::string& prefix, bool rg);
    std::int64_t count() const;
    std::int64_t count_prefix(const std::string& prefix) const;

    ModelParams clone() const;              // deep copy (snapshots, target nets)
    void copy_from(const ModelParams& o);   // same structure; copies values only

    void add(const std::string& name, nn::Tensor t);  // used by init and the loader

    std::vector<int> layouts;  // layouts the checkpoint was pretrained on

private:
    ModelConfig cfg_;
    std::vector<std::pair<std::string, nn::Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    friend ModelParams load_checkpoint(const std::string&);
};

std::uint64_t params_fingerprint(const ModelParams& p);  // hash over all values

// ----------------------------- forward passes -----------------------------

// obs [N,C,H,W] (or [C,H,W]) -> [N, d_model]; conv stem, 1x1 residual stages,
// flatten, linear.
nn::Tensor encode_states(const ModelParams& p, const nn::Tensor& obs);
nn::Tensor encode_state(const ModelParams& p, const nn::Tensor& obs);  // [C,H,W] -> [d_model]

// one-hot rows [N, |A|+1] -> [N, d_model]; index |A| is the fixed token
nn::Tensor encode_actions_onehot(const ModelParams& p, const nn::Tensor& onehot);
nn::Tensor encode_action(const ModelParams& p, int action_index);  // -> [d_model]
nn::Tensor action_embedding_table(const ModelParams& p);  // [|A|+1, d_model]

// Adds positional rows then runs the L transformer blocks (bidirectional).
nn::Tensor gtrxl_forward(const ModelParams& p, const nn::Tensor& embeddings);

// projection head g: [n, d_model] -> [n, d_proj]
nn::Tensor project(const ModelParams& p, const nn::Tensor& x);

struct SequenceForward {
    nn::Tensor targets_y;  // [M, d_model]  encoder outputs of the originals
    nn::Tensor outputs_z;  // [M, d_model]  transformer outputs on masked inputs
    nn::Tensor proj_y;     // [M, d_proj]   g(y)
    nn::Tensor proj_z;     // [M, d_proj]   g(z)
    std::vector<int> masked;
};

SequenceForward forward_sequence(const ModelParams& p, const RewardFreeView& view,
                                 const TokenSequence& seq);
// Shares encoder compute across the batch and deduplicates identical
// observations before the conv stack.
std::vector<SequenceForward> forward_batch(const ModelParams& p, const RewardFreeView& view,
                                           const std::vector<TokenSequence>& seqs);

// ----------------------------- checkpoints -----------------------------
//
// "RPMC" | version u16 | scale u8 | d_model u16 | L u16 | named blobs
// (name_len u16, name bytes, rank u8, dims u32..., f32 data). Byte-exact
// round-trip; parse errors carry offsets.

void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// ----------------------------- frozen encoder -----------------------------

// State encoder with gradients disabled and per-observation feature caching
// (the gridworld observation space is tiny, so downstream consumers hit the
// cache almost always).
class FrozenEncoder {
public:
    explicit FrozenEncoder(const ModelParams& full);

    const std::vector<float>& features(const float* obs);  // [d_model]
    nn::Tensor feature_rows(const std::vector<const float*>& obs_rows);  // constant [N, d]

    int d_model() const { return params_.config().d_model; }
    std::size_t obs_size() const { return obs_size_; }
    const ModelParams& params() const { return params_; }
    std::uint64_t fingerprint() const { return params_fingerprint(params_); }

private:
    ModelParams params_;  // full copy with requires_grad off everywhere
    std::size_t obs_size_;
    std::unordered_map<std::uint64_t, std::vector<float>> cache_;
};

}  // namespace trajmask
