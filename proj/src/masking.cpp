#include "trajmask/masking.hpp"

#include <algorithm>

namespace trajmask {

void MaskConfig::validate() const {
    if (!(anchor_prob > 0.0 && anchor_prob < 1.0))
        throw ConfigError("mask.p must lie in (0,1), got " + std::to_string(anchor_prob));
    if (max_run < 1) throw ConfigError("mask.n must be >= 1, got " + std::to_string(max_run));
    if (segment_states < 2)
        throw ConfigError("K must be >= 2, got " + std::to_string(segment_states));
    if (expected_masked_fraction() > 0.5)
        throw ConfigError("expected masked fraction p*(n+1)/2 = " +
                          std::to_string(expected_masked_fraction()) + " exceeds 0.5");
}

std::vector<int> TokenSequence::masked_positions() const {
    std::vector<int> out;
    for (int i = 0; i < seq_len(); ++i)
        if (slots[static_cast<std::size_t>(i)].masked) out.push_back(i);
    return out;
}

std::vector<std::pair<int, int>> cut_offsets(int traj_len, int K, Rng& rng) {
    std::vector<std::pair<int, int>> out;
    if (traj_len < 2) return out;
    int off = 0;
    int rem = traj_len;
    while (rem >= 2) {
        int hi = std::min(K, rem);
        int take = static_cast<int>(rng.uniform_int(2, hi));
        if (rem - take == 1) {
            // avoid an uncoverable single trailing state
            if (take + 1 <= hi)
                ++take;
            else if (take > 2)
                --take;
            // K == 2 with odd length: no fix exists, final state gets dropped
        }
        out.emplace_back(off, take);
        off += take;
        rem -= take;
    }
    return out;
}

std::vector<Segment> cut_segments(const RewardFreeView& view, int traj_ref, int K, Rng& rng) {
    if (traj_ref < 0 || traj_ref >= static_cast<int>(view.trajs.size()))
        throw ContractError("cut_segments: trajectory index " + std::to_string(traj_ref) +
                            " out of range");
    const auto& traj = view.trajs[static_cast<std::size_t>(traj_ref)];
    std::vector<Segment> segs;
    for (auto [off, n] : cut_offsets(traj.length, K, rng)) {
        Segment s;
        s.traj_ref = traj_ref;
        s.offset = off;
        s.num_states = n;
        segs.push_back(s);
    }
    return segs;
}

namespace {

// One anchor pass. Returns true if anything got masked.
bool anchor_pass(int seq_len, const MaskConfig& cfg, Rng& rng, std::vector<std::uint8_t>& masked,
                 std::vector<int>& sampled_runs) {
    bool any = false;
    for (int i = 0; i < seq_len; ++i) {
        if (!rng.bernoulli(cfg.anchor_prob)) continue;
        int run = static_cast<int>(rng.uniform_int(1, cfg.max_run));
        sampled_runs.push_back(run);
        // consecutive same-kind items sit two positions apart
        for (int r = 0; r < run; ++r) {
            int pos = i + 2 * r;
            if (pos >= seq_len) break;  // clip at the segment boundary
            masked[static_cast<std::size_t>(pos)] = 1;
            any = true;
        }
    }
    return any;
}

}  // namespace

MaskPlan sample_mask_plan(int seq_len, const MaskConfig& cfg, Rng& rng) {
    cfg.validate();
    if (seq_len < 3 || seq_len % 2 == 0)
        throw ContractError("sample_mask_plan: sequence length must be odd and >= 3, got " +
                            std::to_string(seq_len));
    MaskPlan plan;
    std::vector<std::uint8_t> masked(static_cast<std::size_t>(seq_len), 0);
    if (!anchor_pass(seq_len, cfg, rng, masked, plan.sampled_runs)) {
        if (!anchor_pass(seq_len, cfg, rng, masked, plan.sampled_runs)) {
            // still empty: force one anchor so every training sequence has targets
            int i = static_cast<int>(rng.uniform_int(0, seq_len - 1));
            int run = static_cast<int>(rng.uniform_int(1, cfg.max_run));
            plan.sampled_runs.push_back(run);
            for (int r = 0; r < run; ++r) {
                int pos = i + 2 * r;
                if (pos >= seq_len) break;
                masked[static_cast<std::size_t>(pos)] = 1;
            }
        }
    }
    for (int i = 0; i < seq_len; ++i)
        if (masked[static_cast<std::size_t>(i)]) plan.masked_indices.push_back(i);
    plan.replacements.reserve(plan.masked_indices.size());
    for (std::size_t i = 0; i < plan.masked_indices.size(); ++i) {
        if (cfg.scheme == ReplacementScheme::FixedOnly) {
            plan.replacements.push_back(Replacement::FixedToken);
        } else {
            double u = rng.uniform();
            plan.replacements.push_back(u < 0.8 ? Replacement::FixedToken
                                        : u < 0.9 ? Replacement::RandomSameKind
                                                  : Replacement::Unchanged);
        }
    }
    return plan;
}

TokenSequence apply_mask(const RewardFreeView& view, const Segment& seg, const MaskPlan& plan,
                         Rng& rng) {
    const auto& traj = view.trajs[static_cast<std::size_t>(seg.traj_ref)];
    if (seg.offset < 0 || seg.num_states < 2 || seg.offset + seg.num_states > traj.length)
        throw ContractError("apply_mask: segment out of trajectory bounds");
    TokenSequence ts;
    ts.traj_ref = seg.traj_ref;
    ts.offset = seg.offset;
    ts.num_states = seg.num_states;
    ts.slots.resize(static_cast<std::size_t>(seg.seq_len()));
    for (int i = 0; i < seg.seq_len(); ++i) {
        TokenSlot& slot = ts.slots[static_cast<std::size_t>(i)];
        slot.is_state = (i % 2 == 0);
        if (slot.is_state) {
            slot.orig_t = seg.offset + i / 2;
            slot.in_traj = seg.traj_ref;
            slot.in_t = slot.orig_t;
        } else {
            slot.orig_action = traj.actions[static_cast<std::size_t>(seg.offset + (i - 1) / 2)];
            slot.in_action = slot.orig_action;
        }
    }
    for (std::size_t m = 0; m < plan.masked_indices.size(); ++m) {
        int pos = plan.masked_indices[m];
        if (pos < 0 || pos >= seg.seq_len())
            throw ContractError("apply_mask: plan index outside the sequence");
        TokenSlot& slot = ts.slots[static_cast<std::size_t>(pos)];
        slot.masked = true;
        switch (plan.replacements[m]) {
            case Replacement::FixedToken:
                if (slot.is_state) {
                    slot.input_fixed = true;
                } else {
                    slot.in_action = view.num_actions;  // reserved one-hot index
                }
                break;
            case Replacement::RandomSameKind:
                if (slot.is_state) {
                    auto [tr, t] = view.locate_state(
                        rng.uniform_int(0, view.total_states() - 1));
                    slot.in_traj = tr;
                    slot.in_t = t;
                } else {
                    auto [tr, t] = view.locate_action(
                        rng.uniform_int(0, view.total_actions() - 1));
                    slot.in_action =
                        view.trajs[static_cast<std::size_t>(tr)].actions[static_cast<std::size_t>(t)];
                }
                break;
            case Replacement::Unchanged:
                break;  // payload stays the original; position is still predicted
        }
    }
    return ts;
}

}  // namespace trajmask
