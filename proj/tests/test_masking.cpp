#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "trajmask/masking.hpp"

using namespace trajmask;

namespace {

RewardFreeView tiny_view(TrajectoryDataset& ds, int transitions = 400, int layout = 0,
                         std::uint64_t seed = 9) {
    ds = collect_random(GridWorldSpec::layout(layout), transitions, seed);
    return RewardFreeView::from(ds);
}

}  // namespace

TEST_CASE("mask config validation") {
    MaskConfig bad;
    bad.anchor_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.anchor_prob = 0.4;
    bad.max_run = 3;  // 0.4 * 2 = 0.8 expected masked fraction
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    MaskConfig ok;
    CHECK(ok.expected_masked_fraction() == doctest::Approx(0.2));
    ok.validate();
}

TEST_CASE("cut_offsets partitions exactly") {
    Rng rng(1);
    SUBCASE("T=100 K=50 gives 2 or 3 covering segments") {
        for (int t = 0; t < 50; ++t) {
            auto segs = cut_offsets(100, 50, rng);
            CHECK(segs.size() >= 2);
            CHECK(segs.size() <= 50);
            int off = 0;
            for (auto [o, n] : segs) {
                CHECK(o == off);
                CHECK(n >= 2);
                CHECK(n <= 50);
                off += n;
            }
            CHECK(off == 100);
        }
    }
    SUBCASE("T=K gives segment sizes that still cover") {
        auto segs = cut_offsets(50, 50, rng);
        int total = 0;
        for (auto [o, n] : segs) total += n;
        CHECK(total == 50);
    }
    SUBCASE("short trajectories") {
        CHECK(cut_offsets(1, 50, rng).empty());
        auto two = cut_offsets(2, 50, rng);
        REQUIRE(two.size() == 1);
        CHECK(two[0] == std::pair<int, int>{0, 2});
    }
    SUBCASE("reconstruction over random lengths") {
        for (int trial = 0; trial < 1000; ++trial) {
            int T = 2 + static_cast<int>(rng.uniform_int(0, 118));
            int K = 3 + static_cast<int>(rng.uniform_int(0, 47));
            auto segs = cut_offsets(T, K, rng);
            int off = 0;
            for (auto [o, n] : segs) {
                CHECK(o == off);
                CHECK(n >= 2);
                CHECK(n <= K);
                off += n;
            }
            CHECK(off == T);  // full cover, no overlap, in order
        }
    }
}

TEST_CASE("anchor rate matches p") {
    MaskConfig cfg;
    cfg.anchor_prob = 0.10;
    Rng rng(77);
    std::int64_t anchors = 0, items = 0;
    const int M = 99;
    while (items < 100000) {
        MaskPlan plan = sample_mask_plan(M, cfg, rng);
        anchors += static_cast<std::int64_t>(plan.sampled_runs.size());
        items += M;
    }
    double rate = static_cast<double>(anchors) / static_cast<double>(items);
    CHECK(rate > 0.095);
    CHECK(rate < 0.105);
}

TEST_CASE("run lengths are uniform on 1..n") {
    MaskConfig cfg;
    Rng rng(101);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(cfg.max_run), 0);
    std::int64_t total = 0;
    while (total < 100000) {
        MaskPlan plan = sample_mask_plan(99, cfg, rng);
        for (int r : plan.sampled_runs) {
            ++counts[static_cast<std::size_t>(r - 1)];
            ++total;
        }
    }
    double expect = static_cast<double>(total) / cfg.max_run;
    double chi = 0;
    for (auto c : counts) {
        double d = static_cast<double>(c) - expect;
        chi += d * d / expect;
    }
    CHECK(chi < 9.21);  // alpha = 0.01, dof 2
}

TEST_CASE("replacement mix is 80/10/10") {
    MaskConfig cfg;
    Rng rng(55);
    std::int64_t fixed = 0, random_kind = 0, unchanged = 0;
    std::int64_t total = 0;
    while (total < 100000) {
        MaskPlan plan = sample_mask_plan(99, cfg, rng);
        for (Replacement r : plan.replacements) {
            ++total;
            if (r == Replacement::FixedToken) ++fixed;
            if (r == Replacement::RandomSameKind) ++random_kind;
            if (r == Replacement::Unchanged) ++unchanged;
        }
    }
    CHECK(std::fabs(static_cast<double>(fixed) / total - 0.8) < 0.01);
    CHECK(std::fabs(static_cast<double>(random_kind) / total - 0.1) < 0.01);
    CHECK(std::fabs(static_cast<double>(unchanged) / total - 0.1) < 0.01);
}

TEST_CASE("fixed-only scheme masks everything with the fixed token") {
    MaskConfig cfg;
    cfg.scheme = ReplacementScheme::FixedOnly;
    Rng rng(5);
    MaskPlan plan = sample_mask_plan(99, cfg, rng);
    for (Replacement r : plan.replacements) CHECK(r == Replacement::FixedToken);
}

TEST_CASE("masked runs stay within one kind and never cross boundaries") {
    MaskConfig cfg;
    cfg.anchor_prob = 0.2;
    cfg.max_run = 3;
    Rng rng(31);
    for (int trial = 0; trial < 500; ++trial) {
        MaskPlan plan = sample_mask_plan(21, cfg, rng);
        CHECK_FALSE(plan.masked_indices.empty());
        CHECK(std::is_sorted(plan.masked_indices.begin(), plan.masked_indices.end()));
        for (int idx : plan.masked_indices) {
            CHECK(idx >= 0);
            CHECK(idx < 21);
        }
    }
}

TEST_CASE("plans are never empty even at tiny p") {
    MaskConfig cfg;
    cfg.anchor_prob = 0.01;
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        MaskPlan plan = sample_mask_plan(3, cfg, rng);
        CHECK_FALSE(plan.masked_indices.empty());
    }
}

TEST_CASE("mask pipeline is deterministic per seed") {
    TrajectoryDataset ds;
    RewardFreeView view = tiny_view(ds);
    MaskConfig cfg;
    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        auto segs = cut_segments(view, 0, 10, rng);
        REQUIRE_FALSE(segs.empty());
        MaskPlan plan = sample_mask_plan(segs[0].seq_len(), cfg, rng);
        TokenSequence ts = apply_mask(view, segs[0], plan, rng);
        std::vector<int> sig;
        for (const auto& s : ts.slots) {
            sig.push_back(s.masked ? 1 : 0);
            sig.push_back(s.input_fixed ? 1 : 0);
            sig.push_back(s.is_state ? s.in_t : s.in_action);
            sig.push_back(s.is_state ? s.orig_t : s.orig_action);
        }
        return sig;
    };
    CHECK(run(4) == run(4));
    CHECK(run(4) != run(5));
}

TEST_CASE("apply_mask payload semantics") {
    TrajectoryDataset ds;
    RewardFreeView view = tiny_view(ds, 600);
    MaskConfig cfg;
    cfg.anchor_prob = 0.3;
    cfg.max_run = 2;
    Rng rng(13);

    int saw_fixed_state = 0, saw_fixed_action = 0, saw_unchanged = 0, saw_random = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto segs = cut_segments(view, trial % static_cast<int>(view.trajs.size()), 8, rng);
        if (segs.empty()) continue;
        const Segment& seg = segs[0];
        MaskPlan plan = sample_mask_plan(seg.seq_len(), cfg, rng);
        TokenSequence ts = apply_mask(view, seg, plan, rng);
        REQUIRE(ts.seq_len() == seg.seq_len());

        const auto& traj = view.trajs[static_cast<std::size_t>(seg.traj_ref)];
        std::set<int> masked(plan.masked_indices.begin(), plan.masked_indices.end());
        for (int i = 0; i < ts.seq_len(); ++i) {
            const TokenSlot& s = ts.slots[static_cast<std::size_t>(i)];
            CHECK(s.is_state == (i % 2 == 0));
            CHECK(s.masked == (masked.count(i) > 0));
            if (s.is_state)
                CHECK(s.orig_t == seg.offset + i / 2);
            else
                CHECK(s.orig_action ==
                      traj.actions[static_cast<std::size_t>(seg.offset + (i - 1) / 2)]);
            if (!s.masked) {
                // unmasked positions carry the originals untouched
                if (s.is_state) {
                    CHECK_FALSE(s.input_fixed);
                    CHECK(s.in_traj == seg.traj_ref);
                    CHECK(s.in_t == s.orig_t);
                } else {
                    CHECK(s.in_action == s.orig_action);
                }
            }
        }
        for (std::size_t m = 0; m < plan.masked_indices.size(); ++m) {
            const TokenSlot& s = ts.slots[static_cast<std::size_t>(plan.masked_indices[m])];
            switch (plan.replacements[m]) {
                case Replacement::FixedToken:
                    if (s.is_state) {
                        CHECK(s.input_fixed);
                        ++saw_fixed_state;
                    } else {
                        CHECK(s.in_action == view.num_actions);
                        ++saw_fixed_action;
                    }
                    break;
                case Replacement::Unchanged:
                    CHECK(s.masked);  // still predicted
                    if (s.is_state) {
                        CHECK(s.in_traj == seg.traj_ref);
                        CHECK(s.in_t == s.orig_t);
                    } else {
                        CHECK(s.in_action == s.orig_action);
                    }
                    ++saw_unchanged;
                    break;
                case Replacement::RandomSameKind:
                    if (s.is_state) {
                        CHECK(s.in_t < view.trajs[static_cast<std::size_t>(s.in_traj)].length);
                    } else {
                        CHECK(s.in_action < view.num_actions);
                    }
                    ++saw_random;
                    break;
            }
        }
    }
    CHECK(saw_fixed_state > 0);
    CHECK(saw_fixed_action > 0);
    CHECK(saw_unchanged > 0);
    CHECK(saw_random > 0);
}

TEST_CASE("state anchors mask consecutive states, skipping actions") {
    // distill the run-extension rule: an anchor at an even (state) position
    // with run length r covers positions i, i+2, ..., all even
    MaskConfig cfg;
    cfg.anchor_prob = 0.05;
    cfg.max_run = 3;
    Rng rng(71);
    bool saw_multi_state_run = false;
    for (int trial = 0; trial < 2000 && !saw_multi_state_run; ++trial) {
        MaskPlan plan = sample_mask_plan(11, cfg, rng);
        if (plan.sampled_runs.size() != 1 || plan.sampled_runs[0] < 2) continue;
        // skip runs clipped at the boundary; unclipped runs mask `run` items
        if (static_cast<int>(plan.masked_indices.size()) != plan.sampled_runs[0]) continue;
        // single anchor: all masked indices share parity and step by 2
        int parity = plan.masked_indices[0] % 2;
        for (std::size_t i = 0; i < plan.masked_indices.size(); ++i) {
            CHECK(plan.masked_indices[i] % 2 == parity);
            if (i > 0) CHECK(plan.masked_indices[i] - plan.masked_indices[i - 1] == 2);
        }
        if (parity == 0) saw_multi_state_run = true;
    }
    CHECK(saw_multi_state_run);
}
