#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "test_util.hpp"
#include "trajmask/dataset.hpp"

using namespace trajmask;
using tmtest::read_file_bytes;
using tmtest::scratch_dir;

template <class T>
constexpr bool HasRewards = requires(T t) { t.rewards; };

namespace {

// chi-square against Geometric(p) with tail merging so expected counts stay >= 5
double geometric_chi_square(const std::vector<int>& samples, double p, int* dof_out) {
    const double n = static_cast<double>(samples.size());
    int max_bin = 1;
    while (n * std::pow(1 - p, max_bin) * p >= 5.0) ++max_bin;  // bins 1..max_bin, then tail
    std::vector<double> observed(static_cast<std::size_t>(max_bin) + 1, 0.0);
    for (int s : samples) observed[static_cast<std::size_t>(std::min(s, max_bin + 1) - 1)] += 1.0;
    double chi = 0;
    for (int k = 1; k <= max_bin + 1; ++k) {
        double prob = k <= max_bin ? std::pow(1 - p, k - 1) * p : std::pow(1 - p, max_bin);
        double expect = n * prob;
        double d = observed[static_cast<std::size_t>(k - 1)] - expect;
        chi += d * d / expect;
    }
    *dof_out = max_bin;  // bins - 1
    return chi;
}

// conservative 0.01-level critical values for the dof we hit here
double chi2_crit_alpha01(int dof) {
    static const double table[] = {0,      6.635,  9.210,  11.345, 13.277, 15.086, 16.812,
                                   18.475, 20.090, 21.666, 23.209, 24.725, 26.217, 27.688,
                                   29.141, 30.578, 32.000, 33.409, 34.805, 36.191, 37.566};
    REQUIRE(dof >= 1);
    REQUIRE(dof <= 20);
    return table[dof];
}

}  // namespace

TEST_CASE("collect_random basics") {
    GridWorldSpec spec = GridWorldSpec::layout(0);

    TrajectoryDataset one = collect_random(spec, 1, 42);
    CHECK(one.total_transitions == 1);
    CHECK(one.trajectories.size() == 1);
    CHECK(one.trajectories[0].length() == 2);
    CHECK(one.tier == Tier::Random);

    CollectStats stats;
    TrajectoryDataset ds = collect_random(spec, 1000, 7, &stats);
    CHECK(ds.total_transitions == 1000);
    ds.validate();

    // action repeats are Geometric(1/3): completed runs average 3 +- 0.3
    double mean = 0;
    for (int r : stats.completed_runs) mean += r;
    mean /= static_cast<double>(stats.completed_runs.size());
    CHECK(mean == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("random tier repeat lengths pass a chi-square against Geometric(1/3)") {
    GridWorldSpec spec = GridWorldSpec::layout(2);
    CollectStats stats;
    collect_random(spec, 40000, 123, &stats);
    REQUIRE(stats.completed_runs.size() > 10000);
    std::vector<int> runs(stats.completed_runs.begin(), stats.completed_runs.begin() + 10000);
    int dof = 0;
    double chi = geometric_chi_square(runs, 1.0 / 3.0, &dof);
    CHECK(chi < chi2_crit_alpha01(dof));
}

TEST_CASE("collect_random determinism is byte-exact") {
    GridWorldSpec spec = GridWorldSpec::layout(1);
    std::string dir = scratch_dir("ds_determinism");
    save_dataset(collect_random(spec, 500, 99), dir + "/a.rpmd");
    save_dataset(collect_random(spec, 500, 99), dir + "/b.rpmd");
    CHECK(read_file_bytes(dir + "/a.rpmd") == read_file_bytes(dir + "/b.rpmd"));
    save_dataset(collect_random(spec, 500, 100), dir + "/c.rpmd");
    CHECK(read_file_bytes(dir + "/a.rpmd") != read_file_bytes(dir + "/c.rpmd"));
}

TEST_CASE("dataset round-trip preserves every field") {
    GridWorldSpec spec = GridWorldSpec::layout(3);
    TrajectoryDataset ds = collect_random(spec, 300, 5);
    std::string dir = scratch_dir("ds_roundtrip");
    std::string path = dir + "/d.rpmd";
    save_dataset(ds, path);
    TrajectoryDataset back = load_dataset(path);

    CHECK(back.tier == ds.tier);
    CHECK(back.spec.layout_id == ds.spec.layout_id);
    CHECK(back.total_transitions == ds.total_transitions);
    REQUIRE(back.trajectories.size() == ds.trajectories.size());
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        CHECK(back.trajectories[i].obs == ds.trajectories[i].obs);
        CHECK(back.trajectories[i].actions == ds.trajectories[i].actions);
        CHECK(back.trajectories[i].factored == ds.trajectories[i].factored);
        CHECK(back.trajectories[i].rewards == ds.trajectories[i].rewards);
    }

    // save(load(x)) is byte-identical to x
    save_dataset(back, dir + "/d2.rpmd");
    CHECK(read_file_bytes(path) == read_file_bytes(dir + "/d2.rpmd"));
}

TEST_CASE("corrupt and truncated dataset files are rejected with offsets") {
    GridWorldSpec spec = GridWorldSpec::layout(0);
    std::string dir = scratch_dir("ds_corrupt");
    std::string path = dir + "/d.rpmd";
    save_dataset(collect_random(spec, 50, 3), path);

    auto bytes = read_file_bytes(path);
    {
        auto bad = bytes;
        bad[0] = 'X';
        std::ofstream(dir + "/bad_magic.rpmd", std::ios::binary)
            .write(bad.data(), static_cast<std::streamsize>(bad.size()));
        try {
            load_dataset(dir + "/bad_magic.rpmd");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("RPMD") != std::string::npos);
        }
    }
    {
        Rng rng(17);
        for (int trial = 0; trial < 5; ++trial) {
            std::size_t cut = 13 + static_cast<std::size_t>(
                                       rng.uniform_int(0, static_cast<std::int64_t>(bytes.size()) - 14));
            std::ofstream(dir + "/trunc.rpmd", std::ios::binary)
                .write(bytes.data(), static_cast<std::streamsize>(cut));
            try {
                load_dataset(dir + "/trunc.rpmd");
                FAIL("expected ParseError for truncation at " << cut);
            } catch (const ParseError& e) {
                CHECK(e.offset <= cut);
            }
        }
    }
}

TEST_CASE("reward-free view exposes only states and actions") {
    GridWorldSpec spec = GridWorldSpec::layout(0);
    TrajectoryDataset ds = collect_random(spec, 120, 11);
    RewardFreeView v = RewardFreeView::from(ds);
    CHECK(v.trajs.size() == ds.trajectories.size());
    CHECK(v.obs_size == spec.obs_size());
    CHECK(v.layout_ids == std::vector<int>{0});

    // the surface physically lacks rewards
    static_assert(!HasRewards<RewardFreeTraj>);
    static_assert(HasRewards<Trajectory>);

    std::int64_t states = 0, actions = 0;
    for (const auto& t : ds.trajectories) {
        states += t.length();
        actions += t.length() - 1;
    }
    CHECK(v.total_states() == states);
    CHECK(v.total_actions() == actions);

    // locate round-trips against a brute-force walk
    std::int64_t g = 0;
    for (std::size_t ti = 0; ti < v.trajs.size(); ++ti)
        for (int t = 0; t < v.trajs[ti].length; ++t, ++g) {
            auto [a, b] = v.locate_state(g);
            CHECK(a == static_cast<int>(ti));
            CHECK(b == t);
        }
}

TEST_CASE("weak and mixed tiers: counts, blocks, determinism") {
    GridWorldSpec spec = GridWorldSpec::layout(0);

    TrajectoryDataset weak = collect_weak(spec, 500, 21);
    CHECK(weak.tier == Tier::Weak);
    CHECK(weak.total_transitions == 500);

    TrajectoryDataset weak2 = collect_weak(spec, 500, 21);
    std::string dir = scratch_dir("ds_weak");
    save_dataset(weak, dir + "/w1.rpmd");
    save_dataset(weak2, dir + "/w2.rpmd");
    CHECK(read_file_bytes(dir + "/w1.rpmd") == read_file_bytes(dir + "/w2.rpmd"));

    CHECK_THROWS_AS(collect_mixed(spec, 1000, 1, 3), ConfigError);
    TrajectoryDataset mixed = collect_mixed(spec, 1000, 5, 21, 6000);
    CHECK(mixed.tier == Tier::Mixed);
    CHECK(mixed.total_transitions == 1000);

    TrajectoryDataset mixed2 = collect_mixed(spec, 1000, 5, 21, 6000);
    save_dataset(mixed, dir + "/m1.rpmd");
    save_dataset(mixed2, dir + "/m2.rpmd");
    CHECK(read_file_bytes(dir + "/m1.rpmd") == read_file_bytes(dir + "/m2.rpmd"));
}

TEST_CASE("tier quality ordering at small scale") {
    GridWorldSpec spec = GridWorldSpec::layout(0);
    TrajectoryDataset rnd = collect_random(spec, 6000, 31);
    TrajectoryDataset weak = collect_weak(spec, 6000, 31);
    TrajectoryDataset mixed = collect_mixed(spec, 6000, 5, 31, 12000);
    CHECK(weak.mean_episode_return() > rnd.mean_episode_return());
    CHECK(mixed.mean_episode_return() >= weak.mean_episode_return());
}
