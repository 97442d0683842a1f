#include <deque>

#include <doctest.h>

#include "trajmask/gridworld.hpp"

using namespace trajmask;

namespace {

// independent reachability check (BFS over free cells)
bool goal_reachable_from_everywhere(const GridWorldSpec& s) {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(s.height) * s.width, 0);
    std::deque<std::pair<int, int>> q{{s.goal_x, s.goal_y}};
    seen[static_cast<std::size_t>(s.goal_y) * s.width + s.goal_x] = 1;
    const int dx[4] = {0, 0, 1, -1}, dy[4] = {1, -1, 0, 0};
    while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop_front();
        for (int k = 0; k < 4; ++k) {
            int nx = x + dx[k], ny = y + dy[k];
            if (!s.in_bounds(nx, ny) || s.is_wall(nx, ny) || s.is_pit(nx, ny)) continue;
            auto& v = seen[static_cast<std::size_t>(ny) * s.width + nx];
            if (!v) {
                v = 1;
                q.emplace_back(nx, ny);
            }
        }
    }
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
            if (!s.is_wall(x, y) && !s.is_pit(x, y) &&
                !seen[static_cast<std::size_t>(y) * s.width + x])
                return false;
    return true;
}

}  // namespace

TEST_CASE("all layouts valid and goal-reachable") {
    for (int id = 0; id < GridWorldSpec::kNumLayouts; ++id) {
        GridWorldSpec s = GridWorldSpec::layout(id);
        CHECK(s.layout_id == id);
        CHECK(goal_reachable_from_everywhere(s));
    }
    CHECK_THROWS_AS(GridWorldSpec::layout(8), ContractError);
    CHECK_THROWS_AS(GridWorldSpec::layout(-1), ContractError);
}

TEST_CASE("layouts are pairwise distinct") {
    for (int a = 0; a < GridWorldSpec::kNumLayouts; ++a)
        for (int b = a + 1; b < GridWorldSpec::kNumLayouts; ++b) {
            GridWorldSpec sa = GridWorldSpec::layout(a);
            GridWorldSpec sb = GridWorldSpec::layout(b);
            bool differ = sa.walls != sb.walls || sa.goal_x != sb.goal_x || sa.goal_y != sb.goal_y;
            CHECK(differ);
        }
}

TEST_CASE("unreachable layout is rejected") {
    CHECK_THROWS_AS(GridWorldSpec::from_rows(0, {"G#", "#."}), ContractError);
}

TEST_CASE("render is deterministic and well-formed") {
    GridWorldSpec s = GridWorldSpec::layout(3);  // has a pit
    auto a = s.render_vec(2, 4);
    auto b = s.render_vec(2, 4);
    CHECK(a == b);

    for (float v : a) CHECK((v >= 0.0f && v <= 1.0f));

    // exactly one 3x3 agent block in channel 0
    int lit = 0;
    for (int i = 0; i < 24 * 24; ++i)
        if (a[static_cast<std::size_t>(i)] == 1.0f) ++lit;
    CHECK(lit == 9);

    // pit is rendered at half intensity in the wall channel
    bool saw_half = false;
    for (int i = 24 * 24; i < 2 * 24 * 24; ++i)
        if (a[static_cast<std::size_t>(i)] == 0.5f) saw_half = true;
    CHECK(saw_half);

    // moving the agent changes only channel 0
    auto c = s.render_vec(3, 4);
    CHECK(std::vector<float>(a.begin() + 24 * 24, a.end()) ==
          std::vector<float>(c.begin() + 24 * 24, c.end()));
    CHECK(a != c);
}

TEST_CASE("step mechanics") {
    GridWorldSpec s = GridWorldSpec::layout(1);  // vertical wall at x=3 with gaps
    GridWorld env(s);

    env.reset_at(2, 0);
    CHECK_FALSE(env.done());
    StepResult r = env.step(kRight);  // bump into wall at (3,0)
    CHECK(env.agent_x() == 2);
    CHECK(r.reward == 0.0f);

    env.step(kNoop);
    CHECK(env.agent_x() == 2);
    CHECK(env.agent_y() == 0);

    env.step(kUp);  // border bump
    CHECK(env.agent_y() == 0);

    auto f = env.factored();
    CHECK(f[0] == 2);
    CHECK(f[1] == 0);
    CHECK(f[2] == s.max_episode_len - 3);

    // reach the goal at (7,0)
    env.reset_at(6, 0);
    r = env.step(kRight);
    CHECK(r.reward == 1.0f);
    CHECK(r.done);
    CHECK(env.done());
    CHECK_THROWS_AS(env.step(kNoop), ContractError);
}

TEST_CASE("pit and timeout terminate") {
    GridWorldSpec s = GridWorldSpec::layout(3);
    GridWorld env(s);
    env.reset_at(s.pit_x - 1, s.pit_y);
    StepResult r = env.step(kRight);
    CHECK(r.reward == -1.0f);
    CHECK(r.done);

    env.reset_at(0, 0);
    StepResult last{};
    for (int i = 0; i < s.max_episode_len; ++i) last = env.step(kNoop);
    CHECK(last.done);
    CHECK(last.reward == 0.0f);
    CHECK(env.factored()[2] == 0);
}

TEST_CASE("reset draws random free cells deterministically") {
    GridWorldSpec s = GridWorldSpec::layout(0);
    Rng r1(5), r2(5);
    GridWorld e1(s), e2(s);
    for (int i = 0; i < 20; ++i) {
        e1.reset(r1);
        e2.reset(r2);
        CHECK(e1.agent_x() == e2.agent_x());
        CHECK(e1.agent_y() == e2.agent_y());
        CHECK_FALSE(s.is_wall(e1.agent_x(), e1.agent_y()));
        CHECK_FALSE(s.is_goal(e1.agent_x(), e1.agent_y()));
    }
}
