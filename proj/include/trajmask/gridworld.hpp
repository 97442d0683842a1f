#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trajmask/common.hpp"

namespace trajmask {

// Pixel gridworld: 8x8 cells rendered as 3x24x24 float observations in [0,1].
// Channel 0 marks the agent cell, channel 1 walls (pit at 0.5), channel 2 the
// goal. Actions: up, down, left, right, noop. Reward +1 at goal, -1 at pit,
// 0 otherwise; episodes end at goal, pit or the step limit.

enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kNoop = 4 };

struct GridWorldSpec {
    int layout_id = 0;
    int height = 8;
    int width = 8;
    std::vector<std::uint8_t> walls;  // height*width, row-major, 1 = wall
    int goal_x = 0, goal_y = 0;
    bool has_pit = false;
    int pit_x = 0, pit_y = 0;
    int max_episode_len = 100;

    static constexpr int kNumActions = 5;
    static constexpr int kCellPixels = 3;
    static constexpr int kObsChannels = 3;
    static constexpr int kNumLayouts = 8;

    int obs_height() const { return height * kCellPixels; }
    int obs_width() const { return width * kCellPixels; }
    std::size_t obs_size() const {
        return static_cast<std::size_t>(kObsChannels) * obs_height() * obs_width();
    }

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool is_wall(int x, int y) const {
        return walls[static_cast<std::size_t>(y) * width + x] != 0;
    }
    bool is_pit(int x, int y) const { return has_pit && x == pit_x && y == pit_y; }
    bool is_goal(int x, int y) const { return x == goal_x && y == goal_y; }

    // Built-in layouts 0..7; throws ContractError for other ids. Construction
    // flood-fill checks that the goal is reachable from every free cell.
    static GridWorldSpec layout(int id);
    // Parses rows of '.', '#', 'G', 'P'; validates reachability.
    static GridWorldSpec from_rows(int id, const std::vector<std::string>& rows);

    // Deterministic render of a factored state (agent position).
    void render(int agent_x, int agent_y, float* out) const;
    std::vector<float> render_vec(int agent_x, int agent_y) const;

    std::vector<std::pair<int, int>> free_cells() const;  // non-wall, non-goal, non-pit
};

struct StepResult {
    float reward = 0.0f;
    bool done = false;
};

class GridWorld {
public:
    explicit GridWorld(GridWorldSpec spec) : spec_(std::move(spec)) {}

    // Random start on a free cell.
    void reset(Rng& rng);
    void reset_at(int x, int y);
    StepResult step(int action);

    bool done() const { return done_; }
    int agent_x() const { return x_; }
    int agent_y() const { return y_; }
    int steps_taken() const { return t_; }
    std::array<int, 3> factored() const { return {x_, y_, spec_.max_episode_len - t_}; }
    void render(float* out) const { spec_.render(x_, y_, out); }
    const GridWorldSpec& spec() const { return spec_; }

private:
    GridWorldSpec spec_;
    int x_ = 0, y_ = 0, t_ = 0;
    bool done_ = true;
};

}  // namespace trajmask
