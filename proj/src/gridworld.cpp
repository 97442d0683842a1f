#include "trajmask/gridworld.hpp"

#include <cstring>
#include <deque>

namespace trajmask {

namespace {

// clang-format off
const std::vector<std::string> kLayouts[GridWorldSpec::kNumLayouts] = {
    {  // 0: scattered obstacles, goal in the far corner
        "........",
        ".##..#..",
        ".#...#..",
        ".#.##...",
        "........",
        ".###.##.",
        ".#......",
        ".....#.G",
    },
    {  // 1: vertical wall with two gaps
        "...#...G",
        "...#....",
        "...#....",
        "........",
        "...#....",
        "...#....",
        "........",
        "...#....",
    },
    {  // 2: four rooms
        "........",
        "...#....",
        "...#..G.",
        "##.####.",
        "...#....",
        "...#....",
        ".....#..",
        "...#....",
    },
    {  // 3: horizontal bars and a pit
        "........",
        "######..",
        "........",
        "..####..",
        "....P...",
        "######..",
        "...G....",
        "........",
    },
    {  // 4: spiral toward a central goal
        "........",
        ".######.",
        ".#....#.",
        ".#.G..#.",
        ".#......",
        ".#####..",
        ".#......",
        "........",
    },
    {  // 5: open field, single pit guarding the goal
        "........",
        "..##....",
        "........",
        ".....##.",
        "..P.....",
        "........",
        ".G......",
        "........",
    },
    {  // 6: corridors, goal top-left (transfer hold-out)
        "G.#.....",
        "..#..#..",
        "..#..#..",
        ".....#..",
        "..####..",
        "........",
        ".#...##.",
        ".#......",
    },
    {  // 7: diagonal obstacles and a pit (transfer hold-out)
        "........",
        ".#......",
        "..#..P..",
        "...#...G",
        "....#...",
        ".....#..",
        "........",
        "..##....",
    },
};
// clang-format on

}  // namespace

GridWorldSpec GridWorldSpec::from_rows(int id, const std::vector<std::string>& rows) {
    GridWorldSpec s;
    s.layout_id = id;
    s.height = static_cast<int>(rows.size());
    s.width = static_cast<int>(rows.empty() ? 0 : rows[0].size());
    s.walls.assign(static_cast<std::size_t>(s.height) * s.width, 0);
    bool saw_goal = false;
    for (int y = 0; y < s.height; ++y) {
        if (static_cast<int>(rows[y].size()) != s.width)
            throw ContractError("gridworld: ragged layout rows");
        for (int x = 0; x < s.width; ++x) {
            char c = rows[y][static_cast<std::size_t>(x)];
            switch (c) {
                case '.': break;
                case '#': s.walls[static_cast<std::size_t>(y) * s.width + x] = 1; break;
                case 'G':
                    s.goal_x = x;
                    s.goal_y = y;
                    saw_goal = true;
                    break;
                case 'P':
                    s.has_pit = true;
                    s.pit_x = x;
                    s.pit_y = y;
                    break;
                default:
                    throw ContractError(std::string("gridworld: bad layout char '") + c + "'");
            }
        }
    }
    if (!saw_goal) throw ContractError("gridworld: layout has no goal");

    // Flood fill from the goal; pits block since entering one ends the episode.
    std::vector<std::uint8_t> seen(s.walls.size(), 0);
    std::deque<std::pair<int, int>> queue;
    queue.emplace_back(s.goal_x, s.goal_y);
    seen[static_cast<std::size_t>(s.goal_y) * s.width + s.goal_x] = 1;
    const int dx[4] = {0, 0, -1, 1};
    const int dy[4] = {-1, 1, 0, 0};
    while (!queue.empty()) {
        auto [cx, cy] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            int nx = cx + dx[k], ny = cy + dy[k];
            if (!s.in_bounds(nx, ny) || s.is_wall(nx, ny) || s.is_pit(nx, ny)) continue;
            std::size_t i = static_cast<std::size_t>(ny) * s.width + nx;
            if (!seen[i]) {
                seen[i] = 1;
                queue.emplace_back(nx, ny);
            }
        }
    }
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            if (s.is_wall(x, y) || s.is_pit(x, y)) continue;
            if (!seen[static_cast<std::size_t>(y) * s.width + x])
                throw ContractError("gridworld layout " + std::to_string(id) +
                                    ": goal unreachable from (" + std::to_string(x) + "," +
                                    std::to_string(y) + ")");
        }
    return s;
}

GridWorldSpec GridWorldSpec::layout(int id) {
    if (id < 0 || id >= kNumLayouts)
        throw ContractError("gridworld: layout_id " + std::to_string(id) + " out of [0," +
                            std::to_string(kNumLayouts) + ")");
    return from_rows(id, kLayouts[id]);
}

void GridWorldSpec::render(int agent_x, int agent_y, float* out) const {
    const int oh = obs_height(), ow = obs_width();
    std::memset(out, 0, obs_size() * sizeof(float));
    auto fill_cell = [&](int ch, int cx, int cy, float v) {
        float* plane = out + static_cast<std::size_t>(ch) * oh * ow;
        for (int py = 0; py < kCellPixels; ++py) {
            float* row = plane + static_cast<std::size_t>(cy * kCellPixels + py) * ow +
                         cx * kCellPixels;
            for (int px = 0; px < kCellPixels; ++px) row[px] = v;
        }
    };
    fill_cell(0, agent_x, agent_y, 1.0f);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (is_wall(x, y)) fill_cell(1, x, y, 1.0f);
    if (has_pit) fill_cell(1, pit_x, pit_y, 0.5f);
    fill_cell(2, goal_x, goal_y, 1.0f);
}

std::vector<float> GridWorldSpec::render_vec(int agent_x, int agent_y) const {
    std::vector<float> v(obs_size());
    render(agent_x, agent_y, v.data());
    return v;
}

std::vector<std::pair<int, int>> GridWorldSpec::free_cells() const {
    std::vector<std::pair<int, int>> cells;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (!is_wall(x, y) && !is_goal(x, y) && !is_pit(x, y)) cells.emplace_back(x, y);
    return cells;
}

void GridWorld::reset(Rng& rng) {
    auto cells = spec_.free_cells();
    auto [x, y] = cells[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
    reset_at(x, y);
}

void GridWorld::reset_at(int x, int y) {
    x_ = x;
    y_ = y;
    t_ = 0;
    done_ = false;
}

StepResult GridWorld::step(int action) {
    if (done_) throw ContractError("gridworld: step() after episode end");
    if (action < 0 || action >= GridWorldSpec::kNumActions)
        throw ContractError("gridworld: action " + std::to_string(action) + " out of range");
    int nx = x_, ny = y_;
    switch (action) {
        case kUp: ny -= 1; break;
        case kDown: ny += 1; break;
        case kLeft: nx -= 1; break;
        case kRight: nx += 1; break;
        case kNoop: break;
    }
    if (spec_.in_bounds(nx, ny) && !spec_.is_wall(nx, ny)) {
        x_ = nx;
        y_ = ny;
    }
    ++t_;
    StepResult r;
    if (spec_.is_goal(x_, y_)) {
        r.reward = 1.0f;
        r.done = true;
    } else if (spec_.is_pit(x_, y_)) {
        r.reward = -1.0f;
        r.done = true;
    } else if (t_ >= spec_.max_episode_len) {
        r.done = true;
    }
    done_ = r.done;
    return r;
}

}  // namespace trajmask
