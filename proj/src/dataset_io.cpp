#include <cstdio>
#include <cstring>
#include <fstream>

#include "trajmask/dataset.hpp"

// Trajectory container, little-endian:
//   magic "RPMD" | version u16 | tier u8 | layout_id u16 | num_trajectories u32
//   per trajectory:
//     T u32 | observations T*3*24*24 f32 | actions (T-1) u8 |
//     factored T*3 u16 | rewards (T-1) f32

namespace trajmask {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'M', 'D'};
constexpr std::uint16_t kVersion = 1;

static_assert(sizeof(float) == 4, "format assumes 32-bit floats");

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_.is_open()) throw ConfigError("cannot open dataset file: " + path);
    }
    void read(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw ParseError(std::string("dataset file truncated while reading ") + what,
                             offset_ + static_cast<std::size_t>(in_.gcount()));
        offset_ += n;
    }
    template <class T>
    T scalar(const char* what) {
        T v;
        read(&v, sizeof(T), what);
        return v;
    }
    std::size_t offset() const { return offset_; }
    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

}  // namespace

void save_dataset(const TrajectoryDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) throw ConfigError("cannot write dataset file: " + path);
    auto put = [&](const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    };
    put(kMagic, 4);
    std::uint16_t version = kVersion;
    put(&version, 2);
    std::uint8_t tier = static_cast<std::uint8_t>(ds.tier);
    put(&tier, 1);
    std::uint16_t layout = static_cast<std::uint16_t>(ds.spec.layout_id);
    put(&layout, 2);
    std::uint32_t ntraj = static_cast<std::uint32_t>(ds.trajectories.size());
    put(&ntraj, 4);
    for (const auto& t : ds.trajectories) {
        std::uint32_t T = static_cast<std::uint32_t>(t.length());
        put(&T, 4);
        put(t.obs.data(), t.obs.size() * sizeof(float));
        put(t.actions.data(), t.actions.size());
        for (const auto& f : t.factored) put(f.data(), 3 * sizeof(std::uint16_t));
        put(t.rewards.data(), t.rewards.size() * sizeof(float));
    }
    out.flush();
    if (!out.good()) throw ConfigError("write failed for dataset file: " + path);
}

TrajectoryDataset load_dataset(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("bad magic, expected \"RPMD\"", 0);
    auto version = r.scalar<std::uint16_t>("version");
    if (version != kVersion)
        throw ParseError("unsupported format version " + std::to_string(version), 4);
    auto tier = r.scalar<std::uint8_t>("tier");
    if (tier > 2) throw ParseError("bad tier byte " + std::to_string(tier), 6);
    auto layout = r.scalar<std::uint16_t>("layout_id");
    if (layout >= GridWorldSpec::kNumLayouts)
        throw ParseError("unknown layout_id " + std::to_string(layout), 7);
    auto ntraj = r.scalar<std::uint32_t>("num_trajectories");

    TrajectoryDataset ds;
    ds.spec = GridWorldSpec::layout(layout);
    ds.tier = static_cast<Tier>(tier);
    const std::size_t obs_size = ds.spec.obs_size();
    ds.trajectories.reserve(ntraj);
    for (std::uint32_t i = 0; i < ntraj; ++i) {
        auto T = r.scalar<std::uint32_t>("trajectory length");
        if (T < 2) throw ParseError("trajectory length " + std::to_string(T) + " < 2",
                                    r.offset() - 4);
        Trajectory t;
        t.obs.resize(static_cast<std::size_t>(T) * obs_size);
        r.read(t.obs.data(), t.obs.size() * sizeof(float), "observations");
        t.actions.resize(T - 1);
        r.read(t.actions.data(), t.actions.size(), "actions");
        t.factored.resize(T);
        for (auto& f : t.factored) r.read(f.data(), 3 * sizeof(std::uint16_t), "factored states");
        t.rewards.resize(T - 1);
        r.read(t.rewards.data(), t.rewards.size() * sizeof(float), "rewards");
        ds.trajectories.push_back(std::move(t));
    }
    if (!r.at_eof())
        throw ParseError("trailing bytes after last trajectory", r.offset());
    ds.total_transitions = ds.recount_transitions();
    ds.validate();
    return ds;
}

}  // namespace trajmask
