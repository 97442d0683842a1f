#include <cstring>
#include <fstream>

#include "trajmask/model.hpp"

// Checkpoint container, little-endian:
//   magic "RPMC" | version u16 | scale u8 | d_model u16 | L u16
//   then named blobs until EOF:
//     name_len u16 | name bytes | rank u8 | dims u32 x rank | f32 data
// Two reserved blobs carry non-parameter metadata: "meta.config" (heads,
// ff_hidden, d_proj, gtrxl flag, gate_bias, num_actions, obs dims) and
// "meta.layouts" (pretraining layout ids; omitted when empty).

namespace trajmask {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'M', 'C'};
constexpr std::uint16_t kVersion = 1;

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_.is_open()) throw ConfigError("cannot open checkpoint file: " + path);
    }
    void read(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw ParseError(std::string("checkpoint truncated while reading ") + what,
                             offset_ + static_cast<std::size_t>(in_.gcount()));
        offset_ += n;
    }
    template <class T>
    T scalar(const char* what) {
        T v;
        read(&v, sizeof(T), what);
        return v;
    }
    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }
    std::size_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

void write_blob(std::ofstream& out, const std::string& name, const std::vector<int>& shape,
                const std::vector<float>& data) {
    std::uint16_t name_len = static_cast<std::uint16_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 2);
    out.write(name.data(), name_len);
    std::uint8_t rank = static_cast<std::uint8_t>(shape.size());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : shape) {
        std::uint32_t u = static_cast<std::uint32_t>(d);
        out.write(reinterpret_cast<const char*>(&u), 4);
    }
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::vector<float> tensor_f32(const nn::Tensor& t) {
    std::vector<float> v(t.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t.at(i));
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
    const auto& cfg = p.config();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) throw ConfigError("cannot write checkpoint file: " + path);
    out.write(kMagic, 4);
    std::uint16_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), 2);
    std::uint8_t scale = static_cast<std::uint8_t>(cfg.scale);
    out.write(reinterpret_cast<const char*>(&scale), 1);
    std::uint16_t d_model = static_cast<std::uint16_t>(cfg.d_model);
    out.write(reinterpret_cast<const char*>(&d_model), 2);
    std::uint16_t L = static_cast<std::uint16_t>(cfg.num_blocks);
    out.write(reinterpret_cast<const char*>(&L), 2);

    for (const auto& [name, t] : p.entries()) write_blob(out, name, t.shape(), tensor_f32(t));

    std::vector<float> meta = {static_cast<float>(cfg.num_heads),
                               static_cast<float>(cfg.ff_hidden),
                               static_cast<float>(cfg.d_proj),
                               cfg.gtrxl ? 1.0f : 0.0f,
                               static_cast<float>(cfg.gate_bias),
                               static_cast<float>(cfg.num_actions),
                               static_cast<float>(cfg.obs_channels),
                               static_cast<float>(cfg.obs_height),
                               static_cast<float>(cfg.obs_width),
                               static_cast<float>(cfg.max_states)};
    write_blob(out, "meta.config", {static_cast<int>(meta.size())}, meta);
    if (!p.layouts.empty()) {
        std::vector<float> lay(p.layouts.size());
        for (std::size_t i = 0; i < lay.size(); ++i) lay[i] = static_cast<float>(p.layouts[i]);
        write_blob(out, "meta.layouts", {static_cast<int>(lay.size())}, lay);
    }
    out.flush();
    if (!out.good()) throw ConfigError("write failed for checkpoint file: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad magic, expected \"RPMC\"", 0);
    auto version = r.scalar<std::uint16_t>("version");
    if (version != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
    auto scale = r.scalar<std::uint8_t>("scale");
    if (scale > 2) throw ParseError("bad scale byte " + std::to_string(scale), 6);
    auto d_model = r.scalar<std::uint16_t>("d_model");
    auto L = r.scalar<std::uint16_t>("num_blocks");

    ModelParams p;
    p.cfg_.scale = static_cast<EncoderScale>(scale);
    p.cfg_.d_model = d_model;
    p.cfg_.num_blocks = L;
    bool saw_config = false;

    while (!r.at_eof()) {
        auto name_len = r.scalar<std::uint16_t>("blob name length");
        std::string name(name_len, '\0');
        r.read(name.data(), name_len, "blob name");
        auto rank = r.scalar<std::uint8_t>("blob rank");
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            auto d = r.scalar<std::uint32_t>("blob dims");
            if (d == 0) throw ParseError("zero dimension in blob " + name, r.offset() - 4);
            shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
            numel *= d;
        }
        std::vector<float> data(numel);
        r.read(data.data(), numel * sizeof(float), ("data of " + name).c_str());

        if (name == "meta.config") {
            if (data.size() < 10) throw ParseError("meta.config too short", r.offset());
            p.cfg_.num_heads = static_cast<int>(data[0]);
            p.cfg_.ff_hidden = static_cast<int>(data[1]);
            p.cfg_.d_proj = static_cast<int>(data[2]);
            p.cfg_.gtrxl = data[3] != 0.0f;
            p.cfg_.gate_bias = static_cast<double>(data[4]);
            p.cfg_.num_actions = static_cast<int>(data[5]);
            p.cfg_.obs_channels = static_cast<int>(data[6]);
            p.cfg_.obs_height = static_cast<int>(data[7]);
            p.cfg_.obs_width = static_cast<int>(data[8]);
            p.cfg_.max_states = static_cast<int>(data[9]);
            saw_config = true;
            continue;
        }
        if (name == "meta.layouts") {
            for (float v : data) p.layouts.push_back(static_cast<int>(v));
            continue;
        }
        std::vector<double> vals(data.begin(), data.end());
        nn::Tensor t = nn::Tensor::from_data(shape, vals, nn::Dtype::F32);
        t.set_requires_grad(true);
        p.add(name, t);
    }
    if (!saw_config) throw ParseError("checkpoint missing meta.config blob", r.offset());
    p.cfg_.dtype = nn::Dtype::F32;
    p.cfg_.validate();
    return p;
}

}  // namespace trajmask
