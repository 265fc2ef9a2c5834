#include "mtseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mtseg/io_util.hpp"

namespace mtseg {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'E', 'G'};
constexpr uint16_t kVersion = 1;

void write_blob(std::ostream& os, const std::string& name, const float* p, size_t len) {
    io::write_u16(os, uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    io::write_u64(os, len);
    io::write_f32_array(os, p, len);
}

struct Blob {
    std::string name;
    std::vector<float> data;
};

Blob read_blob(std::istream& is) {
    Blob b;
    uint16_t nlen = io::read_u16(is, "blob name length");
    b.name.resize(nlen);
    is.read(b.name.data(), nlen);
    if (!is) throw DataError("truncated file while reading blob name");
    uint64_t count = io::read_u64(is, "blob length");
    b.data.resize(count);
    io::read_f32_array(is, b.data.data(), count, b.name.c_str());
    return b;
}

// Every persisted array of one layer, in fixed order.
std::vector<std::pair<std::string, std::vector<float>*>> layer_blobs(
    Network::ConvLayer& l) {
    std::vector<std::pair<std::string, std::vector<float>*>> out = {
        {l.def.name + ".w", &l.w.v}, {l.def.name + ".b", &l.b}};
    if (l.def.bn) {
        out.emplace_back(l.def.name + ".gamma", &l.gamma);
        out.emplace_back(l.def.name + ".beta", &l.beta);
        out.emplace_back(l.def.name + ".running_mean", &l.stats.mean);
        out.emplace_back(l.def.name + ".running_var", &l.stats.var);
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const TrainMeta& meta, const AdamState* adam) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 4);
    io::write_u16(os, kVersion);

    const NetworkSpec& spec = net.spec();
    io::write_u32(os, uint32_t(spec.input_h));
    io::write_u32(os, uint32_t(spec.input_w));
    io::write_u32(os, uint32_t(spec.in_channels));
    io::write_u32(os, uint32_t(spec.classes));
    io::write_f32(os, spec.width_multiplier);

    io::write_u64(os, meta.iteration);
    io::write_u64(os, meta.seed);
    io::write_f32(os, meta.lr);
    io::write_f64(os, meta.best_smoothed);
    io::write_u32(os, meta.bad_windows);
    io::write_u32(os, uint32_t(meta.loss_tail.size()));
    io::write_f32_array(os, meta.loss_tail.data(), meta.loss_tail.size());

    uint32_t blob_count = 0;
    for (const auto& l : net.layers()) blob_count += l.def.bn ? 6 : 2;
    io::write_u32(os, blob_count);
    auto& layers = const_cast<Network&>(net).layers();
    for (auto& l : layers)
        for (auto& [name, vec] : layer_blobs(l)) write_blob(os, name, vec->data(), vec->size());

    os.put(adam ? char(1) : char(0));
    if (adam) {
        io::write_u64(os, uint64_t(adam->t));
        io::write_u32(os, uint32_t(adam->m.size()));
        for (size_t i = 0; i < adam->m.size(); ++i) {
            io::write_u64(os, adam->m[i].size());
            io::write_f32_array(os, adam->m[i].data(), adam->m[i].size());
            io::write_f32_array(os, adam->v[i].data(), adam->v[i].size());
        }
    }
    io::write_file_atomic(path, os.str());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path.string());

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a checkpoint file (bad magic): " + path.string());
    uint16_t version = io::read_u16(is, "version");
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    NetworkSpec spec;
    spec.input_h = int(io::read_u32(is, "input_h"));
    spec.input_w = int(io::read_u32(is, "input_w"));
    spec.in_channels = int(io::read_u32(is, "in_channels"));
    spec.classes = int(io::read_u32(is, "classes"));
    spec.width_multiplier = io::read_f32(is, "width_multiplier");
    spec.validate();

    TrainMeta meta;
    meta.iteration = io::read_u64(is, "iteration");
    meta.seed = io::read_u64(is, "seed");
    meta.lr = io::read_f32(is, "lr");
    meta.best_smoothed = io::read_f64(is, "best_smoothed");
    meta.bad_windows = io::read_u32(is, "bad_windows");
    uint32_t tail = io::read_u32(is, "loss tail length");
    meta.loss_tail.resize(tail);
    io::read_f32_array(is, meta.loss_tail.data(), tail, "loss tail");

    uint32_t blob_count = io::read_u32(is, "blob count");
    std::map<std::string, std::vector<float>> blobs;
    for (uint32_t i = 0; i < blob_count; ++i) {
        Blob b = read_blob(is);
        if (!blobs.emplace(b.name, std::move(b.data)).second)
            throw DataError("checkpoint has duplicate blob: " + b.name);
    }

    LoadedCheckpoint out{Network(spec, 0), std::move(meta), false, {}};
    size_t used = 0;
    for (auto& l : out.net.layers())
        for (auto& [name, vec] : layer_blobs(l)) {
            auto it = blobs.find(name);
            if (it == blobs.end())
                throw DataError("checkpoint spec mismatch: missing blob " + name);
            if (it->second.size() != vec->size())
                throw DataError("checkpoint spec mismatch: blob " + name + " has " +
                                std::to_string(it->second.size()) + " values, expected " +
                                std::to_string(vec->size()));
            *vec = it->second;
            ++used;
        }
    if (used != blobs.size())
        throw DataError("checkpoint spec mismatch: " +
                        std::to_string(blobs.size() - used) + " unexpected blob(s)");

    uint8_t has_adam = 0;
    is.read(reinterpret_cast<char*>(&has_adam), 1);
    if (!is) throw DataError("truncated file while reading adam flag");
    if (has_adam) {
        out.has_adam = true;
        out.adam.t = int64_t(io::read_u64(is, "adam t"));
        uint32_t groups = io::read_u32(is, "adam group count");
        auto views = out.net.param_views();
        if (groups != views.size())
            throw DataError("checkpoint spec mismatch: adam has " +
                            std::to_string(groups) + " groups, network has " +
                            std::to_string(views.size()));
        out.adam.m.resize(groups);
        out.adam.v.resize(groups);
        for (uint32_t i = 0; i < groups; ++i) {
            uint64_t len = io::read_u64(is, "adam group length");
            if (len != views[i].len)
                throw DataError("checkpoint spec mismatch: adam group " + views[i].name);
            out.adam.m[i].resize(len);
            out.adam.v[i].resize(len);
            io::read_f32_array(is, out.adam.m[i].data(), len, "adam m");
            io::read_f32_array(is, out.adam.v[i].data(), len, "adam v");
        }
    }
    return out;
}

}  // namespace mtseg
