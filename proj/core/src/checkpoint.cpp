#include "pano360/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace pano360 {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'O', '3', '6', '0', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(float) == 4, "float32 payload requires 4-byte float");

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_i32(std::ostream& os, std::int32_t v) { put_u32(os, static_cast<std::uint32_t>(v)); }

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }

float get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

struct DirEntry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset = 0;  // element offset into the float payload
    std::uint64_t count = 0;
};

}  // namespace

void save_checkpoint(const PanoModel& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);

    os.write(kMagic, 8);
    put_u32(os, kVersion);

    const ModelConfig& c = m.config();
    put_i32(os, c.blocks);
    put_i32(os, c.heads);
    put_i32(os, c.dim);
    put_i32(os, c.patch);
    put_i32(os, c.cond_classes);
    put_i32(os, c.channels);
    put_i32(os, c.height);
    put_i32(os, c.width);
    put_i32(os, c.mlp_mult);
    put_i32(os, c.pad_positions == PadPosition::CopySource ? 0 : 1);

    const PatchCodec& codec = m.codec();
    const int m_vals = codec.patch_values();

    // Directory: trainable parameters in map order, then the frozen codec.
    std::vector<DirEntry> dir;
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : m.params()) {
        dir.push_back({name, tensor.shape, offset, tensor.size()});
        offset += tensor.size();
    }
    dir.push_back({"codec.proj", {codec.dim, m_vals}, offset, codec.proj.size()});
    offset += codec.proj.size();
    dir.push_back({"codec.bias", {codec.dim}, offset, codec.bias.size()});
    offset += codec.bias.size();

    put_u32(os, static_cast<std::uint32_t>(dir.size()));
    for (const DirEntry& e : dir) {
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<std::uint32_t>(e.shape.size()));
        for (int d : e.shape) put_i32(os, d);
        put_u64(os, e.offset);
        put_u64(os, e.count);
    }

    put_u64(os, offset);
    for (const auto& [name, tensor] : m.params())
        for (double v : tensor.v) put_f32(os, static_cast<float>(v));
    for (double v : codec.proj) put_f32(os, static_cast<float>(v));
    for (double v : codec.bias) put_f32(os, static_cast<float>(v));

    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

PanoModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);

    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic: " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    ModelConfig c;
    c.blocks = get_i32(is);
    c.heads = get_i32(is);
    c.dim = get_i32(is);
    c.patch = get_i32(is);
    c.cond_classes = get_i32(is);
    c.channels = get_i32(is);
    c.height = get_i32(is);
    c.width = get_i32(is);
    c.mlp_mult = get_i32(is);
    const std::int32_t pad_flag = get_i32(is);
    if (pad_flag != 0 && pad_flag != 1)
        throw std::runtime_error("checkpoint: bad pad flag");
    c.pad_positions = pad_flag == 0 ? PadPosition::CopySource : PadPosition::FreshIndex;
    c.validate();

    const std::uint32_t n_entries = get_u32(is);
    std::vector<DirEntry> dir(n_entries);
    for (DirEntry& e : dir) {
        const std::uint32_t name_len = get_u32(is);
        if (name_len == 0 || name_len > 4096)
            throw std::runtime_error("checkpoint: bad tensor name length");
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        const std::uint32_t ndims = get_u32(is);
        if (ndims == 0 || ndims > 8) throw std::runtime_error("checkpoint: bad tensor rank");
        e.shape.resize(ndims);
        std::uint64_t prod = 1;
        for (std::uint32_t i = 0; i < ndims; ++i) {
            e.shape[i] = get_i32(is);
            if (e.shape[i] <= 0) throw std::runtime_error("checkpoint: bad tensor dimension");
            prod *= static_cast<std::uint64_t>(e.shape[i]);
        }
        e.offset = get_u64(is);
        e.count = get_u64(is);
        if (e.count != prod) throw std::runtime_error("checkpoint: tensor size mismatch");
        if (!is) throw std::runtime_error("checkpoint: truncated directory");
    }

    const std::uint64_t payload_count = get_u64(is);
    std::vector<float> payload(payload_count);
    for (std::uint64_t i = 0; i < payload_count; ++i) payload[i] = get_f32(is);

    // Rebuild from the stored config, then overwrite every tensor. The seed
    // only affects values that are replaced below.
    PanoModel model(c, 0);

    ParamMap params;
    PatchCodec codec = model.codec();
    bool saw_proj = false, saw_bias = false;
    auto slice = [&](const DirEntry& e, std::vector<double>& out) {
        if (e.offset + e.count > payload_count)
            throw std::runtime_error("checkpoint: payload overrun for " + e.name);
        out.resize(e.count);
        for (std::uint64_t i = 0; i < e.count; ++i)
            out[i] = static_cast<double>(payload[e.offset + i]);
    };
    for (const DirEntry& e : dir) {
        if (e.name == "codec.proj") {
            if (e.shape != std::vector<int>{codec.dim, codec.patch_values()})
                throw std::runtime_error("checkpoint: codec.proj shape mismatch");
            slice(e, codec.proj);
            saw_proj = true;
        } else if (e.name == "codec.bias") {
            if (e.shape != std::vector<int>{codec.dim})
                throw std::runtime_error("checkpoint: codec.bias shape mismatch");
            slice(e, codec.bias);
            saw_bias = true;
        } else {
            Tensor t(e.shape);
            slice(e, t.v);
            if (!params.emplace(e.name, std::move(t)).second)
                throw std::runtime_error("checkpoint: duplicate tensor " + e.name);
        }
    }
    if (!saw_proj || !saw_bias) throw std::runtime_error("checkpoint: codec tensors missing");

    try {
        model.restore_state(std::move(params), std::move(codec));
    } catch (const std::invalid_argument& ex) {
        throw std::runtime_error(std::string("checkpoint: ") + ex.what());
    }
    return model;
}

}  // namespace pano360
