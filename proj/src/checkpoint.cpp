#include "imwa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "imwa/errors.hpp"

namespace imwa {

namespace {

constexpr char kMagic[4] = {'I', 'M', 'W', 'A'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) {
        throw FormatError(path + ": truncated checkpoint");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    }
    return v;
}

double get_f64(std::istream& in, const std::string& path) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) {
        throw FormatError(path + ": truncated checkpoint");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace

void save_checkpoint(const WeightVector& w, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError(path + ": cannot open for writing");
    }
    out.write(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(w.layout.num_layers()));
    for (const auto& d : w.layout.dims) {
        put_u32(out, d.in);
        put_u32(out, d.out);
    }
    for (const double v : w.values) {
        put_f64(out, v);
    }
    if (!out) {
        throw FormatError(path + ": write failed");
    }
}

WeightVector load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path + ": cannot open");
    }
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(path + ": bad magic, not a checkpoint file");
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kCheckpointVersion) {
        throw FormatError(path + ": unsupported checkpoint version " +
                          std::to_string(version));
    }
    const std::uint32_t layers = get_u32(in, path);
    WeightVector w;
    w.layout.dims.reserve(layers);
    for (std::uint32_t l = 0; l < layers; ++l) {
        const std::uint32_t in_w = get_u32(in, path);
        const std::uint32_t out_w = get_u32(in, path);
        w.layout.dims.push_back({in_w, out_w});
    }
    try {
        w.layout.validate();
    } catch (const ConfigError& e) {
        throw FormatError(path + ": invalid layout in checkpoint (" + e.what() + ")");
    }
    w.values.resize(w.layout.param_count());
    for (auto& v : w.values) {
        v = get_f64(in, path);
    }
    // Anything after the value payload means the file was not written by us.
    char extra;
    if (in.read(&extra, 1)) {
        throw FormatError(path + ": trailing bytes after checkpoint payload");
    }
    return w;
}

}  // namespace imwa
