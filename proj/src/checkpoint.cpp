#include "befseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace befseg {

namespace {

constexpr char kMagic[4] = {'B', 'E', 'F', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

[[noreturn]] void bad_file(const std::string& path, const std::string& what) {
    throw std::runtime_error("checkpoint '" + path + "': " + what);
}

std::uint16_t get_u16(std::istream& in, const std::string& path) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) bad_file(path, "truncated file");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) bad_file(path, "truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) bad_file(path, "truncated file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamList& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint '" + path + "': cannot open for writing");

    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw std::runtime_error("checkpoint '" + path + "': tensor name too long: " + name);
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& shape = tensor->shape();
        if (shape.size() > 255)
            throw std::runtime_error("checkpoint '" + path + "': tensor rank too large: " + name);
        unsigned char rank = static_cast<unsigned char>(shape.size());
        out.write(reinterpret_cast<const char*>(&rank), 1);
        for (std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : tensor->values()) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("checkpoint '" + path + "': write failed");
}

void load_checkpoint(const std::string& path, const ParamList& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) bad_file(path, "cannot open for reading");

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        bad_file(path, "bad magic, not a checkpoint file");
    std::uint32_t version = get_u32(in, path);
    if (version != kVersion)
        bad_file(path, "unsupported version " + std::to_string(version));
    std::uint32_t count = get_u32(in, path);
    if (count != params.size())
        bad_file(path, "holds " + std::to_string(count) + " tensors, model has " +
                           std::to_string(params.size()));

    std::map<std::string, Tensor*> by_name;
    for (const auto& [name, tensor] : params) by_name.emplace(name, tensor);

    std::map<std::string, bool> filled;
    for (std::uint32_t t = 0; t < count; ++t) {
        std::uint16_t name_len = get_u16(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) bad_file(path, "truncated file");

        unsigned char rank;
        if (!in.read(reinterpret_cast<char*>(&rank), 1)) bad_file(path, "truncated file");
        Shape shape(rank);
        std::size_t numel = 1;
        for (unsigned char d = 0; d < rank; ++d) {
            shape[d] = get_u32(in, path);
            numel *= shape[d];
        }

        auto it = by_name.find(name);
        if (it == by_name.end()) bad_file(path, "tensor '" + name + "' not in model");
        if (filled.count(name)) bad_file(path, "tensor '" + name + "' appears twice");
        if (it->second->shape() != shape)
            bad_file(path, "tensor '" + name + "' has shape " + shape_str(shape) +
                               ", model expects " + shape_str(it->second->shape()));

        std::vector<double>& dst = it->second->values_mut();
        for (std::size_t i = 0; i < numel; ++i) dst[i] = get_f64(in, path);
        filled[name] = true;
    }
    for (const auto& [name, tensor] : params) {
        (void)tensor;
        if (!filled.count(name)) bad_file(path, "tensor '" + name + "' missing from file");
    }
}

}  // namespace befseg
