#include "mmcof/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mmcof {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'F'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& is, uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return true;
}

void write_f32(std::ostream& os, const float* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], 4);
        write_u32(os, bits);
    }
}

}  // namespace

ag::Var ParameterSet::add(const std::string& name, Tensor value, ParamRole role, bool trainable) {
    if (has(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    ag::Var v = ag::make_leaf(std::move(value), trainable);
    entries_.push_back({name, v, role, trainable});
    return v;
}

bool ParameterSet::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

ag::Var& ParameterSet::get(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return e.var;
    throw std::out_of_range("ParameterSet: no entry named " + name);
}

const ag::Var& ParameterSet::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e.var;
    throw std::out_of_range("ParameterSet: no entry named " + name);
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.var->zero_grad();
}

long long ParameterSet::parameter_count() const {
    long long n = 0;
    for (const auto& e : entries_)
        if (e.trainable) n += e.var->value.numel();
    return n;
}

void ParameterSet::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("ParameterSet::save: cannot open " + path);
    save_stream(os);
    if (!os) throw std::runtime_error("ParameterSet::save: write failed for " + path);
}

void ParameterSet::save_stream(std::ostream& os) const {
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    for (const auto& e : entries_) {
        write_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(os, static_cast<uint32_t>(e.var->value.rank()));
        for (int d : e.var->value.shape) write_u32(os, static_cast<uint32_t>(d));
        write_f32(os, e.var->value.data.data(), e.var->value.data.size());
    }
}

ParameterSet ParameterSet::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ParameterSet::load: cannot open " + path);
    return load_stream(is);
}

ParameterSet ParameterSet::load_stream(std::istream& is) {
    const std::string path = "<stream>";
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("ParameterSet::load: bad magic in " + path);
    uint32_t version;
    if (!read_u32(is, version) || version != kVersion)
        throw std::runtime_error("ParameterSet::load: unsupported version in " + path);
    ParameterSet ps;
    uint32_t name_len;
    while (read_u32(is, name_len)) {
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw std::runtime_error("ParameterSet::load: truncated entry name in " + path);
        uint32_t rank;
        if (!read_u32(is, rank)) throw std::runtime_error("ParameterSet::load: truncated rank");
        std::vector<int> shape(rank);
        long long numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            uint32_t d;
            if (!read_u32(is, d)) throw std::runtime_error("ParameterSet::load: truncated extents");
            shape[i] = static_cast<int>(d);
            numel *= d;
        }
        std::vector<float> data(static_cast<size_t>(numel));
        for (auto& f : data) {
            uint32_t bits;
            if (!read_u32(is, bits)) throw std::runtime_error("ParameterSet::load: truncated values");
            std::memcpy(&f, &bits, 4);
        }
        ps.add(name, Tensor::from(std::move(shape), std::move(data)), ParamRole::ConvKernel);
    }
    return ps;
}

}  // namespace mmcof
