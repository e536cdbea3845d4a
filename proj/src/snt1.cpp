#include "saint/snt1.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace saint {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'T', '1'};

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T v) {
    // The toolchain targets little-endian hosts; native bytes are the format.
    static_assert(std::is_integral_v<T>);
    put_bytes(os, &v, sizeof(T));
}

void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw std::runtime_error(std::string("read_snt1: truncated file while reading ") + what);
}

template <typename T>
T get_le(std::istream& is, const char* what) {
    T v;
    get_bytes(is, &v, sizeof(T), what);
    return v;
}

}  // namespace

void write_snt1(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_snt1: cannot open " + path);
    put_bytes(os, kMagic, 4);
    put_le<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff)
            throw std::runtime_error("write_snt1: tensor name too long: " + name);
        put_le<uint16_t>(os, static_cast<uint16_t>(name.size()));
        put_bytes(os, name.data(), name.size());
        put_le<uint8_t>(os, static_cast<uint8_t>(t.ndim()));
        for (int64_t d = 0; d < t.ndim(); ++d)
            put_le<uint32_t>(os, static_cast<uint32_t>(t.size(d)));
        put_bytes(os, t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
    }
    if (!os) throw std::runtime_error("write_snt1: write failed for " + path);
}

std::map<std::string, Tensor> read_snt1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_snt1: cannot open " + path);
    char magic[4];
    get_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("read_snt1: bad magic in " + path);
    const uint32_t count = get_le<uint32_t>(is, "tensor count");
    std::map<std::string, Tensor> out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = get_le<uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        if (name_len) get_bytes(is, name.data(), name_len, "name");
        const uint8_t ndim = get_le<uint8_t>(is, "ndim");
        std::vector<int64_t> dims;
        dims.reserve(ndim);
        int64_t numel = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            const uint32_t v = get_le<uint32_t>(is, "dim");
            dims.push_back(static_cast<int64_t>(v));
            numel *= static_cast<int64_t>(v);
        }
        std::vector<float> data(static_cast<size_t>(numel));
        get_bytes(is, data.data(), sizeof(float) * data.size(), "tensor data");
        if (out.count(name)) throw std::runtime_error("read_snt1: duplicate tensor name: " + name);
        out.emplace(std::move(name), Tensor(std::move(dims), std::move(data)));
    }
    return out;
}

}  // namespace saint
