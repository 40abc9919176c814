#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "llpack/tensor.hpp"

namespace llpack {

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xffffffffu;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void require(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) throw FormatError(std::string("truncated ") + what, pos);
    }
    std::uint8_t u8(const char* what) {
        require(1, what);
        return bytes[pos++];
    }
    std::uint16_t u16(const char* what) {
        require(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }
};

}  // namespace detail

// Named map of trainable tensors. std::map keeps serialization order
// deterministic (lexicographic by name).
class WeightStore {
public:
    bool has(const std::string& name) const { return tensors_.count(name) != 0; }

    const Tensor& get(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw WeightError("missing weight \"" + name + "\"");
        return it->second;
    }

    void set(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }

    std::size_t size() const { return tensors_.size(); }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : tensors_) n += t.numel();
        return n;
    }

    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    bool operator==(const WeightStore& other) const {
        if (tensors_.size() != other.tensors_.size()) return false;
        auto it = other.tensors_.begin();
        for (const auto& [name, t] : tensors_) {
            if (it->first != name || !bit_equal(it->second, t)) return false;
            ++it;
        }
        return true;
    }

private:
    std::map<std::string, Tensor> tensors_;
};

// ".llpk" container, little-endian throughout:
//   magic "LLPK" | u32 version=1 | u32 tensor count |
//   per tensor: u16 name length | name bytes | u8 rank | rank x u32 dims |
//               u8 dtype tag (0 = f32) | raw f32 payload |
//   trailing u32 CRC32 of the payload region (all bytes after the 8-byte
//   magic+version header, up to the CRC field).
inline std::vector<std::uint8_t> serialize_weights(const WeightStore& store) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'L', 'L', 'P', 'K'});
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store) {
        if (name.size() > 0xffff) throw WeightError("weight name too long: " + name);
        detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<std::uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) detail::put_u32(out, static_cast<std::uint32_t>(t.dim(i)));
        out.push_back(0);  // dtype f32
        const std::size_t bytes = static_cast<std::size_t>(t.numel()) * 4;
        const std::size_t at = out.size();
        out.resize(at + bytes);
        std::memcpy(out.data() + at, t.data(), bytes);
    }
    detail::put_u32(out, detail::crc32(out.data() + 8, out.size() - 8));
    return out;
}

inline WeightStore deserialize_weights(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r{bytes};
    r.require(4, "magic");
    if (std::memcmp(bytes.data(), "LLPK", 4) != 0) throw FormatError("bad magic, expected LLPK", 0);
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw FormatError("unsupported version " + std::to_string(version), 4);
    if (bytes.size() < 16) throw FormatError("file too short for checksum", bytes.size());
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(
        bytes[bytes.size() - 4] | (bytes[bytes.size() - 3] << 8) | (bytes[bytes.size() - 2] << 16) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24));
    const std::uint32_t actual_crc = detail::crc32(bytes.data() + 8, bytes.size() - 12);
    if (stored_crc != actual_crc) throw FormatError("checksum mismatch", bytes.size() - 4);

    const std::uint32_t count = r.u32("tensor count");
    WeightStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("name length");
        r.require(name_len, "name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        const std::uint8_t rank = r.u8("rank");
        if (rank < 1 || rank > 4) throw FormatError("bad rank " + std::to_string(rank), r.pos - 1);
        std::vector<int> dims;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t v = r.u32("dim");
            if (v == 0 || v > 0x7fffffffu) throw FormatError("bad dimension", r.pos - 4);
            dims.push_back(static_cast<int>(v));
        }
        const std::uint8_t dtype = r.u8("dtype");
        if (dtype != 0) throw FormatError("unknown dtype tag " + std::to_string(dtype), r.pos - 1);
        const std::int64_t numel = Tensor::numel_of(dims);
        r.require(static_cast<std::size_t>(numel) * 4, "tensor payload");
        Tensor t(dims);
        std::memcpy(t.data(), bytes.data() + r.pos, static_cast<std::size_t>(numel) * 4);
        r.pos += static_cast<std::size_t>(numel) * 4;
        if (store.has(name)) throw FormatError("duplicate tensor name \"" + name + "\"", r.pos);
        store.set(name, std::move(t));
    }
    if (r.pos != bytes.size() - 4) throw FormatError("trailing bytes after tensor records", r.pos);
    return store;
}

inline void save_weights(const WeightStore& store, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_weights(store);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline WeightStore load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

}  // namespace llpack
