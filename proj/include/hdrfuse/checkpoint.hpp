#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

// Flat binary weight container:
//   magic "HFCK", u32 version,
//   u32 config byte count, config as UTF-8 "key = value\n" lines,
//   u32 record count,
//   per record: u32 name length, name bytes, u32 rank, u32 dims...,
//               float32 payload.
// All integers and floats little-endian; round trips are byte-exact.
struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::vector<std::pair<std::string, std::string>> config; // ordered keys
    std::vector<CheckpointRecord> records;

    const CheckpointRecord* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }

    std::string config_value(const std::string& key) const {
        for (const auto& kv : config)
            if (kv.first == key) return kv.second;
        throw std::runtime_error("checkpoint is missing config key '" + key + "'");
    }
};

namespace detail_ckpt {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f32(std::string& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    std::uint32_t u32() {
        if (pos + 4 > buf.size()) throw std::runtime_error("checkpoint truncated");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]);
        pos += 4;
        return v;
    }

    float f32() {
        const std::uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }

    std::string bytes(std::size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace detail_ckpt

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    using namespace detail_ckpt;
    std::string out;
    out += "HFCK";
    put_u32(out, ck.version);
    std::string cfg;
    for (const auto& kv : ck.config) cfg += kv.first + " = " + kv.second + "\n";
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;
    put_u32(out, static_cast<std::uint32_t>(ck.records.size()));
    for (const auto& r : ck.records) {
        put_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out += r.name;
        put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
        for (auto d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : r.data) put_f32(out, f);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& buf) {
    using namespace detail_ckpt;
    Reader rd{buf};
    if (rd.bytes(4) != "HFCK") throw std::runtime_error("not a weight checkpoint (bad magic)");
    Checkpoint ck;
    ck.version = rd.u32();
    if (ck.version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(ck.version));
    const std::string cfg = rd.bytes(rd.u32());
    std::size_t p = 0;
    while (p < cfg.size()) {
        const std::size_t nl = cfg.find('\n', p);
        const std::string line = cfg.substr(p, nl == std::string::npos ? std::string::npos : nl - p);
        p = nl == std::string::npos ? cfg.size() : nl + 1;
        const std::size_t eq = line.find(" = ");
        if (eq != std::string::npos) ck.config.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    const std::uint32_t nrec = rd.u32();
    for (std::uint32_t i = 0; i < nrec; ++i) {
        CheckpointRecord r;
        r.name = rd.bytes(rd.u32());
        const std::uint32_t rank = rd.u32();
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            r.shape.push_back(static_cast<std::int64_t>(rd.u32()));
            numel *= r.shape.back();
        }
        r.data.resize(static_cast<std::size_t>(numel));
        for (auto& f : r.data) f = rd.f32();
        ck.records.push_back(std::move(r));
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::string buf = serialize_checkpoint(ck);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(buf);
}

} // namespace hdrfuse
