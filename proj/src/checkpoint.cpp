#include "mixscale/runtime/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mixscale {

namespace {

constexpr char kMagic[6] = {'M', 'S', 'C', 'K', 'P', 'T'};
constexpr uint8_t kVersion = 1;

void put_bytes(std::vector<char>& out, const void* p, size_t len) {
    const char* c = static_cast<const char*>(p);
    out.insert(out.end(), c, c + len);
}

template <typename T>
void put(std::vector<char>& out, T v) {
    put_bytes(out, &v, sizeof(T));
}

template <typename T>
T take(const std::vector<char>& buf, size_t& off) {
    if (off + sizeof(T) > buf.size()) throw IntegrityError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const CheckpointRecord& record, const std::string& path) {
    std::vector<char> payload;
    put(payload, record.fingerprint);
    put(payload, record.epoch);
    put(payload, static_cast<uint32_t>(record.entries.size()));
    for (const auto& e : record.entries) {
        put(payload, e.kind);
        put(payload, static_cast<uint32_t>(e.name.size()));
        put_bytes(payload, e.name.data(), e.name.size());
        put(payload, static_cast<uint32_t>(e.n));
        put(payload, static_cast<uint32_t>(e.c));
        put(payload, static_cast<uint32_t>(e.h));
        put(payload, static_cast<uint32_t>(e.w));
        put(payload, static_cast<uint64_t>(e.data.size()));
        put_bytes(payload, e.data.data(), e.data.size() * sizeof(float));
    }
    uint64_t digest = fnv1a64(payload.data(), payload.size());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    out.put(static_cast<char>(kVersion));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
    out.flush();
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointRecord load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) + 1 + sizeof(uint64_t))
        throw IntegrityError("checkpoint: file too short: " + path);
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw IntegrityError("checkpoint: bad magic in " + path);
    uint8_t version = static_cast<uint8_t>(buf[sizeof(kMagic)]);
    if (version != kVersion)
        throw IntegrityError("checkpoint: unsupported version " + std::to_string(version));

    size_t payload_begin = sizeof(kMagic) + 1;
    size_t payload_end = buf.size() - sizeof(uint64_t);
    uint64_t stored_digest;
    std::memcpy(&stored_digest, buf.data() + payload_end, sizeof(stored_digest));
    uint64_t digest = fnv1a64(buf.data() + payload_begin, payload_end - payload_begin);
    if (digest != stored_digest)
        throw IntegrityError("checkpoint: content hash mismatch in " + path);

    CheckpointRecord record;
    size_t off = payload_begin;
    record.fingerprint = take<uint64_t>(buf, off);
    record.epoch = take<int32_t>(buf, off);
    uint32_t count = take<uint32_t>(buf, off);
    record.entries.resize(count);
    for (auto& e : record.entries) {
        e.kind = take<uint8_t>(buf, off);
        uint32_t name_len = take<uint32_t>(buf, off);
        if (off + name_len > buf.size()) throw IntegrityError("checkpoint: truncated name");
        e.name.assign(buf.data() + off, name_len);
        off += name_len;
        e.n = static_cast<int>(take<uint32_t>(buf, off));
        e.c = static_cast<int>(take<uint32_t>(buf, off));
        e.h = static_cast<int>(take<uint32_t>(buf, off));
        e.w = static_cast<int>(take<uint32_t>(buf, off));
        uint64_t len = take<uint64_t>(buf, off);
        if (off + len * sizeof(float) > payload_end)
            throw IntegrityError("checkpoint: truncated data for " + e.name);
        e.data.resize(len);
        std::memcpy(e.data.data(), buf.data() + off, len * sizeof(float));
        off += len * sizeof(float);
    }
    if (off != payload_end) throw IntegrityError("checkpoint: trailing bytes in " + path);
    return record;
}

}  // namespace mixscale
