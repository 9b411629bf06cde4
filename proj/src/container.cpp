#include "found/container.hpp"

#include <cstdio>
#include <cstring>

#include <json.hpp>

#include "found/errors.hpp"
#include "found/fsutil.hpp"

namespace found::io {

namespace {

using nlohmann::json;

// Explicit little-endian byte order regardless of host.
template <typename T>
void append_le(std::string& out, T value) {
    if constexpr (sizeof(T) == 2) {
        uint16_t v;
        std::memcpy(&v, &value, 2);
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
    } else if constexpr (sizeof(T) == 4) {
        uint32_t v;
        std::memcpy(&v, &value, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    } else {
        uint64_t v;
        std::memcpy(&v, &value, 8);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

template <typename T>
T read_le(const std::string& bytes, size_t offset) {
    if constexpr (sizeof(T) == 2) {
        uint16_t v = static_cast<unsigned char>(bytes[offset]) |
                     (static_cast<uint16_t>(static_cast<unsigned char>(bytes[offset + 1])) << 8);
        T out;
        std::memcpy(&out, &v, 2);
        return out;
    } else if constexpr (sizeof(T) == 4) {
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
        T out;
        std::memcpy(&out, &v, 4);
        return out;
    } else {
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
        T out;
        std::memcpy(&out, &v, 8);
        return out;
    }
}

constexpr size_t kHeaderSize = 4 + 2 + 12 + 8 + 4;

}  // namespace

std::string encode_container(const Container& c) {
    std::string out;
    out.append(kMagic, 4);
    append_le<uint16_t>(out, kFormatVersion);
    for (uint32_t s : c.shape) append_le<uint32_t>(out, s);
    append_le<double>(out, c.epsilon);
    append_le<uint32_t>(out, static_cast<uint32_t>(c.metadata_json.size()));
    out += c.metadata_json;
    for (float f : c.payload) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        append_le<uint32_t>(out, bits);
    }
    return out;
}

Container decode_container(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < kHeaderSize)
        throw FormatError("'" + origin + "': truncated header, expected at least " +
                          std::to_string(kHeaderSize) + " bytes, got " +
                          std::to_string(bytes.size()));
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("'" + origin + "': bad magic, not a FNDD container");
    const uint16_t version = read_le<uint16_t>(bytes, 4);
    if (version != kFormatVersion)
        throw FormatError("'" + origin + "': unsupported format version " +
                          std::to_string(version));
    Container c;
    for (int i = 0; i < 3; ++i) c.shape[i] = read_le<uint32_t>(bytes, 6 + 4 * i);
    c.epsilon = read_le<double>(bytes, 18);
    const uint32_t meta_len = read_le<uint32_t>(bytes, 26);
    if (bytes.size() < kHeaderSize + meta_len)
        throw FormatError("'" + origin + "': truncated metadata, expected " +
                          std::to_string(kHeaderSize + meta_len) + " bytes, got " +
                          std::to_string(bytes.size()));
    c.metadata_json = bytes.substr(kHeaderSize, meta_len);
    const size_t count =
        static_cast<size_t>(c.shape[0]) * c.shape[1] * c.shape[2];
    const size_t expected = kHeaderSize + meta_len + count * 4;
    if (bytes.size() != expected)
        throw FormatError("'" + origin + "': payload size mismatch, expected " +
                          std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes.size()));
    c.payload.resize(count);
    for (size_t i = 0; i < count; ++i) {
        const uint32_t bits = read_le<uint32_t>(bytes, kHeaderSize + meta_len + i * 4);
        std::memcpy(&c.payload[i], &bits, 4);
    }
    return c;
}

void save_disruptor(const core::Disruptor& d, const std::string& path) {
    Container c;
    c.shape = {static_cast<uint32_t>(d.delta.c), static_cast<uint32_t>(d.delta.h),
               static_cast<uint32_t>(d.delta.w)};
    c.epsilon = d.epsilon;
    json meta;
    meta["kind"] = "disruptor";
    meta["seed"] = d.meta.seed;
    meta["config_digest"] = d.meta.config_digest;
    meta["stage"] = d.meta.stage;
    c.metadata_json = meta.dump();
    c.payload.reserve(d.delta.v.size());
    for (double v : d.delta.v) c.payload.push_back(static_cast<float>(v));
    fsutil::atomic_write(path, encode_container(c));
}

core::Disruptor load_disruptor(const std::string& path) {
    const Container c = decode_container(fsutil::read_file(path), path);
    json meta;
    try {
        meta = json::parse(c.metadata_json);
    } catch (const json::exception& e) {
        throw FormatError("'" + path + "': bad metadata JSON: " + e.what());
    }
    if (meta.value("kind", "") != "disruptor")
        throw FormatError("'" + path + "': container kind '" + meta.value("kind", "?") +
                          "' is not a disruptor");
    core::Disruptor d;
    d.delta = Tensor(1, static_cast<int>(c.shape[0]), static_cast<int>(c.shape[1]),
                     static_cast<int>(c.shape[2]));
    for (size_t i = 0; i < c.payload.size(); ++i) d.delta.v[i] = c.payload[i];
    d.epsilon = c.epsilon;
    d.meta.seed = meta.value("seed", 0ULL);
    d.meta.config_digest = meta.value("config_digest", "");
    d.meta.stage = meta.value("stage", "");
    return d;
}

void save_checkpoint(const zoo::ToyAdapter& adapter, const std::string& path) {
    json meta;
    meta["kind"] = "checkpoint";
    meta["arch"] = zoo::to_string(adapter.spec().arch);
    meta["name"] = adapter.name();
    meta["image_size"] = adapter.spec().image_size;
    meta["attr_count"] = adapter.spec().attr_count;
    meta["train_seed"] = adapter.spec().train_seed;
    json tensors = json::array();
    Container c;
    for (const auto& [name, t] : adapter.named_parameters()) {
        tensors.push_back({{"name", name}, {"shape", {t->b, t->c, t->h, t->w}}});
        for (double v : t->v) c.payload.push_back(static_cast<float>(v));
    }
    meta["tensors"] = tensors;
    c.shape = {static_cast<uint32_t>(c.payload.size()), 1, 1};
    c.epsilon = 0.0;
    c.metadata_json = meta.dump();
    fsutil::atomic_write(path, encode_container(c));
}

zoo::ToyAdapterPtr load_checkpoint(const std::string& path) {
    const Container c = decode_container(fsutil::read_file(path), path);
    json meta;
    try {
        meta = json::parse(c.metadata_json);
    } catch (const json::exception& e) {
        throw FormatError("'" + path + "': bad metadata JSON: " + e.what());
    }
    if (meta.value("kind", "") != "checkpoint")
        throw FormatError("'" + path + "': container kind '" + meta.value("kind", "?") +
                          "' is not a checkpoint");
    zoo::ToyModelSpec spec;
    spec.arch = zoo::architecture_from_string(meta.at("arch").get<std::string>());
    spec.image_size = meta.value("image_size", 32);
    spec.attr_count = meta.value("attr_count", 3);
    spec.train_seed = meta.value("train_seed", 0ULL);
    auto adapter =
        std::make_shared<zoo::ToyAdapter>(spec, meta.value("name", zoo::to_string(spec.arch)));
    auto params = adapter->parameters();
    const json& tensors = meta.at("tensors");
    if (tensors.size() != params.size())
        throw FormatError("'" + path + "': checkpoint lists " + std::to_string(tensors.size()) +
                          " tensors, architecture has " + std::to_string(params.size()));
    size_t offset = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i];
        const auto& shape = tensors[i].at("shape");
        if (shape[0] != t.b || shape[1] != t.c || shape[2] != t.h || shape[3] != t.w)
            throw FormatError("'" + path + "': tensor shape mismatch at '" +
                              tensors[i].value("name", "?") + "'");
        if (offset + t.v.size() > c.payload.size())
            throw FormatError("'" + path + "': payload shorter than tensor manifest");
        for (size_t j = 0; j < t.v.size(); ++j) t.v[j] = c.payload[offset + j];
        offset += t.v.size();
    }
    if (offset != c.payload.size())
        throw FormatError("'" + path + "': payload longer than tensor manifest");
    return adapter;
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string digest_hex(const std::string& bytes) {
    const uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string file_digest(const std::string& path) { return digest_hex(fsutil::read_file(path)); }

}  // namespace found::io
