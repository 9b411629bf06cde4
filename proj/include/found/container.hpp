#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "found/core.hpp"
#include "found/zoo.hpp"

namespace found::io {

/// Shared artifact container, byte layout (all integers little-endian):
///   bytes 0-3   magic "FNDD"
///   bytes 4-5   format version (uint16, currently 1)
///   bytes 6-17  shape triple (3 x uint32)
///   bytes 18-25 epsilon (IEEE-754 float64)
///   bytes 26-29 metadata length (uint32)
///   ...         UTF-8 JSON metadata
///   ...         payload: float32 values, row-major
/// Disruptors use shape (C,H,W); model checkpoints use (count,1,1) and list
/// their tensors in the metadata. The metadata's "kind" field tells loaders
/// apart.
inline constexpr char kMagic[4] = {'F', 'N', 'D', 'D'};
inline constexpr uint16_t kFormatVersion = 1;

struct Container {
    std::array<uint32_t, 3> shape{};
    double epsilon = 0.0;
    std::string metadata_json;
    std::vector<float> payload;
};

std::string encode_container(const Container& c);
/// Throws FormatError on magic/version mismatch or truncation (naming
/// expected vs actual byte counts).
Container decode_container(const std::string& bytes, const std::string& origin);

void save_disruptor(const core::Disruptor& d, const std::string& path);
core::Disruptor load_disruptor(const std::string& path);

void save_checkpoint(const zoo::ToyAdapter& adapter, const std::string& path);
zoo::ToyAdapterPtr load_checkpoint(const std::string& path);

uint64_t fnv1a64(const void* data, size_t n);
std::string digest_hex(const std::string& bytes);
std::string file_digest(const std::string& path);

}  // namespace found::io
