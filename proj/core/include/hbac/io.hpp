#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hbac::io {

// Splits one CSV line on commas. Quoted fields are not supported.
std::vector<std::string> split_csv_line(std::string_view line);

std::string trim(std::string_view s);

std::string read_text(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target, so readers never
// observe a partially written file.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

// Little-endian float32 blobs.
std::string encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::span<const std::uint8_t> bytes);

// Hex SHA-256 digests used as content hashes for cache invalidation.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// Shortest round-trip text for a double.
std::string format_double(double v);

}  // namespace hbac::io
