#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace clab {

using Json = nlohmann::json;

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Digest of the canonical (sorted-key, compact) serialization of `j`.
std::string json_digest(const Json& j);

Json read_json_file(const std::filesystem::path& path);
/// Writes `j` pretty-printed with a trailing newline; throws Io on failure.
void write_text_file(const std::filesystem::path& path, std::string_view text);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace clab
