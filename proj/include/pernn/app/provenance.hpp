#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

namespace pernn::app {

std::string sha256_hex(std::string_view bytes);
// Hash git assigns to a blob: sha1("blob <size>\0" + bytes).
std::string git_blob_hash(std::string_view bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

// Prepends "# config_sha256=<hash>" to a CSV written by a domain writer.
void stamp_csv(const std::string& path, const std::string& config_hash);

// Pretty-printed with sorted keys and a trailing newline.
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace pernn::app
