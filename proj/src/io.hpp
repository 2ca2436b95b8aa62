#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace clarifyir::detail {

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames over the target.
void write_file(const std::filesystem::path& path, const std::string& content);
// Parses JSON text; syntax errors report line and column.
nlohmann::json parse_json(const std::string& text, const std::string& source);

// Typed field access with a JSON-path style location in error messages.
const nlohmann::json& require_field(const nlohmann::json& obj, const char* key,
                                    const std::string& where);
std::string require_string(const nlohmann::json& obj, const char* key,
                           const std::string& where);

}  // namespace clarifyir::detail
