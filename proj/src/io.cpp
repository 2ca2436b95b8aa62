#include "io.hpp"

#include <fstream>
#include <sstream>

#include "clarifyir/error.hpp"

namespace clarifyir::detail {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out << content;
    if (!out) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json parse_json(const std::string& text, const std::string& source) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t limit = std::min(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    fail(ErrorCode::kParse, source + ":" + std::to_string(line) + ":" +
                                std::to_string(column) + ": invalid JSON");
  }
}

const nlohmann::json& require_field(const nlohmann::json& obj, const char* key,
                                    const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::kParse, where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::kParse, where + "." + key + ": missing field");
  return *it;
}

std::string require_string(const nlohmann::json& obj, const char* key,
                           const std::string& where) {
  const auto& value = require_field(obj, key, where);
  if (!value.is_string()) fail(ErrorCode::kParse, where + "." + key + ": expected a string");
  return value.get<std::string>();
}

}  // namespace clarifyir::detail
