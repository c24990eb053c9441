// Key-value configuration text: one `key = value` per line, `#` starts a comment.

#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "midiminer/error.hpp"

namespace midiminer {

using Config = std::map<std::string, std::string, std::less<>>;

inline std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

inline Config parse_config(std::string_view text) {
  Config config;
  std::istringstream stream{std::string(text)};
  std::string line;
  int line_number = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_number) + " has no '='");
    }
    std::string key = trim(std::string_view(content).substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_number) + " has an empty key");
    }
    config[std::move(key)] = trim(std::string_view(content).substr(eq + 1));
  }
  return config;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace midiminer
