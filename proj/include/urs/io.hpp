#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace urs {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it over the target.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

// Shortest-safe real formatting: 17 significant digits, round-trips exactly.
std::string format_real(double v);

}  // namespace urs
