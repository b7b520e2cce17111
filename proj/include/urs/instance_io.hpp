#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "urs/instance.hpp"

namespace urs {

inline constexpr int kInstanceFormatVersion = 1;

class InstanceFormatError : public std::runtime_error {
 public:
  enum class Reason { kVersion, kMalformed, kSize, kSchema };
  InstanceFormatError(Reason reason, const std::string& what) : std::runtime_error(what), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

std::string instance_to_json(const UnifiedInstance& instance);
UnifiedInstance instance_from_json(std::string_view text);

void write_instance(const std::filesystem::path& path, const UnifiedInstance& instance);
UnifiedInstance read_instance(const std::filesystem::path& path);

// Content hash of the canonical serialization.
std::string instance_hash(const UnifiedInstance& instance);

struct SolutionRecord {
  std::string instance_ref;
  std::vector<int> sequence;
  double objective = 0.0;
  bool maximize = false;
  bool feasible = false;
  std::optional<long long> nodes_expanded;
  std::optional<long long> elapsed_ms;
};

std::string solution_to_json(const SolutionRecord& record);
SolutionRecord solution_from_json(std::string_view text);

}  // namespace urs
