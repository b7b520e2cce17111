#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "urs/policy.hpp"

namespace urs {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: 8-byte magic "URSCKPT\0", u32 little-endian header length, a JSON
// header (version, config, tensor manifest with name/shape/dtype/offset,
// free-form meta), then the tensors as little-endian f32.
std::string checkpoint_bytes(const PolicyParams<float>& params, const std::string& meta_json = "{}");
PolicyParams<float> checkpoint_from_bytes(const std::string& bytes, std::string* meta_json = nullptr);

void save_checkpoint(const std::filesystem::path& path, const PolicyParams<float>& params,
                     const std::string& meta_json = "{}");
PolicyParams<float> load_checkpoint(const std::filesystem::path& path, std::string* meta_json = nullptr);

}  // namespace urs
