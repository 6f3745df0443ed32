#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "lgplug/matrix.hpp"

namespace lgplug {

// Versioned binary container for parameter tensors: 8-byte magic, u32
// version, u32 header length, JSON header (kind, free-form meta, tensor
// shapes), then the raw little-endian doubles in header order.
struct Checkpoint {
  std::string kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const Matrix& tensor(const std::string& name) const;
};

}  // namespace lgplug
