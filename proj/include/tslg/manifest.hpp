#ifndef TSLG_MANIFEST_HPP
#define TSLG_MANIFEST_HPP

#include <string>
#include <vector>

#include "tslg/core.hpp"

namespace tslg {

inline constexpr const char* kToolVersion = "tslg 0.1.0";

// Snapshot of one CLI run: configuration, inputs, outputs with content
// hashes, and timing. Re-running the same command with the same inputs must
// reproduce every listed output byte for byte; wall time is the only
// volatile field.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;  // path -> fnv64 hex
  double wall_s = 0.0;

  void add_output(const std::string& path);
  json to_json() const;
  void save(const std::string& path) const;
};

std::string fnv1a_file_hex(const std::string& path);

}  // namespace tslg

#endif  // TSLG_MANIFEST_HPP
