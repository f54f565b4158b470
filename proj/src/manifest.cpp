#include "tslg/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace tslg {

std::string fnv1a_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void RunManifest::add_output(const std::string& path) {
  outputs.emplace_back(path, fnv1a_file_hex(path));
}

json RunManifest::to_json() const {
  json outputs_j = json::array();
  for (const auto& [path, hash] : outputs) outputs_j.push_back({{"path", path}, {"fnv64", hash}});
  return {{"tool_version", tool_version}, {"command", command}, {"config", config},
          {"seed", seed},                 {"inputs", inputs},   {"outputs", outputs_j},
          {"wall_s", wall_s}};
}

void RunManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump(2) << "\n";
}

}  // namespace tslg
