#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace vgcli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntime = 1;
inline constexpr int kUsage = 2;

/// Bad flag values or combinations; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Provenance of one command run. Everything except the timestamps is a
/// pure function of the arguments.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;  // arguments after the program name
  std::string cwd;
  std::string config;             // effective config / spec as key = value text
  std::uint64_t seed = 0;
  std::string started_at, finished_at;
  std::vector<std::string> outputs;
  int exit_code = 0;

  nlohmann::ordered_json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& path) const;
};

std::string utc_now();
std::string git_describe();

/// Shared state handed to every command.
struct Run {
  Manifest manifest;
  std::filesystem::path manifest_path;  // empty: not written

  void output(const std::filesystem::path& p) { manifest.outputs.push_back(p.string()); }
};

}  // namespace vgcli
