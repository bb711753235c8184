#include <chrono>
#include <ctime>

#include "cli.hpp"
#include "videograph/data_io.hpp"

#ifndef VIDEOGRAPH_GIT_DESCRIBE
#define VIDEOGRAPH_GIT_DESCRIBE "unknown"
#endif

namespace vgcli {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string git_describe() { return VIDEOGRAPH_GIT_DESCRIBE; }

nlohmann::ordered_json Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["cwd"] = cwd;
  j["seed"] = seed;
  j["git_describe"] = git_describe();
  j["config"] = config;
  j["outputs"] = outputs;
  j["exit_code"] = exit_code;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j;
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.cwd = j.at("cwd").get<std::string>();
    m.config = j.value("config", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.outputs = j.value("outputs", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw videograph::ParseError(std::string("manifest: ") + e.what(), 0);
  }
  if (m.argv.empty() || m.argv.front() != m.command) throw videograph::ParseError("manifest: argv does not start with the command", 0);
  return m;
}

void Manifest::write(const std::filesystem::path& path) const {
  videograph::write_text_file(path, to_json().dump(2) + "\n");
}

}  // namespace vgcli
