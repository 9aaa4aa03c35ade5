#pragma once

#include <map>
#include <string>
#include <vector>

namespace cgnn {

// Everything needed to replay a run: the subcommand, the exact argv, the
// input artifacts, and the effective settings. Written before any long
// computation starts.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> settings;
  std::string out_path;
  std::string version;
  std::string build_id;
  std::string created_at;
};

RunManifest make_manifest(const std::string& command, int argc, const char* const* argv);
void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace cgnn
