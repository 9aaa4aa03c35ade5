#include "cgnn/manifest.hpp"

#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cgnn/errors.hpp"
#include "cgnn/version.hpp"

namespace cgnn {

RunManifest make_manifest(const std::string& command, int argc, const char* const* argv) {
  RunManifest m;
  m.command = command;
  for (int i = 0; i < argc; ++i) m.argv.emplace_back(argv[i]);
  m.version = kVersionString;
  m.build_id = kBuildId;

  std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);
  m.created_at = stamp;
  return m;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json doc;
  doc["command"] = manifest.command;
  doc["argv"] = manifest.argv;
  doc["inputs"] = manifest.inputs;
  doc["settings"] = manifest.settings;
  doc["out"] = manifest.out_path;
  doc["version"] = manifest.version;
  doc["build_id"] = manifest.build_id;
  doc["created_at"] = manifest.created_at;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f << doc.dump(2) << "\n";
  if (!f) throw IoError("failed writing manifest \"" + path + "\"");
}

}  // namespace cgnn
