#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hedge::cli {

inline constexpr const char* kToolVersion = HEDGE_VERSION;

/// Provenance record written next to the outputs of every run.
struct RunManifest {
  std::string command_line;
  nlohmann::json config = nlohmann::json::object();
  std::string tool_version = kToolVersion;
  std::map<std::string, std::string> input_hashes;   // path -> sha256
  std::map<std::string, std::string> output_hashes;  // path -> sha256
  std::map<std::string, double> timings_ms;          // stage -> wall clock
  nlohmann::json counters = nlohmann::json::object();
};

nlohmann::json to_json(const RunManifest& m);

/// Parses and runs one subcommand. Returns 0 on success, 2 on a usage error
/// and 1 on any other failure; failures print one JSON object to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hedge::cli
