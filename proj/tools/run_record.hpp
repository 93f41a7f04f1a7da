#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmsift/error.hpp"

namespace mmsift::cli {

namespace fs = std::filesystem;

/// What run.json captures about one invocation.
struct RunRecord {
  std::string command;
  std::vector<std::string> argv;
  int jobs = 1;
  std::string config_json = "{}";  // resolved configuration
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::string stage;  // last stage entered
  bool ok = false;
  std::optional<ErrorKind> error_kind;
  std::string error_message;
  int exit_code = 0;
};

/// Lower-case hex SHA-256 of a file's bytes; nullopt when it cannot be read.
std::optional<std::string> sha256_file(const fs::path& path);

std::string run_record_json(const RunRecord& record);
void write_run_record(const RunRecord& record, const fs::path& path);

}  // namespace mmsift::cli
