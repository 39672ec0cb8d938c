#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hcmgan/data.hpp"
#include "hcmgan/networks.hpp"
#include "hcmgan/split_engine.hpp"

namespace hcmgan::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDivergence = 2, kIoError = 3 };

struct DatasetConfig {
  std::string kind = "synth";  // synth | csv | idx
  std::filesystem::path path;  // csv
  bool label_column = false;   // csv
  std::filesystem::path images;
  std::filesystem::path labels;  // idx, or a separate labels file for csv
  data::MixtureSpec mixture;
};

/// Everything a run depends on. `cfg.split.seed` is the run seed.
struct RunConfig {
  DatasetConfig dataset;
  split::SplitConfig split;
  std::size_t leaves = 2;
  std::filesystem::path out_dir = "out";
};

// Parses an INI file; `overrides` are "section.key=value" strings applied on
// top. A [manifest] section is ignored, so manifests replay as configs.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
RunConfig parse_run_config(std::istream& in, const std::vector<std::string>& overrides = {});
data::MixtureSpec load_mixture_spec(const std::filesystem::path& path);

// Checks values and that referenced files exist. Throws ConfigError.
void validate(const RunConfig& rc);

// Canonical INI text of a config (fixed key order, shortest round-trip
// number formatting).
std::string resolved_ini(const RunConfig& rc);
std::uint64_t fnv1a(const std::string& text);

data::Dataset load_dataset(const DatasetConfig& dc);

// Logs the in-flight exception and maps it to an exit code.
int exit_code_for(std::exception_ptr e);

// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv);

}  // namespace hcmgan::cli
