#pragma once

// Subcommands of the irfkit driver. Each run renders its files in memory,
// then writes them together with config.json (a byte copy of the input) and
// manifest.json into the output directory.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "irfkit/harness/config.hpp"

namespace irfkit::harness {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3, kExitPartial = 4 };

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides config.seed
  std::optional<std::string> out;     // overrides config.output.dir
  std::size_t threads = 0;            // 0 = hardware concurrency
  std::string format = "csv";
};

/// Shortest round-trip decimal form of a double.
[[nodiscard]] std::string format_double(double v);

/// Rows of a comma-separated table behind a `# config_digest=... seed=...` line.
class CsvTable {
 public:
  CsvTable(std::vector<std::string> header, const std::string& digest, std::uint64_t seed);
  void add(const std::vector<std::string>& row);
  [[nodiscard]] std::string str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

/// Files produced by one subcommand, keyed by name, plus the exit status.
struct RunOutput {
  std::map<std::string, std::string> files;
  int exit_code = kExitOk;
  std::vector<std::string> messages;
};

[[nodiscard]] RunOutput run_simulate(const Config& config, std::uint64_t seed, std::size_t threads);
[[nodiscard]] RunOutput run_diagnose(const Config& config, std::uint64_t seed, std::size_t threads);
[[nodiscard]] RunOutput run_verify(const Config& config, std::uint64_t seed, std::size_t threads);

/// Re-check a finished run directory (config digest and file hashes) and
/// write report.txt summarising it.
[[nodiscard]] int run_report(const std::string& out_dir, std::ostream& log);

/// Full driver: load, run, write outputs. Returns the process exit code and
/// prints diagnostics to `log`.
[[nodiscard]] int run_command(const std::string& subcommand, const RunOptions& options, std::ostream& log);

}  // namespace irfkit::harness
