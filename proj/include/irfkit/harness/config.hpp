#pragma once

// Experiment configuration: a JSON document with a schema_version, a system
// block and one block per subcommand. Every validation failure raises
// ConfigError whose message starts with the offending field path.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "irfkit/diagnostics.hpp"
#include "irfkit/system.hpp"
#include "irfkit/verifiers.hpp"

namespace irfkit::harness {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

struct Config {
  Json root;
  std::string text;    // raw bytes as read
  std::string digest;  // SHA-256 of `text`, lowercase hex
};

[[nodiscard]] std::string sha256_hex(std::string_view bytes);

/// Parse and check the top level. Syntax errors report line and column.
[[nodiscard]] Config parse_config(std::string text);
[[nodiscard]] Config load_config(const std::string& path);

/// Typed access to one JSON object, carrying its path for diagnostics.
class Node {
 public:
  Node(const Json& j, std::string path);

  [[nodiscard]] const Json& json() const noexcept { return *j_; }
  [[nodiscard]] const std::string& path() const noexcept { return path_; }
  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] std::string field(const std::string& key) const { return path_ + "." + key; }

  /// Reject keys outside `allowed`.
  void allow_only(std::initializer_list<const char*> allowed) const;

  [[nodiscard]] Node child(const std::string& key) const;
  [[nodiscard]] std::vector<Node> list(const std::string& key) const;

  [[nodiscard]] double number(const std::string& key) const;
  [[nodiscard]] double number(const std::string& key, double fallback) const;
  [[nodiscard]] std::uint64_t count(const std::string& key) const;
  [[nodiscard]] std::uint64_t count(const std::string& key, std::uint64_t fallback) const;
  [[nodiscard]] bool flag(const std::string& key, bool fallback) const;
  [[nodiscard]] std::string text(const std::string& key) const;
  [[nodiscard]] std::string text(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] std::vector<double> numbers(const std::string& key) const;
  [[nodiscard]] std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const;
  [[nodiscard]] std::vector<std::vector<double>> matrix(const std::string& key) const;

 private:
  const Json* j_;
  std::string path_;
};

[[nodiscard]] ClosedLoopSystem build_system(const Node& block);

/// A state is a full flat vector, or an object filling blocks with scalars:
/// {"agent": a, "filter": f, "controller": c, "output": y}.
[[nodiscard]] SystemState build_state(const ClosedLoopSystem& system, const Json& spec, const std::string& path);
[[nodiscard]] SystemState build_state(const ClosedLoopSystem& system, const Node& parent, const std::string& key);

/// A list of states, or {"random_controller": {count, lo, hi, seed, filter}}
/// drawing controller states uniformly from stream (seed, 0).
[[nodiscard]] std::vector<SystemState> build_states(const ClosedLoopSystem& system, const Node& parent,
                                                    const std::string& key);

/// {"type": "coordinate", "index": i} | {"type": "lattice_phase", "index": i,
/// "spacing": s} | {"type": "agent_mean"}.
[[nodiscard]] Observable build_observable(const ClosedLoopSystem& system, const Node& spec);

/// {"type": "quadratic", "weights": [...], "center": [...]} (defaults 1 and 0).
[[nodiscard]] ScalarFunction build_quadratic(std::size_t dim, const Node& spec);

/// {"coef": c, "power": p}: s -> c s^p.
[[nodiscard]] ComparisonFunction build_comparison(const Node& spec);

/// {"lower": [...], "upper": [...]} or scalar "lo"/"hi" for every coordinate.
[[nodiscard]] DomainSampler build_box(std::size_t dim, const Node& spec, std::vector<double>* lower = nullptr,
                                      std::vector<double>* upper = nullptr);

}  // namespace irfkit::harness
