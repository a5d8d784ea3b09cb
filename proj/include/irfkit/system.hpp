#pragma once

// Closed-loop ensemble description: agents, filter, controller, and the
// flat state layout they live in.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace irfkit {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// out = f(x). The owning spec fixes both dimensions.
using StateMap = std::function<void(ConstVec x, MutVec out)>;
/// out = f(x, input).
using InputMap = std::function<void(ConstVec x, ConstVec input, MutVec out)>;
/// out = f(x, input, reference).
using ControlMap = std::function<void(ConstVec x, ConstVec input, ConstVec reference, MutVec out)>;
/// probs = p(signal); must land on the probability simplex.
using ProbabilityLaw = std::function<void(ConstVec signal, MutVec probs)>;

struct AgentSpec {
  std::size_t state_dim = 1;
  std::size_t output_dim = 1;
  std::vector<StateMap> transition_maps;
  std::vector<StateMap> output_maps;
  ProbabilityLaw transition_probs;
  ProbabilityLaw output_probs;
};

struct FilterSpec {
  std::size_t state_dim = 0;
  std::size_t input_dim = 1;   // aggregate output dimension
  std::size_t output_dim = 1;  // filtered output dimension
  InputMap transition;         // (x_f, y) -> x_f'
  InputMap output;             // (x_f, y) -> y_hat
};

/// Compact axis-aligned box of admissible control signals.
struct SignalBox {
  std::vector<double> lower;
  std::vector<double> upper;

  [[nodiscard]] std::size_t dim() const noexcept { return lower.size(); }
  [[nodiscard]] bool contains(ConstVec signal, double tol = 0.0) const noexcept;
  void clamp(MutVec signal) const noexcept;
  /// Tensor grid with `points_per_axis` points on every axis (degenerate
  /// axes contribute one point). Ordered with the last axis fastest.
  [[nodiscard]] std::vector<std::vector<double>> grid(std::size_t points_per_axis) const;
};

struct ControllerSpec {
  std::size_t state_dim = 0;
  std::size_t input_dim = 1;  // filtered output dimension
  std::vector<double> reference;
  SignalBox signal_set;
  ControlMap transition;      // (x_c, y_hat, r) -> x_c'
  ControlMap output;          // (x_c, y_hat, r) -> signal
};

/// Offsets of each block inside the flat state vector
/// [x_1 .. x_N | x_f | x_c | y_prev].
struct StateLayout {
  std::vector<std::size_t> agent_offset;  // N + 1 entries; agent i spans [off[i], off[i+1])
  std::size_t filter_offset = 0;
  std::size_t filter_dim = 0;
  std::size_t controller_offset = 0;
  std::size_t controller_dim = 0;
  std::size_t output_offset = 0;
  std::size_t output_dim = 0;
  std::size_t total = 0;
};

/// Full closed-loop state as one contiguous vector; see StateLayout.
struct SystemState {
  std::vector<double> values;

  [[nodiscard]] ConstVec view() const noexcept { return values; }
  [[nodiscard]] MutVec view() noexcept { return values; }
  friend bool operator==(const SystemState&, const SystemState&) = default;
};

/// One choice of transition map and output map per agent (0-based).
struct MapIndex {
  std::vector<std::uint32_t> transition;
  std::vector<std::uint32_t> output;

  friend bool operator==(const MapIndex&, const MapIndex&) = default;
  friend auto operator<=>(const MapIndex&, const MapIndex&) = default;
};

[[nodiscard]] std::string to_string(const MapIndex& m);

/// Entries >= -tol and |sum - 1| <= tol.
[[nodiscard]] bool on_simplex(ConstVec probs, double tol) noexcept;

class ClosedLoopSystem {
 public:
  ClosedLoopSystem(std::vector<AgentSpec> agents, FilterSpec filter, ControllerSpec controller);

  [[nodiscard]] std::size_t num_agents() const noexcept { return agents_.size(); }
  [[nodiscard]] const AgentSpec& agent(std::size_t i) const { return agents_.at(i); }
  [[nodiscard]] const std::vector<AgentSpec>& agents() const noexcept { return agents_; }
  [[nodiscard]] const FilterSpec& filter() const noexcept { return filter_; }
  [[nodiscard]] const ControllerSpec& controller() const noexcept { return controller_; }
  [[nodiscard]] const StateLayout& layout() const noexcept { return layout_; }

  [[nodiscard]] std::size_t state_dim() const noexcept { return layout_.total; }
  [[nodiscard]] std::size_t aggregate_dim() const noexcept { return filter_.input_dim; }
  [[nodiscard]] std::size_t signal_dim() const noexcept { return controller_.signal_set.dim(); }

  /// |M| = prod w_i * prod h_i, saturating at UINT64_MAX.
  [[nodiscard]] std::uint64_t index_set_size() const noexcept;
  /// Largest per-agent map counts, useful for allocating scratch space.
  [[nodiscard]] std::size_t max_transition_maps() const noexcept;
  [[nodiscard]] std::size_t max_output_maps() const noexcept;

  [[nodiscard]] SystemState zero_state() const { return SystemState{std::vector<double>(layout_.total, 0.0)}; }
  /// Assemble a state from its blocks; throws DimensionError on mismatch.
  [[nodiscard]] SystemState make_state(const std::vector<std::vector<double>>& agent_states,
                                       const std::vector<double>& filter_state,
                                       const std::vector<double>& controller_state,
                                       const std::vector<double>& buffered_output) const;

  [[nodiscard]] ConstVec agent_state(ConstVec state, std::size_t i) const;
  [[nodiscard]] MutVec agent_state(MutVec state, std::size_t i) const;
  [[nodiscard]] ConstVec filter_state(ConstVec state) const;
  [[nodiscard]] MutVec filter_state(MutVec state) const;
  [[nodiscard]] ConstVec controller_state(ConstVec state) const;
  [[nodiscard]] MutVec controller_state(MutVec state) const;
  [[nodiscard]] ConstVec buffered_output(ConstVec state) const;
  [[nodiscard]] MutVec buffered_output(MutVec state) const;

  /// Throws DimensionError for a wrong size, NumericalError for non-finite entries.
  void validate(ConstVec state) const;

  /// Evaluate every probability law on a grid over the signal box and
  /// throw ProbabilityLawError at the first vector off the simplex.
  void check_probability_laws(std::size_t points_per_axis) const;

 private:
  std::vector<AgentSpec> agents_;
  FilterSpec filter_;
  ControllerSpec controller_;
  StateLayout layout_;
};

}  // namespace irfkit
