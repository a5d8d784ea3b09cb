#pragma once

// Stepping the closed loop as an iterated random function with
// state-dependent probabilities.
//
// Draw discipline: per step and per agent, in agent order, exactly two
// uniforms are consumed: first for the transition map, then for the output
// map. Each is mapped through the inverse CDF of its probability vector, so
// a stream position never depends on which maps were chosen.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "irfkit/random_stream.hpp"
#include "irfkit/system.hpp"

namespace irfkit {

inline constexpr double kSignalTolerance = 1e-9;
inline constexpr double kSimplexTolerance = 1e-12;
inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Reusable scratch space for stepping one trajectory. Not thread safe;
/// give each worker its own Stepper. The referenced system must outlive it.
class Stepper {
 public:
  explicit Stepper(const ClosedLoopSystem& system);

  [[nodiscard]] const ClosedLoopSystem& system() const noexcept { return *system_; }

  /// Signal at `state`: H_c(x_c, H_f(x_f, y_prev), r), clamped into the box.
  /// The returned view is valid until the next call on this Stepper.
  ConstVec signal(ConstVec state);

  /// Sample one transition map and one output map per agent.
  void sample(ConstVec signal, RandomStream& rng, MapIndex& out);

  /// next = F_m(state). `next` must not alias `state`.
  void apply(const MapIndex& m, ConstVec state, MutVec next);

  /// signal -> sample -> apply. The signal used is available via last_signal().
  void step(ConstVec state, RandomStream& rng, MutVec next, MapIndex& index);

  [[nodiscard]] ConstVec last_signal() const noexcept { return signal_; }

 private:
  void draw(ConstVec probs, double u, const char* what, std::size_t agent, std::uint32_t& choice) const;

  const ClosedLoopSystem* system_;
  std::vector<double> signal_;
  std::vector<double> filtered_;
  std::vector<double> aggregate_;
  std::vector<double> output_tmp_;
  std::vector<double> probs_;
};

[[nodiscard]] std::vector<double> signal(const ClosedLoopSystem& system, const SystemState& state);

[[nodiscard]] MapIndex sample_map_index(const ClosedLoopSystem& system, ConstVec signal, RandomStream& rng);

/// q_m(signal) = prod_i p_{i j_i}(signal) * prod_i p'_{i l_i}(signal).
[[nodiscard]] double selection_probability(const ClosedLoopSystem& system, const MapIndex& m, ConstVec signal);

/// All of M in lexicographic order (agent 0 transition most significant,
/// output choices after all transition choices).
[[nodiscard]] std::vector<MapIndex> enumerate_map_indices(const ClosedLoopSystem& system,
                                                          std::uint64_t cap = kDefaultEnumerationCap);

[[nodiscard]] SystemState apply_composite_map(const ClosedLoopSystem& system, const MapIndex& m,
                                              const SystemState& state);

struct StepResult {
  SystemState next;
  std::vector<double> signal;
  MapIndex index;
};

[[nodiscard]] StepResult step(const ClosedLoopSystem& system, const SystemState& state, RandomStream& rng);

struct SimulationFailure {
  std::size_t step = 0;  // transition out of states[step] (or its signal) failed
  std::string component;
  std::string message;
};

/// states.size() == signals.size() == selections.size() + 1.
struct Trajectory {
  std::vector<SystemState> states;
  std::vector<std::vector<double>> signals;
  std::vector<MapIndex> selections;
  std::uint64_t seed = 0;
  std::uint64_t stream_index = 0;
  std::optional<SimulationFailure> failure;
};

/// Record `horizon` steps from `initial`. A NumericalError stops the run and
/// the prefix computed so far is returned with `failure` set.
[[nodiscard]] Trajectory simulate(const ClosedLoopSystem& system, const SystemState& initial,
                                  std::size_t horizon, RandomStream rng);

/// Called with (k, state_k) for k = 0..horizon.
using StateObserver = std::function<void(std::size_t k, ConstVec state)>;

/// Streaming variant of simulate: nothing is stored, errors propagate.
void run(const ClosedLoopSystem& system, const SystemState& initial, std::size_t horizon, RandomStream& rng,
         const StateObserver& observer);

}  // namespace irfkit
