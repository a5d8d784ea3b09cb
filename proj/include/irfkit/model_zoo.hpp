#pragma once

// Ready-made agents, filters, controllers and benchmark systems.

#include <cstddef>
#include <vector>

#include "irfkit/system.hpp"

namespace irfkit::zoo {

/// Stateless two-mode agent (e.g. a plug-in hybrid choosing between
/// combustion and electric drive). Output map 0 emits `emission_on`, output
/// map 1 emits `emission_off`; P(on | signal) = clamp(0.5 + gain * signal[axis],
/// p_min, p_max).
struct TwoModeAgentParams {
  double emission_on = 1.0;
  double emission_off = 0.0;
  double response_gain = 0.0;
  double p_min = 0.1;
  double p_max = 0.9;
  std::size_t signal_axis = 0;
};

[[nodiscard]] double on_probability(const TwoModeAgentParams& params, ConstVec signal);
[[nodiscard]] AgentSpec make_two_mode_agent(const TwoModeAgentParams& params);

/// Two-mode agent whose output is the average emission over `substeps`
/// independent mode draws within one step, so outputs range over
/// off + (l / substeps) * (on - off), l = 0..substeps, with binomial weights.
/// Turns binary mode outputs into a proportion of combustion use.
[[nodiscard]] AgentSpec make_proportional_use_agent(const TwoModeAgentParams& params, std::size_t substeps);

struct MaxWindowFilterParams {
  std::size_t window = 5;
  std::size_t dim = 1;
};

/// x_f' = pole * x_f + gain * y, y_hat = x_f. Requires |pole| < 1.
[[nodiscard]] FilterSpec make_linear_filter(double pole, double gain, std::size_t dim = 1);

/// Shift register of the last `window` aggregates, newest first;
/// y_hat = componentwise max over the register.
[[nodiscard]] FilterSpec make_max_window_filter(const MaxWindowFilterParams& params);

/// Stateless pass-through: y_hat = y.
[[nodiscard]] FilterSpec make_identity_filter(std::size_t dim);

/// Clamp onto [lo, hi] with quadratic rounding of half-width `corner` at each
/// end. Slope stays in [0, 1], so the map is 1-Lipschitz.
[[nodiscard]] double smooth_clamp(double x, double lo, double hi, double corner) noexcept;

struct LagControllerParams {
  double gain = 0.1;   // K_p
  double pole = 0.99;  // a; 1 gives a pure integrator
  std::vector<double> reference{0.5};
  SignalBox signal_set{{-1.0}, {1.0}};
  double corner = 1e-3;
};

/// x_c' = pole * x_c + gain * (r - y_hat), signal = smooth_clamp(x_c) onto the box.
[[nodiscard]] ControllerSpec make_lag_controller(const LagControllerParams& params);

/// Stateless controller that always emits `value`.
[[nodiscard]] ControllerSpec make_constant_controller(std::vector<double> value, SignalBox box, std::size_t input_dim);

/// Scalar iterated function system x -> slopes[j] * x + offsets[j] chosen
/// with constant probabilities. No aggregate feedback: the agent has a
/// zero-dimensional output and the signal is constant, so the flat state is
/// just x.
[[nodiscard]] ClosedLoopSystem make_affine_ifs_benchmark(const std::vector<double>& slopes,
                                                         const std::vector<double>& offsets,
                                                         const std::vector<double>& probs);

/// F1(x) = x/2, F2(x) = x/2 + 1 with probability 1/2 each; invariant law U[0, 2].
[[nodiscard]] ClosedLoopSystem make_twomap1d();

struct FleetParams {
  std::size_t agents = 100;
  TwoModeAgentParams agent{0.01, 0.0, 0.4, 0.1, 0.9, 0};
  std::size_t substeps = 0;  // 0: binary outputs, otherwise proportional use
  MaxWindowFilterParams filter{};
  LagControllerParams controller{};
};

/// Fleet of identical two-mode agents, max-window filter and lag controller.
[[nodiscard]] ClosedLoopSystem make_phev_fleet(const FleetParams& params);

/// Fleet state with every filter slot set to `filter_fill` and the controller
/// state set to `controller_state`; agent placeholders and y_prev are zero.
[[nodiscard]] SystemState fleet_state(const ClosedLoopSystem& fleet, double controller_state, double filter_fill);

}  // namespace irfkit::zoo
