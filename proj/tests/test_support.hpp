#pragma once

// Small builders shared by the unit tests.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "irfkit/model_zoo.hpp"
#include "irfkit/system.hpp"

namespace irfkit::testing {

/// Straight-line SplitMix64 stream, written out independently of
/// RandomStream from the documented derivation rules.
class ReferenceStream {
 public:
  ReferenceStream(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master ^ (index * 0x9E3779B97F4A7C15ULL);
    state_ = mix(z);
  }
  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }
  double uniform() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

/// Scalar agent with scalar maps given as plain functions.
inline AgentSpec scalar_agent(std::vector<std::function<double(double)>> transitions,
                              std::vector<std::function<double(double)>> outputs, ProbabilityLaw transition_law,
                              ProbabilityLaw output_law) {
  AgentSpec a;
  a.state_dim = 1;
  a.output_dim = 1;
  for (auto& f : transitions) a.transition_maps.push_back([f](ConstVec x, MutVec out) { out[0] = f(x[0]); });
  for (auto& f : outputs) a.output_maps.push_back([f](ConstVec x, MutVec out) { out[0] = f(x[0]); });
  a.transition_probs = std::move(transition_law);
  a.output_probs = std::move(output_law);
  return a;
}

inline ProbabilityLaw constant_law(std::vector<double> p) {
  return [p](ConstVec, MutVec out) {
    for (std::size_t j = 0; j < p.size(); ++j) out[j] = p[j];
  };
}

/// Scalar controller with x_c' = hold(x_c, y_hat) and signal = out(x_c, y_hat, r).
inline ControllerSpec scalar_controller(std::function<double(double, double)> next,
                                        std::function<double(double, double, double)> out, double reference,
                                        double lo, double hi) {
  ControllerSpec c;
  c.state_dim = 1;
  c.input_dim = 1;
  c.reference = {reference};
  c.signal_set = SignalBox{{lo}, {hi}};
  c.transition = [next](ConstVec xc, ConstVec yhat, ConstVec, MutVec o) { o[0] = next(xc[0], yhat[0]); };
  c.output = [out](ConstVec xc, ConstVec yhat, ConstVec r, MutVec o) { o[0] = out(xc[0], yhat[0], r[0]); };
  return c;
}

/// Deterministic scalar system x -> f(x) (one map, no feedback).
inline ClosedLoopSystem deterministic_scalar(std::function<double(double)> f) {
  AgentSpec a;
  a.state_dim = 1;
  a.output_dim = 0;
  a.transition_maps = {[f](ConstVec x, MutVec out) { out[0] = f(x[0]); }};
  a.output_maps = {[](ConstVec, MutVec) {}};
  a.transition_probs = constant_law({1.0});
  a.output_probs = constant_law({1.0});
  return ClosedLoopSystem({a}, zoo::make_identity_filter(0),
                          zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 0));
}

}  // namespace irfkit::testing
