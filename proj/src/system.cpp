#include "irfkit/system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "irfkit/errors.hpp"

namespace irfkit {

bool SignalBox::contains(ConstVec signal, double tol) const noexcept {
  if (signal.size() != lower.size()) return false;
  for (std::size_t a = 0; a < signal.size(); ++a) {
    if (!(signal[a] >= lower[a] - tol && signal[a] <= upper[a] + tol)) return false;
  }
  return true;
}

void SignalBox::clamp(MutVec signal) const noexcept {
  for (std::size_t a = 0; a < signal.size() && a < lower.size(); ++a) {
    signal[a] = std::clamp(signal[a], lower[a], upper[a]);
  }
}

std::vector<std::vector<double>> SignalBox::grid(std::size_t points_per_axis) const {
  const std::size_t n = std::max<std::size_t>(points_per_axis, 1);
  std::vector<std::size_t> counts(dim());
  std::size_t total = 1;
  for (std::size_t a = 0; a < dim(); ++a) {
    counts[a] = (upper[a] > lower[a]) ? n : 1;
    total *= counts[a];
  }
  std::vector<std::vector<double>> points;
  points.reserve(total);
  std::vector<std::size_t> idx(dim(), 0);
  for (std::size_t p = 0; p < total; ++p) {
    std::vector<double> pt(dim());
    for (std::size_t a = 0; a < dim(); ++a) {
      pt[a] = counts[a] == 1 ? lower[a]
                             : lower[a] + (upper[a] - lower[a]) * static_cast<double>(idx[a]) /
                                              static_cast<double>(counts[a] - 1);
    }
    points.push_back(std::move(pt));
    for (std::size_t a = dim(); a-- > 0;) {
      if (++idx[a] < counts[a]) break;
      idx[a] = 0;
    }
  }
  return points;
}

std::string to_string(const MapIndex& m) {
  std::ostringstream os;
  for (std::size_t i = 0; i < m.transition.size(); ++i) {
    if (i) os << ':';
    os << m.transition[i];
  }
  os << '|';
  for (std::size_t i = 0; i < m.output.size(); ++i) {
    if (i) os << ':';
    os << m.output[i];
  }
  return os.str();
}

bool on_simplex(ConstVec probs, double tol) noexcept {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -tol)) return false;  // also rejects NaN
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

ClosedLoopSystem::ClosedLoopSystem(std::vector<AgentSpec> agents, FilterSpec filter,
                                   ControllerSpec controller)
    : agents_(std::move(agents)), filter_(std::move(filter)), controller_(std::move(controller)) {
  if (agents_.empty()) throw DimensionError("closed loop needs at least one agent");
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const AgentSpec& a = agents_[i];
    const std::string who = "agent " + std::to_string(i);
    if (a.state_dim == 0) throw DimensionError(who + ": state_dim must be positive");
    if (a.transition_maps.empty()) throw DimensionError(who + ": needs at least one transition map");
    if (a.output_maps.empty()) throw DimensionError(who + ": needs at least one output map");
    if (!a.transition_probs || !a.output_probs) throw DimensionError(who + ": missing probability law");
    for (const auto& f : a.transition_maps)
      if (!f) throw DimensionError(who + ": empty transition map");
    for (const auto& f : a.output_maps)
      if (!f) throw DimensionError(who + ": empty output map");
    if (a.output_dim != filter_.input_dim) {
      throw DimensionError(who + ": output_dim " + std::to_string(a.output_dim) +
                           " differs from filter input_dim " + std::to_string(filter_.input_dim));
    }
  }
  if (!filter_.transition || !filter_.output) throw DimensionError("filter: missing map");
  if (!controller_.transition || !controller_.output) throw DimensionError("controller: missing map");
  if (filter_.output_dim != controller_.input_dim) {
    throw DimensionError("filter output_dim " + std::to_string(filter_.output_dim) +
                         " differs from controller input_dim " + std::to_string(controller_.input_dim));
  }
  const SignalBox& box = controller_.signal_set;
  if (box.lower.empty() || box.lower.size() != box.upper.size())
    throw DimensionError("controller: signal box bounds must be non-empty and of equal length");
  for (std::size_t a = 0; a < box.dim(); ++a) {
    if (!std::isfinite(box.lower[a]) || !std::isfinite(box.upper[a]) || box.lower[a] > box.upper[a])
      throw DimensionError("controller: signal box must be finite with lower <= upper");
  }

  layout_.agent_offset.reserve(agents_.size() + 1);
  std::size_t off = 0;
  for (const auto& a : agents_) {
    layout_.agent_offset.push_back(off);
    off += a.state_dim;
  }
  layout_.agent_offset.push_back(off);
  layout_.filter_offset = off;
  layout_.filter_dim = filter_.state_dim;
  off += filter_.state_dim;
  layout_.controller_offset = off;
  layout_.controller_dim = controller_.state_dim;
  off += controller_.state_dim;
  layout_.output_offset = off;
  layout_.output_dim = filter_.input_dim;
  off += filter_.input_dim;
  layout_.total = off;

  check_probability_laws(3);
}

std::uint64_t ClosedLoopSystem::index_set_size() const noexcept {
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t size = 1;
  auto times = [&](std::uint64_t f) {
    if (size > kMax / f) {
      size = kMax;
    } else if (size != kMax) {
      size *= f;
    }
  };
  for (const auto& a : agents_) times(a.transition_maps.size());
  for (const auto& a : agents_) times(a.output_maps.size());
  return size;
}

std::size_t ClosedLoopSystem::max_transition_maps() const noexcept {
  std::size_t m = 0;
  for (const auto& a : agents_) m = std::max(m, a.transition_maps.size());
  return m;
}

std::size_t ClosedLoopSystem::max_output_maps() const noexcept {
  std::size_t m = 0;
  for (const auto& a : agents_) m = std::max(m, a.output_maps.size());
  return m;
}

SystemState ClosedLoopSystem::make_state(const std::vector<std::vector<double>>& agent_states,
                                         const std::vector<double>& filter_state,
                                         const std::vector<double>& controller_state,
                                         const std::vector<double>& buffered_output) const {
  if (agent_states.size() != agents_.size())
    throw DimensionError("make_state: expected " + std::to_string(agents_.size()) + " agent states");
  SystemState s = zero_state();
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (agent_states[i].size() != agents_[i].state_dim)
      throw DimensionError("make_state: agent " + std::to_string(i) + " state has wrong dimension");
    std::copy(agent_states[i].begin(), agent_states[i].end(), agent_state(s.view(), i).begin());
  }
  if (filter_state.size() != layout_.filter_dim) throw DimensionError("make_state: filter state dimension");
  if (controller_state.size() != layout_.controller_dim)
    throw DimensionError("make_state: controller state dimension");
  if (buffered_output.size() != layout_.output_dim)
    throw DimensionError("make_state: buffered output dimension");
  std::copy(filter_state.begin(), filter_state.end(), this->filter_state(s.view()).begin());
  std::copy(controller_state.begin(), controller_state.end(), this->controller_state(s.view()).begin());
  std::copy(buffered_output.begin(), buffered_output.end(), this->buffered_output(s.view()).begin());
  return s;
}

ConstVec ClosedLoopSystem::agent_state(ConstVec state, std::size_t i) const {
  return state.subspan(layout_.agent_offset[i], layout_.agent_offset[i + 1] - layout_.agent_offset[i]);
}
MutVec ClosedLoopSystem::agent_state(MutVec state, std::size_t i) const {
  return state.subspan(layout_.agent_offset[i], layout_.agent_offset[i + 1] - layout_.agent_offset[i]);
}
ConstVec ClosedLoopSystem::filter_state(ConstVec state) const {
  return state.subspan(layout_.filter_offset, layout_.filter_dim);
}
MutVec ClosedLoopSystem::filter_state(MutVec state) const {
  return state.subspan(layout_.filter_offset, layout_.filter_dim);
}
ConstVec ClosedLoopSystem::controller_state(ConstVec state) const {
  return state.subspan(layout_.controller_offset, layout_.controller_dim);
}
MutVec ClosedLoopSystem::controller_state(MutVec state) const {
  return state.subspan(layout_.controller_offset, layout_.controller_dim);
}
ConstVec ClosedLoopSystem::buffered_output(ConstVec state) const {
  return state.subspan(layout_.output_offset, layout_.output_dim);
}
MutVec ClosedLoopSystem::buffered_output(MutVec state) const {
  return state.subspan(layout_.output_offset, layout_.output_dim);
}

void ClosedLoopSystem::validate(ConstVec state) const {
  if (state.size() != layout_.total) {
    throw DimensionError("state has dimension " + std::to_string(state.size()) + ", system expects " +
                         std::to_string(layout_.total));
  }
  for (std::size_t k = 0; k < state.size(); ++k) {
    if (!std::isfinite(state[k]))
      throw NumericalError("state", "state entry " + std::to_string(k) + " is not finite");
  }
}

void ClosedLoopSystem::check_probability_laws(std::size_t points_per_axis) const {
  std::vector<double> probs;
  for (const auto& signal : controller_.signal_set.grid(points_per_axis)) {
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      const AgentSpec& a = agents_[i];
      probs.assign(a.transition_maps.size(), 0.0);
      a.transition_probs(signal, probs);
      if (!on_simplex(probs, 1e-12))
        throw ProbabilityLawError("agent " + std::to_string(i) + ": transition law off the simplex");
      probs.assign(a.output_maps.size(), 0.0);
      a.output_probs(signal, probs);
      if (!on_simplex(probs, 1e-12))
        throw ProbabilityLawError("agent " + std::to_string(i) + ": output law off the simplex");
    }
  }
}

}  // namespace irfkit
