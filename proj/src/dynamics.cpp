#include "irfkit/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "irfkit/errors.hpp"

namespace irfkit {

namespace {

bool all_finite(ConstVec v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(ConstVec v, const std::string& component) {
  if (!all_finite(v)) throw NumericalError(component, component + " produced a non-finite value");
}

}  // namespace

Stepper::Stepper(const ClosedLoopSystem& system)
    : system_(&system),
      signal_(system.signal_dim()),
      filtered_(system.filter().output_dim),
      aggregate_(system.aggregate_dim()),
      output_tmp_(system.aggregate_dim()),
      probs_(std::max(system.max_transition_maps(), system.max_output_maps())) {}

ConstVec Stepper::signal(ConstVec state) {
  const ClosedLoopSystem& sys = *system_;
  const ControllerSpec& ctrl = sys.controller();
  sys.filter().output(sys.filter_state(state), sys.buffered_output(state), filtered_);
  require_finite(filtered_, "filter output");
  ctrl.output(sys.controller_state(state), filtered_, ctrl.reference, signal_);
  require_finite(signal_, "controller output");
  if (!ctrl.signal_set.contains(signal_, kSignalTolerance)) {
    throw SignalRangeError("controller output lies outside the signal box by more than 1e-9");
  }
  ctrl.signal_set.clamp(signal_);
  return signal_;
}

void Stepper::draw(ConstVec probs, double u, const char* what, std::size_t agent, std::uint32_t& choice) const {
  if (!on_simplex(probs, kSimplexTolerance)) {
    throw ProbabilityLawError("agent " + std::to_string(agent) + ": " + what + " law off the simplex");
  }
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > 0.0) last_positive = j;
    cumulative += probs[j];
    if (u < cumulative) {
      choice = static_cast<std::uint32_t>(j);
      return;
    }
  }
  // u landed in the rounding gap above the final cumulative sum.
  choice = static_cast<std::uint32_t>(last_positive);
}

void Stepper::sample(ConstVec signal, RandomStream& rng, MapIndex& out) {
  const ClosedLoopSystem& sys = *system_;
  const std::size_t n = sys.num_agents();
  out.transition.resize(n);
  out.output.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentSpec& a = sys.agents()[i];
    const double u_transition = rng.uniform();
    const double u_output = rng.uniform();
    MutVec pt(probs_.data(), a.transition_maps.size());
    a.transition_probs(signal, pt);
    draw(pt, u_transition, "transition", i, out.transition[i]);
    MutVec po(probs_.data(), a.output_maps.size());
    a.output_probs(signal, po);
    draw(po, u_output, "output", i, out.output[i]);
  }
}

void Stepper::apply(const MapIndex& m, ConstVec state, MutVec next) {
  const ClosedLoopSystem& sys = *system_;
  const std::size_t n = sys.num_agents();
  if (m.transition.size() != n || m.output.size() != n) {
    throw DimensionError("map index does not match the number of agents");
  }
  std::fill(aggregate_.begin(), aggregate_.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentSpec& a = sys.agents()[i];
    if (m.transition[i] >= a.transition_maps.size() || m.output[i] >= a.output_maps.size()) {
      throw DimensionError("map index out of range for agent " + std::to_string(i));
    }
    ConstVec xi = sys.agent_state(state, i);
    MutVec next_xi = sys.agent_state(next, i);
    a.transition_maps[m.transition[i]](xi, next_xi);
    if (!all_finite(next_xi)) {
      throw NumericalError("agent " + std::to_string(i) + " transition", "agent transition produced a non-finite value");
    }
    a.output_maps[m.output[i]](xi, output_tmp_);
    if (!all_finite(output_tmp_)) {
      throw NumericalError("agent " + std::to_string(i) + " output", "agent output produced a non-finite value");
    }
    for (std::size_t d = 0; d < aggregate_.size(); ++d) aggregate_[d] += output_tmp_[d];
  }
  require_finite(aggregate_, "aggregate output");

  const FilterSpec& filt = sys.filter();
  ConstVec xf = sys.filter_state(state);
  MutVec next_xf = sys.filter_state(next);
  filt.transition(xf, aggregate_, next_xf);
  require_finite(next_xf, "filter transition");
  filt.output(xf, aggregate_, filtered_);
  require_finite(filtered_, "filter output");

  const ControllerSpec& ctrl = sys.controller();
  MutVec next_xc = sys.controller_state(next);
  ctrl.transition(sys.controller_state(state), filtered_, ctrl.reference, next_xc);
  require_finite(next_xc, "controller transition");

  std::copy(aggregate_.begin(), aggregate_.end(), sys.buffered_output(next).begin());
}

void Stepper::step(ConstVec state, RandomStream& rng, MutVec next, MapIndex& index) {
  ConstVec pi = signal(state);
  sample(pi, rng, index);
  apply(index, state, next);
}

std::vector<double> signal(const ClosedLoopSystem& system, const SystemState& state) {
  system.validate(state.view());
  Stepper stepper(system);
  ConstVec pi = stepper.signal(state.view());
  return {pi.begin(), pi.end()};
}

MapIndex sample_map_index(const ClosedLoopSystem& system, ConstVec signal, RandomStream& rng) {
  if (!system.controller().signal_set.contains(signal, kSignalTolerance)) {
    throw SignalRangeError("sample_map_index: signal outside the signal box");
  }
  Stepper stepper(system);
  MapIndex m;
  stepper.sample(signal, rng, m);
  return m;
}

double selection_probability(const ClosedLoopSystem& system, const MapIndex& m, ConstVec signal) {
  const std::size_t n = system.num_agents();
  if (m.transition.size() != n || m.output.size() != n) {
    throw DimensionError("map index does not match the number of agents");
  }
  std::vector<double> probs;
  double transition_part = 1.0;
  double output_part = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const AgentSpec& a = system.agents()[i];
    probs.assign(a.transition_maps.size(), 0.0);
    a.transition_probs(signal, probs);
    transition_part *= probs.at(m.transition[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const AgentSpec& a = system.agents()[i];
    probs.assign(a.output_maps.size(), 0.0);
    a.output_probs(signal, probs);
    output_part *= probs.at(m.output[i]);
  }
  return transition_part * output_part;
}

std::vector<MapIndex> enumerate_map_indices(const ClosedLoopSystem& system, std::uint64_t cap) {
  const std::uint64_t size = system.index_set_size();
  if (size > cap) {
    throw EnumerationCapError("index set has " + (size == UINT64_MAX ? std::string(">= 2^64") : std::to_string(size)) +
                              " elements, above the enumeration cap of " + std::to_string(cap) +
                              "; use sampling instead");
  }
  const std::size_t n = system.num_agents();
  // Digits: transition choices of agents 0..N-1, then output choices.
  std::vector<std::uint32_t> radix(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    radix[i] = static_cast<std::uint32_t>(system.agents()[i].transition_maps.size());
    radix[n + i] = static_cast<std::uint32_t>(system.agents()[i].output_maps.size());
  }
  std::vector<MapIndex> out;
  out.reserve(static_cast<std::size_t>(size));
  std::vector<std::uint32_t> digit(2 * n, 0);
  for (std::uint64_t c = 0; c < size; ++c) {
    out.push_back(MapIndex{{digit.begin(), digit.begin() + static_cast<std::ptrdiff_t>(n)},
                           {digit.begin() + static_cast<std::ptrdiff_t>(n), digit.end()}});
    for (std::size_t d = 2 * n; d-- > 0;) {
      if (++digit[d] < radix[d]) break;
      digit[d] = 0;
    }
  }
  return out;
}

SystemState apply_composite_map(const ClosedLoopSystem& system, const MapIndex& m, const SystemState& state) {
  system.validate(state.view());
  Stepper stepper(system);
  SystemState next = system.zero_state();
  stepper.apply(m, state.view(), next.view());
  return next;
}

StepResult step(const ClosedLoopSystem& system, const SystemState& state, RandomStream& rng) {
  system.validate(state.view());
  Stepper stepper(system);
  StepResult r{system.zero_state(), {}, {}};
  stepper.step(state.view(), rng, r.next.view(), r.index);
  r.signal.assign(stepper.last_signal().begin(), stepper.last_signal().end());
  return r;
}

Trajectory simulate(const ClosedLoopSystem& system, const SystemState& initial, std::size_t horizon,
                    RandomStream rng) {
  system.validate(initial.view());
  Trajectory traj;
  traj.seed = rng.master_seed();
  traj.stream_index = rng.stream_index();
  traj.states.reserve(horizon + 1);
  traj.signals.reserve(horizon + 1);
  traj.selections.reserve(horizon);
  traj.states.push_back(initial);

  Stepper stepper(system);
  for (std::size_t k = 0;; ++k) {
    try {
      ConstVec pi = stepper.signal(traj.states.back().view());
      traj.signals.emplace_back(pi.begin(), pi.end());
      if (k == horizon) break;
      MapIndex m;
      stepper.sample(pi, rng, m);
      SystemState next = system.zero_state();
      stepper.apply(m, traj.states.back().view(), next.view());
      traj.states.push_back(std::move(next));
      traj.selections.push_back(std::move(m));
    } catch (const NumericalError& e) {
      if (traj.signals.empty()) throw;  // nothing valid to return
      if (traj.signals.size() < traj.states.size()) {
        // The signal of the newest state failed; drop it to keep the invariant.
        traj.states.pop_back();
        if (!traj.selections.empty()) traj.selections.pop_back();
      }
      traj.failure = SimulationFailure{k, e.component(), e.what()};
      break;
    }
  }
  return traj;
}

void run(const ClosedLoopSystem& system, const SystemState& initial, std::size_t horizon, RandomStream& rng,
         const StateObserver& observer) {
  system.validate(initial.view());
  Stepper stepper(system);
  std::vector<double> current = initial.values;
  std::vector<double> next(current.size());
  MapIndex m;
  observer(0, current);
  for (std::size_t k = 1; k <= horizon; ++k) {
    stepper.step(current, rng, next, m);
    current.swap(next);
    observer(k, current);
  }
}

}  // namespace irfkit
