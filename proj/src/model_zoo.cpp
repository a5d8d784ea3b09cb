#include "irfkit/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "irfkit/errors.hpp"

namespace irfkit::zoo {

namespace {

void check_two_mode(const TwoModeAgentParams& p) {
  if (!(p.p_min > 0.0 && p.p_min <= p.p_max && p.p_max < 1.0)) {
    throw ParamError("two-mode agent requires 0 < p_min <= p_max < 1");
  }
  if (!std::isfinite(p.emission_on) || !std::isfinite(p.emission_off) || !std::isfinite(p.response_gain)) {
    throw ParamError("two-mode agent parameters must be finite");
  }
}

StateMap identity_map() {
  return [](ConstVec x, MutVec out) { std::copy(x.begin(), x.end(), out.begin()); };
}

StateMap constant_output(double value) {
  return [value](ConstVec, MutVec out) { std::fill(out.begin(), out.end(), value); };
}

ProbabilityLaw certain() {
  return [](ConstVec, MutVec probs) { probs[0] = 1.0; };
}

}  // namespace

double on_probability(const TwoModeAgentParams& params, ConstVec signal) {
  return std::clamp(0.5 + params.response_gain * signal[params.signal_axis], params.p_min, params.p_max);
}

AgentSpec make_two_mode_agent(const TwoModeAgentParams& params) {
  check_two_mode(params);
  AgentSpec a;
  a.state_dim = 1;
  a.output_dim = 1;
  a.transition_maps = {identity_map()};
  a.output_maps = {constant_output(params.emission_on), constant_output(params.emission_off)};
  a.transition_probs = certain();
  a.output_probs = [params](ConstVec signal, MutVec probs) {
    const double p = on_probability(params, signal);
    probs[0] = p;
    probs[1] = 1.0 - p;
  };
  return a;
}

AgentSpec make_proportional_use_agent(const TwoModeAgentParams& params, std::size_t substeps) {
  check_two_mode(params);
  if (substeps == 0) throw ParamError("proportional-use agent needs at least one substep");
  AgentSpec a;
  a.state_dim = 1;
  a.output_dim = 1;
  a.transition_maps = {identity_map()};
  const double s = static_cast<double>(substeps);
  for (std::size_t l = 0; l <= substeps; ++l) {
    const double share = static_cast<double>(l) / s;
    a.output_maps.push_back(constant_output(params.emission_off + share * (params.emission_on - params.emission_off)));
  }
  a.transition_probs = certain();
  a.output_probs = [params, substeps](ConstVec signal, MutVec probs) {
    const double p = on_probability(params, signal);
    // Binomial(substeps, p) by the multiplicative recurrence on l.
    double term = std::pow(1.0 - p, static_cast<double>(substeps));
    const double ratio = p / (1.0 - p);
    for (std::size_t l = 0; l <= substeps; ++l) {
      probs[l] = term;
      term *= ratio * static_cast<double>(substeps - l) / static_cast<double>(l + 1);
    }
  };
  return a;
}

FilterSpec make_linear_filter(double pole, double gain, std::size_t dim) {
  if (!(std::abs(pole) < 1.0)) throw ParamError("linear filter requires |pole| < 1");
  if (!std::isfinite(gain)) throw ParamError("linear filter gain must be finite");
  FilterSpec f;
  f.state_dim = dim;
  f.input_dim = dim;
  f.output_dim = dim;
  f.transition = [pole, gain](ConstVec xf, ConstVec y, MutVec out) {
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = pole * xf[d] + gain * y[d];
  };
  f.output = [](ConstVec xf, ConstVec, MutVec out) { std::copy(xf.begin(), xf.end(), out.begin()); };
  return f;
}

FilterSpec make_max_window_filter(const MaxWindowFilterParams& params) {
  if (params.window == 0) throw ParamError("max-window filter requires window >= 1");
  if (params.dim == 0) throw ParamError("max-window filter requires dim >= 1");
  const std::size_t w = params.window;
  const std::size_t d = params.dim;
  FilterSpec f;
  f.state_dim = w * d;
  f.input_dim = d;
  f.output_dim = d;
  f.transition = [w, d](ConstVec xf, ConstVec y, MutVec out) {
    std::copy(y.begin(), y.end(), out.begin());
    std::copy(xf.begin(), xf.begin() + static_cast<std::ptrdiff_t>((w - 1) * d),
              out.begin() + static_cast<std::ptrdiff_t>(d));
  };
  f.output = [w, d](ConstVec xf, ConstVec, MutVec out) {
    for (std::size_t c = 0; c < d; ++c) {
      double m = xf[c];
      for (std::size_t t = 1; t < w; ++t) m = std::max(m, xf[t * d + c]);
      out[c] = m;
    }
  };
  return f;
}

FilterSpec make_identity_filter(std::size_t dim) {
  FilterSpec f;
  f.state_dim = 0;
  f.input_dim = dim;
  f.output_dim = dim;
  f.transition = [](ConstVec, ConstVec, MutVec) {};
  f.output = [](ConstVec, ConstVec y, MutVec out) { std::copy(y.begin(), y.end(), out.begin()); };
  return f;
}

double smooth_clamp(double x, double lo, double hi, double corner) noexcept {
  if (hi <= lo) return lo;
  const double c = std::min(corner, 0.5 * (hi - lo));
  if (c <= 0.0) return std::clamp(x, lo, hi);
  if (x <= lo - c) return lo;
  if (x >= hi + c) return hi;
  if (x < lo + c) {
    const double t = x - lo + c;
    return lo + t * t / (4.0 * c);
  }
  if (x > hi - c) {
    const double t = hi + c - x;
    return hi - t * t / (4.0 * c);
  }
  return x;
}

ControllerSpec make_lag_controller(const LagControllerParams& params) {
  if (!(std::abs(params.pole) <= 1.0)) throw ParamError("lag controller requires |pole| <= 1");
  if (!std::isfinite(params.gain)) throw ParamError("lag controller gain must be finite");
  if (!(params.corner >= 0.0)) throw ParamError("lag controller corner must be non-negative");
  const std::size_t dim = params.reference.size();
  if (dim == 0 || params.signal_set.dim() != dim) {
    throw ParamError("lag controller: reference and signal box must share a non-zero dimension");
  }
  ControllerSpec c;
  c.state_dim = dim;
  c.input_dim = dim;
  c.reference = params.reference;
  c.signal_set = params.signal_set;
  c.transition = [a = params.pole, kp = params.gain](ConstVec xc, ConstVec yhat, ConstVec r, MutVec out) {
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = a * xc[d] + kp * (r[d] - yhat[d]);
  };
  c.output = [box = params.signal_set, corner = params.corner](ConstVec xc, ConstVec, ConstVec, MutVec out) {
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = smooth_clamp(xc[d], box.lower[d], box.upper[d], corner);
  };
  return c;
}

ControllerSpec make_constant_controller(std::vector<double> value, SignalBox box, std::size_t input_dim) {
  if (value.size() != box.dim()) throw ParamError("constant controller value must match the box dimension");
  if (!box.contains(value)) throw ParamError("constant controller value lies outside its box");
  ControllerSpec c;
  c.state_dim = 0;
  c.input_dim = input_dim;
  c.signal_set = std::move(box);
  c.transition = [](ConstVec, ConstVec, ConstVec, MutVec) {};
  c.output = [v = std::move(value)](ConstVec, ConstVec, ConstVec, MutVec out) {
    std::copy(v.begin(), v.end(), out.begin());
  };
  return c;
}

ClosedLoopSystem make_affine_ifs_benchmark(const std::vector<double>& slopes, const std::vector<double>& offsets,
                                           const std::vector<double>& probs) {
  if (slopes.empty() || slopes.size() != offsets.size() || slopes.size() != probs.size()) {
    throw ParamError("affine IFS: slopes, offsets and probs must be non-empty and of equal length");
  }
  for (double a : slopes) {
    if (!(std::abs(a) < 1.0)) throw ParamError("affine IFS: every |slope| must be < 1");
  }
  for (double b : offsets) {
    if (!std::isfinite(b)) throw ParamError("affine IFS: offsets must be finite");
  }
  if (!on_simplex(probs, 1e-12)) throw ParamError("affine IFS: probabilities must lie on the simplex");

  AgentSpec a;
  a.state_dim = 1;
  a.output_dim = 0;
  for (std::size_t j = 0; j < slopes.size(); ++j) {
    a.transition_maps.push_back([s = slopes[j], b = offsets[j]](ConstVec x, MutVec out) { out[0] = s * x[0] + b; });
  }
  a.output_maps = {[](ConstVec, MutVec) {}};
  a.transition_probs = [probs](ConstVec, MutVec out) { std::copy(probs.begin(), probs.end(), out.begin()); };
  a.output_probs = certain();
  return ClosedLoopSystem({std::move(a)}, make_identity_filter(0),
                          make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 0));
}

ClosedLoopSystem make_twomap1d() { return make_affine_ifs_benchmark({0.5, 0.5}, {0.0, 1.0}, {0.5, 0.5}); }

ClosedLoopSystem make_phev_fleet(const FleetParams& params) {
  if (params.agents == 0) throw ParamError("fleet needs at least one agent");
  if (params.filter.dim != 1 || params.controller.reference.size() != 1) {
    throw ParamError("fleet model uses a scalar aggregate and a scalar signal");
  }
  const AgentSpec agent = params.substeps == 0 ? make_two_mode_agent(params.agent)
                                               : make_proportional_use_agent(params.agent, params.substeps);
  std::vector<AgentSpec> agents(params.agents, agent);
  return ClosedLoopSystem(std::move(agents), make_max_window_filter(params.filter),
                          make_lag_controller(params.controller));
}

SystemState fleet_state(const ClosedLoopSystem& fleet, double controller_state, double filter_fill) {
  SystemState s = fleet.zero_state();
  auto xf = fleet.filter_state(s.view());
  std::fill(xf.begin(), xf.end(), filter_fill);
  auto xc = fleet.controller_state(s.view());
  std::fill(xc.begin(), xc.end(), controller_state);
  return s;
}

}  // namespace irfkit::zoo
