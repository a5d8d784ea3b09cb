#include "irfkit/verifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "irfkit/errors.hpp"
#include "irfkit/parallel.hpp"

namespace irfkit {

namespace {

double dist2(ConstVec a, ConstVec b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string format_grid_note(std::size_t points) { return "grid of " + std::to_string(points) + " signal values"; }

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

void ConditionReport::set(const std::string& name, double value) {
  if (std::isfinite(value)) {
    constants[name] = value;
  } else {
    notes.push_back(name + " is not finite");
  }
}

std::vector<double> VectorMap::operator()(ConstVec x) const {
  if (x.size() != input_dim) throw DimensionError("vector map: input has the wrong dimension");
  std::vector<double> out(output_dim);
  eval(x, out);
  return out;
}

VectorMap composite_map(const ClosedLoopSystem& system, const MapIndex& m) {
  VectorMap f;
  f.input_dim = system.state_dim();
  f.output_dim = system.state_dim();
  f.eval = [sys = &system, m](ConstVec x, MutVec out) {
    Stepper stepper(*sys);
    stepper.apply(m, x, out);
  };
  return f;
}

VectorMap signal_after_map(const ClosedLoopSystem& system, const MapIndex& m) {
  VectorMap f;
  f.input_dim = system.state_dim();
  f.output_dim = system.signal_dim();
  f.eval = [sys = &system, m](ConstVec x, MutVec out) {
    Stepper stepper(*sys);
    std::vector<double> next(x.size());
    stepper.apply(m, x, next);
    ConstVec pi = stepper.signal(next);
    std::copy(pi.begin(), pi.end(), out.begin());
  };
  return f;
}

DomainSampler box_sampler(std::vector<double> lower, std::vector<double> upper) {
  if (lower.size() != upper.size()) throw DimensionError("box sampler: bounds differ in dimension");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] <= upper[i])) throw ParamError("box sampler: lower bound above upper bound");
  }
  return [lower = std::move(lower), upper = std::move(upper)](RandomStream& rng, MutVec out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.uniform(lower[i], upper[i]);
  };
}

Eigen::MatrixXd finite_difference_jacobian(const VectorMap& map, ConstVec x, double h) {
  if (x.size() != map.input_dim) throw DimensionError("finite_difference_jacobian: input has the wrong dimension");
  if (!(h > 0.0)) throw ParamError("finite_difference_jacobian: step must be positive");
  Eigen::MatrixXd J(map.output_dim, map.input_dim);
  std::vector<double> xp(x.begin(), x.end()), fp(map.output_dim), fm(map.output_dim);
  for (std::size_t j = 0; j < map.input_dim; ++j) {
    const double orig = xp[j];
    xp[j] = orig + h;
    map.eval(xp, fp);
    xp[j] = orig - h;
    map.eval(xp, fm);
    xp[j] = orig;
    for (std::size_t i = 0; i < map.output_dim; ++i) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * h);
  }
  if (!J.allFinite()) throw NumericalError("jacobian", "finite-difference Jacobian is not finite");
  return J;
}

LipschitzEstimate estimate_lipschitz(const VectorMap& map, const DomainSampler& sampler,
                                     const LipschitzOptions& opt) {
  LipschitzEstimate est;
  if (opt.analytic_override) {
    if (!std::isfinite(*opt.analytic_override) || *opt.analytic_override < 0.0) {
      throw ParamError("estimate_lipschitz: analytic override must be finite and non-negative");
    }
    est.value = *opt.analytic_override;
    est.analytic = true;
    est.note = "analytic constant supplied; no sampling";
    return est;
  }
  if (opt.pairs < 1000) throw ParamError("estimate_lipschitz: needs >= 1000 pairs without an analytic override");

  RandomStream rng(opt.seed, 0);
  const std::size_t n = map.input_dim;
  std::vector<double> x(n), y(n), fx(map.output_dim), fy(map.output_dim);
  double diameter = 0.0;
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    sampler(rng, x);
    sampler(rng, y);
    const double d = dist2(x, y);
    diameter = std::max(diameter, d);
    if (d == 0.0) continue;
    map.eval(x, fx);
    map.eval(y, fy);
    const double r = dist2(fx, fy) / d;
    if (!std::isfinite(r)) throw NumericalError("lipschitz", "map produced a non-finite value");
    est.pair_ratio_max = std::max(est.pair_ratio_max, r);
  }
  if (diameter == 0.0) throw SamplerError("estimate_lipschitz: sampler has zero diameter");
  est.pairs = opt.pairs;

  for (std::size_t p = 0; p < opt.jacobian_probes; ++p) {
    sampler(rng, x);
    const Eigen::MatrixXd J = map.jacobian ? map.jacobian(x) : finite_difference_jacobian(map, x, opt.h);
    const double s = J.size() == 0 ? 0.0 : Eigen::JacobiSVD<Eigen::MatrixXd>(J).singularValues()(0);
    est.jacobian_norm_max = std::max(est.jacobian_norm_max, s);
  }
  est.probes = opt.jacobian_probes;
  est.value = std::max(est.pair_ratio_max, est.jacobian_norm_max);
  est.note = "sampled lower bound: " + std::to_string(est.pairs) + " pairs, " + std::to_string(est.probes) +
             " Jacobian probes";
  return est;
}

ConditionReport lipschitz_report(const std::vector<LipschitzEstimate>& estimates) {
  ConditionReport r;
  r.condition = "lipschitz_constants";
  if (estimates.empty()) {
    r.notes.push_back("no maps");
    return r;
  }
  bool analytic = true;
  double worst = 0.0;
  for (std::size_t m = 0; m < estimates.size(); ++m) {
    r.set("l_" + std::to_string(m), estimates[m].value);
    worst = std::max(worst, estimates[m].value);
    analytic = analytic && estimates[m].analytic;
  }
  r.set("l_max", worst);
  const bool finite = std::isfinite(worst);
  r.verdict = finite ? Verdict::Pass : Verdict::Fail;
  r.margin = finite ? 1.0 : 0.0;
  r.provenance = analytic ? "analytic" : "sampled";
  if (!analytic) r.caveat = "sampled constants are lower bounds of the true Lipschitz constants";
  return r;
}

FloorResult probability_floor(const ClosedLoopSystem& system, const std::vector<std::vector<double>>& grid,
                              std::uint64_t enumeration_cap) {
  if (grid.empty()) throw ParamError("probability_floor: empty grid");
  FloorResult res;
  res.delta = std::numeric_limits<double>::infinity();
  res.delta_prime = std::numeric_limits<double>::infinity();
  double selection = std::numeric_limits<double>::infinity();
  std::vector<double> probs;
  for (const auto& pi : grid) {
    if (pi.size() != system.signal_dim()) throw DimensionError("probability_floor: grid point has the wrong dimension");
    double q = 1.0;
    for (const auto& a : system.agents()) {
      probs.assign(a.transition_maps.size(), 0.0);
      a.transition_probs(pi, probs);
      const double t = *std::min_element(probs.begin(), probs.end());
      if (t < res.delta) {
        res.delta = t;
        res.delta_at = pi;
      }
      q *= t;
    }
    for (const auto& a : system.agents()) {
      probs.assign(a.output_maps.size(), 0.0);
      a.output_probs(pi, probs);
      const double o = *std::min_element(probs.begin(), probs.end());
      if (o < res.delta_prime) {
        res.delta_prime = o;
        res.delta_prime_at = pi;
      }
      q *= o;
    }
    // The product law factorizes, so min_m q_m is the product of per-agent minima.
    selection = std::min(selection, q);
  }
  res.selection_floor = system.index_set_size() <= enumeration_cap ? selection
                                                                    : std::numeric_limits<double>::quiet_NaN();

  ConditionReport& r = res.report;
  r.condition = "probability_floor";
  r.set("delta", res.delta);
  r.set("delta_prime", res.delta_prime);
  r.set("selection_floor", res.selection_floor);
  r.margin = std::min(res.delta, res.delta_prime);
  r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  r.provenance = "sampled";
  r.notes.push_back(format_grid_note(grid.size()));
  r.caveat = "floors are minima over the grid, not over the whole signal set";
  return res;
}

IrreducibilityResult irreducibility_check(const Eigen::MatrixXd& P) {
  const Eigen::Index n = P.rows();
  if (n == 0 || P.cols() != n) throw MatrixError("irreducibility_check: matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = P(i, j);
      if (!std::isfinite(p) || p < -1e-12) throw MatrixError("irreducibility_check: invalid entry in row " + std::to_string(i));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw MatrixError("irreducibility_check: row " + std::to_string(i) + " does not sum to 1");
  }

  // Iterative Tarjan.
  const std::size_t N = static_cast<std::size_t>(n);
  constexpr std::size_t unvisited = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(N, unvisited), low(N, 0), stack;
  std::vector<char> on_stack(N, 0);
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next neighbour)
  std::size_t counter = 0;
  IrreducibilityResult res;
  for (std::size_t root = 0; root < N; ++root) {
    if (index[root] != unvisited) continue;
    call.emplace_back(root, 0);
    while (!call.empty()) {
      auto& [v, next] = call.back();
      if (next == 0 && index[v] == unvisited) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = 1;
      }
      bool descended = false;
      while (next < N) {
        const std::size_t w = next++;
        if (!(P(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) > 1e-12)) continue;
        if (index[w] == unvisited) {
          call.emplace_back(w, 0);
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      const std::size_t node = v;
      if (low[node] == index[node]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != node);
        std::sort(comp.begin(), comp.end());
        res.components.push_back(std::move(comp));
      }
      call.pop_back();
      if (!call.empty()) {
        const std::size_t parent = call.back().first;
        low[parent] = std::min(low[parent], low[node]);
      }
    }
  }
  std::sort(res.components.begin(), res.components.end());
  res.irreducible = res.components.size() == 1;
  return res;
}

ConditionReport irreducibility_report(const ClosedLoopSystem& system, const std::vector<std::vector<double>>& grid) {
  if (grid.empty()) throw ParamError("irreducibility_report: empty grid");
  ConditionReport r;
  r.condition = "irreducibility";
  std::size_t checked = 0, failures = 0;
  std::vector<double> probs;
  for (std::size_t i = 0; i < system.num_agents(); ++i) {
    const AgentSpec& a = system.agent(i);
    for (int law = 0; law < 2; ++law) {
      const std::size_t k = law == 0 ? a.transition_maps.size() : a.output_maps.size();
      for (const auto& pi : grid) {
        probs.assign(k, 0.0);
        (law == 0 ? a.transition_probs : a.output_probs)(pi, probs);
        Eigen::MatrixXd P(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        for (std::size_t row = 0; row < k; ++row) {
          for (std::size_t col = 0; col < k; ++col) P(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = probs[col];
        }
        ++checked;
        if (!irreducibility_check(P).irreducible) {
          if (failures == 0) {
            r.notes.push_back("agent " + std::to_string(i) + (law == 0 ? " transition" : " output") +
                              " matrix reducible at signal " + std::to_string(pi.empty() ? 0.0 : pi[0]));
          }
          ++failures;
        }
      }
    }
  }
  r.set("matrices_checked", static_cast<double>(checked));
  r.set("reducible", static_cast<double>(failures));
  r.verdict = failures == 0 ? Verdict::Pass : Verdict::Fail;
  r.margin = failures == 0 ? 1.0 : -static_cast<double>(failures);
  r.provenance = "sampled";
  r.notes.push_back(format_grid_note(grid.size()));
  r.caveat = "each induced matrix has every row equal to the probability vector at that signal";
  return r;
}

ConditionReport check_thm1_iva(const std::vector<double>& l, std::uint64_t map_count, double delta) {
  if (l.empty()) throw ParamError("check_thm1_iva: no Lipschitz constants");
  for (double v : l) {
    if (!std::isfinite(v) || v < 0.0) throw ParamError("check_thm1_iva: constants must be finite and non-negative");
  }
  if (map_count == 0) throw ParamError("check_thm1_iva: |M| must be positive");
  if (!std::isfinite(delta) || !(delta > 0.0)) throw ParamError("check_thm1_iva: delta must be positive");
  const double M = static_cast<double>(map_count);
  if (delta * M > 1.0 + 1e-12) {
    throw InfeasibleFloorError("check_thm1_iva: delta * |M| = " + std::to_string(delta * M) +
                               " exceeds 1, so no probability law meets the floor");
  }
  const double l_max = *std::max_element(l.begin(), l.end());
  const double value = l_max * (2.0 - M * delta);
  ConditionReport r;
  r.condition = "lipschitz_floor_product";
  r.set("l_max", l_max);
  r.set("map_count", M);
  r.set("delta", delta);
  r.set("value", value);
  r.margin = 1.0 - value;
  r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  r.provenance = "exact";
  r.notes.push_back("max_m l_m (2 - |M| delta) < 1");
  return r;
}

PiContractionResult estimate_pi_contraction(const ClosedLoopSystem& system, const DomainSampler& sampler,
                                            const PiContractionOptions& opt) {
  PiContractionResult res;
  const std::uint64_t size = system.index_set_size();
  bool sampled_maps = false;
  if (size <= opt.max_maps) {
    res.maps = enumerate_map_indices(system, opt.max_maps);
  } else {
    sampled_maps = true;
    RandomStream rng(opt.lipschitz.seed, 1);
    for (std::size_t s = 0; s < opt.sampled_maps; ++s) {
      MapIndex m;
      for (const auto& a : system.agents()) {
        m.transition.push_back(static_cast<std::uint32_t>(rng.below(a.transition_maps.size())));
        m.output.push_back(static_cast<std::uint32_t>(rng.below(a.output_maps.size())));
      }
      res.maps.push_back(std::move(m));
    }
  }
  std::vector<LipschitzEstimate> est(res.maps.size());
  parallel_for(res.maps.size(), opt.threads, [&](std::size_t i) {
    est[i] = estimate_lipschitz(signal_after_map(system, res.maps[i]), sampler, opt.lipschitz);
  });
  bool analytic = true;
  for (const auto& e : est) {
    res.per_map.push_back(e.value);
    res.kappa = std::max(res.kappa, e.value);
    analytic = analytic && e.analytic;
  }

  ConditionReport& r = res.report;
  r.condition = "signal_contraction";
  r.set("kappa", res.kappa);
  r.set("maps_checked", static_cast<double>(res.maps.size()));
  r.margin = 1.0 - res.kappa;
  r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  r.provenance = analytic ? "analytic" : "sampled";
  if (!analytic) {
    r.caveat = "kappa is a sampled lower bound of the supremum";
    r.notes.push_back(est.empty() ? std::string() : est.front().note);
  }
  if (sampled_maps) {
    r.notes.push_back("index set too large to enumerate; " + std::to_string(res.maps.size()) + " maps sampled");
  }
  return res;
}

}  // namespace irfkit
