// Canonical trajectories, contraction metrics, hull bounds, Lyapunov and
// drift conditions.

#include <algorithm>
#include <cmath>
#include <limits>

#include "irfkit/errors.hpp"
#include "irfkit/parallel.hpp"
#include "irfkit/verifiers.hpp"

namespace irfkit {

namespace {

double dist(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double norm(ConstVec a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

double max_pairwise(const std::vector<std::vector<double>>& xs) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) s = std::max(s, dist(xs[i], xs[j]));
  }
  return s;
}

bool all_finite(ConstVec v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Least-squares slope of log s_k against k over usable points.
struct RateFit {
  double rate = 0.0;
  double residual = 0.0;
  std::size_t points = 0;
};

RateFit fit_rate(const std::vector<double>& spreads) {
  RateFit fit;
  const double s0 = spreads.front();
  std::vector<double> ks, ls;
  for (std::size_t k = 0; k < spreads.size(); ++k) {
    if (spreads[k] > 1e-8 * s0 && spreads[k] > 0.0) {
      ks.push_back(static_cast<double>(k));
      ls.push_back(std::log(spreads[k]));
    }
  }
  fit.points = ks.size();
  if (ks.size() < 2) return fit;  // collapsed at once: rate 0
  const double n = static_cast<double>(ks.size());
  double mk = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    mk += ks[i];
    ml += ls[i];
  }
  mk /= n;
  ml /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sxy += (ks[i] - mk) * (ls[i] - ml);
    sxx += (ks[i] - mk) * (ks[i] - mk);
  }
  const double slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double e = ls[i] - (ml + slope * (ks[i] - mk));
    rss += e * e;
  }
  fit.rate = std::exp(slope);
  fit.residual = std::sqrt(rss / n);
  return fit;
}

double min_singular_ratio(const Eigen::MatrixXd& A) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
  return sv(sv.size() - 1) / sv(0);
}

Eigen::MatrixXd jacobian_at(const VectorMap& map, ConstVec x, double h) {
  Eigen::MatrixXd J = map.jacobian ? map.jacobian(x) : finite_difference_jacobian(map, x, h);
  if (!J.allFinite()) throw NumericalError("jacobian", "Jacobian is not finite");
  return J;
}

}  // namespace

const std::vector<double>& CanonicalTrajectory::state_at(std::size_t k) const {
  if (states.empty()) throw ParamError("canonical trajectory has no states");
  return k < states.size() ? states[k] : states.back();
}

CanonicalTrajectory CanonicalTrajectory::constant(std::vector<double> point, double rate, std::size_t horizon) {
  CanonicalTrajectory c;
  c.states.assign(horizon + 1, point);
  c.spreads.assign(horizon + 1, 0.0);
  c.rate = rate;
  c.converged = true;
  return c;
}

CanonicalTrajectory canonical_trajectory(const VectorMap& map, const std::vector<std::vector<double>>& starts,
                                         std::size_t horizon, double tol) {
  if (starts.size() < 2) throw ParamError("canonical_trajectory: needs at least two starts");
  if (map.input_dim != map.output_dim) throw DimensionError("canonical_trajectory: map must be a self-map");
  for (const auto& s : starts) {
    if (s.size() != map.input_dim) throw DimensionError("canonical_trajectory: start has the wrong dimension");
  }
  if (horizon == 0) throw ParamError("canonical_trajectory: horizon must be positive");

  CanonicalTrajectory c;
  c.tolerance = tol;
  std::vector<std::vector<double>> cur = starts, next = starts;
  c.spreads.push_back(max_pairwise(cur));
  if (c.spreads[0] == 0.0) throw ParamError("canonical_trajectory: starts coincide");
  c.states.push_back(cur[0]);
  for (std::size_t k = 1; k <= horizon; ++k) {
    for (std::size_t s = 0; s < cur.size(); ++s) {
      map.eval(cur[s], next[s]);
      if (!all_finite(next[s])) throw NumericalError("canonical trajectory", "map produced a non-finite state");
    }
    std::swap(cur, next);
    c.spreads.push_back(max_pairwise(cur));
    c.states.push_back(cur[0]);
  }

  const RateFit fit = fit_rate(c.spreads);
  c.rate = fit.rate;
  c.fit_residual = fit.residual;
  if (c.rate > 1.0 + 1e-9 || c.spreads.back() > c.spreads.front()) {
    throw NotContractiveError("canonical_trajectory: inter-start spread grows (fitted rate " +
                              std::to_string(c.rate) + ")");
  }
  c.transient_end = horizon + 1;
  for (std::size_t k = horizon + 1; k-- > 0;) {
    if (c.spreads[k] < tol) {
      c.transient_end = k;
    } else {
      break;
    }
  }
  c.converged = c.transient_end <= horizon;
  return c;
}

CanonicalTrajectory canonical_trajectory(const ClosedLoopSystem& system, const MapIndex& m,
                                         const std::vector<SystemState>& starts, std::size_t horizon, double tol) {
  std::vector<std::vector<double>> flat;
  flat.reserve(starts.size());
  for (const auto& s : starts) {
    system.validate(s.values);
    flat.push_back(s.values);
  }
  CanonicalTrajectory c = canonical_trajectory(composite_map(system, m), flat, horizon, tol);
  c.index = m;
  return c;
}

MetricFactory MetricFactory::identity(std::size_t n) {
  MetricFactory f;
  f.theta = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  return f;
}

ConditionReport contraction_metric_check(const VectorMap& map, const MetricFactory& metric,
                                         const std::vector<std::vector<double>>& grid, double beta_target,
                                         const MetricCheckOptions& opt) {
  if (map.input_dim != map.output_dim) throw DimensionError("contraction_metric_check: map must be a self-map");
  if (grid.empty()) throw ParamError("contraction_metric_check: empty grid");
  if (!metric.theta && !metric.psi) throw ParamError("contraction_metric_check: metric has neither theta nor psi");
  if (!std::isfinite(beta_target)) throw ParamError("contraction_metric_check: beta must be finite");
  const auto n = static_cast<Eigen::Index>(map.input_dim);

  auto check_factor = [&](const Eigen::MatrixXd& T, const char* what) {
    if (T.rows() != n || T.cols() != n) throw DimensionError(std::string("contraction_metric_check: ") + what + " has the wrong shape");
    if (!T.allFinite() || min_singular_ratio(T) <= 1e-12) {
      throw MetricSingularError(std::string("contraction_metric_check: ") + what + " is singular");
    }
  };

  double max_eig = -std::numeric_limits<double>::infinity();
  double eta = std::numeric_limits<double>::infinity(), rho = 0.0;
  auto track_bounds = [&](const Eigen::MatrixXd& T) {
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(T.transpose() * T).eigenvalues();
    eta = std::min(eta, ev(0));
    rho = std::max(rho, ev(ev.size() - 1));
  };

  if (metric.theta) {
    check_factor(*metric.theta, "theta");
    track_bounds(*metric.theta);
  }
  std::vector<double> fx(map.output_dim);
  for (const auto& x : grid) {
    if (x.size() != map.input_dim) throw DimensionError("contraction_metric_check: grid point has the wrong dimension");
    const Eigen::MatrixXd J = jacobian_at(map, x, opt.h);
    Eigen::MatrixXd G;
    if (metric.theta) {
      G = metric.theta->transpose() * J * *metric.theta;
    } else {
      map.eval(x, fx);
      const Eigen::MatrixXd P = metric.psi(x);
      const Eigen::MatrixXd Pf = metric.psi(fx);
      check_factor(P, "psi(x)");
      check_factor(Pf, "psi(F(x))");
      track_bounds(P);
      G = Pf * J * P.inverse();
    }
    const Eigen::MatrixXd E = G.transpose() * G - Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(E).eigenvalues();
    max_eig = std::max(max_eig, ev(ev.size() - 1));
  }

  ConditionReport r;
  r.condition = "uniform_contraction_metric";
  r.set("beta_target", beta_target);
  r.set("max_eigenvalue", max_eig);
  r.set("mu", -max_eig);
  r.set("eta", eta);
  r.set("rho", rho);
  r.set("grid_points", static_cast<double>(grid.size()));
  r.margin = -beta_target + opt.slack - max_eig;
  r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  r.provenance = "sampled";
  r.notes.push_back(map.jacobian ? "analytic Jacobian" : "central differences, h = " + std::to_string(opt.h));
  r.notes.push_back(metric.theta ? "constant metric factor" : "state-dependent metric factor");
  r.caveat = "checked at grid states only";
  return r;
}

EnvelopeResult trajectory_envelope_R(const std::vector<CanonicalTrajectory>& canonicals,
                                     std::optional<std::size_t> horizon, bool after_transient) {
  if (canonicals.empty()) throw InsufficientSamplesError("trajectory_envelope_R: no canonical trajectories");
  std::size_t dim = canonicals.front().state_at(0).size();
  std::size_t K = 0, from = 0;
  for (const auto& c : canonicals) {
    if (c.state_at(0).size() != dim) throw DimensionError("trajectory_envelope_R: canonicals differ in dimension");
    K = std::max(K, c.horizon());
    from = std::max(from, c.transient_end);
  }
  if (horizon) K = *horizon;
  EnvelopeResult res;
  res.horizon = K;
  res.from_k = after_transient ? std::min(from, K) : 0;
  for (std::size_t k = res.from_k; k <= K; ++k) {
    for (std::size_t a = 0; a < canonicals.size(); ++a) {
      for (std::size_t b = a + 1; b < canonicals.size(); ++b) {
        res.R = std::max(res.R, dist(canonicals[a].state_at(k), canonicals[b].state_at(k)));
      }
    }
  }
  return res;
}

ConditionReport theorem2_bound_check(const ClosedLoopSystem& system, const std::vector<CanonicalTrajectory>& canonicals,
                                     const Theorem2Options& opt) {
  if (canonicals.empty()) throw InsufficientSamplesError("theorem2_bound_check: no canonical trajectories");
  if (opt.trials == 0) throw ParamError("theorem2_bound_check: trials must be positive");
  if (opt.burn_in > opt.horizon) throw ParamError("theorem2_bound_check: burn-in exceeds horizon");
  double lambda = 0.0;
  bool converged = true;
  std::size_t canon_horizon = 0;
  for (const auto& c : canonicals) {
    if (c.state_at(0).size() != system.state_dim()) {
      throw DimensionError("theorem2_bound_check: canonical dimension differs from the state");
    }
    lambda = std::max(lambda, c.rate);
    converged = converged && c.converged;
    canon_horizon = std::max(canon_horizon, c.horizon());
  }
  if (!(lambda < 1.0)) throw NotContractiveError("theorem2_bound_check: lambda = " + std::to_string(lambda) + " >= 1");
  const EnvelopeResult env = trajectory_envelope_R(canonicals);
  const double D = lambda * env.R / (1.0 - lambda);

  // Vertex sets for k in [burn_in, last]; beyond the canonical horizon they stay fixed.
  const std::size_t last = std::min(opt.horizon, std::max(canon_horizon, opt.burn_in));
  std::vector<std::vector<std::vector<double>>> vertices(last - opt.burn_in + 1);
  for (std::size_t k = opt.burn_in; k <= last; ++k) {
    auto& vs = vertices[k - opt.burn_in];
    for (const auto& c : canonicals) vs.push_back(c.state_at(k));
  }
  const SystemState x0 = opt.initial ? *opt.initial : system.zero_state();
  system.validate(x0.values);

  std::vector<double> worst(opt.trials, 0.0);
  parallel_for(opt.trials, opt.threads, [&](std::size_t t) {
    RandomStream rng(opt.seed, t);
    double w = 0.0;
    run(system, x0, opt.horizon, rng, [&](std::size_t k, ConstVec x) {
      if (k < opt.burn_in) return;
      const auto& vs = vertices[std::min(k, last) - opt.burn_in];
      w = std::max(w, hull_distance(x, vs));
    });
    worst[t] = w;
  });
  const double max_dist = *std::max_element(worst.begin(), worst.end());

  ConditionReport r;
  r.condition = "hull_bound";
  r.set("lambda", lambda);
  r.set("R", env.R);
  r.set("D", D);
  r.set("epsilon", opt.epsilon);
  r.set("max_distance", max_dist);
  r.set("trials", static_cast<double>(opt.trials));
  r.set("horizon", static_cast<double>(opt.horizon));
  r.set("burn_in", static_cast<double>(opt.burn_in));
  r.set("R_from_k", static_cast<double>(env.from_k));
  r.set("R_horizon", static_cast<double>(env.horizon));
  r.margin = D + opt.epsilon - max_dist;
  r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  if (!converged) {
    r.verdict = Verdict::Inconclusive;
    r.notes.push_back("some canonical trajectories did not converge within their horizon");
  }
  r.provenance = "sampled";
  r.caveat = "R is a finite-horizon estimate; distances are checked on simulated realizations only";
  return r;
}

ConditionReport lyapunov_decrease_check(const VectorMap& map, const ScalarFunction& V,
                                        const ComparisonFunction& alpha1, const ComparisonFunction& alpha2,
                                        const ComparisonFunction& alpha3, const CanonicalTrajectory& canonical,
                                        const DomainSampler& sampler, const LyapunovOptions& opt) {
  if (map.input_dim != map.output_dim) throw DimensionError("lyapunov_decrease_check: map must be a self-map");
  if (opt.samples == 0 || opt.path_length == 0) throw ParamError("lyapunov_decrease_check: empty sample plan");
  if (canonical.state_at(0).size() != map.input_dim) {
    throw DimensionError("lyapunov_decrease_check: canonical has the wrong dimension");
  }
  const std::size_t n = map.input_dim;
  RandomStream rng(opt.seed, 0);
  std::vector<double> a(n), b(n), z(n), fx(n);

  double worst_sandwich = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < opt.samples; ++s) {
    sampler(rng, a);
    sampler(rng, b);
    for (std::size_t i = 0; i < n; ++i) z[i] = a[i] - b[i];
    const double len = norm(z);
    const double v = V(z);
    worst_sandwich = std::max(worst_sandwich, alpha1(len) - v - opt.tolerance);
    worst_sandwich = std::max(worst_sandwich, v - alpha2(len) - opt.tolerance);
  }

  double worst_decrease = -std::numeric_limits<double>::infinity();
  const std::size_t paths = (opt.samples + opt.path_length - 1) / opt.path_length;
  std::size_t checked = 0;
  // Post-transient representative of the canonical trajectory.
  const std::size_t k0 = canonical.converged ? canonical.transient_end : 0;
  for (std::size_t p = 0; p < paths; ++p) {
    sampler(rng, a);
    for (std::size_t k = 0; k < opt.path_length && checked < opt.samples; ++k, ++checked) {
      map.eval(a, fx);
      const double lhs = V(fx) - V(a);
      const double rhs = -alpha3(dist(fx, canonical.state_at(k0 + k)));
      worst_decrease = std::max(worst_decrease, lhs - rhs - opt.tolerance);
      std::swap(a, fx);
    }
  }

  ConditionReport r;
  r.condition = "lyapunov_decrease";
  r.set("worst_sandwich_violation", worst_sandwich);
  r.set("worst_decrease_violation", worst_decrease);
  r.set("samples", static_cast<double>(opt.samples));
  r.set("path_length", static_cast<double>(opt.path_length));
  r.margin = -std::max(worst_sandwich, worst_decrease);
  if (!std::isfinite(r.margin)) throw NumericalError("lyapunov", "candidate or comparison function is not finite");
  r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  r.provenance = "sampled";
  r.caveat = "inequalities checked at sampled points only";
  return r;
}

DriftResult stochastic_drift_check(const ClosedLoopSystem& system, const ScalarFunction& V, const DriftOptions& opt) {
  DriftResult res;
  std::vector<std::vector<double>> states;
  for (const auto& s : opt.states) {
    system.validate(s.values);
    states.push_back(s.values);
  }
  if (states.empty()) {
    if (opt.paths == 0) throw ParamError("stochastic_drift_check: no states and no paths to sample them from");
    const SystemState x0 = opt.path_start ? *opt.path_start : system.zero_state();
    for (std::size_t p = 0; p < opt.paths; ++p) {
      RandomStream rng(opt.seed, p);
      run(system, x0, opt.horizon, rng, [&](std::size_t, ConstVec x) { states.emplace_back(x.begin(), x.end()); });
    }
  }
  if (opt.small_set_center && opt.small_set_center->values.size() != system.state_dim()) {
    throw DimensionError("stochastic_drift_check: small-set centre has the wrong dimension");
  }

  const std::uint64_t size = system.index_set_size();
  res.exact = size <= opt.enumerate_limit;
  if (!res.exact && opt.inner_samples < 100) throw ParamError("stochastic_drift_check: needs >= 100 inner samples");
  const std::vector<MapIndex> maps = res.exact ? enumerate_map_indices(system, opt.enumerate_limit)
                                               : std::vector<MapIndex>{};
  const std::uint64_t stream_base = opt.states.empty() ? opt.paths : 0;

  res.points.resize(states.size());
  parallel_for(states.size(), opt.threads, [&](std::size_t i) {
    Stepper stepper(system);
    const std::vector<double>& x = states[i];
    std::vector<double> next(x.size());
    DriftPoint pt;
    pt.state = x;
    const double vx = V(x);
    if (res.exact) {
      const ConstVec sv = stepper.signal(x);
      const std::vector<double> pi(sv.begin(), sv.end());
      double e = 0.0;
      for (const auto& m : maps) {
        const double q = selection_probability(system, m, pi);
        if (q == 0.0) continue;
        stepper.apply(m, x, next);
        e += q * V(next);
      }
      pt.drift = e - vx;
    } else {
      RandomStream rng(opt.seed, stream_base + i);
      MapIndex m;
      double mean = 0.0, m2 = 0.0;
      for (std::size_t s = 0; s < opt.inner_samples; ++s) {
        stepper.step(x, rng, next, m);
        const double d = V(next) - vx;
        const double delta = d - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (d - mean);
      }
      pt.drift = mean;
      const double ns = static_cast<double>(opt.inner_samples);
      pt.standard_error = std::sqrt(m2 / (ns - 1.0) / ns);
    }
    if (!std::isfinite(pt.drift)) throw NumericalError("drift", "candidate function is not finite");
    pt.in_small_set = opt.small_set_center && dist(x, opt.small_set_center->values) <= opt.small_set_radius;
    res.points[i] = std::move(pt);
  });

  ConditionReport& r = res.report;
  r.condition = "stochastic_drift";
  double worst = -std::numeric_limits<double>::infinity(), max_se = 0.0;
  std::size_t outside = 0;
  for (const auto& p : res.points) {
    max_se = std::max(max_se, p.standard_error);
    if (p.in_small_set) continue;
    ++outside;
    worst = std::max(worst, p.drift);
  }
  r.set("points", static_cast<double>(res.points.size()));
  r.set("points_outside_small_set", static_cast<double>(outside));
  r.set("max_drift_outside", worst);
  r.set("max_standard_error", max_se);
  r.set("drift_margin", opt.drift_margin);
  r.set("small_set_radius", opt.small_set_radius);
  if (outside == 0) {
    r.verdict = Verdict::Inconclusive;
    r.notes.push_back("every tested state lies in the small set");
  } else {
    r.margin = -opt.drift_margin - worst;
    r.verdict = r.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  }
  r.provenance = res.exact ? "exact" : "sampled";
  r.notes.push_back(res.exact ? "expectation by enumerating all maps"
                              : "expectation from " + std::to_string(opt.inner_samples) + " draws per state");
  r.caveat = res.exact ? "drift checked at tested states only"
                       : "verdict uses point estimates; see standard errors";
  return res;
}

}  // namespace irfkit
