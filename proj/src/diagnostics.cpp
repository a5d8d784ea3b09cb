#include "irfkit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "irfkit/errors.hpp"
#include "irfkit/parallel.hpp"

namespace irfkit {

namespace {

std::vector<std::size_t> resolve_projection(const std::vector<std::size_t>& projection, std::size_t dim) {
  if (projection.empty()) {
    std::vector<std::size_t> all(dim);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  for (std::size_t c : projection) {
    if (c >= dim) {
      throw DimensionError("projection coordinate " + std::to_string(c) + " outside state dimension " +
                           std::to_string(dim));
    }
  }
  return projection;
}

void append_projected(ConstVec state, const std::vector<std::size_t>& coords, std::vector<double>& out) {
  for (std::size_t c : coords) out.push_back(state[c]);
}

// Least-squares slope of log(d_k) against k over the given points.
double log_linear_rate(const std::vector<std::size_t>& ks, const std::vector<double>& ds) {
  const double n = static_cast<double>(ks.size());
  double sk = 0, sy = 0, skk = 0, sky = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double k = static_cast<double>(ks[i]);
    const double y = std::log(ds[i]);
    sk += k;
    sy += y;
    skk += k * k;
    sky += k * y;
  }
  const double den = n * skk - sk * sk;
  return std::exp((n * sky - sk * sy) / den);
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights)
    : dim_(dim), points_(std::move(points)) {
  if (dim_ == 0) throw DimensionError("empirical measure needs dimension >= 1");
  if (points_.size() % dim_ != 0) throw DimensionError("empirical measure: point data is not a multiple of D");
  const std::size_t n = points_.size() / dim_;
  if (weights.empty()) {
    weights_.assign(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
    uniform_ = true;
  } else {
    if (weights.size() != n) throw DimensionError("empirical measure: one weight per sample required");
    if (!on_simplex(weights, 1e-12)) throw ParamError("empirical measure: weights must lie on the simplex");
    weights_ = std::move(weights);
    uniform_ = std::all_of(weights_.begin(), weights_.end(), [&](double w) { return w == weights_[0]; });
  }
}

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<std::vector<double>>& points,
                                               std::vector<double> weights) {
  if (points.empty()) throw InsufficientSamplesError("empirical measure: no points");
  const std::size_t d = points[0].size();
  std::vector<double> flat;
  flat.reserve(points.size() * d);
  for (const auto& p : points) {
    if (p.size() != d) throw DimensionError("empirical measure: points of unequal dimension");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return EmpiricalMeasure(d, std::move(flat), std::move(weights));
}

std::vector<double> EmpiricalMeasure::mean() const {
  std::vector<double> m(dim_, 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t d = 0; d < dim_; ++d) m[d] += weights_[i] * points_[i * dim_ + d];
  }
  return m;
}

std::vector<double> EmpiricalMeasure::variance() const {
  const auto m = mean();
  std::vector<double> v(dim_, 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t d = 0; d < dim_; ++d) {
      const double t = points_[i * dim_ + d] - m[d];
      v[d] += weights_[i] * t * t;
    }
  }
  return v;
}

EmpiricalMeasure empirical_measure(const std::vector<Trajectory>& trajectories, std::size_t burn_in,
                                   std::size_t thinning, const std::vector<std::size_t>& projection) {
  if (thinning == 0) throw ParamError("empirical_measure: thinning must be >= 1");
  if (trajectories.empty()) throw InsufficientSamplesError("empirical_measure: no trajectories");
  const std::size_t dim = trajectories[0].states.empty() ? 0 : trajectories[0].states[0].values.size();
  const auto coords = resolve_projection(projection, dim);
  std::vector<double> flat;
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    const auto& states = trajectories[t].states;
    if (states.size() <= burn_in) {
      throw InsufficientSamplesError("empirical_measure: trajectory " + std::to_string(t) + " has " +
                                     std::to_string(states.size()) + " states, not more than burn-in " +
                                     std::to_string(burn_in));
    }
    for (std::size_t k = burn_in; k < states.size(); k += thinning) {
      if (states[k].values.size() != dim) throw DimensionError("empirical_measure: trajectories differ in dimension");
      append_projected(states[k].values, coords, flat);
    }
  }
  if (flat.empty()) throw InsufficientSamplesError("empirical_measure: empty pool");
  return EmpiricalMeasure(coords.size(), std::move(flat));
}

EmpiricalMeasure sample_measure(const ClosedLoopSystem& system, const SamplingPlan& plan) {
  if (plan.thinning == 0) throw ParamError("sample_measure: thinning must be >= 1");
  if (plan.initials.empty() || plan.runs == 0) throw InsufficientSamplesError("sample_measure: nothing to run");
  if (plan.horizon < plan.burn_in) throw InsufficientSamplesError("sample_measure: horizon shorter than burn-in");
  for (const auto& s : plan.initials) system.validate(s.values);
  const auto coords = resolve_projection(plan.projection, system.state_dim());

  std::vector<std::vector<double>> per_run(plan.runs);
  parallel_for(plan.runs, plan.threads, [&](std::size_t r) {
    Stepper stepper(system);
    RandomStream rng(plan.seed, r);
    std::vector<double> x = plan.initials[r % plan.initials.size()].values, next(x.size());
    MapIndex m;
    auto& out = per_run[r];
    out.reserve(((plan.horizon - plan.burn_in) / plan.thinning + 1) * coords.size());
    for (std::size_t k = 0;; ++k) {
      if (k >= plan.burn_in && (k - plan.burn_in) % plan.thinning == 0) append_projected(x, coords, out);
      if (k == plan.horizon) break;
      stepper.step(x, rng, next, m);
      x.swap(next);
    }
  });
  std::vector<double> flat;
  for (const auto& v : per_run) flat.insert(flat.end(), v.begin(), v.end());
  return EmpiricalMeasure(coords.size(), std::move(flat));
}

CouplingReport coupling_contraction_test(const ClosedLoopSystem& system, const SystemState& x0_a,
                                         const SystemState& x0_b, const CouplingOptions& opt) {
  if (opt.trials < 2) throw ParamError("coupling_contraction_test: needs trials >= 2");
  if (opt.horizon < 2) throw ParamError("coupling_contraction_test: needs horizon >= 2");
  system.validate(x0_a.values);
  system.validate(x0_b.values);
  const auto coords = resolve_projection(opt.projection, system.state_dim());
  const std::size_t n = opt.trials, K = opt.horizon, d = coords.size();

  // cloud[c][k] holds n projected states; c = 0: from a, 1: from b, 2: replicate of a.
  std::vector<std::vector<std::vector<double>>> cloud(
      3, std::vector<std::vector<double>>(K + 1, std::vector<double>(n * d)));
  const std::uint64_t b_offset = opt.mode == CouplingMode::SharedNoise ? 0 : n;
  parallel_for(3 * n, opt.threads, [&](std::size_t job) {
    const std::size_t c = job / n, t = job % n;
    const std::uint64_t stream = c == 0 ? t : c == 1 ? b_offset + t : 2 * n + t;
    Stepper stepper(system);
    RandomStream rng(opt.seed, stream);
    std::vector<double> x = (c == 1 ? x0_b : x0_a).values, next(x.size());
    MapIndex m;
    for (std::size_t k = 0;; ++k) {
      for (std::size_t j = 0; j < d; ++j) cloud[c][k][t * d + j] = x[coords[j]];
      if (k == K) break;
      stepper.step(x, rng, next, m);
      x.swap(next);
    }
  });

  CouplingReport rep;
  rep.distances.assign(K + 1, 0.0);
  const std::size_t tail_begin = K / 2;
  std::vector<double> floor_terms(K + 1 - tail_begin, 0.0);
  std::vector<char> approx(2 * (K + 1), 0);
  parallel_for(K + 1 + floor_terms.size(), opt.threads, [&](std::size_t job) {
    if (job <= K) {
      auto r = wasserstein2(EmpiricalMeasure(d, cloud[0][job]), EmpiricalMeasure(d, cloud[1][job]), opt.w2);
      rep.distances[job] = r.distance;
      approx[job] = r.approximate;
    } else {
      const std::size_t k = tail_begin + (job - K - 1);
      auto r = wasserstein2(EmpiricalMeasure(d, cloud[0][k]), EmpiricalMeasure(d, cloud[2][k]), opt.w2);
      floor_terms[job - K - 1] = r.distance;
      approx[job] = r.approximate;
    }
  });
  rep.approximate = std::any_of(approx.begin(), approx.end(), [](char a) { return a != 0; });
  rep.noise_floor = std::accumulate(floor_terms.begin(), floor_terms.end(), 0.0) / static_cast<double>(floor_terms.size());

  std::vector<std::size_t> ks;
  std::vector<double> ds;
  rep.fit_begin = 0;
  rep.fit_end = K + 1;
  for (std::size_t k = 0; k <= K; ++k) {
    const bool at_floor = rep.distances[k] <= opt.floor_factor * rep.noise_floor;
    const bool stalled = k > 0 && rep.noise_floor > 0.0 && rep.distances[k] >= rep.distances[k - 1];
    if (at_floor || stalled) {
      rep.fit_end = k;
      break;
    }
    if (std::isfinite(rep.distances[k]) && rep.distances[k] > 0.0) {
      ks.push_back(k);
      ds.push_back(rep.distances[k]);
    }
  }
  rep.rate = ks.size() >= 2 ? log_linear_rate(ks, ds) : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

std::string to_string(ErgodicityVerdict verdict) {
  return verdict == ErgodicityVerdict::Consistent ? "consistent-with-ergodicity" : "ergodicity-violated";
}

ErgodicityReport time_average_ergodicity_test(const ClosedLoopSystem& system, const Observable& observable,
                                              const std::vector<SystemState>& initials,
                                              const std::vector<std::uint64_t>& seeds,
                                              const ErgodicityOptions& opt) {
  if (initials.size() < 2 || seeds.size() < 2) {
    throw ParamError("time_average_ergodicity_test: needs >= 2 initial states and >= 2 seeds");
  }
  if (opt.batches < 2) throw ParamError("time_average_ergodicity_test: needs >= 2 batches");
  if (opt.horizon <= opt.burn_in || opt.horizon - opt.burn_in < opt.batches) {
    throw InsufficientSamplesError("time_average_ergodicity_test: fewer post-burn-in steps than batches");
  }
  for (const auto& s : initials) system.validate(s.values);

  const std::size_t samples = opt.horizon - opt.burn_in;
  const std::size_t batch_len = samples / opt.batches;
  ErgodicityReport rep;
  rep.runs.resize(initials.size() * seeds.size());
  parallel_for(rep.runs.size(), opt.threads, [&](std::size_t r) {
    const std::size_t i = r / seeds.size();
    const std::uint64_t seed = seeds[r % seeds.size()];
    Stepper stepper(system);
    RandomStream rng(seed, i);
    std::vector<double> x = initials[i].values, next(x.size());
    MapIndex m;
    std::vector<double> batch(opt.batches, 0.0);
    double total = 0.0;
    for (std::size_t k = 1; k <= opt.horizon; ++k) {
      stepper.step(x, rng, next, m);
      x.swap(next);
      if (k <= opt.burn_in) continue;
      const double f = observable(x);
      total += f;
      const std::size_t pos = k - opt.burn_in - 1;
      if (pos / batch_len < opt.batches) batch[pos / batch_len] += f;
    }
    double bm = 0.0;
    for (double& b : batch) bm += (b /= static_cast<double>(batch_len));
    bm /= static_cast<double>(opt.batches);
    double ss = 0.0;
    for (double b : batch) ss += (b - bm) * (b - bm);
    const double var = ss / static_cast<double>(opt.batches - 1);
    rep.runs[r] = ErgodicityRun{i, seed, total / static_cast<double>(samples),
                                std::sqrt(var / static_cast<double>(opt.batches))};
  });

  const double count = static_cast<double>(rep.runs.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0, se2 = 0.0;
  for (const auto& run : rep.runs) {
    lo = std::min(lo, run.average);
    hi = std::max(hi, run.average);
    sum += run.average;
    se2 += run.standard_error * run.standard_error;
  }
  rep.grand_mean = sum / count;
  rep.spread = hi - lo;
  double ss = 0.0;
  for (const auto& run : rep.runs) {
    ss += (run.average - rep.grand_mean) * (run.average - rep.grand_mean);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(run.average - rep.grand_mean));
  }
  rep.spread_std = std::sqrt(ss / (count - 1.0));
  rep.pooled_standard_error = std::sqrt(se2 / count);
  rep.threshold = opt.tau * rep.pooled_standard_error;
  const bool identical = rep.spread == 0.0;
  rep.verdict = identical || rep.max_deviation <= rep.threshold ? ErgodicityVerdict::Consistent
                                                                : ErgodicityVerdict::Violated;
  return rep;
}

W2Result invariance_residual(const ClosedLoopSystem& system, const EmpiricalMeasure& mu, RandomStream& rng,
                             const InvarianceOptions& opt) {
  if (mu.empty()) throw InsufficientSamplesError("invariance_residual: empty measure");
  if (mu.dim() != system.state_dim()) {
    throw DimensionError("invariance_residual: measure dimension " + std::to_string(mu.dim()) +
                         " differs from state dimension " + std::to_string(system.state_dim()));
  }
  const std::size_t dim = mu.dim();
  Stepper stepper(system);
  std::vector<double> next(dim);
  std::vector<double> flat, weights;

  bool enumerate = opt.mode == PushforwardMode::Enumerate ||
                   (opt.mode == PushforwardMode::Auto && system.index_set_size() <= opt.enumerate_limit);
  if (enumerate) {
    const auto all = enumerate_map_indices(system);
    flat.reserve(mu.size() * all.size() * dim);
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      ConstVec x = mu.point(i);
      system.validate(x);
      ConstVec signal = stepper.signal(x);
      const std::vector<double> pi(signal.begin(), signal.end());
      for (const auto& m : all) {
        const double q = selection_probability(system, m, pi);
        if (q <= 0.0) continue;
        stepper.apply(m, x, next);
        flat.insert(flat.end(), next.begin(), next.end());
        weights.push_back(mu.weight(i) * q);
        total += weights.back();
      }
    }
    for (double& w : weights) w /= total;
  } else {
    flat.reserve(mu.size() * dim);
    MapIndex m;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      ConstVec x = mu.point(i);
      system.validate(x);
      stepper.step(x, rng, next, m);
      flat.insert(flat.end(), next.begin(), next.end());
    }
    weights = mu.weights();
  }
  return wasserstein2(mu, EmpiricalMeasure(dim, std::move(flat), std::move(weights)), opt.w2);
}

}  // namespace irfkit
