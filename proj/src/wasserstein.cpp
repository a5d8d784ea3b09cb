#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "irfkit/diagnostics.hpp"
#include "irfkit/errors.hpp"

namespace irfkit {

namespace {

// Sum after sorting ascending, so the result depends only on the multiset.
double canonical_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

double sq_dist(ConstVec a, ConstVec b) noexcept {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

// Squared W2 between equal-size uniform samples on the line.
double w2sq_uniform_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms[i] = (a[i] - b[i]) * (a[i] - b[i]);
  return canonical_sum(terms) / static_cast<double>(a.size());
}

// Squared W2 between weighted samples on the line via the quantile coupling.
double w2sq_weighted_1d(std::vector<std::pair<double, double>> a, std::vector<std::pair<double, double>> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double ca = a[0].second, cb = b[0].second, t = 0.0, acc = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next = std::min(ca, cb);
    const double diff = a[i].first - b[j].first;
    if (next > t) acc += (next - t) * diff * diff;
    t = std::max(t, next);
    if (ca <= cb) {
      if (++i < a.size()) ca += a[i].second;
    } else {
      if (++j < b.size()) cb += b[j].second;
    }
  }
  return acc;
}

double w2sq_line(const std::vector<double>& a, const std::vector<double>& wa, bool ua, const std::vector<double>& b,
                 const std::vector<double>& wb, bool ub) {
  if (ua && ub && a.size() == b.size()) return w2sq_uniform_1d(a, b);
  std::vector<std::pair<double, double>> pa(a.size()), pb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] = {a[i], wa[i]};
  for (std::size_t i = 0; i < b.size(); ++i) pb[i] = {b[i], wb[i]};
  return w2sq_weighted_1d(std::move(pa), std::move(pb));
}

// Minimum-cost perfect matching on a dense n x n cost matrix (shortest
// augmenting paths with potentials). Returns row -> column.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      const double* row = cost.data() + (i0 - 1) * n;
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(n);
  for (std::size_t j = 1; j <= n; ++j) match[p[j] - 1] = j - 1;
  return match;
}

double w2sq_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const std::size_t n = mu.size();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = sq_dist(mu.point(i), nu.point(j));
  }
  const auto match = solve_assignment(cost, n);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) terms[i] = cost[i * n + match[i]];
  return canonical_sum(terms) / static_cast<double>(n);
}

double w2sq_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const W2Options& opt) {
  const std::size_t d = mu.dim();
  RandomStream rng(opt.seed, 0);
  std::vector<double> dir(d), pa(mu.size()), pb(nu.size());
  double total = 0.0;
  for (std::size_t s = 0; s < opt.projections; ++s) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& c : dir) {
        c = rng.normal();
        norm += c * c;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& c : dir) c /= norm;
    auto project = [&](const EmpiricalMeasure& m, std::vector<double>& out) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        ConstVec x = m.point(i);
        double z = 0.0;
        for (std::size_t k = 0; k < d; ++k) z += dir[k] * x[k];
        out[i] = z;
      }
    };
    project(mu, pa);
    project(nu, pb);
    total += w2sq_line(pa, mu.weights(), mu.uniform(), pb, nu.weights(), nu.uniform());
  }
  return total / static_cast<double>(opt.projections);
}

}  // namespace

std::string to_string(W2Method method) {
  switch (method) {
    case W2Method::Auto: return "auto";
    case W2Method::Quantile: return "quantile";
    case W2Method::Assignment: return "assignment";
    case W2Method::Sliced: return "sliced";
  }
  return "unknown";
}

W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const W2Options& options) {
  if (mu.dim() != nu.dim()) {
    throw DimensionError("wasserstein2: dimensions " + std::to_string(mu.dim()) + " and " +
                         std::to_string(nu.dim()) + " differ");
  }
  if (mu.empty() || nu.empty()) throw InsufficientSamplesError("wasserstein2: empty measure");
  const bool equal_uniform = mu.uniform() && nu.uniform() && mu.size() == nu.size();

  W2Method method = options.method;
  if (method == W2Method::Auto) {
    if (mu.dim() == 1) {
      method = W2Method::Quantile;
    } else if (equal_uniform && mu.size() <= options.assignment_cutoff) {
      method = W2Method::Assignment;
    } else {
      method = W2Method::Sliced;
    }
  }

  W2Result r;
  r.method = method;
  double sq = 0.0;
  switch (method) {
    case W2Method::Quantile:
      if (mu.dim() != 1) throw DimensionError("wasserstein2: quantile coupling needs D = 1");
      sq = w2sq_line(mu.points(), mu.weights(), mu.uniform(), nu.points(), nu.weights(), nu.uniform());
      break;
    case W2Method::Assignment:
      if (!equal_uniform) {
        throw ParamError("wasserstein2: assignment needs equal sample counts and uniform weights");
      }
      sq = w2sq_assignment(mu, nu);
      break;
    case W2Method::Sliced:
      if (options.projections == 0) throw ParamError("wasserstein2: sliced estimate needs >= 1 projection");
      sq = w2sq_sliced(mu, nu, options);
      r.approximate = true;
      break;
    case W2Method::Auto:
      break;
  }
  r.distance = std::sqrt(std::max(0.0, sq));
  return r;
}

}  // namespace irfkit
