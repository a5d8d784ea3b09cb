#include <algorithm>
#include <cmath>
#include <limits>

#include "irfkit/errors.hpp"
#include "irfkit/verifiers.hpp"

namespace irfkit {

namespace {

constexpr std::size_t kActiveSetMaxVertices = 16;
constexpr double kWolfeZ1 = 1e-12;
constexpr double kWolfeZ2 = 1e-10;
constexpr double kFwTolerance = 1e-10;
constexpr std::size_t kFwMaxIterations = 100000;

void validate(ConstVec x, const std::vector<std::vector<double>>& vertices) {
  if (vertices.empty()) throw ParamError("hull: at least one vertex is required");
  for (const auto& v : vertices) {
    if (v.size() != x.size()) throw DimensionError("hull: vertex dimension differs from the point");
  }
}

double dist(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Closest point of segment [a, b] to x, as the weight t on b.
double segment_weight(ConstVec x, ConstVec a, ConstVec b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = b[i] - a[i];
    num += (x[i] - a[i]) * d;
    den += d * d;
  }
  if (den == 0.0) return 0.0;
  return std::clamp(num / den, 0.0, 1.0);
}

double segment_distance(ConstVec x, ConstVec a, ConstVec b) {
  const double t = segment_weight(x, a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = a[i] + t * (b[i] - a[i]);
    s += (x[i] - p) * (x[i] - p);
  }
  return std::sqrt(s);
}

// Shifted vertices q_j = v_j - x as columns.
Eigen::MatrixXd shifted(ConstVec x, const std::vector<std::vector<double>>& vertices) {
  const auto d = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd Q(d, static_cast<Eigen::Index>(vertices.size()));
  for (std::size_t j = 0; j < vertices.size(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) Q(i, static_cast<Eigen::Index>(j)) = vertices[j][static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)];
  }
  return Q;
}

HullResult finish(const Eigen::MatrixXd& Q, std::vector<double> weights, std::string method, std::size_t iters) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(Q.rows());
  for (std::size_t j = 0; j < weights.size(); ++j) y += weights[j] * Q.col(static_cast<Eigen::Index>(j));
  HullResult r;
  r.distance = y.norm();
  r.weights = std::move(weights);
  r.method = std::move(method);
  r.iterations = iters;
  return r;
}

// Wolfe's minimum-norm-point algorithm on the columns of Q.
HullResult wolfe(const Eigen::MatrixXd& Q) {
  const Eigen::Index n = Q.cols();
  Eigen::Index start = 0;
  Q.colwise().squaredNorm().minCoeff(&start);
  double scale = Q.colwise().squaredNorm().maxCoeff();
  if (scale == 0.0) scale = 1.0;

  std::vector<Eigen::Index> S{start};
  std::vector<double> w{1.0};
  Eigen::VectorXd y = Q.col(start);
  std::size_t iters = 0;

  while (iters++ < 1000) {
    Eigen::Index j = 0;
    (Q.transpose() * y).minCoeff(&j);
    const double yy = y.squaredNorm();
    if (yy - y.dot(Q.col(j)) <= kWolfeZ1 * scale) break;
    if (std::find(S.begin(), S.end(), j) != S.end()) break;
    S.push_back(j);
    w.push_back(0.0);

    for (;;) {
      const auto k = static_cast<Eigen::Index>(S.size());
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k + 1, k + 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) A(a, b) = Q.col(S[static_cast<std::size_t>(a)]).dot(Q.col(S[static_cast<std::size_t>(b)]));
        A(a, k) = 1.0;
        A(k, a) = 1.0;
      }
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
      rhs(k) = 1.0;
      const Eigen::VectorXd sol = A.fullPivLu().solve(rhs);
      const Eigen::VectorXd alpha = sol.head(k);

      if ((alpha.array() > kWolfeZ2).all()) {
        for (Eigen::Index a = 0; a < k; ++a) w[static_cast<std::size_t>(a)] = alpha(a);
        break;
      }
      double theta = 1.0;
      for (Eigen::Index a = 0; a < k; ++a) {
        const double wa = w[static_cast<std::size_t>(a)];
        if (alpha(a) <= kWolfeZ2 && wa - alpha(a) > 0.0) theta = std::min(theta, wa / (wa - alpha(a)));
      }
      std::vector<Eigen::Index> S2;
      std::vector<double> w2;
      double total = 0.0;
      for (Eigen::Index a = 0; a < k; ++a) {
        const double v = (1.0 - theta) * w[static_cast<std::size_t>(a)] + theta * alpha(a);
        if (v > kWolfeZ2) {
          S2.push_back(S[static_cast<std::size_t>(a)]);
          w2.push_back(v);
          total += v;
        }
      }
      if (S2.empty()) {
        // Numerical corner: keep the vertex just added.
        S2.push_back(S.back());
        w2.push_back(1.0);
        total = 1.0;
      }
      for (double& v : w2) v /= total;
      S = std::move(S2);
      w = std::move(w2);
    }
    y = Eigen::VectorXd::Zero(Q.rows());
    for (std::size_t a = 0; a < S.size(); ++a) y += w[a] * Q.col(S[a]);
  }

  std::vector<double> weights(static_cast<std::size_t>(n), 0.0);
  for (std::size_t a = 0; a < S.size(); ++a) weights[static_cast<std::size_t>(S[a])] = w[a];
  return finish(Q, std::move(weights), "active-set", iters);
}

}  // namespace

HullResult hull_projection_active_set(ConstVec x, const std::vector<std::vector<double>>& vertices) {
  validate(x, vertices);
  return wolfe(shifted(x, vertices));
}

HullResult hull_projection_fw(ConstVec x, const std::vector<std::vector<double>>& vertices) {
  validate(x, vertices);
  const Eigen::MatrixXd Q = shifted(x, vertices);
  const Eigen::Index n = Q.cols();
  Eigen::Index start = 0;
  Q.colwise().squaredNorm().minCoeff(&start);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  w(start) = 1.0;
  Eigen::VectorXd y = Q.col(start);

  for (std::size_t it = 1; it <= kFwMaxIterations; ++it) {
    const Eigen::VectorXd g = Q.transpose() * y;
    Eigen::Index s = 0;
    g.minCoeff(&s);
    const double yy = y.squaredNorm();
    const double gap = yy - g(s);  // duality gap of 0.5 |y|^2
    const double dnorm = std::sqrt(yy);
    if (std::min(std::sqrt(std::max(2.0 * gap, 0.0)), dnorm > 0.0 ? 2.0 * gap / dnorm : 0.0) <= kFwTolerance) {
      std::vector<double> weights(w.data(), w.data() + n);
      return finish(Q, std::move(weights), "frank-wolfe", it);
    }
    Eigen::Index a = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (w(j) > 0.0 && (a < 0 || g(j) > g(a))) a = j;
    }
    const double away_gap = g(a) - yy;
    Eigen::VectorXd d;
    double gmax = 1.0;
    bool toward = gap >= away_gap;
    if (toward) {
      d = Q.col(s) - y;
    } else {
      d = y - Q.col(a);
      gmax = w(a) < 1.0 ? w(a) / (1.0 - w(a)) : std::numeric_limits<double>::infinity();
    }
    const double dd = d.squaredNorm();
    if (dd == 0.0) break;
    const double gamma = std::clamp(-y.dot(d) / dd, 0.0, gmax);
    if (toward) {
      w *= (1.0 - gamma);
      w(s) += gamma;
    } else {
      w *= (1.0 + gamma);
      w(a) -= gamma;
      if (w(a) < 1e-15) w(a) = 0.0;
    }
    y += gamma * d;
  }
  // Iteration cap: fall back to the exact method.
  HullResult r = wolfe(Q);
  r.method = "frank-wolfe";
  return r;
}

HullResult hull_projection(ConstVec x, const std::vector<std::vector<double>>& vertices) {
  validate(x, vertices);
  if (vertices.size() == 1) {
    return HullResult{dist(x, vertices[0]), {1.0}, "vertex", 0};
  }
  if (vertices.size() == 2) {
    const double t = segment_weight(x, vertices[0], vertices[1]);
    return HullResult{segment_distance(x, vertices[0], vertices[1]), {1.0 - t, t}, "segment", 0};
  }
  if (vertices.size() <= kActiveSetMaxVertices) return wolfe(shifted(x, vertices));
  return hull_projection_fw(x, vertices);
}

double hull_distance(ConstVec x, const std::vector<std::vector<double>>& vertices) {
  validate(x, vertices);
  if (vertices.size() == 1) return dist(x, vertices[0]);
  if (vertices.size() == 2) return segment_distance(x, vertices[0], vertices[1]);
  return hull_projection(x, vertices).distance;
}

}  // namespace irfkit
