#pragma once

// Numerical checks of the ergodicity and hull-bound hypotheses: Lipschitz
// constants, probability floors, irreducibility, contraction metrics,
// canonical trajectories, envelope and hull bounds, Lyapunov and drift
// conditions.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irfkit/dynamics.hpp"
#include "irfkit/random_stream.hpp"
#include "irfkit/system.hpp"

namespace irfkit {

enum class Verdict { Pass, Fail, Inconclusive };
[[nodiscard]] std::string to_string(Verdict v);

/// Outcome of one hypothesis check. `constants` is ordered by name so that
/// serialized reports are stable.
struct ConditionReport {
  std::string condition;
  Verdict verdict = Verdict::Inconclusive;
  double margin = 0.0;
  std::map<std::string, double> constants;
  std::vector<std::string> notes;
  std::string provenance;  // "analytic", "exact", "sampled"
  std::string caveat;

  /// Store a constant; non-finite values are recorded as a note instead.
  void set(const std::string& name, double value);
};

/// Deterministic map R^n -> R^p with an optional analytic Jacobian (p x n).
struct VectorMap {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::function<void(ConstVec x, MutVec out)> eval;
  std::function<Eigen::MatrixXd(ConstVec x)> jacobian;

  [[nodiscard]] std::vector<double> operator()(ConstVec x) const;
};

/// F_m of the closed loop as a VectorMap over the flat state. The system
/// must outlive the returned map.
[[nodiscard]] VectorMap composite_map(const ClosedLoopSystem& system, const MapIndex& m);

/// x -> pi(F_m(x)): the signal after one step under map m.
[[nodiscard]] VectorMap signal_after_map(const ClosedLoopSystem& system, const MapIndex& m);

/// Draws points of a domain into `out`.
using DomainSampler = std::function<void(RandomStream& rng, MutVec out)>;
[[nodiscard]] DomainSampler box_sampler(std::vector<double> lower, std::vector<double> upper);

/// Central-difference Jacobian with step h. Throws NumericalError if any
/// evaluation is non-finite.
[[nodiscard]] Eigen::MatrixXd finite_difference_jacobian(const VectorMap& map, ConstVec x, double h = 1e-5);

struct LipschitzOptions {
  std::size_t pairs = 1000;
  std::size_t jacobian_probes = 200;
  double h = 1e-5;
  std::uint64_t seed = 0;
  std::optional<double> analytic_override;
};

struct LipschitzEstimate {
  double value = 0.0;
  bool analytic = false;
  double pair_ratio_max = 0.0;      // max ||F(x) - F(x')|| / ||x - x'||
  double jacobian_norm_max = 0.0;   // max spectral norm of dF at probes
  std::size_t pairs = 0;
  std::size_t probes = 0;
  std::string note;
};

/// Sampled estimates are lower bounds of the true constant. Requires
/// pairs >= 1000 unless an analytic override is supplied; throws
/// SamplerError when the sampler has zero diameter.
[[nodiscard]] LipschitzEstimate estimate_lipschitz(const VectorMap& map, const DomainSampler& sampler,
                                                   const LipschitzOptions& options = {});

/// Condition report over per-map Lipschitz estimates (all finite -> pass).
[[nodiscard]] ConditionReport lipschitz_report(const std::vector<LipschitzEstimate>& estimates);

struct FloorResult {
  double delta = 0.0;        // min transition probability
  double delta_prime = 0.0;  // min output probability
  std::vector<double> delta_at;
  std::vector<double> delta_prime_at;
  double selection_floor = 0.0;  // min over the grid and M of q_m; NaN if M too large
  ConditionReport report;
};

/// delta, delta' = minima of p_ij, p'_il over the grid. A non-positive
/// minimum yields a Fail report, not an exception.
[[nodiscard]] FloorResult probability_floor(const ClosedLoopSystem& system,
                                            const std::vector<std::vector<double>>& grid,
                                            std::uint64_t enumeration_cap = kDefaultEnumerationCap);

struct IrreducibilityResult {
  bool irreducible = false;
  std::vector<std::vector<std::size_t>> components;  // sorted members, sorted by first member
};

/// Strong connectivity of the graph with edges i -> j where P_ij > 1e-12.
/// Throws MatrixError unless P is square with rows on the simplex (1e-9).
[[nodiscard]] IrreducibilityResult irreducibility_check(const Eigen::MatrixXd& P);

/// Irreducibility of each agent's induced matrices: for every agent, every
/// grid signal and both laws, the matrix whose rows all equal p(pi).
[[nodiscard]] ConditionReport irreducibility_report(const ClosedLoopSystem& system,
                                                    const std::vector<std::vector<double>>& grid);

/// margin = 1 - max_m l_m (2 - M delta); pass iff margin > 0.
/// Throws ParamError for non-finite inputs or delta <= 0 and
/// InfeasibleFloorError when delta * M > 1.
[[nodiscard]] ConditionReport check_thm1_iva(const std::vector<double>& l, std::uint64_t map_count, double delta);

struct PiContractionOptions {
  LipschitzOptions lipschitz{};
  std::uint64_t max_maps = 64;  // beyond this, maps are sampled uniformly
  std::size_t sampled_maps = 16;
  std::size_t threads = 1;
};

struct PiContractionResult {
  double kappa = 0.0;
  std::vector<MapIndex> maps;
  std::vector<double> per_map;
  ConditionReport report;
};

/// kappa = max over maps m of the Lipschitz estimate of x -> pi(F_m(x)).
[[nodiscard]] PiContractionResult estimate_pi_contraction(const ClosedLoopSystem& system,
                                                          const DomainSampler& sampler,
                                                          const PiContractionOptions& options = {});

struct CanonicalTrajectory {
  std::optional<MapIndex> index;
  std::vector<std::vector<double>> states;  // from the first start, k = 0..K
  std::vector<double> spreads;              // max pairwise distance between starts at each k
  double rate = 0.0;                        // lambda_m
  double fit_residual = 0.0;                // RMS of the log-linear fit
  std::size_t transient_end = 0;            // first k with spread < tol (K + 1 if never)
  bool converged = false;
  double tolerance = 0.0;

  [[nodiscard]] std::size_t horizon() const noexcept { return states.empty() ? 0 : states.size() - 1; }
  /// State at k, holding the last stored state beyond the horizon.
  [[nodiscard]] const std::vector<double>& state_at(std::size_t k) const;

  /// A canonical given directly as a constant point with known rate.
  static CanonicalTrajectory constant(std::vector<double> point, double rate, std::size_t horizon = 0);
};

/// Iterate `map` from every start. Throws ParamError for < 2 starts or
/// coincident starts, NotContractiveError when the spread grows.
[[nodiscard]] CanonicalTrajectory canonical_trajectory(const VectorMap& map,
                                                       const std::vector<std::vector<double>>& starts,
                                                       std::size_t horizon, double tol = 1e-12);
[[nodiscard]] CanonicalTrajectory canonical_trajectory(const ClosedLoopSystem& system, const MapIndex& m,
                                                       const std::vector<SystemState>& starts, std::size_t horizon,
                                                       double tol = 1e-12);

struct MetricFactory {
  /// Constant metric factor; G = Theta^T J Theta.
  std::optional<Eigen::MatrixXd> theta;
  /// State-dependent factor; G = psi(F(x)) J psi(x)^-1.
  std::function<Eigen::MatrixXd(ConstVec x)> psi;

  static MetricFactory identity(std::size_t n);
};

struct MetricCheckOptions {
  double h = 1e-5;
  double slack = 1e-10;
};

/// Max eigenvalue of G^T G - I over the grid; pass iff <= -beta_target + slack.
/// Reports mu = -max eigenvalue and eta, rho bounds of the metric.
[[nodiscard]] ConditionReport contraction_metric_check(const VectorMap& map, const MetricFactory& metric,
                                                       const std::vector<std::vector<double>>& grid,
                                                       double beta_target, const MetricCheckOptions& options = {});

struct EnvelopeResult {
  double R = 0.0;
  std::size_t from_k = 0;
  std::size_t horizon = 0;
};

/// R = max over k in [from_k, K] and pairs of ||x^(m1)(k) - x^(m2)(k)||, with
/// from_k the latest transient end (or 0 when `after_transient` is false).
[[nodiscard]] EnvelopeResult trajectory_envelope_R(const std::vector<CanonicalTrajectory>& canonicals,
                                                   std::optional<std::size_t> horizon = std::nullopt,
                                                   bool after_transient = true);

struct HullResult {
  double distance = 0.0;
  std::vector<double> weights;
  std::string method;  // "vertex", "segment", "active-set", "frank-wolfe"
  std::size_t iterations = 0;
};

/// Euclidean distance from x to the convex hull of the vertices.
[[nodiscard]] double hull_distance(ConstVec x, const std::vector<std::vector<double>>& vertices);
[[nodiscard]] HullResult hull_projection(ConstVec x, const std::vector<std::vector<double>>& vertices);
/// Force the conditional-gradient path (tests compare it with active-set).
[[nodiscard]] HullResult hull_projection_fw(ConstVec x, const std::vector<std::vector<double>>& vertices);
[[nodiscard]] HullResult hull_projection_active_set(ConstVec x, const std::vector<std::vector<double>>& vertices);

struct Theorem2Options {
  std::size_t trials = 10000;
  std::size_t horizon = 1000;
  std::size_t burn_in = 100;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::optional<SystemState> initial;  // default: the zero state
};

/// D = lambda R / (1 - lambda) with lambda = max rate and R from the
/// envelope; pass iff every post-burn-in hull distance <= D + epsilon.
/// Trial t runs on stream (seed, t). Throws NotContractiveError if lambda >= 1.
[[nodiscard]] ConditionReport theorem2_bound_check(const ClosedLoopSystem& system,
                                                   const std::vector<CanonicalTrajectory>& canonicals,
                                                   const Theorem2Options& options = {});

using ScalarFunction = std::function<double(ConstVec)>;
using ComparisonFunction = std::function<double(double)>;

struct LyapunovOptions {
  std::size_t samples = 1000;
  std::size_t path_length = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-12;
};

/// Sandwich alpha1(|z|) <= V(z) <= alpha2(|z|) on sampled differences and
/// decrease V(F(x(k))) - V(x(k)) <= -alpha3(|F(x(k)) - x^(m)(k)|) along paths
/// of F started from sampled points. x^(m)(k) is read from the canonical
/// trajectory after its transient (index transient_end + k).
[[nodiscard]] ConditionReport lyapunov_decrease_check(const VectorMap& map, const ScalarFunction& V,
                                                      const ComparisonFunction& alpha1,
                                                      const ComparisonFunction& alpha2,
                                                      const ComparisonFunction& alpha3,
                                                      const CanonicalTrajectory& canonical,
                                                      const DomainSampler& sampler,
                                                      const LyapunovOptions& options = {});

struct DriftOptions {
  std::vector<SystemState> states;  // tested states; if empty, states visited by `paths` runs
  std::size_t paths = 0;
  std::size_t horizon = 0;
  std::optional<SystemState> path_start;
  std::size_t inner_samples = 1000;  // Monte Carlo draws when M is not enumerated
  std::uint64_t enumerate_limit = 4096;
  std::optional<SystemState> small_set_center;
  double small_set_radius = 0.0;
  double drift_margin = 0.0;  // required drift <= -drift_margin outside the small set
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct DriftPoint {
  std::vector<double> state;
  double drift = 0.0;
  double standard_error = 0.0;  // 0 when exact
  bool in_small_set = false;
};

struct DriftResult {
  std::vector<DriftPoint> points;
  bool exact = false;
  ConditionReport report;
};

/// E[V(x(k+1)) | x(k) = x] - V(x) at the tested states, exact by
/// enumerating M when |M| <= enumerate_limit, otherwise Monte Carlo on
/// stream (seed, point index).
[[nodiscard]] DriftResult stochastic_drift_check(const ClosedLoopSystem& system, const ScalarFunction& V,
                                                 const DriftOptions& options);

}  // namespace irfkit
