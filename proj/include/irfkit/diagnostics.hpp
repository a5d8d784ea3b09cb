#pragma once

// Empirical checks of invariant measures and ergodicity.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "irfkit/dynamics.hpp"
#include "irfkit/random_stream.hpp"
#include "irfkit/system.hpp"

namespace irfkit {

/// Weighted point cloud in R^D, stored row-major.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  /// `points` holds n * dim values; empty `weights` means uniform.
  /// Throws DimensionError on ragged input, ParamError on bad weights.
  EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights = {});
  static EmpiricalMeasure from_points(const std::vector<std::vector<double>>& points,
                                      std::vector<double> weights = {});

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return weights_.size(); }
  [[nodiscard]] bool empty() const noexcept { return weights_.empty(); }
  [[nodiscard]] ConstVec point(std::size_t i) const noexcept { return {points_.data() + i * dim_, dim_}; }
  [[nodiscard]] double weight(std::size_t i) const noexcept { return weights_[i]; }
  [[nodiscard]] const std::vector<double>& points() const noexcept { return points_; }
  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
  [[nodiscard]] bool uniform() const noexcept { return uniform_; }

  [[nodiscard]] std::vector<double> mean() const;
  /// Per-coordinate variance (weighted, population form).
  [[nodiscard]] std::vector<double> variance() const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> points_;
  std::vector<double> weights_;
  bool uniform_ = true;
};

/// Pool states at indices burn_in, burn_in + thinning, ... of every
/// trajectory, restricted to `projection` coordinates (empty = all).
[[nodiscard]] EmpiricalMeasure empirical_measure(const std::vector<Trajectory>& trajectories, std::size_t burn_in,
                                                 std::size_t thinning = 1,
                                                 const std::vector<std::size_t>& projection = {});

/// Streaming sampler: runs `runs` trajectories (run r starts from
/// initials[r % initials.size()] on stream (seed, r)) and pools the same
/// indices as empirical_measure without storing trajectories.
struct SamplingPlan {
  std::vector<SystemState> initials;
  std::uint64_t seed = 0;
  std::size_t runs = 1;
  std::size_t horizon = 0;
  std::size_t burn_in = 0;
  std::size_t thinning = 1;
  std::vector<std::size_t> projection;
  std::size_t threads = 1;
};
[[nodiscard]] EmpiricalMeasure sample_measure(const ClosedLoopSystem& system, const SamplingPlan& plan);

enum class W2Method { Auto, Quantile, Assignment, Sliced };

struct W2Options {
  W2Method method = W2Method::Auto;
  std::size_t assignment_cutoff = 2000;
  std::size_t projections = 64;
  std::uint64_t seed = 0;  // directions for the sliced estimate
};

struct W2Result {
  double distance = 0.0;
  bool approximate = false;
  W2Method method = W2Method::Quantile;
};

[[nodiscard]] std::string to_string(W2Method method);

/// Wasserstein-2 distance between empirical measures.
///
/// Auto picks: D = 1 -> exact quantile coupling (any weights);
/// D >= 2 with equal counts, uniform weights and n <= cutoff -> exact optimal
/// assignment; otherwise the sliced estimate over random directions, flagged
/// approximate. Forcing Assignment requires equal counts and uniform weights.
[[nodiscard]] W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                    const W2Options& options = {});

enum class CouplingMode { SharedNoise, Independent };

struct CouplingOptions {
  std::size_t trials = 1000;
  std::size_t horizon = 50;
  CouplingMode mode = CouplingMode::Independent;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::size_t> projection;  // coordinates compared (empty = all)
  W2Options w2{};
  // The fit stops at the first k with d_k <= floor_factor * noise floor, or
  // (when the floor is positive) with d_k >= d_{k-1}.
  double floor_factor = 5.0;
};

struct CouplingReport {
  std::vector<double> distances;  // W2 between the two clouds at k = 0..K
  double rate = 0.0;              // exp(slope) of the log-linear fit; NaN if < 2 usable points
  double noise_floor = 0.0;
  std::size_t fit_begin = 0;  // fitted k range [fit_begin, fit_end)
  std::size_t fit_end = 0;
  bool approximate = false;
};

/// Pair trajectory t of cloud a uses stream (seed, t); cloud b uses the
/// same stream in shared-noise mode and (seed, trials + t) otherwise. The
/// noise floor is the mean, over k in [K/2, K], of W2 between cloud a and an
/// independent replicate from x0_a on streams (seed, 2 trials + t).
[[nodiscard]] CouplingReport coupling_contraction_test(const ClosedLoopSystem& system, const SystemState& x0_a,
                                                       const SystemState& x0_b, const CouplingOptions& options);

using Observable = std::function<double(ConstVec state)>;

enum class ErgodicityVerdict { Consistent, Violated };
[[nodiscard]] std::string to_string(ErgodicityVerdict verdict);

struct ErgodicityOptions {
  std::size_t horizon = 10000;  // K
  std::size_t burn_in = 0;      // B; averages use k = B+1 .. K
  double tau = 4.0;
  std::size_t batches = 50;
  std::size_t threads = 1;
};

struct ErgodicityRun {
  std::size_t initial = 0;
  std::uint64_t seed = 0;
  double average = 0.0;
  double standard_error = 0.0;  // batch means
};

struct ErgodicityReport {
  std::vector<ErgodicityRun> runs;  // initial-major order
  double grand_mean = 0.0;
  double spread = 0.0;            // max - min of the run averages
  double spread_std = 0.0;        // sample std of the run averages
  double pooled_standard_error = 0.0;  // sqrt(mean SE^2)
  double max_deviation = 0.0;     // max |average - grand_mean|
  double threshold = 0.0;         // tau * pooled_standard_error
  ErgodicityVerdict verdict = ErgodicityVerdict::Consistent;
};

/// Run (initial i, seed s) uses stream (s, i). Verdict is Consistent iff
/// every run average lies within tau pooled batch-means standard errors of
/// the grand mean. Identical averages are always Consistent.
[[nodiscard]] ErgodicityReport time_average_ergodicity_test(const ClosedLoopSystem& system,
                                                            const Observable& observable,
                                                            const std::vector<SystemState>& initials,
                                                            const std::vector<std::uint64_t>& seeds,
                                                            const ErgodicityOptions& options);

enum class PushforwardMode { Auto, Enumerate, Sample };

struct InvarianceOptions {
  PushforwardMode mode = PushforwardMode::Auto;
  std::uint64_t enumerate_limit = 64;  // Auto enumerates when |M| <= limit
  W2Options w2{};
};

/// W2(mu, P mu) for a measure over full system states. Enumerate mode pushes
/// each sample through every composite map with weight q_m (exact
/// pushforward of mu); Sample mode takes one fresh step per sample.
[[nodiscard]] W2Result invariance_residual(const ClosedLoopSystem& system, const EmpiricalMeasure& mu,
                                           RandomStream& rng, const InvarianceOptions& options = {});

}  // namespace irfkit
