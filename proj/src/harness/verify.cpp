#include <cmath>
#include <regex>

#include "irfkit/dynamics.hpp"
#include "irfkit/errors.hpp"
#include "irfkit/harness/commands.hpp"

namespace irfkit::harness {

namespace {

constexpr std::uint64_t kMaxVerifiedMaps = 64;

Json to_json(const ConditionReport& r) {
  Json c = Json::object();
  for (const auto& [k, v] : r.constants) c[k] = v;
  Json j = {{"condition", r.condition},
            {"verdict", to_string(r.verdict)},
            {"constants", c},
            {"notes", r.notes},
            {"provenance", r.provenance},
            {"caveat", r.caveat}};
  j["margin"] = std::isfinite(r.margin) ? Json(r.margin) : Json(nullptr);
  return j;
}

std::vector<MapIndex> all_maps(const ClosedLoopSystem& sys) { return enumerate_map_indices(sys, kMaxVerifiedMaps); }

std::vector<std::vector<double>> signal_grid(const ClosedLoopSystem& sys, const Node& c) {
  const auto points = static_cast<std::size_t>(c.count("grid_points", 101));
  if (points == 0) throw ConfigError(c.field("grid_points") + ": must be positive");
  return sys.controller().signal_set.grid(points);
}

LipschitzOptions lipschitz_options(const Node& c, std::uint64_t seed) {
  LipschitzOptions o;
  o.pairs = c.count("pairs", 1000);
  o.jacobian_probes = c.count("probes", 200);
  o.h = c.number("h", 1e-5);
  o.seed = seed;
  if (c.has("override")) o.analytic_override = c.number("override");
  return o;
}

std::vector<CanonicalTrajectory> canonicals(const ClosedLoopSystem& sys, const Node& c) {
  const auto starts = build_states(sys, c, "starts");
  const std::size_t K = c.count("canonical_horizon", 200);
  const double tol = c.number("tol", 1e-12);
  std::vector<CanonicalTrajectory> out;
  for (const auto& m : all_maps(sys)) out.push_back(canonical_trajectory(sys, m, starts, K, tol));
  return out;
}

std::vector<Json> check(const ClosedLoopSystem& sys, const Node& c, const std::string& kind, std::uint64_t seed,
                        std::size_t threads) {
  const std::size_t n = sys.state_dim();
  if (kind == "lipschitz") {
    c.allow_only({"id", "kind", "pairs", "probes", "h", "override", "domain"});
    const LipschitzOptions o = lipschitz_options(c, seed);
    const DomainSampler sampler = o.analytic_override ? DomainSampler{} : build_box(n, c.child("domain"));
    std::vector<LipschitzEstimate> est;
    for (const auto& m : all_maps(sys)) est.push_back(estimate_lipschitz(composite_map(sys, m), sampler, o));
    return {to_json(lipschitz_report(est))};
  }
  if (kind == "probability_floor") {
    c.allow_only({"id", "kind", "grid_points"});
    return {to_json(probability_floor(sys, signal_grid(sys, c)).report)};
  }
  if (kind == "irreducibility") {
    c.allow_only({"id", "kind", "grid_points"});
    return {to_json(irreducibility_report(sys, signal_grid(sys, c)))};
  }
  if (kind == "lipschitz_floor_product") {
    c.allow_only({"id", "kind", "l", "map_count", "delta", "grid_points", "pairs", "probes", "h", "domain"});
    std::vector<double> l;
    if (c.has("l")) {
      l = c.numbers("l");
    } else {
      const LipschitzOptions o = lipschitz_options(c, seed);
      const DomainSampler sampler = build_box(n, c.child("domain"));
      for (const auto& m : all_maps(sys)) l.push_back(estimate_lipschitz(composite_map(sys, m), sampler, o).value);
    }
    const std::uint64_t M = c.count("map_count", sys.index_set_size());
    const double delta = c.has("delta") ? c.number("delta") : probability_floor(sys, signal_grid(sys, c)).selection_floor;
    return {to_json(check_thm1_iva(l, M, delta))};
  }
  if (kind == "signal_contraction") {
    c.allow_only({"id", "kind", "pairs", "probes", "h", "override", "domain", "max_maps", "sampled_maps"});
    PiContractionOptions o;
    o.lipschitz = lipschitz_options(c, seed);
    o.max_maps = c.count("max_maps", 64);
    o.sampled_maps = c.count("sampled_maps", 16);
    o.threads = threads;
    const DomainSampler sampler = o.lipschitz.analytic_override ? DomainSampler{} : build_box(n, c.child("domain"));
    return {to_json(estimate_pi_contraction(sys, sampler, o).report)};
  }
  if (kind == "canonical") {
    c.allow_only({"id", "kind", "starts", "canonical_horizon", "tol"});
    const auto canon = canonicals(sys, c);
    ConditionReport r;
    r.condition = "canonical_trajectories";
    double lambda = 0.0;
    bool converged = true;
    for (std::size_t i = 0; i < canon.size(); ++i) {
      const std::string m = to_string(*canon[i].index);
      r.set("lambda[" + m + "]", canon[i].rate);
      r.set("fit_residual[" + m + "]", canon[i].fit_residual);
      lambda = std::max(lambda, canon[i].rate);
      converged = converged && canon[i].converged;
    }
    r.set("lambda", lambda);
    r.set("R", trajectory_envelope_R(canon).R);
    r.margin = 1.0 - lambda;
    r.verdict = !converged ? Verdict::Inconclusive : (r.margin > 0.0 ? Verdict::Pass : Verdict::Fail);
    if (!converged) r.notes.push_back("inter-start spread did not reach tol within the horizon");
    r.provenance = "sampled";
    r.caveat = "rates are fitted from a finite set of starts";
    return {to_json(r)};
  }
  if (kind == "contraction_metric") {
    c.allow_only({"id", "kind", "grid", "beta", "theta", "h"});
    const Node g = c.child("grid");
    g.allow_only({"lower", "upper", "points"});
    SignalBox box{g.numbers("lower"), g.numbers("upper")};
    if (box.lower.size() != n || box.upper.size() != n) throw ConfigError(g.path() + ": bounds must have " + std::to_string(n) + " entries");
    const auto grid = box.grid(static_cast<std::size_t>(g.count("points", 5)));
    MetricFactory metric = MetricFactory::identity(n);
    if (c.has("theta")) {
      const auto rows = c.matrix("theta");
      Eigen::MatrixXd T(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != n || rows.size() != n) throw ConfigError(c.field("theta") + ": expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
        for (std::size_t j = 0; j < n; ++j) T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
      metric.theta = T;
    }
    MetricCheckOptions o;
    o.h = c.number("h", 1e-5);
    std::vector<Json> out;
    for (const auto& m : all_maps(sys)) {
      Json j = to_json(contraction_metric_check(composite_map(sys, m), metric, grid, c.number("beta"), o));
      j["map"] = to_string(m);
      out.push_back(std::move(j));
    }
    return out;
  }
  if (kind == "hull_bound") {
    c.allow_only({"id", "kind", "starts", "canonical_horizon", "tol", "trials", "horizon", "burn_in", "epsilon", "initial"});
    Theorem2Options o;
    o.trials = c.count("trials", 10000);
    o.horizon = c.count("horizon", 1000);
    o.burn_in = c.count("burn_in", 100);
    o.epsilon = c.number("epsilon", 1e-6);
    o.seed = seed;
    o.threads = threads;
    o.initial = build_state(sys, c, "initial");
    const auto canon = canonicals(sys, c);
    return {to_json(theorem2_bound_check(sys, canon, o))};
  }
  if (kind == "lyapunov") {
    c.allow_only({"id", "kind", "map", "V", "alpha1", "alpha2", "alpha3", "domain", "samples", "path_length", "starts",
                  "canonical_horizon", "tol"});
    const auto maps = all_maps(sys);
    const std::size_t mi = c.count("map", 0);
    if (mi >= maps.size()) throw ConfigError(c.field("map") + ": index out of range (|M| = " + std::to_string(maps.size()) + ")");
    const CanonicalTrajectory canon =
        canonical_trajectory(sys, maps[mi], build_states(sys, c, "starts"), c.count("canonical_horizon", 200), c.number("tol", 1e-12));
    LyapunovOptions o;
    o.samples = c.count("samples", 1000);
    o.path_length = c.count("path_length", 20);
    o.seed = seed;
    Json j = to_json(lyapunov_decrease_check(composite_map(sys, maps[mi]), build_quadratic(n, c.child("V")),
                                             build_comparison(c.child("alpha1")), build_comparison(c.child("alpha2")),
                                             build_comparison(c.child("alpha3")), canon, build_box(n, c.child("domain")), o));
    j["map"] = to_string(maps[mi]);
    return {j};
  }
  if (kind == "drift") {
    c.allow_only({"id", "kind", "V", "states", "paths", "horizon", "path_start", "inner_samples", "enumerate_limit",
                  "small_set", "margin"});
    DriftOptions o;
    if (c.has("states")) o.states = build_states(sys, c, "states");
    o.paths = c.count("paths", 0);
    o.horizon = c.count("horizon", 0);
    if (c.has("path_start")) o.path_start = build_state(sys, c, "path_start");
    o.inner_samples = c.count("inner_samples", 1000);
    o.enumerate_limit = c.count("enumerate_limit", 4096);
    if (c.has("small_set")) {
      const Node s = c.child("small_set");
      s.allow_only({"center", "radius"});
      o.small_set_center = build_state(sys, s, "center");
      o.small_set_radius = s.number("radius");
    }
    o.drift_margin = c.number("margin", 0.0);
    o.seed = seed;
    o.threads = threads;
    const DriftResult res = stochastic_drift_check(sys, build_quadratic(n, c.child("V")), o);
    Json j = to_json(res.report);
    Json pts = Json::array();
    for (const auto& p : res.points) {
      pts.push_back({{"state", p.state}, {"drift", p.drift}, {"standard_error", p.standard_error},
                     {"in_small_set", p.in_small_set}});
    }
    j["points"] = pts;
    return {j};
  }
  throw ConfigError(c.field("kind") + ": unknown condition \"" + kind + "\"");
}

}  // namespace

RunOutput run_verify(const Config& config, std::uint64_t seed, std::size_t threads) {
  const Node root(config.root, "config");
  const Node sysnode = root.child("system");
  const ClosedLoopSystem sys = build_system(sysnode);
  const Node v = root.child("verify");
  v.allow_only({"conditions"});
  const auto conds = v.list("conditions");
  if (conds.empty()) throw ConfigError(v.field("conditions") + ": needs at least one condition");

  RunOutput out;
  Json entries = Json::array();
  std::vector<std::string> ids;
  for (const Node& c : conds) {
    const std::string id = c.text("id");
    if (std::find(ids.begin(), ids.end(), id) != ids.end()) throw ConfigError(c.field("id") + ": duplicate id \"" + id + "\"");
    ids.push_back(id);
    const std::string kind = c.text("kind");
    try {
      for (Json j : check(sys, c, kind, seed, threads)) {
        Json e = {{"id", id}, {"kind", kind}};
        e.update(j);
        entries.push_back(std::move(e));
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& err) {
      entries.push_back({{"id", id}, {"kind", kind}, {"error", {{"type", err.kind()}, {"message", err.what()}}}});
      out.exit_code = kExitPartial;
      out.messages.push_back("condition " + id + ": " + err.kind() + ": " + err.what());
    }
  }
  const Json cert = {{"schema_version", kSchemaVersion},
                     {"tool_version", kToolVersion},
                     {"config_digest", config.digest},
                     {"seed", seed},
                     {"system", sysnode.text("type")},
                     {"conditions", entries}};
  out.files["certificate.json"] = cert.dump(2) + "\n";
  return out;
}

}  // namespace irfkit::harness
