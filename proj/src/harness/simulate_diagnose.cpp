#include <regex>

#include "irfkit/dynamics.hpp"
#include "irfkit/errors.hpp"
#include "irfkit/harness/commands.hpp"
#include "irfkit/parallel.hpp"

namespace irfkit::harness {

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::vector<std::size_t> projection_of(const ClosedLoopSystem& system, const Node& n) {
  std::vector<std::size_t> out;
  if (!n.has("projection")) return out;
  for (double v : n.numbers("projection")) {
    if (v < 0 || v != std::floor(v) || v >= static_cast<double>(system.state_dim())) {
      throw ConfigError(n.field("projection") + ": indices must be integers in [0, " +
                        std::to_string(system.state_dim()) + ")");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string experiment_id(const Node& e) {
  const std::string id = e.text("id");
  static const std::regex ok("[A-Za-z0-9_-]+");
  if (!std::regex_match(id, ok)) throw ConfigError(e.field("id") + ": use letters, digits, '_' or '-'");
  return id;
}

std::vector<SystemState> initials_of(const ClosedLoopSystem& system, const Node& e) {
  if (e.has("initials")) return build_states(system, e, "initials");
  return {build_state(system, e, "initial")};
}

void moments(const ClosedLoopSystem& sys, const Node& e, const std::string& id, std::uint64_t seed, std::size_t threads,
             CsvTable& t) {
  e.allow_only({"id", "kind", "system", "runs", "horizon", "burn_in", "thinning", "initial", "initials", "projection"});
  SamplingPlan plan;
  plan.initials = initials_of(sys, e);
  plan.seed = seed;
  plan.runs = e.count("runs", 1);
  plan.horizon = e.count("horizon");
  plan.burn_in = e.count("burn_in", 0);
  plan.thinning = e.count("thinning", 1);
  plan.projection = projection_of(sys, e);
  plan.threads = threads;
  if (plan.thinning == 0) throw ConfigError(e.field("thinning") + ": must be positive");
  if (plan.burn_in > plan.horizon) throw ConfigError(e.field("burn_in") + ": exceeds horizon");
  const EmpiricalMeasure mu = sample_measure(sys, plan);
  const auto mean = mu.mean();
  const auto var = mu.variance();
  t.add({id, "", "samples", fmt(static_cast<std::uint64_t>(mu.size()))});
  for (std::size_t i = 0; i < mean.size(); ++i) t.add({id, "", "mean_" + std::to_string(i), fmt(mean[i])});
  for (std::size_t i = 0; i < var.size(); ++i) t.add({id, "", "variance_" + std::to_string(i), fmt(var[i])});
}

void coupling(const ClosedLoopSystem& sys, const Node& e, const std::string& id, std::uint64_t seed, std::size_t threads,
              CsvTable& t) {
  e.allow_only({"id", "kind", "system", "trials", "horizon", "mode", "x0_a", "x0_b", "projection", "floor_factor"});
  CouplingOptions o;
  o.trials = e.count("trials", 1000);
  o.horizon = e.count("horizon", 50);
  const std::string mode = e.text("mode", "independent");
  if (mode == "shared") {
    o.mode = CouplingMode::SharedNoise;
  } else if (mode != "independent") {
    throw ConfigError(e.field("mode") + ": expected shared or independent");
  }
  o.seed = seed;
  o.threads = threads;
  o.projection = projection_of(sys, e);
  o.floor_factor = e.number("floor_factor", 5.0);
  o.w2.seed = seed;
  const auto rep = coupling_contraction_test(sys, build_state(sys, e, "x0_a"), build_state(sys, e, "x0_b"), o);
  for (std::size_t k = 0; k < rep.distances.size(); ++k) t.add({id, std::to_string(k), "w2", fmt(rep.distances[k])});
  t.add({id, "", "rate", fmt(rep.rate)});
  t.add({id, "", "noise_floor", fmt(rep.noise_floor)});
  t.add({id, "", "fit_begin", fmt(static_cast<std::uint64_t>(rep.fit_begin))});
  t.add({id, "", "fit_end", fmt(static_cast<std::uint64_t>(rep.fit_end))});
  t.add({id, "", "approximate", rep.approximate ? "1" : "0"});
}

void ergodicity(const ClosedLoopSystem& sys, const Node& e, const std::string& id, std::size_t threads, CsvTable& t) {
  e.allow_only({"id", "kind", "system", "initials", "initial", "seeds", "horizon", "burn_in", "tau", "batches",
                "observable"});
  ErgodicityOptions o;
  o.horizon = e.count("horizon", 10000);
  o.burn_in = e.count("burn_in", 0);
  o.tau = e.number("tau", 4.0);
  o.batches = e.count("batches", 50);
  o.threads = threads;
  std::vector<std::uint64_t> seeds;
  for (double s : e.numbers("seeds")) {
    if (s < 0 || s != std::floor(s) || s > 9007199254740992.0) throw ConfigError(e.field("seeds") + ": seeds must be non-negative integers");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) throw ConfigError(e.field("seeds") + ": needs at least one seed");
  const Observable obs = build_observable(sys, e.child("observable"));
  const auto rep = time_average_ergodicity_test(sys, obs, initials_of(sys, e), seeds, o);
  for (std::size_t r = 0; r < rep.runs.size(); ++r) {
    const std::string k = std::to_string(r);
    t.add({id, k, "initial", fmt(static_cast<std::uint64_t>(rep.runs[r].initial))});
    t.add({id, k, "seed", fmt(rep.runs[r].seed)});
    t.add({id, k, "average", fmt(rep.runs[r].average)});
    t.add({id, k, "standard_error", fmt(rep.runs[r].standard_error)});
  }
  t.add({id, "", "grand_mean", fmt(rep.grand_mean)});
  t.add({id, "", "spread", fmt(rep.spread)});
  t.add({id, "", "spread_std", fmt(rep.spread_std)});
  t.add({id, "", "pooled_standard_error", fmt(rep.pooled_standard_error)});
  t.add({id, "", "max_deviation", fmt(rep.max_deviation)});
  t.add({id, "", "threshold", fmt(rep.threshold)});
  t.add({id, "", "verdict", to_string(rep.verdict)});
}

void invariance(const ClosedLoopSystem& sys, const Node& e, const std::string& id, std::uint64_t seed,
                std::size_t threads, CsvTable& t) {
  e.allow_only({"id", "kind", "system", "runs", "horizon", "burn_in", "thinning", "initial", "initials", "mode"});
  SamplingPlan plan;
  plan.initials = initials_of(sys, e);
  plan.seed = seed;
  plan.runs = e.count("runs", 1);
  plan.horizon = e.count("horizon");
  plan.burn_in = e.count("burn_in", 0);
  plan.thinning = e.count("thinning", 1);
  plan.threads = threads;
  if (plan.thinning == 0) throw ConfigError(e.field("thinning") + ": must be positive");
  if (plan.burn_in > plan.horizon) throw ConfigError(e.field("burn_in") + ": exceeds horizon");
  InvarianceOptions io;
  const std::string mode = e.text("mode", "auto");
  if (mode == "enumerate") {
    io.mode = PushforwardMode::Enumerate;
  } else if (mode == "sample") {
    io.mode = PushforwardMode::Sample;
  } else if (mode != "auto") {
    throw ConfigError(e.field("mode") + ": expected auto, enumerate or sample");
  }
  io.w2.seed = seed;
  const EmpiricalMeasure mu = sample_measure(sys, plan);
  RandomStream rng(seed, plan.runs);  // after the sampling streams
  const W2Result r = invariance_residual(sys, mu, rng, io);
  t.add({id, "", "samples", fmt(static_cast<std::uint64_t>(mu.size()))});
  t.add({id, "", "w2_residual", fmt(r.distance)});
  t.add({id, "", "method", to_string(r.method)});
  t.add({id, "", "approximate", r.approximate ? "1" : "0"});
}

}  // namespace

RunOutput run_simulate(const Config& config, std::uint64_t seed, std::size_t threads) {
  const Node root(config.root, "config");
  const ClosedLoopSystem sys = build_system(root.child("system"));
  const Node s = root.child("simulate");
  s.allow_only({"horizon", "trajectories", "initial"});
  const std::size_t horizon = s.count("horizon");
  const std::size_t n = s.count("trajectories", 1);
  if (n == 0) throw ConfigError(s.field("trajectories") + ": must be positive");
  const SystemState x0 = build_state(sys, s, "initial");
  sys.validate(x0.values);

  std::vector<Trajectory> trajs(n);
  parallel_for(n, threads, [&](std::size_t t) { trajs[t] = simulate(sys, x0, horizon, RandomStream(seed, t)); });

  RunOutput out;
  std::vector<std::string> header{"k"};
  for (std::size_t i = 0; i < sys.state_dim(); ++i) header.push_back("x" + std::to_string(i));
  for (std::size_t i = 0; i < sys.signal_dim(); ++i) header.push_back("pi" + std::to_string(i));
  header.push_back("map");
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t t = 0; t < n; ++t) {
    CsvTable table(header, config.digest, seed);
    const Trajectory& tr = trajs[t];
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      std::vector<std::string> row{std::to_string(k)};
      for (double v : tr.states[k].values) row.push_back(format_double(v));
      for (std::size_t i = 0; i < sys.signal_dim(); ++i) {
        row.push_back(k < tr.signals.size() ? format_double(tr.signals[k][i]) : "");
      }
      row.push_back(k < tr.selections.size() ? to_string(tr.selections[k]) : "");
      table.add(row);
    }
    std::string idx = std::to_string(t);
    idx.insert(0, static_cast<std::size_t>(width) - idx.size(), '0');
    out.files["trajectory_" + idx + ".csv"] = table.str();
    if (tr.failure) {
      out.exit_code = kExitNumeric;
      out.messages.push_back("trajectory " + std::to_string(t) + ": numerical failure at step " +
                             std::to_string(tr.failure->step) + " in " + tr.failure->component + ": " +
                             tr.failure->message);
    }
  }
  return out;
}

RunOutput run_diagnose(const Config& config, std::uint64_t seed, std::size_t threads) {
  const Node root(config.root, "config");
  const ClosedLoopSystem base = build_system(root.child("system"));
  const Node d = root.child("diagnose");
  d.allow_only({"experiments"});
  const auto exps = d.list("experiments");
  if (exps.empty()) throw ConfigError(d.field("experiments") + ": needs at least one experiment");

  RunOutput out;
  for (const Node& e : exps) {
    const std::string id = experiment_id(e);
    const std::string name = "diag_" + id + ".csv";
    if (out.files.count(name)) throw ConfigError(e.field("id") + ": duplicate experiment id \"" + id + "\"");
    std::optional<ClosedLoopSystem> own;
    if (e.has("system")) own.emplace(build_system(e.child("system")));
    const ClosedLoopSystem& sys = own ? *own : base;
    CsvTable t({"experiment", "k", "metric", "value"}, config.digest, seed);
    const std::string kind = e.text("kind");
    if (kind == "moments") {
      moments(sys, e, id, seed, threads, t);
    } else if (kind == "coupling") {
      coupling(sys, e, id, seed, threads, t);
    } else if (kind == "ergodicity") {
      ergodicity(sys, e, id, threads, t);
    } else if (kind == "invariance") {
      invariance(sys, e, id, seed, threads, t);
    } else {
      throw ConfigError(e.field("kind") + ": unknown diagnostic \"" + kind +
                        "\" (expected moments, coupling, ergodicity or invariance)");
    }
    out.files[name] = t.str();
  }
  return out;
}

}  // namespace irfkit::harness
