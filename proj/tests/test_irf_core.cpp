#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "irfkit/dynamics.hpp"
#include "irfkit/errors.hpp"
#include "irfkit/model_zoo.hpp"
#include "irfkit/random_stream.hpp"
#include "test_support.hpp"

using namespace irfkit;
using irfkit::testing::constant_law;
using irfkit::testing::ReferenceStream;
using irfkit::testing::scalar_agent;
using irfkit::testing::scalar_controller;

namespace {

// One scalar agent with outputs y = x, identity filter, controller signal r - y_hat.
ClosedLoopSystem tracking_loop(double reference) {
  AgentSpec a = scalar_agent({[](double x) { return x; }}, {[](double x) { return x; }}, constant_law({1.0}),
                             constant_law({1.0}));
  return ClosedLoopSystem({a}, zoo::make_identity_filter(1),
                          scalar_controller([](double xc, double) { return xc; },
                                            [](double, double yhat, double r) { return r - yhat; }, reference,
                                            -10.0, 10.0));
}

// Random two-agent system: softmax laws affine in the signal.
ClosedLoopSystem random_two_agent(RandomStream& rng) {
  std::vector<AgentSpec> agents;
  for (int i = 0; i < 2; ++i) {
    const std::size_t w = 1 + rng.below(3);
    const std::size_t h = 1 + rng.below(3);
    auto softmax_law = [&rng](std::size_t n) {
      std::vector<double> a(n), b(n);
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = rng.uniform(-2, 2);
        b[j] = rng.uniform(-2, 2);
      }
      return ProbabilityLaw([a, b](ConstVec s, MutVec out) {
        double z = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) z += (out[j] = std::exp(a[j] + b[j] * s[0]));
        for (double& p : out) p /= z;
      });
    };
    std::vector<std::function<double(double)>> tr(w, [](double x) { return 0.5 * x; });
    std::vector<std::function<double(double)>> out(h, [](double x) { return x; });
    agents.push_back(scalar_agent(tr, out, softmax_law(w), softmax_law(h)));
  }
  return ClosedLoopSystem(agents, zoo::make_identity_filter(1),
                          scalar_controller([](double xc, double) { return xc; },
                                            [](double xc, double, double) { return xc; }, 0.0, -1.0, 1.0));
}

}  // namespace

TEST(RandomStream, FinalizerMatchesSplitMix64Reference) {
  // First two outputs of SplitMix64 seeded with 0.
  EXPECT_EQ(splitmix64_mix(kGoldenGamma), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64_mix(2 * kGoldenGamma), 0x6E789E6AA1B965F4ULL);
}

TEST(RandomStream, MatchesStraightLineDerivation) {
  for (std::uint64_t master : {0ULL, 7ULL, 0xDEADBEEFULL}) {
    for (std::uint64_t index : {0ULL, 1ULL, 99ULL}) {
      RandomStream a(master, index);
      ReferenceStream b(master, index);
      for (int k = 0; k < 100; ++k) ASSERT_EQ(a.next_u64(), b.next());
    }
  }
}

TEST(RandomStream, UniformRangeAndDistinctSubstreams) {
  RandomStream a(1, 0), b(1, 1);
  int equal = 0;
  for (int k = 0; k < 10000; ++k) {
    const double u = a.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    if (u == b.uniform()) ++equal;
  }
  EXPECT_EQ(equal, 0);
  for (int k = 0; k < 1000; ++k) ASSERT_LT(a.below(7), 7U);
}

TEST(Signal, IdentityFilterTracksReference) {
  auto sys = tracking_loop(1.0);
  auto s = sys.make_state({{0.0}}, {}, {0.0}, {0.3});
  auto pi = signal(sys, s);
  ASSERT_EQ(pi.size(), 1U);
  EXPECT_NEAR(pi[0], 0.7, 1e-15);
}

TEST(Signal, ConstantControllerIgnoresState) {
  AgentSpec a = scalar_agent({[](double x) { return x; }}, {[](double x) { return x; }}, constant_law({1.0}),
                             constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.25}, SignalBox{{0.0}, {1.0}}, 1));
  for (double y : {-5.0, 0.0, 3.0}) {
    EXPECT_EQ(signal(sys, sys.make_state({{y}}, {}, {}, {y}))[0], 0.25);
  }
}

TEST(Signal, MaxWindowFilterMatchesStepByStepOracle) {
  AgentSpec a = scalar_agent({[](double x) { return x; }}, {[](double x) { return x; }}, constant_law({1.0}),
                             constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_max_window_filter({3, 1}),
                       scalar_controller([](double xc, double) { return xc; },
                                         [](double, double yhat, double r) { return r - yhat; }, 1.0, -10.0, 10.0));
  // Hand evaluation: max(0.2, 0.9, 0.4) = 0.9, 1 - 0.9 = 0.1.
  auto s = sys.make_state({{0.0}}, {0.2, 0.9, 0.4}, {0.0}, {0.0});
  EXPECT_NEAR(signal(sys, s)[0], 0.1, 1e-15);

  // Oracle: fill the window by stepping the filter with aggregates 0.4, 0.9, 0.2.
  auto t = sys.make_state({{0.4}}, {0.0, 0.0, 0.0}, {0.0}, {0.0});
  for (double y : {0.9, 0.2, 0.2}) {
    t = apply_composite_map(sys, MapIndex{{0}, {0}}, t);
    sys.agent_state(t.view(), 0)[0] = y;
  }
  ASSERT_EQ(std::vector<double>(sys.filter_state(t.view()).begin(), sys.filter_state(t.view()).end()),
            (std::vector<double>{0.2, 0.9, 0.4}));
  EXPECT_NEAR(signal(sys, t)[0], 0.1, 1e-15);
}

TEST(Signal, RangeViolationAndClamping) {
  auto sys = tracking_loop(1.0);
  EXPECT_THROW((void)signal(sys, sys.make_state({{0.0}}, {}, {0.0}, {-20.0})), SignalRangeError);
  // Within 1e-9 of the edge: clamped, not rejected.
  auto pi = signal(sys, sys.make_state({{0.0}}, {}, {0.0}, {1.0 - 10.0 - 5e-10}));
  EXPECT_EQ(pi[0], 10.0);
}

TEST(Signal, NonFiniteIsNumericalError) {
  AgentSpec a = scalar_agent({[](double x) { return x; }}, {[](double x) { return x; }}, constant_law({1.0}),
                             constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       scalar_controller([](double xc, double) { return xc; },
                                         [](double, double yhat, double) { return std::log(yhat); }, 0.0, -1e9, 1e9));
  EXPECT_THROW((void)signal(sys, sys.make_state({{1.0}}, {}, {0.0}, {-1.0})), NumericalError);
}

TEST(SampleMapIndex, DegenerateLaw) {
  AgentSpec a = scalar_agent({[](double x) { return x; }, [](double x) { return -x; }}, {[](double x) { return x; }},
                             constant_law({1.0, 0.0}), constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  RandomStream rng(3, 0);
  for (int k = 0; k < 1000; ++k) {
    EXPECT_EQ(sample_map_index(sys, std::vector<double>{0.0}, rng), (MapIndex{{0}, {0}}));
  }
}

TEST(SampleMapIndex, BernoulliFrequency) {
  AgentSpec a = scalar_agent({[](double x) { return x; }, [](double x) { return -x; }}, {[](double x) { return x; }},
                             constant_law({0.3, 0.7}), constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  RandomStream rng(11, 0);
  const int n = 100000;
  int first = 0;
  for (int k = 0; k < n; ++k) first += sample_map_index(sys, std::vector<double>{0.0}, rng).transition[0] == 0;
  EXPECT_NEAR(first / double(n), 0.3, 0.01);
}

TEST(SampleMapIndex, ProductLawChiSquare) {
  std::vector<AgentSpec> agents(
      2, scalar_agent({[](double x) { return x; }, [](double x) { return -x; }}, {[](double x) { return x; }},
                      constant_law({0.5, 0.5}), constant_law({1.0})));
  ClosedLoopSystem sys(agents, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  RandomStream rng(5, 2);
  const int n = 100000;
  std::map<MapIndex, int> counts;
  for (int k = 0; k < n; ++k) ++counts[sample_map_index(sys, std::vector<double>{0.0}, rng)];
  ASSERT_EQ(counts.size(), 4U);
  double chi2 = 0.0;
  for (const auto& [m, c] : counts) {
    EXPECT_NEAR(c / double(n), 0.25, 0.01) << to_string(m);
    chi2 += (c - 0.25 * n) * (c - 0.25 * n) / (0.25 * n);
  }
  // 3 degrees of freedom; 16.27 is the 0.999 quantile.
  EXPECT_LT(chi2, 16.27);
}

TEST(SampleMapIndex, EmpiricalJointMatchesSelectionProbability) {
  RandomStream build(21, 0);
  auto sys = random_two_agent(build);
  const std::vector<double> pi{0.3};
  RandomStream rng(21, 1);
  const int n = 100000;
  std::map<MapIndex, int> counts;
  for (int k = 0; k < n; ++k) ++counts[sample_map_index(sys, pi, rng)];
  for (const auto& m : enumerate_map_indices(sys)) {
    const double q = selection_probability(sys, m, pi);
    const double se = std::sqrt(q * (1 - q) / n);
    EXPECT_NEAR(counts[m] / double(n), q, 3 * se + 1e-12) << to_string(m);
  }
}

TEST(SampleMapIndex, OffSimplexLawRaises) {
  // Bad only strictly inside (0.2, 0.4), which the construction grid {0, 0.5, 1} misses.
  AgentSpec a = scalar_agent({[](double x) { return x; }, [](double x) { return -x; }}, {[](double x) { return x; }},
                             ProbabilityLaw([](ConstVec s, MutVec p) {
                               p[0] = 0.5;
                               p[1] = (s[0] > 0.2 && s[0] < 0.4) ? 0.6 : 0.5;
                             }),
                             constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {1.0}}, 1));
  RandomStream rng(1, 0);
  EXPECT_NO_THROW((void)sample_map_index(sys, std::vector<double>{0.5}, rng));
  EXPECT_THROW((void)sample_map_index(sys, std::vector<double>{0.3}, rng), ProbabilityLawError);
  EXPECT_THROW(sys.check_probability_laws(11), ProbabilityLawError);
}

TEST(SampleMapIndex, FixedDrawCountPerAgent) {
  // Two uniforms per agent per step, whatever the laws are.
  RandomStream build(2, 0);
  auto sys = random_two_agent(build);
  RandomStream rng(9, 0), ref(9, 0);
  for (int k = 0; k < 50; ++k) {
    (void)sample_map_index(sys, std::vector<double>{0.1}, rng);
    for (int d = 0; d < 4; ++d) ref.uniform();
    ASSERT_EQ(rng.next_u64(), ref.next_u64());
  }
}

TEST(SelectionProbability, Examples) {
  AgentSpec a = scalar_agent({[](double x) { return x; }, [](double x) { return -x; }}, {[](double x) { return x; }},
                             constant_law({0.3, 0.7}), constant_law({1.0}));
  ClosedLoopSystem one({a}, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  EXPECT_DOUBLE_EQ(selection_probability(one, MapIndex{{1}, {0}}, std::vector<double>{0.0}), 0.7);

  std::vector<AgentSpec> halves(
      2, scalar_agent({[](double x) { return x; }, [](double x) { return -x; }}, {[](double x) { return x; }},
                      constant_law({0.5, 0.5}), constant_law({1.0})));
  ClosedLoopSystem two(halves, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  for (const auto& m : enumerate_map_indices(two)) {
    EXPECT_EQ(selection_probability(two, m, std::vector<double>{0.0}), 0.25);
  }
}

TEST(SelectionProbability, NormalizesAndFactorizes) {
  RandomStream rng(77, 0);
  for (int trial = 0; trial < 10; ++trial) {
    auto sys = random_two_agent(rng);
    const std::vector<double> pi{rng.uniform(-1, 1)};
    double total = 0.0;
    for (const auto& m : enumerate_map_indices(sys)) {
      const double q = selection_probability(sys, m, pi);
      total += q;
      // Product of independently evaluated marginals, same multiplication order.
      double tp = 1.0, op = 1.0;
      for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> p(sys.agent(i).transition_maps.size());
        sys.agent(i).transition_probs(pi, p);
        tp *= p[m.transition[i]];
      }
      for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> p(sys.agent(i).output_maps.size());
        sys.agent(i).output_probs(pi, p);
        op *= p[m.output[i]];
      }
      EXPECT_EQ(q, tp * op);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(EnumerateMapIndices, SizesOrderAndCap) {
  auto make = [](std::vector<std::size_t> w, std::vector<std::size_t> h) {
    std::vector<AgentSpec> agents;
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::vector<std::function<double(double)>> tr(w[i], [](double x) { return x; });
      std::vector<std::function<double(double)>> out(h[i], [](double x) { return x; });
      agents.push_back(scalar_agent(tr, out, constant_law(std::vector<double>(w[i], 1.0 / w[i])),
                                    constant_law(std::vector<double>(h[i], 1.0 / h[i]))));
    }
    return ClosedLoopSystem(agents, zoo::make_identity_filter(1),
                            zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  };
  EXPECT_EQ(enumerate_map_indices(make({2}, {1})).size(), 2U);
  EXPECT_EQ(enumerate_map_indices(make({1}, {1})).size(), 1U);
  auto sys = make({2, 3}, {1, 2});
  EXPECT_EQ(sys.index_set_size(), 12U);
  auto all = enumerate_map_indices(sys);
  ASSERT_EQ(all.size(), 12U);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end()));
  EXPECT_EQ(std::set<MapIndex>(all.begin(), all.end()).size(), 12U);
  EXPECT_EQ(all.front(), (MapIndex{{0, 0}, {0, 0}}));
  EXPECT_EQ(all.back(), (MapIndex{{1, 2}, {0, 1}}));
  EXPECT_THROW((void)enumerate_map_indices(sys, 11), EnumerationCapError);

  auto fleet = zoo::make_phev_fleet({});
  EXPECT_EQ(fleet.index_set_size(), std::numeric_limits<std::uint64_t>::max());
  EXPECT_THROW((void)enumerate_map_indices(fleet), EnumerationCapError);
}

TEST(ApplyCompositeMap, Examples) {
  AgentSpec a = scalar_agent({[](double x) { return 0.5 * x; }}, {[](double x) { return x; }}, constant_law({1.0}),
                             constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       scalar_controller([](double xc, double) { return xc; },
                                         [](double xc, double, double) { return xc; }, 0.0, -1.0, 1.0));
  auto next = apply_composite_map(sys, MapIndex{{0}, {0}}, sys.make_state({{2.0}}, {}, {0.0}, {0.7}));
  EXPECT_EQ(next.values, (std::vector<double>{1.0, 0.0, 2.0}));

  // Two agents with y_i = x_i: aggregate 3 reaches the filter.
  std::vector<AgentSpec> two(2, scalar_agent({[](double x) { return x; }}, {[](double x) { return x; }},
                                             constant_law({1.0}), constant_law({1.0})));
  ClosedLoopSystem agg(two, zoo::make_linear_filter(0.0, 1.0),
                       scalar_controller([](double, double yhat) { return yhat; },
                                         [](double, double, double) { return 0.0; }, 0.0, -1.0, 1.0));
  auto s = apply_composite_map(agg, MapIndex{{0, 0}, {0, 0}}, agg.make_state({{1.0}, {2.0}}, {0.0}, {0.0}, {0.0}));
  EXPECT_EQ(agg.filter_state(s.view())[0], 3.0);
  EXPECT_EQ(agg.buffered_output(s.view())[0], 3.0);

  auto affine = zoo::make_affine_ifs_benchmark({0.5}, {1.0}, {1.0});
  EXPECT_EQ(apply_composite_map(affine, MapIndex{{0}, {0}}, SystemState{{2.0}}).values[0], 2.0);
}

TEST(ApplyCompositeMap, NonFiniteNamesComponent) {
  AgentSpec a = scalar_agent({[](double x) { return x * 1e300; }}, {[](double x) { return x; }}, constant_law({1.0}),
                             constant_law({1.0}));
  ClosedLoopSystem sys({a}, zoo::make_identity_filter(1),
                       zoo::make_constant_controller({0.0}, SignalBox{{0.0}, {0.0}}, 1));
  try {
    (void)apply_composite_map(sys, MapIndex{{0}, {0}}, sys.make_state({{1e10}}, {}, {}, {0.0}));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.component(), "agent 0 transition");
  }
}

TEST(Step, DeterministicAndForcedConsistency) {
  auto sys = zoo::make_twomap1d();
  SystemState x0{{0.0}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RandomStream a(seed, 0), b(seed, 0);
    auto r1 = step(sys, x0, a);
    auto r2 = step(sys, x0, b);
    EXPECT_EQ(r1.next, r2.next);
    EXPECT_EQ(r1.index, r2.index);
    EXPECT_EQ(r1.signal, r2.signal);
    EXPECT_TRUE(r1.next.values[0] == 0.0 || r1.next.values[0] == 1.0);
    EXPECT_EQ(r1.next, apply_composite_map(sys, r1.index, x0));
  }
  // Degenerate laws: step equals the unique composite map.
  auto det = irfkit::testing::deterministic_scalar([](double x) { return 0.25 * x + 3; });
  RandomStream rng(1, 1);
  SystemState s{{4.0}};
  EXPECT_EQ(step(det, s, rng).next, apply_composite_map(det, MapIndex{{0}, {0}}, s));
}

TEST(Simulate, HorizonZeroAndGeometricDecay) {
  auto sys = irfkit::testing::deterministic_scalar([](double x) { return 0.5 * x; });
  auto t0 = simulate(sys, SystemState{{8.0}}, 0, RandomStream(1, 0));
  EXPECT_EQ(t0.states.size(), 1U);
  EXPECT_EQ(t0.signals.size(), 1U);
  EXPECT_TRUE(t0.selections.empty());
  auto t = simulate(sys, SystemState{{8.0}}, 3, RandomStream(1, 0));
  ASSERT_EQ(t.states.size(), 4U);
  EXPECT_EQ(t.signals.size(), 4U);
  EXPECT_EQ(t.selections.size(), 3U);
  std::vector<double> xs;
  for (const auto& s : t.states) xs.push_back(s.values[0]);
  EXPECT_EQ(xs, (std::vector<double>{8, 4, 2, 1}));
}

TEST(Simulate, TwoMapMatchesStraightLineRecursion) {
  auto sys = zoo::make_twomap1d();
  for (std::uint64_t seed : {0ULL, 7ULL, 12345ULL}) {
    auto traj = simulate(sys, SystemState{{0.0}}, 20, RandomStream(seed, 4));
    EXPECT_EQ(traj.seed, seed);
    EXPECT_EQ(traj.stream_index, 4U);
    ReferenceStream ref(seed, 4);
    double x = 0.0;
    for (std::size_t k = 1; k <= 20; ++k) {
      const double u_transition = ref.uniform();
      ref.uniform();  // output draw
      x = x / 2 + (u_transition < 0.5 ? 0.0 : 1.0);
      ASSERT_EQ(traj.states[k].values[0], x) << "k=" << k;
    }
    // Replay is bit-exact.
    auto again = simulate(sys, SystemState{{0.0}}, 20, RandomStream(seed, 4));
    EXPECT_EQ(again.states, traj.states);
    EXPECT_EQ(again.selections, traj.selections);
  }
}

TEST(Simulate, NumericalErrorReturnsPrefix) {
  auto sys = irfkit::testing::deterministic_scalar([](double x) { return x * 1e200; });
  auto t = simulate(sys, SystemState{{1.0}}, 10, RandomStream(0, 0));
  ASSERT_TRUE(t.failure.has_value());
  EXPECT_EQ(t.failure->step, 1U);
  EXPECT_EQ(t.states.size(), 2U);
  EXPECT_EQ(t.signals.size(), t.states.size());
  EXPECT_EQ(t.selections.size() + 1, t.states.size());
}

TEST(ClosedLoopSystem, LayoutAndValidation) {
  auto fleet = zoo::make_phev_fleet({});
  EXPECT_EQ(fleet.state_dim(), 100U + 5U + 1U + 1U);
  EXPECT_EQ(fleet.layout().filter_offset, 100U);
  EXPECT_EQ(fleet.layout().controller_offset, 105U);
  EXPECT_EQ(fleet.layout().output_offset, 106U);
  EXPECT_THROW(fleet.validate(std::vector<double>(3, 0.0)), DimensionError);
  auto s = fleet.zero_state();
  s.values[4] = std::nan("");
  EXPECT_THROW(fleet.validate(s.values), NumericalError);
  EXPECT_THROW((void)fleet.make_state({{0.0}}, {}, {}, {}), DimensionError);
}

TEST(ClosedLoopSystem, ProbabilityNormalizationOnHundredPointGrid) {
  zoo::FleetParams p;
  p.agents = 3;
  auto fleet = zoo::make_phev_fleet(p);
  EXPECT_NO_THROW(fleet.check_probability_laws(100));
  p.substeps = 4;
  EXPECT_NO_THROW(zoo::make_phev_fleet(p).check_probability_laws(100));
  EXPECT_NO_THROW(zoo::make_twomap1d().check_probability_laws(100));
}
