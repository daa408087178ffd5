#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mdfr/errors.hpp"
#include "mdfr/mask.hpp"
#include "mdfr/readout.hpp"
#include "mdfr/reservoir.hpp"

using namespace mdfr;

namespace {

ReservoirConfig config(std::vector<int> mask, double a, double b, Nonlinearity f) {
  ReservoirConfig cfg;
  cfg.n_nodes = mask.size();
  cfg.a_coeff = a;
  cfg.b_coeff = b;
  cfg.mask = Mask(std::move(mask));
  cfg.f = f;
  return cfg;
}

} // namespace

TEST(Mask, DeterministicFromSeed) {
  EXPECT_EQ(make_mask(4, 9), make_mask(4, 9));
  const auto m = make_mask(100, 0);
  EXPECT_EQ(m.size(), 100u);
  EXPECT_EQ(m.seed(), 0u);
  for (auto v : m.values()) {
    EXPECT_TRUE(v == 1 || v == -1);
  }
}

TEST(Mask, BalancedOnLargeDraws) {
  const auto m = make_mask(10000, 7);
  const auto plus = std::count(m.values().begin(), m.values().end(), 1);
  EXPECT_GE(plus, 4500);
  EXPECT_LE(plus, 5500);
}

TEST(Mask, Errors) {
  EXPECT_THROW(make_mask(0, 1), InvalidArgument);
  EXPECT_THROW(Mask({1, 0, -1}), InvalidArgument);
  EXPECT_THROW(Mask(std::vector<int>{}), InvalidArgument);
}

TEST(Mask, Apply) {
  EXPECT_EQ(apply_mask(Mask({1, -1, 1}), 2.0), (std::vector<double>{2.0, -2.0, 2.0}));
  EXPECT_EQ(apply_mask(Mask({-1, -1}), -3.5), (std::vector<double>{3.5, 3.5}));
  for (double v : apply_mask(make_mask(8, 2), 0.0)) {
    EXPECT_EQ(std::abs(v), 0.0);
  }
}

TEST(Reservoir, StepZeroFixedPoint) {
  const auto cfg = config({1, -1, 1}, 0.3, 0.5, Nonlinearity::tanh(2.0));
  const auto s = step(ReservoirState<double>::zero(3), std::vector<double>(3, 0.0), cfg);
  EXPECT_EQ(s.nodes, std::vector<double>(3, 0.0));
  EXPECT_EQ(s.step_index, 1u);
}

TEST(Reservoir, StepHandExamples) {
  auto cfg = config({1, 1}, 1.0, 0.5, Nonlinearity::identity());
  auto s = step(ReservoirState<double>::zero(2), std::vector<double>{1.0, 1.0}, cfg);
  EXPECT_EQ(s.nodes, (std::vector<double>{1.0, 1.5}));

  cfg = config({1, -1, 1}, 0.1, 0.82, Nonlinearity::identity());
  s = step(ReservoirState<double>::zero(3), apply_mask(cfg.mask, 1.0), cfg);
  EXPECT_NEAR(s.nodes[0], 0.1, 1e-16);
  EXPECT_NEAR(s.nodes[1], -0.018, 1e-16);
  EXPECT_NEAR(s.nodes[2], 0.08524, 1e-16);
}

// Three steps of the recurrence against a 40-digit reference evaluation.
TEST(Reservoir, RunMatchesExtendedPrecisionOracle) {
  struct Case {
    Nonlinearity f;
    std::vector<double> u;
    double expect[3];
  };
  const Case cases[] = {
      {Nonlinearity::identity(), {1.0, 0.5, -0.25}, {0.0727699788224, 0.090142920234368, 0.05925625542418176}},
      {Nonlinearity::tanh(2.0),
       {1.0, 0.5, -0.25},
       {0.066786759040178605319, 0.084506416083383786268, 0.054026545993521833716}},
      {Nonlinearity::mackey_glass(1.0),
       {0.5, 0.25, -0.125},
       {-0.030949527803707812837, -0.018159054903466260703, -0.031905506667334820104}},
  };
  for (const auto& c : cases) {
    const auto cfg = config({1, -1, 1}, 0.1, 0.82, c.f);
    const auto x = run(c.u, cfg);
    ASSERT_EQ(x.cols(), 3u);
    for (int n = 0; n < 3; ++n) {
      EXPECT_NEAR(x(n, 2), c.expect[n], 1e-15) << c.f.describe() << " node " << n;
    }
  }
}

TEST(Reservoir, LegacyRunMatchesOracle) {
  const std::vector<double> u{1.0, 0.5, -0.25};
  const auto x = legacy_run(u, LegacyParams{0.05, 0.5, 0.2}, Nonlinearity::mackey_glass(1.0),
                            Mask({1, -1, 1}));
  EXPECT_NEAR(x(0, 2), 0.0026479511069455454491, 1e-17);
  EXPECT_NEAR(x(1, 2), 0.0034533186302159234486, 1e-17);
  EXPECT_NEAR(x(2, 2), 0.0020538996151332824459, 1e-17);
}

TEST(Reservoir, LegacyMappingAtThetaPointTwo) {
  const LegacyParams p{1.0, 0.5, 0.2};
  EXPECT_NEAR(p.b_coeff(), 0.81873075307798185867, 1e-15);
  EXPECT_NEAR(std::round(p.b_coeff() * 100) / 100, 0.82, 1e-15);
  EXPECT_NEAR(p.a_coeff(), 0.5 * (1 - 0.81873075307798185867), 1e-15);

  // gamma = 1 reduces to run() with the mapped coefficients
  const auto mask = make_mask(20, 3);
  std::vector<double> u(50);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& v : u) v = d(rng);
  ReservoirConfig cfg;
  cfg.n_nodes = 20;
  cfg.a_coeff = p.a_coeff();
  cfg.b_coeff = p.b_coeff();
  cfg.mask = mask;
  cfg.f = Nonlinearity::tanh(1.5);
  const auto a = run(u, cfg);
  const auto b = legacy_run(u, p, cfg.f, mask);
  for (std::size_t k = 0; k < a.cols(); ++k)
    for (std::size_t n = 0; n < a.rows(); ++n) EXPECT_EQ(a(n, k), b(n, k));
}

TEST(Reservoir, RunHandExampleWithoutFeedback) {
  const auto cfg = config({1, 1}, 1.0, 0.0, Nonlinearity::identity());
  const auto x = run(std::vector<double>{1, 2, 3}, cfg);
  ASSERT_EQ(x.cols(), 3u);
  // B = 0 drops the chain term, so each node integrates its own input.
  EXPECT_EQ(x(0, 0), 1);
  EXPECT_EQ(x(1, 0), 1);
  EXPECT_EQ(x(0, 1), 3);
  EXPECT_EQ(x(1, 1), 3);
  EXPECT_EQ(x(0, 2), 6);
  EXPECT_EQ(x(1, 2), 6);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(x(2, k), 1.0);
}

TEST(Reservoir, WashoutAndErrors) {
  const auto cfg = config({1, -1}, 0.1, 0.8, Nonlinearity::identity());
  const std::vector<double> u{1, 2, 3, 4, 5};
  EXPECT_THROW(run(u, cfg, 5), InvalidArgument);
  EXPECT_THROW(run(std::vector<double>{}, cfg), InvalidArgument);
  const auto full = run(u, cfg);
  const auto tail = run(u, cfg, 2);
  ASSERT_EQ(tail.cols(), 3u);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(tail(n, k), full(n, k + 2));
  EXPECT_THROW(step(ReservoirState<double>::zero(3), std::vector<double>{1, 1}, cfg),
               InvalidArgument);
}

TEST(Reservoir, ConfigValidation) {
  auto cfg = config({1, -1}, 0.1, 0.8, Nonlinearity::identity());
  cfg.b_coeff = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.b_coeff = 0.5;
  cfg.a_coeff = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.a_coeff = 0.1;
  cfg.n_nodes = 3;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Reservoir, ZeroInputGivesZeroStatesAndOnesRow) {
  const auto cfg = config({1, -1, -1, 1}, 0.2, 0.7, Nonlinearity::mackey_glass(7.0));
  const auto x = run(std::vector<double>(10, 0.0), cfg);
  for (std::size_t k = 0; k < x.cols(); ++k) {
    for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(x(n, k), 0.0);
    EXPECT_EQ(x(4, k), 1.0);
  }
}

TEST(Reservoir, OverflowNamesNode) {
  // A huge injection gain drives the identity reservoir past the double range.
  const auto cfg = config({1, 1, 1}, 1e300, 0.5, Nonlinearity::identity());
  try {
    run(std::vector<double>(5, 1e10), cfg);
    FAIL() << "expected NumericOverflow";
  } catch (const NumericOverflow& e) {
    EXPECT_GE(e.node(), 1u);
    EXPECT_LE(e.node(), 3u);
    EXPECT_GE(e.step(), 1u);
  }
}

TEST(Reservoir, IdentitySuperposition) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> u1(300), u2(300), sum(300), scaled(300);
  for (std::size_t k = 0; k < 300; ++k) {
    u1[k] = d(rng);
    u2[k] = d(rng);
    sum[k] = u1[k] + u2[k];
    scaled[k] = -2.5 * u1[k];
  }
  ReservoirConfig cfg;
  cfg.n_nodes = 30;
  cfg.mask = make_mask(30, 8);
  cfg.a_coeff = 0.1;
  cfg.b_coeff = 0.82;
  const auto x1 = run(u1, cfg), x2 = run(u2, cfg), xs = run(sum, cfg), xc = run(scaled, cfg);
  for (std::size_t k = 0; k < 300; ++k) {
    for (std::size_t n = 0; n < 30; ++n) {
      const double add = x1(n, k) + x2(n, k);
      EXPECT_NEAR(xs(n, k), add, 1e-9 * std::max(1.0, std::abs(add)));
      EXPECT_NEAR(xc(n, k), -2.5 * x1(n, k), 1e-9 * std::max(1.0, std::abs(x1(n, k))));
    }
  }
}

// With f = identity the error e between two runs evolves linearly:
//   e'_1 = B e_N + A e_1,  e'_n = B e'_{n-1} + A e_n.
// When A + B <= 1, |e'|_inf <= (A + B) |e|_inf, so the gap decays
// geometrically.
TEST(Reservoir, FadingMemoryContraction) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-1, 1);
  const std::size_t n_nodes = 50;
  ReservoirConfig cfg;
  cfg.n_nodes = n_nodes;
  cfg.mask = make_mask(n_nodes, 4);
  cfg.a_coeff = 0.1;
  cfg.b_coeff = 0.82;
  std::vector<double> u(200);
  for (auto& v : u) v = d(rng);
  ReservoirState<double> init{std::vector<double>(n_nodes), 0};
  for (auto& v : init.nodes) v = 5 * d(rng);
  double e0 = 0;
  for (double v : init.nodes) e0 = std::max(e0, std::abs(v));

  const auto a = run_from<double>(u, cfg, 0, ReservoirState<double>::zero(n_nodes));
  const auto b = run_from<double>(u, cfg, 0, init);
  const double rate = cfg.a_coeff + cfg.b_coeff;
  for (std::size_t k = 0; k < u.size(); ++k) {
    double diff = 0;
    for (std::size_t n = 0; n < n_nodes; ++n) diff = std::max(diff, std::abs(a(n, k) - b(n, k)));
    const double contraction = std::pow(rate, static_cast<double>(k + 1)) * e0;
    EXPECT_LE(diff, contraction * (1 + 1e-9) + 1e-14) << "step " << k + 1;
    // the looser B^k * N_x form, at the published A and B
    const double stated = std::pow(cfg.b_coeff, static_cast<double>(k + 1)) * n_nodes * e0;
    EXPECT_LE(diff, stated * (1 + 1e-9) + 1e-14) << "step " << k + 1;
  }
}

// x' = alpha x when the input gain is multiplied by alpha and f is replaced
// by alpha f(x / alpha). Long double arithmetic.
TEST(Reservoir, ScalingEquivalenceOfStates) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> d(-1, 1);
  std::uniform_real_distribution<double> la(-2, 2);
  const Nonlinearity fs[] = {Nonlinearity::identity(), Nonlinearity::tanh(1.0),
                             Nonlinearity::mackey_glass(2.0)};
  for (int trial = 0; trial < 15; ++trial) {
    const double alpha = std::pow(10.0, la(rng));
    const auto& f = fs[trial % 3];
    const auto mask = make_mask(40, 100 + trial);
    std::vector<long double> u(200);
    for (auto& v : u) v = d(rng);
    const LegacyParams base{0.3, 0.5, 0.2};
    LegacyParams scaled = base;
    scaled.gamma = alpha * base.gamma;
    const auto x = legacy_run<long double>(u, base, f, mask);
    const auto xs = legacy_run<long double>(u, scaled, scale_f(f, alpha), mask);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      for (std::size_t n = 0; n < 40; ++n) {
        const long double ref = alpha * x(n, k);
        EXPECT_LE(std::abs(xs(n, k) - ref), 1e-9L * std::abs(ref) + 1e-300L)
            << f.describe() << " alpha " << alpha;
      }
      EXPECT_EQ(xs(40, k), 1.0L);
    }
  }
}
