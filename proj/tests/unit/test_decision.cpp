#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mcr/decision.hpp"

using namespace mcr;
using mcr::testing::max_abs_diff;
using mcr::testing::random_vec;
using mcr::testing::vec;

namespace {

// Replays a fixed list of forecasts; records nothing else.
class ScriptedForecasts final : public ForecastEngine {
 public:
  ScriptedForecasts(ConvexBody L, std::vector<Distribution> script) : L_(std::move(L)), script_(std::move(script)) {}
  const ConvexBody& body() const override { return L_; }
  const Distribution& predict(const Context&) override { return script_[next_++]; }
  void observe(const Vec&) override {}
  const Transcript& transcript() const override { return empty_; }
  const Transcript& finish() override { return empty_; }

 private:
  ConvexBody L_;
  std::vector<Distribution> script_;
  std::size_t next_ = 0;
  Transcript empty_;
};

DecisionTranscript run_decisions(PhiDecisionMaker& dm, const std::vector<Vec>& losses) {
  for (const Vec& l : losses) {
    dm.decide(Context());
    dm.observe(l);
  }
  return dm.transcript();
}

std::vector<Vec> random_losses(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) out.push_back(random_vec(rng, d, 0.0, 1.0));
  return out;
}

}  // namespace

TEST_CASE("best response examples") {
  CHECK(max_abs_diff(best_response(vec({3, 1, 2}), ConvexBody::simplex(3)), vec({0, 1, 0})) == 0.0);
  CHECK(max_abs_diff(best_response(vec({1, 1, 2}), ConvexBody::simplex(3)), vec({1, 0, 0})) == 0.0);
  CHECK(max_abs_diff(best_response(vec({1, -2}), ConvexBody::box(vec({0, 0}), vec({1, 1}))), vec({0, 1})) == 0.0);
  BestResponseCache cache(ConvexBody::simplex(3));
  cache(vec({0.3, 0.1, 0.2}));
  cache(vec({0.3, 0.1, 0.2}));
  CHECK(cache.hits() == 1);
}

TEST_CASE("phi test examples") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({-1, -1, -1}), vec({1, 1, 1}));
  const Vec p = vec({3, 1, 2});
  CHECK(phi_test(Deviation::identity(3), Z, L)(Context(), p).norm() == 0.0);
  const Vec z = vec({0.2, 0.3, 0.5});
  CHECK(max_abs_diff(phi_test(Deviation::constant(z), Z, L)(Context(), p), vec({0, 1, 0}) - z) == 0.0);
  CHECK(max_abs_diff(phi_test(Deviation::finite_swap({1, 0, 2}), Z, L)(Context(), p), vec({-1, 1, 0})) == 0.0);
}

TEST_CASE("rock-paper-scissors hand run") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({-1, -1, -1}), vec({1, 1, 1}));
  ScriptedForecasts script(L, {Distribution::point_mass(vec({0, 0, 0})),
                               Distribution({{vec({1, 0, -1}), 0.5}, {vec({0, -1, 1}), 0.5}}),
                               Distribution::point_mass(vec({-1, 1, 0}))});
  PhiDecisionMaker dm(script, Z);
  // Opponent plays paper, rock, scissors.
  const DecisionTranscript tr = run_decisions(dm, {vec({1, 0, -1}), vec({0, -1, 1}), vec({-1, 1, 0})});
  CHECK(max_abs_diff(tr.rounds[0].mixed.mean(), vec({1, 0, 0})) == 0.0);
  CHECK(max_abs_diff(tr.rounds[1].mixed.mean(), vec({0, 0.5, 0.5})) == 0.0);
  CHECK(max_abs_diff(tr.rounds[2].mixed.mean(), vec({1, 0, 0})) == 0.0);
  CHECK(external_regret(tr) == doctest::Approx(0.0));
  CHECK(phi_regret(tr, Deviation::constant(vec({0, 1, 0}))).regret == doctest::Approx(0.0));
  CHECK(phi_regret(tr, Deviation::finite_swap({1, 1, 2})).regret == doctest::Approx(-1.0));
  CHECK(swap_regret(tr) == doctest::Approx(2.0));
  CHECK(phi_regret(tr, Deviation::finite_swap({2, 1, 1})).regret == doctest::Approx(2.0));
  const PhiRegret pr = phi_regret(tr, Deviation::finite_swap({2, 1, 1}));
  CHECK(pr.regret == doctest::Approx(pr.mc_error + pr.slack).epsilon(1e-14));
  CHECK(pr.max_slack <= 1e-12);
}

TEST_CASE("pushforward of point masses and the identity ledger") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({0, 0, 0}), vec({1, 1, 1}));
  auto engine = finite_phi_forecaster(pairwise_swaps(3), Z, L, 20);
  PhiDecisionMaker dm(*engine, Z);
  const auto losses = random_losses(20, 3, 4);
  for (const Vec& l : losses) {
    const Distribution& mu = dm.decide(Context());
    const DecisionRound& r = dm.transcript().rounds.back();
    REQUIRE(mu.size() == r.forecast.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      CHECK(mu.atoms()[i].weight == r.forecast.atoms()[i].weight);
      CHECK(max_abs_diff(mu.atoms()[i].point, Z.linopt(r.forecast.atoms()[i].point)) == 0.0);
    }
    dm.observe(l);
  }
  const PhiRegret id = phi_regret(dm.transcript(), Deviation::identity(3));
  CHECK(id.regret == 0.0);
  CHECK(phi_ledger(dm.transcript(), pairwise_swaps(3)).passed());
  CHECK_THROWS_AS(dm.observe(losses[0]), ProtocolError);
}

TEST_CASE("single round point mass regret") {
  const ConvexBody Z = ConvexBody::simplex(2);
  const ConvexBody L = ConvexBody::box(vec({0, 0}), vec({1, 1}));
  ScriptedForecasts script(L, {Distribution::point_mass(vec({0.2, 0.7}))});
  PhiDecisionMaker dm(script, Z);
  const auto tr = run_decisions(dm, {vec({0.9, 0.1})});
  const Deviation phi = Deviation::finite_swap({1, 1});
  // σ = e0, φ(σ) = e1: ℓᵀ(e0 − e1) = 0.8.
  CHECK(phi_regret(tr, phi).regret == doctest::Approx(0.8));
}

TEST_CASE("maximum over all vertex maps equals swap regret") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({0, 0, 0}), vec({1, 1, 1}));
  const auto maps = all_vertex_swaps(3);
  CHECK(maps.size() == 27);
  auto engine = finite_phi_forecaster(maps, Z, L, 10);
  PhiDecisionMaker dm(*engine, Z);
  const auto tr = run_decisions(dm, random_losses(10, 3, 12));
  double best = -INFINITY;
  for (const Deviation& phi : maps) best = std::max(best, phi_regret(tr, phi).regret);
  CHECK(best == doctest::Approx(swap_regret(tr)).epsilon(1e-12));
  CHECK(phi_ledger(tr, maps).passed());
}

TEST_CASE("folded round operator matches the weighted member sum") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({-1, -1, -1}), vec({1, 1, 1}));
  std::vector<Deviation> devs = all_vertex_swaps(3);
  devs.push_back(Deviation::constant(vec({0.2, 0.3, 0.5})));
  devs.push_back(Deviation::linear(Mat::Identity(3, 3) * 0.5, vec({0.1, 0.2, 0.2})));
  auto engine = finite_phi_forecaster(devs, Z, L, 10);
  const ParamFamily& fam = engine->family();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Vec w = random_vec(rng, fam.param_dim(), 0.0, 1.0);
    w /= w.sum();
    if (trial % 5 == 0) w[trial % fam.param_dim()] = 0.0;
    const auto op = fam.bind(w, Context());
    for (int k = 0; k < 10; ++k) {
      const Vec p = ConvexBody::box(vec({-1, -1, -1}), vec({1, 1, 1})).project(random_vec(rng, 3));
      CHECK(max_abs_diff(op(p), fam.eval(w, Context(), p)) <= 1e-12);
    }
  }
}

TEST_CASE("constant deviations recover external regret") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({0, 0, 0}), vec({1, 1, 1}));
  auto engine = finite_phi_forecaster(pairwise_swaps(3), Z, L, 15);
  PhiDecisionMaker dm(*engine, Z);
  const auto losses = random_losses(15, 3, 2);
  const auto tr = run_decisions(dm, losses);
  const Vec z = vec({0.1, 0.6, 0.3});
  double direct = 0.0;
  for (const auto& r : tr.rounds) direct += r.loss->dot(r.mixed.mean()) - r.loss->dot(z);
  CHECK(phi_regret(tr, Deviation::constant(z)).regret == doctest::Approx(direct).epsilon(1e-13));
  double best = INFINITY;
  for (int i = 0; i < 3; ++i) best = std::min(best, -phi_regret(tr, Deviation::constant(Vec::Unit(3, i))).regret);
  CHECK(external_regret(tr) == doctest::Approx(-best).epsilon(1e-12));
}

TEST_CASE("sampled linear maps are endomorphisms") {
  for (const ConvexBody& Z : {ConvexBody::simplex(3), ConvexBody::box(vec({0, 0, 0}), vec({1, 2, 1})),
                              ConvexBody::box(vec({-1, 0}), vec({1, 1})),
                              ConvexBody::polytope({vec({0, 0}), vec({1, 0}), vec({0, 1}), vec({1, 1.5})})}) {
    for (bool affine : {false, true}) {
      const auto devs = sample_linear_endomorphisms(Z, 10, 3, affine);
      CHECK(devs.size() >= 5);
      for (const Deviation& phi : devs) CHECK(is_endomorphic(phi, Z, {}));
    }
  }
  const ConvexBody ball = ConvexBody::ball(vec({0, 0}), 2.0);
  std::mt19937_64 rng(1);
  for (const Deviation& phi : sample_linear_endomorphisms(ball, 10, 5)) {
    CHECK(phi.spectral <= 1.0 + 1e-12);
    for (int i = 0; i < 50; ++i) CHECK(ball.contains(phi(Context(), ball.sample(rng))));
  }
  const ConvexBody shifted = ConvexBody::ball(vec({1, 1}), 1.0);
  CHECK_THROWS_AS(sample_linear_endomorphisms(shifted, 1, 5, false), ContractError);
  for (const Deviation& phi : sample_linear_endomorphisms(shifted, 10, 5, true))
    for (int i = 0; i < 50; ++i) CHECK(shifted.contains(phi(Context(), shifted.sample(rng))));
}

TEST_CASE("scalar linear swap engine on the unit interval") {
  const ConvexBody Z = ConvexBody::box(vec({0}), vec({1}));
  const ConvexBody L = ConvexBody::box(vec({-1}), vec({1}));
  LinearSwapConfig cfg;
  cfg.affine = true;
  cfg.horizon = 60;
  LinearSwapEngine e = linear_swap_engine(Z, L, cfg);
  CHECK(e.rho == doctest::Approx(1 + 1 + 2));
  PhiDecisionMaker dm(*e.forecaster, Z);
  std::mt19937_64 rng(8);
  std::vector<Vec> losses;
  for (int i = 0; i < 60; ++i) losses.push_back(random_vec(rng, 1, -1, 1));
  const auto tr = run_decisions(dm, losses);
  std::vector<Deviation> devs = sample_linear_endomorphisms(Z, 20, 4, true);
  devs.push_back(Deviation::identity(1));
  for (const Deviation& phi : devs) {
    const double a = phi.matrix(0, 0), b = phi.offset[0];
    CHECK(b >= -1e-12);
    CHECK(a + b <= 1 + 1e-12);
  }
  CHECK(phi_ledger(tr, devs).passed());
  CHECK(phi_regret(tr, Deviation::identity(1)).regret == 0.0);
  const auto grid = comparator_grid(*e.family, L, e.rho, 10, 1);
  CHECK(online_reduction_ledger(e.forecaster->transcript(), *e.family, grid).passed());
}

TEST_CASE("phi kernel construction") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const MatrixKernel zero = MatrixKernel::custom("zero", 3, 0.0, [](const Context&, const Vec&, const Context&, const Vec&) {
    return Mat(Mat::Zero(3, 3));
  });
  const MatrixKernel lin = rkhs_phi_kernel(zero, Z);
  const Vec p = vec({0.5, 0.1, 0.9}), q = vec({0.2, 0.3, 0.1});
  const Mat expect = Vec::Unit(3, 1) * Vec::Unit(3, 2).transpose();
  CHECK((lin(Context(), p, Context(), q) - expect).norm() == 0.0);

  const MatrixKernel g = rkhs_phi_kernel(MatrixKernel::gaussian(3, 0.7), Z);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec a = random_vec(rng, 3), b = random_vec(rng, 3);
    CHECK((g(Context(), a, Context(), b) - g(Context(), b, Context(), a).transpose()).norm() <= 1e-15);
  }
}

TEST_CASE("kernel deviations against the kernel forecaster") {
  const ConvexBody Z = ConvexBody::simplex(3);
  const ConvexBody L = ConvexBody::box(vec({0, 0, 0}), vec({1, 1, 1}));
  const MatrixKernel base = MatrixKernel::gaussian(3, 0.5);
  const MatrixKernel dev_kernel = MatrixKernel::sum({constant_kernel(3), base});
  const MatrixKernel gp = rkhs_phi_kernel(dev_kernel, Z);
  K29Forecaster k29(L, gp, {});
  PhiDecisionMaker dm(k29, Z);
  const auto tr = run_decisions(dm, random_losses(10, 3, 21));

  std::vector<std::pair<Context, Vec>> probes;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) probes.emplace_back(Context(), Z.sample(rng));
  const auto devs = sample_kernel_deviations(base, Z, 20, 4, 7, probes);
  CHECK(devs.size() == 20);
  for (const Deviation& phi : devs) {
    const PhiRegret pr = phi_regret(tr, phi);
    CHECK(pr.regret <= pr.mc_error + 1e-9 * 10);
    CHECK(pr.max_slack <= 1e-9);
  }
  CHECK(kernel_phi_ledger(k29.transcript(), gp, devs, Z, L).passed());
}
