#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mcr/forecaster.hpp"
#include "mcr/rng.hpp"

using namespace mcr;
using mcr::testing::max_abs_diff;
using mcr::testing::random_vec;
using mcr::testing::vec;

namespace {

// Outcomes from a fixed list, contexts empty; never looks at the forecast.
class ListNature final : public Nature {
 public:
  explicit ListNature(std::vector<Vec> ys, std::vector<Context> xs = {}) : ys_(std::move(ys)), xs_(std::move(xs)) {}
  Context context(int t) override { return xs_.empty() ? Context() : xs_[static_cast<std::size_t>(t - 1)]; }
  Vec outcome(int t, const Context&, const Distribution&) override { return ys_[static_cast<std::size_t>(t - 1)]; }
  bool adaptive() const override { return false; }

 private:
  std::vector<Vec> ys_;
  std::vector<Context> xs_;
};

// Plays the forecast mean.
class MeanNature final : public Nature {
 public:
  Context context(int) override { return Context(); }
  Vec outcome(int, const Context&, const Distribution& d) override { return d.mean(); }
  bool adaptive() const override { return true; }
};

std::vector<Vec> random_simplex_points(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ConvexBody s = ConvexBody::simplex(d);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) out.push_back(s.sample(rng));
  return out;
}

std::shared_ptr<FiniteFamily> two_tables(const ConvexBody& body, std::uint64_t seed) {
  std::vector<TestFunction> members;
  for (int i = 0; i < 2; ++i) {
    members.push_back(table_test("table" + std::to_string(i), random_table(1, 3, body.dim(), -1.0, 1.0, seed + i), body));
  }
  return std::make_shared<FiniteFamily>(std::move(members), body.dim());
}

}  // namespace

TEST_CASE("first FTRL round has a zero operator and zero gap") {
  const ConvexBody body = ConvexBody::simplex(3);
  auto family = std::make_shared<LinearFamily>(identity_features(3));
  Forecaster f(body, family, std::make_unique<FtrlBall>(3, 1.0, 0.1), {});
  const Distribution& d = f.predict(Context());
  CHECK(d.size() == 1);
  CHECK(f.transcript().rounds[0].params.norm() == 0.0);
  CHECK(f.transcript().rounds[0].eps_realized <= 1e-15);
  CHECK(f.transcript().rounds[0].eps_realized >= -1e-15);
}

TEST_CASE("outcome equal to the forecast mean cancels constant features") {
  const ConvexBody body = ConvexBody::box(vec({0, 0}), vec({1, 1}));
  auto family = std::make_shared<LinearFamily>(identity_features(2));
  Forecaster f(body, family, std::make_unique<FtrlBall>(2, 1.0, 0.5), {});
  std::mt19937_64 rng(3);
  // Push the learner off zero first so the forecasts are nontrivial.
  f.predict(Context());
  f.observe(vec({1, 0}));
  MeanNature nature;
  for (int t = 2; t <= 6; ++t) {
    const Distribution& d = f.predict(Context());
    const Vec y = nature.outcome(t, Context(), d);
    CHECK(family->loss_gradient(Context(), d, y).norm() <= 1e-12);
    f.observe(y);
  }
}

TEST_CASE("three-round finite-family run against an independent replay") {
  const ConvexBody body = ConvexBody::simplex(2);
  auto family = two_tables(body, 41);
  const double eta = 0.7;
  Forecaster f(body, family, std::make_unique<Hedge>(2, eta), {});
  ListNature nature({vec({1, 0}), vec({0, 1}), vec({0.25, 0.75})});
  const Transcript& tr = run_protocol(f, nature, 3);
  REQUIRE(tr.horizon() == 3);

  // Replay from the raw records only.
  const auto& h = family->members();
  Vec cum = Vec::Zero(2);
  double incurred = 0.0, evi = 0.0;
  Vec mc = Vec::Zero(2);
  for (const ForecastRound& r : tr.rounds) {
    // Hedge weights from the cumulative losses so far.
    Vec w(2);
    for (int i = 0; i < 2; ++i) w[i] = std::exp(-eta * cum[i]);
    w /= w.sum();
    CHECK(max_abs_diff(w, r.params) <= 1e-12);
    const Vec& y = *r.y;
    Vec corr = Vec::Zero(2);
    for (const Atom& a : r.dist.atoms()) {
      for (int i = 0; i < 2; ++i) corr[i] += a.weight * h[i].eval(r.x, a.point).dot(y - a.point);
    }
    // h_t is the w-mixture, so its correlation is w·corr.
    incurred += w.dot(corr);
    mc += corr;
    cum -= corr;
    evi += r.eps_realized;
    CHECK(r.eps_realized <= r.eps_target);
  }
  for (int i = 0; i < 2; ++i) {
    const double regret_i = -incurred + mc[i];
    CHECK(mc_error(tr, h[i]).total == doctest::Approx(mc[i]).epsilon(1e-12));
    CHECK(regret(tr, *family, h[i]) == doctest::Approx(regret_i).epsilon(1e-12));
    CHECK(mc[i] <= regret_i + evi + 1e-8 * 3);
  }
  CHECK(evi_total(tr) == doctest::Approx(evi));
  const LedgerReport rep = online_reduction_ledger(tr, *family, comparator_grid(*family, body, 1.0, 0, 0));
  CHECK(rep.passed());
  CHECK(rep.rows.size() == 3);
}

TEST_CASE("mc_error examples") {
  const ConvexBody body = ConvexBody::box(vec({0}), vec({1}));
  Transcript tr;
  tr.body = body;
  // Round 1: D = 0.5·δ(0.2) + 0.5·δ(0.6), y = 1. Round 2: D = δ(0.9), y = 0.
  ForecastRound r1;
  r1.t = 1;
  r1.dist = Distribution({{vec({0.2}), 0.5}, {vec({0.6}), 0.5}});
  r1.y = vec({1.0});
  ForecastRound r2;
  r2.t = 2;
  r2.dist = Distribution::point_mass(vec({0.9}));
  r2.y = vec({0.0});
  tr.rounds = {r1, r2};

  TestFunction h;
  h.name = "p";
  h.eval = [](const Context&, const Vec& p) { return p; };
  // 0.5·0.2·0.8 + 0.5·0.6·0.4 + 0.9·(-0.9) = 0.08 + 0.12 - 0.81.
  const Series s = mc_error(tr, h);
  CHECK(s.total == doctest::Approx(-0.61).epsilon(1e-14));
  CHECK(s.per_round[0] == doctest::Approx(0.20));
  CHECK(s.per_round[1] == doctest::Approx(-0.81));
  CHECK(mc_error(tr, zero_test(1)).total == 0.0);

  Transcript exact = tr;
  for (ForecastRound& r : exact.rounds) r.dist = Distribution::point_mass(*r.y);
  CHECK(mc_error(exact, h).total == 0.0);

  tr.rounds[1].y.reset();
  CHECK_THROWS_AS(mc_error(tr, h), ProtocolError);
}

TEST_CASE("protocol order and outcome checks") {
  const ConvexBody body = ConvexBody::simplex(2);
  Forecaster f(body, std::make_shared<LinearFamily>(identity_features(2)), std::make_unique<FtrlBall>(2, 1, 1), {});
  CHECK_THROWS_AS(f.observe(vec({1, 0})), ProtocolError);
  f.predict(Context());
  CHECK_THROWS_AS(f.predict(Context()), ProtocolError);
  CHECK_THROWS_AS(f.finish(), ProtocolError);
  CHECK_THROWS_AS(f.observe(vec({0.7, 0.7})), ContractError);
  f.observe(vec({0.5, 0.5}));
  f.finish();
  CHECK_THROWS_AS(f.predict(Context()), ProtocolError);
}

TEST_CASE("transcripts replay bitwise and survive a CSV round trip") {
  const ConvexBody body = ConvexBody::simplex(3);
  auto run = [&] {
    Forecaster f(body, two_tables(body, 5), std::make_unique<Hedge>(2, 0.3), {});
    ListNature nature(random_simplex_points(20, 3, 9));
    return run_protocol(f, nature, 20);
  };
  const Transcript a = run();
  const Transcript b = run();
  CHECK(a.hash() == b.hash());
  CHECK(a.hash_hex().size() == 16);
  const Transcript c = Transcript::from_csv(a.to_csv(), a.header_json());
  CHECK(c.to_csv() == a.to_csv());
  CHECK(c.body.describe() == body.describe());
}

TEST_CASE("unit delays reproduce the standard transcript byte for byte") {
  const ConvexBody body = ConvexBody::box(vec({0, 0}), vec({1, 1}));
  auto family = std::make_shared<LinearFamily>(monomial_features(0, 2, 1, 1.0));
  std::mt19937_64 rng(17);
  std::vector<Vec> ys;
  for (int i = 0; i < 30; ++i) ys.push_back(body.sample(rng));
  auto run = [&](Protocol p) {
    ForecasterOptions o;
    o.protocol = p;
    o.delay = [](int) { return 1; };
    Forecaster f(body, family, std::make_unique<FtrlBall>(family->param_dim(), 1.0, 0.2), o);
    ListNature nature(ys);
    return run_protocol(f, nature, 30);
  };
  const Transcript standard = run(Protocol::standard);
  const Transcript delayed = run(Protocol::delayed);
  CHECK(standard.to_csv() == delayed.to_csv());
  CHECK(standard.header_json()["protocol"] != delayed.header_json()["protocol"]);
}

TEST_CASE("undelivered outcomes stay unresolved without flushing") {
  const ConvexBody body = ConvexBody::simplex(2);
  ForecasterOptions o;
  o.protocol = Protocol::delayed;
  o.delay = [](int) { return 5; };
  o.flush_pending = false;
  auto family = std::make_shared<LinearFamily>(identity_features(2));
  Forecaster f(body, family, std::make_unique<FtrlBall>(2, 1, 0.3), o);
  ListNature nature(random_simplex_points(8, 2, 1));
  const Transcript& tr = run_protocol(f, nature, 8);
  CHECK(tr.rounds[2].y.has_value());
  CHECK_FALSE(tr.rounds[3].y.has_value());
  CHECK(tr.rounds[0].delivery == 6);
  CHECK_THROWS_AS(mc_error(tr, zero_test(2)), ProtocolError);

  // With flushing the transcript is complete but the learner never saw rounds 4..8.
  o.flush_pending = true;
  Forecaster g(body, family, std::make_unique<FtrlBall>(2, 1, 0.3), o);
  ListNature again(random_simplex_points(8, 2, 1));
  const Transcript& full = run_protocol(g, again, 8);
  CHECK(full.resolved());
  FtrlBall manual(2, 1, 0.3);
  for (int t = 1; t <= 3; ++t) {
    const ForecastRound& r = full.rounds[static_cast<std::size_t>(t - 1)];
    manual.update(LinearLoss{family->loss_gradient(r.x, r.dist, *r.y), t});
  }
  CHECK(max_abs_diff(manual.params(), g.learner().params()) <= 1e-15);
  CHECK(online_reduction_ledger(full, *family, comparator_grid(*family, body, 1.0, 10, 2)).passed());
}

TEST_CASE("censored protocol contracts") {
  const ConvexBody body = ConvexBody::simplex(2);
  auto family = std::make_shared<LinearFamily>(identity_features(2));
  ForecasterOptions o;
  o.protocol = Protocol::censored;
  o.explore = Distribution::uniform({vec({1, 0}), vec({0, 1})});
  o.gamma = 0.0;
  CHECK_THROWS_AS(Forecaster(body, family, std::make_unique<FtrlBall>(2, 1, 1), o), ContractError);
  o.gamma = 1.5;
  CHECK_THROWS_AS(Forecaster(body, family, std::make_unique<FtrlBall>(2, 1, 1), o), ContractError);
  o.gamma = 0.5;
  o.explore.reset();
  CHECK_THROWS_AS(Forecaster(body, family, std::make_unique<FtrlBall>(2, 1, 1), o), ContractError);

  o.explore = Distribution::uniform({vec({1, 0}), vec({0, 1})});
  Forecaster f(body, family, std::make_unique<FtrlBall>(2, 1, 1), o);
  MeanNature adaptive;
  CHECK_THROWS_AS(run_protocol(f, adaptive, 3), ContractError);
}

TEST_CASE("censored rounds: exploration feeds weighted losses, other rounds nothing") {
  const ConvexBody body = ConvexBody::simplex(3);
  auto family = std::make_shared<LinearFamily>(identity_features(3));
  const double gamma = 0.4;
  ForecasterOptions o;
  o.protocol = Protocol::censored;
  o.gamma = gamma;
  o.seed = 77;
  o.explore = Distribution::point_mass(vec({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  Forecaster f(body, family, std::make_unique<FtrlBall>(3, 1, 0.5), o);
  const auto ys = random_simplex_points(40, 3, 4);
  FtrlBall manual(3, 1, 0.5);
  int explored = 0;
  for (int t = 1; t <= 40; ++t) {
    const Vec before = f.learner().params();
    const Distribution& out = f.predict(Context());
    const ForecastRound r = f.transcript().rounds.back();
    const bool z = derive_uniform(77, static_cast<std::uint64_t>(t), RngTag::censor) < gamma;
    CHECK(r.z == (z ? 1 : 0));
    CHECK(out.size() == (z ? o.explore->size() : r.dist.size()));
    f.observe(ys[static_cast<std::size_t>(t - 1)]);
    if (z) {
      ++explored;
      manual.update(LinearLoss{family->loss_gradient(r.x, r.dist, ys[static_cast<std::size_t>(t - 1)]) / gamma, t});
    } else {
      CHECK(max_abs_diff(before, f.learner().params()) == 0.0);
    }
    CHECK(max_abs_diff(manual.params(), f.learner().params()) <= 1e-13);
    // The audited mixture puts 1 - γ on D_t.
    CHECK(r.effective.size() == r.dist.size() + 1);
  }
  CHECK(explored > 0);
  CHECK(explored < 40);
  const Transcript& tr = f.finish();
  const LedgerReport rep = censored_ledger(tr, *family, comparator_grid(*family, body, 1.0, 5, 1));
  for (const LedgerRow& row : rep.rows) {
    if (row.name.rfind("mixture split", 0) == 0) CHECK(row.pass);
    if (row.name.rfind("per-seed bound", 0) == 0) CHECK(row.pass);
  }
}

TEST_CASE("censoring with gamma one always observes raw losses") {
  const ConvexBody body = ConvexBody::simplex(2);
  auto family = two_tables(body, 8);
  const auto ys = random_simplex_points(25, 2, 6);
  ForecasterOptions o;
  o.protocol = Protocol::censored;
  o.gamma = 1.0;
  o.explore = Distribution::point_mass(vec({0.5, 0.5}));
  Forecaster censored(body, family, std::make_unique<Hedge>(2, 0.5), o);
  Forecaster standard(body, family, std::make_unique<Hedge>(2, 0.5), {});
  ListNature n1(ys), n2(ys);
  const Transcript& a = run_protocol(censored, n1, 25);
  const Transcript& b = run_protocol(standard, n2, 25);
  for (int t = 0; t < 25; ++t) {
    CHECK(a.rounds[static_cast<std::size_t>(t)].z == 1);
    CHECK(max_abs_diff(a.rounds[static_cast<std::size_t>(t)].params, b.rounds[static_cast<std::size_t>(t)].params) == 0.0);
  }
}

TEST_CASE("kernel forecaster first round and history") {
  const ConvexBody body = ConvexBody::box(vec({0, 0}), vec({1, 1}));
  K29Forecaster k(body, MatrixKernel::gaussian(2, 0.5), {});
  const Distribution& d = k.predict(Context());
  CHECK(d.size() >= 1);
  CHECK(k.transcript().rounds[0].eps_realized <= 1e-15);
  k.observe(vec({1, 1}));
  CHECK(k.history().size() == 1);
  const Distribution& d2 = k.predict(Context());
  const Operator op = k29_operator(k.history(), k.kernel(), Context());
  CHECK(certify_evi(d2, op, body) <= k.transcript().rounds[1].eps_target);
}

TEST_CASE("evi adversary examples") {
  const ConvexBody body = ConvexBody::simplex(3);
  SUBCASE("constant operator") {
    EviAdversary nat(constant_test(vec({0.1, 0.9, -0.3}), body), Context(), body);
    const Vec y = nat.outcome(1, Context(), Distribution::point_mass(vec({1, 0, 0})));
    CHECK(max_abs_diff(y, vec({0, 1, 0})) == 0.0);
  }
  SUBCASE("zero test gives a zero-gap mixture") {
    auto family = std::make_shared<FiniteFamily>(std::vector<TestFunction>{zero_test(3)}, 3);
    Forecaster f(body, family, std::make_unique<Hedge>(1, 1.0), {});
    EviAdversary nat(zero_test(3), Context(), body);
    const Transcript& tr = run_protocol(f, nat, 10);
    std::vector<Atom> atoms;
    for (const ForecastRound& r : tr.rounds)
      for (const Atom& a : r.dist.atoms()) atoms.push_back({a.point, a.weight / 10});
    CHECK(certify_evi(Distribution::normalized(atoms), zero_test(3).at(Context()), body) == 0.0);
  }
}

TEST_CASE("uniform mixture of forecasts against the adversary solves its EVI") {
  const ConvexBody body = ConvexBody::simplex(3);
  auto family = two_tables(body, 90);
  const TestFunction& target = family->members()[0];
  const int T = 300;
  Forecaster f(body, family, std::make_unique<Hedge>(2, Hedge::default_rate(2, T, family->loss_range())), {});
  EviAdversary nat(target, Context(), body);
  const Transcript& tr = run_protocol(f, nat, T);
  std::vector<Atom> atoms;
  for (const ForecastRound& r : tr.rounds)
    for (const Atom& a : r.dist.atoms()) atoms.push_back({a.point, a.weight / T});
  const double gap = certify_evi(Distribution::normalized(atoms), target.at(Context()), body);
  const double mc = mc_error(tr, target).total;
  CHECK(gap <= mc / T + 1e-9);
}

TEST_CASE("comparator grids") {
  const ConvexBody body = ConvexBody::simplex(2);
  LinearFamily fam(identity_features(2));
  const auto grid = comparator_grid(fam, body, 2.0, 7, 3);
  CHECK(grid.size() == 7 + 4);
  for (const TestFunction& h : grid) CHECK(h(Context(), vec({0.5, 0.5})).norm() == doctest::Approx(2.0));
  const auto again = comparator_grid(fam, body, 2.0, 7, 3);
  CHECK(max_abs_diff(grid[3](Context(), vec({1, 0})), again[3](Context(), vec({1, 0}))) == 0.0);
  CHECK(comparator_grid(*two_tables(body, 1), body, 1.0, 7, 3).size() == 2);
}
