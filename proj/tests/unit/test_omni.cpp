#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "mcr/omni.hpp"

using namespace mcr;
using mcr::testing::max_abs_diff;
using mcr::testing::vec;

namespace {

LossSpec zero_one(int k) {
  LossSpec l{"01", Mat::Ones(k, k) - Mat::Identity(k, k)};
  return l;
}

LossSpec random_loss(std::string name, int actions, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossSpec l{std::move(name), Mat(actions, k)};
  for (int a = 0; a < actions; ++a)
    for (int i = 0; i < k; ++i) l.table(a, i) = u(rng);
  return l;
}

// Outcome and context sequences fixed in advance.
class ScriptNature final : public Nature {
 public:
  ScriptNature(std::vector<int> xs, std::vector<int> ys, int k) : xs_(std::move(xs)), ys_(std::move(ys)), k_(k) {}
  Context context(int t) override { return vec({static_cast<double>(xs_[static_cast<std::size_t>(t - 1)])}); }
  Vec outcome(int t, const Context&, const Distribution&) override {
    return one_hot(k_, ys_[static_cast<std::size_t>(t - 1)]);
  }
  bool adaptive() const override { return false; }

 private:
  std::vector<int> xs_, ys_;
  int k_;
};

}  // namespace

TEST_CASE("post-processing examples") {
  // With 0-1 loss, action i means "predict class i".
  CHECK(post_process(zero_one(2), vec({0.7, 0.3})) == 0);
  CHECK(post_process(LossSpec{"flat", Mat::Constant(3, 2, 0.4)}, vec({0.1, 0.9})) == 0);
  std::mt19937_64 rng(5);
  const LossSpec l = random_loss("r", 4, 3, rng);
  const ConvexBody s = ConvexBody::simplex(3);
  for (int n = 0; n < 100; ++n) {
    const Vec p = s.sample(rng);
    int best = -1;
    double v = INFINITY;
    for (int a = 0; a < 4; ++a) {
      double e = 0;
      for (int i = 0; i < 3; ++i) e += l.table(a, i) * p[i];
      if (e < v) {
        v = e;
        best = a;
      }
    }
    CHECK(post_process(l, p) == best);
  }
}

TEST_CASE("omni test construction") {
  const auto tests = build_omni_tests({zero_one(2)}, all_decision_rules(2, 2));
  CHECK(max_abs_diff(tests[0](vec({0}), vec({0.7, 0.3})), vec({0, 1})) == 0.0);
  const Vec a = tests[1](vec({1}), vec({0.7, 0.3}));
  const Vec b = tests[1](vec({1}), vec({0.1, 0.9}));
  CHECK(max_abs_diff(a, b) == 0.0);

  std::mt19937_64 rng(3);
  std::vector<LossSpec> L;
  for (int i = 0; i < 3; ++i) L.push_back(random_loss("l" + std::to_string(i), 2, 2, rng));
  std::vector<DecisionRule> C = all_decision_rules(2, 2);
  CHECK(C.size() == 4);
  const auto all = build_omni_tests(L, C);
  CHECK(all.size() == 15);
  for (const TestFunction& h : all) CHECK(h.value_bound <= 2.0 * 1.0);
  CHECK_THROWS_AS(build_omni_tests({LossSpec{"neg", Mat::Constant(2, 2, -1.0)}}, C), ContractError);
}

TEST_CASE("omni regret examples") {
  const int k = 2;
  Transcript tr;
  tr.body = ConvexBody::simplex(k);
  const std::vector<int> xs = {0, 1, 1, 0}, ys = {1, 0, 1, 1};
  for (std::size_t t = 0; t < xs.size(); ++t) {
    ForecastRound r;
    r.t = static_cast<int>(t) + 1;
    r.x = vec({static_cast<double>(xs[t])});
    r.dist = Distribution::point_mass(one_hot(k, ys[t]));
    r.y = one_hot(k, ys[t]);
    tr.rounds.push_back(r);
  }
  const auto rules = all_decision_rules(2, 2);
  // Perfect point forecasts under 0-1 loss incur nothing.
  const OmniRegret perfect = omni_regret(tr, zero_one(k), rules);
  CHECK(perfect.incurred == 0.0);
  CHECK(perfect.regret <= 0.0);
  // Best rule: context 0 always saw class 1; context 1 saw both once.
  CHECK(perfect.best == doctest::Approx(1.0));
  CHECK(omni_regret(tr, LossSpec{"flat", Mat::Constant(2, 2, 0.3)}, rules).regret == doctest::Approx(0.0));

  // Single round by hand: D = 0.5δ(0.8,0.2) + 0.5δ(0.3,0.7), y = class 0.
  Transcript one;
  ForecastRound r;
  r.t = 1;
  r.x = vec({0});
  r.dist = Distribution({{vec({0.8, 0.2}), 0.5}, {vec({0.3, 0.7}), 0.5}});
  r.y = one_hot(2, 0);
  one.rounds = {r};
  LossSpec l{"hand", Mat(2, 2)};
  l.table << 0.0, 1.0, 0.6, 0.2;
  // π(0.8,0.2) = 0 (0.2 vs 0.52); π(0.3,0.7) = 1 (0.7 vs 0.32).
  // incurred = 0.5·0 + 0.5·0.6 = 0.3; rules {0→0}: 0, {0→1}: 0.6.
  const OmniRegret hand = omni_regret(one, l, {DecisionRule{"a", {0}}, DecisionRule{"b", {1}}});
  CHECK(hand.incurred == doctest::Approx(0.3));
  CHECK(hand.best == 0.0);
  CHECK(hand.best_rule == 0);
}

TEST_CASE("omni engine ledger") {
  std::mt19937_64 rng(7);
  std::vector<LossSpec> L;
  for (int i = 0; i < 3; ++i) L.push_back(random_loss("l" + std::to_string(i), 2, 2, rng));
  const auto C = all_decision_rules(2, 2);
  const int T = 200;
  auto engine = omni_engine(L, C, T);
  std::vector<int> xs, ys;
  std::bernoulli_distribution coin(0.3);
  for (int t = 0; t < T; ++t) {
    xs.push_back(t % 2);
    ys.push_back(coin(rng) ? (t % 2) : 1 - (t % 2));
  }
  ScriptNature nature(xs, ys, 2);
  const Transcript& tr = run_protocol(*engine, nature, T);
  const LedgerReport rep = omni_ledger(tr, L, C);
  CHECK(rep.passed());
  CHECK(rep.rows.size() == 3 * (2 + 2 * 4));

  auto zero = omni_engine({LossSpec{"zero", Mat::Zero(2, 2)}}, C, 20);
  ScriptNature n2(std::vector<int>(20, 0), std::vector<int>(20, 1), 2);
  const Transcript& t2 = run_protocol(*zero, n2, 20);
  CHECK(omni_regret(t2, LossSpec{"zero", Mat::Zero(2, 2)}, C).regret == 0.0);
}

TEST_CASE("loss and rule CSV loaders") {
  const std::string lp = "omni_losses_test.csv", rp = "omni_rules_test.csv";
  {
    std::ofstream f(lp);
    f << "loss,action,c1,c2\nsq,0,0,1\nsq,1,1,0\nabs,0,0.5,0.5\nabs,1,0.2,0.9\n";
    std::ofstream g(rp);
    g << "rule,context,action\nfirst,0,0\nfirst,1,1\n";
  }
  const auto L = load_losses_csv(lp);
  REQUIRE(L.size() == 2);
  CHECK(L[1].name == "abs");
  CHECK(L[1].table(1, 1) == 0.9);
  const auto C = load_rules_csv(rp);
  REQUIRE(C.size() == 1);
  CHECK(C[0](vec({1})) == 1);
  std::remove(lp.c_str());
  std::remove(rp.c_str());
}
