#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mcr/learners.hpp"

using namespace mcr;
using mcr::testing::max_abs_diff;
using mcr::testing::random_vec;
using mcr::testing::vec;

TEST_CASE("hedge closed-form steps") {
  Hedge h(3, 0.7);
  h.update(LinearLoss{Vec::Zero(3)});
  CHECK(max_abs_diff(h.params(), Vec::Constant(3, 1.0 / 3)) < 1e-15);

  Hedge two(2, std::log(2.0));
  two.update(LinearLoss{vec({0, 1})});
  CHECK(max_abs_diff(two.params(), vec({2.0 / 3, 1.0 / 3})) < 1e-15);

  Hedge a(3, 0.3), b(3, 0.3);
  const Vec l1 = vec({0.2, 0.9, 0.4}), l2 = vec({0.7, 0.1, 0.5});
  a.update(LinearLoss{l1});
  a.update(LinearLoss{l2});
  b.update(LinearLoss{Vec(l1 + l2)});
  CHECK(a.params() == b.params());

  CHECK_THROWS_AS(h.update(LinearLoss{vec({0, NAN, 0})}), ContractError);
  CHECK_THROWS_AS(h.update(LinearLoss{vec({0, 0})}), ContractError);
}

TEST_CASE("hedge regret stays below 2 sqrt(T ln n)") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int n : {2, 5, 16}) {
    const int T = 2000;
    const double eta = std::sqrt(std::log(n) / T);
    for (int adversarial = 0; adversarial < 2; ++adversarial) {
      Hedge h(n, eta);
      double incurred = 0;
      Vec cum = Vec::Zero(n);
      for (int t = 0; t < T; ++t) {
        Vec loss(n);
        if (adversarial) {
          // Punish the current favourite.
          Eigen::Index arg;
          h.params().maxCoeff(&arg);
          loss.setZero();
          loss[arg] = 1.0;
        } else {
          for (int i = 0; i < n; ++i) loss[i] = u(rng) * (i == 0 ? 0.8 : 1.0);
        }
        incurred += h.params().dot(loss);
        cum += loss;
        h.update(LinearLoss{loss});
      }
      CHECK(incurred - cum.minCoeff() <= 2 * std::sqrt(T * std::log(n)));
    }
  }
}

TEST_CASE("doubling hedge remains valid and sublinear") {
  DoublingHedge h(4);
  double incurred = 0;
  Vec cum = Vec::Zero(4);
  for (int t = 0; t < 4096; ++t) {
    const Vec loss = (t % 3 == 0) ? vec({1, 0, 1, 1}) : vec({0, 1, 1, 1});
    incurred += h.params().dot(loss);
    cum += loss;
    h.update(LinearLoss{loss});
    CHECK(std::abs(h.params().sum() - 1) < 1e-12);
  }
  CHECK(incurred - cum.minCoeff() <= 6 * std::sqrt(4096 * std::log(4.0)));
}

TEST_CASE("ogd steps and regret") {
  const auto ball = ConvexBody::ball(Vec::Zero(2), 1.0);
  Ogd o(ball, 1.0);
  o.update(LinearLoss{Vec::Zero(2)});
  CHECK(o.params() == Vec::Zero(2));
  o.update(LinearLoss{vec({-2, 0})});
  CHECK(max_abs_diff(o.params(), vec({1, 0})) < 1e-15);

  const Vec g = vec({0.6, -0.8});
  const int T = 1000;
  Ogd run(ball, Ogd::default_rate(ball, 1.0, T) / 2.0);  // diameter 2, so this is R/(G√T)
  double incurred = 0;
  for (int t = 0; t < T; ++t) {
    incurred += g.dot(run.params());
    run.update(LinearLoss{g});
  }
  double best = 1e300;
  for (int i = 0; i < 720; ++i) {
    const double a = 2 * M_PI * i / 720;
    best = std::min(best, T * g.dot(vec({std::cos(a), std::sin(a)})));
  }
  CHECK(incurred - best <= 1.0 * g.norm() * std::sqrt(T));
}

TEST_CASE("ftrl closed form") {
  FtrlBall f(2, 5.0, 2.0);
  CHECK(f.params() == Vec::Zero(2));
  CHECK(f.alpha() == 1.0);
  f.update(LinearLoss{vec({-1, 0})});
  CHECK(max_abs_diff(f.params(), vec({1, 0})) < 1e-15);

  FtrlBall g(2, 1.0, 2.0);
  g.update(LinearLoss{vec({-3, -4})});
  CHECK(max_abs_diff(g.params(), vec({0.6, 0.8})) < 1e-15);
}

TEST_CASE("ftrl closed form matches numerical minimization") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const double B = 0.5 + trial * 0.1, eta = 0.2 + 0.05 * trial;
    FtrlBall f(3, B, eta);
    const Vec s = random_vec(rng, 3, -4, 4);
    f.update(LinearLoss{Vec(-s)});
    // Projected gradient descent on the strongly convex objective.
    const auto ball = ConvexBody::ball(Vec::Zero(3), B);
    Vec th = Vec::Zero(3);
    for (int i = 0; i < 4000; ++i) th = ball.project(th - 0.25 * (-eta * s + 2 * th));
    CHECK(max_abs_diff(f.params(), th) < 1e-8);
  }
}

TEST_CASE("ftrl regret bound with a tight budget") {
  std::mt19937_64 rng(9);
  const int T = 500;
  const double B = 1.0;
  std::vector<Vec> ls;
  double sumsq = 0;
  for (int t = 0; t < T; ++t) {
    ls.push_back(random_vec(rng, 2, -1, 1) + vec({0.3, 0.1}));
    sumsq += ls.back().squaredNorm();
  }
  FtrlBall f(2, B, FtrlBall::default_rate(B, sumsq));
  double gain = 0;
  Vec total = Vec::Zero(2);
  for (const Vec& l : ls) {
    gain += l.dot(f.params());
    total += l;
    f.update(LinearLoss{Vec(-l)});
  }
  for (int i = 0; i < 360; ++i) {
    const double a = 2 * M_PI * i / 360;
    const Vec th = B * vec({std::cos(a), std::sin(a)});
    CHECK(th.dot(total) - gain <= 2 * B * std::sqrt(sumsq) + 1e-9);
  }
  CHECK(f.regret_bound(sumsq) <= 2 * B * std::sqrt(sumsq));
}

TEST_CASE("delayed ogd with unit delays equals ogd") {
  std::mt19937_64 rng(2);
  const auto box = ConvexBody::box(Vec::Zero(3), Vec::Ones(3));
  Ogd plain(box, 0.1);
  DelayedOgd delayed(box, 0.1);
  for (int t = 1; t <= 200; ++t) {
    CHECK(plain.params() == delayed.params());
    const Vec g = random_vec(rng, 3);
    plain.update(LinearLoss{g, t});
    delayed.feed(LinearLoss{g, t}, t + 1);
    delayed.advance();
  }
  CHECK(plain.params() == delayed.params());
}

TEST_CASE("delayed ogd follows the hand-unrolled recursion") {
  const auto ball = ConvexBody::ball(Vec::Zero(2), 1.0);
  const double eta = 0.3;
  const Vec g = vec({-1.0, 0.5});
  DelayedOgd d(ball, eta);
  std::vector<Vec> seen;
  for (int t = 1; t <= 4; ++t) {
    seen.push_back(d.params());
    d.feed(LinearLoss{g, t}, t + 2);
    const Vec before = d.params();
    d.advance();
    if (t == 1) CHECK(d.params() == before);
  }
  seen.push_back(d.params());
  const Vec th1 = Vec::Zero(2);
  const Vec th2 = th1;
  const Vec th3 = ball.project(th2 - eta * g);
  const Vec th4 = ball.project(th3 - eta * g);
  const Vec th5 = ball.project(th4 - eta * g);
  CHECK(seen[0] == th1);
  CHECK(seen[1] == th2);
  CHECK(max_abs_diff(seen[2], th3) < 1e-15);
  CHECK(max_abs_diff(seen[3], th4) < 1e-15);
  CHECK(max_abs_diff(seen[4], th5) < 1e-15);
  CHECK(d.pending() == 1);
  CHECK_THROWS_AS(d.feed(LinearLoss{g, 9}, d.round()), ContractError);
}

TEST_CASE("importance weighting") {
  const std::vector<LinearLoss> raw = {{vec({0.4, -1.0}), 3}};
  auto same = ImportanceWeighted::weigh(raw, 1.0, true);
  CHECK(same[0].gradient == raw[0].gradient);
  auto zero = ImportanceWeighted::weigh(raw, 0.5, false);
  CHECK(zero[0].gradient == Vec::Zero(2));
  CHECK_THROWS_AS(ImportanceWeighted(std::make_unique<Hedge>(2, 1.0), 0.0), ContractError);

  ImportanceWeighted iw(std::make_unique<Hedge>(2, 1.0), 0.25);
  const Vec before = iw.params();
  iw.feed(raw, false);
  CHECK(iw.params() == before);

  // Closed-form expectation and a Monte-Carlo check.
  const double gamma = 0.25;
  const Vec expected = gamma * (raw[0].gradient / gamma) + (1 - gamma) * Vec::Zero(2);
  CHECK(max_abs_diff(expected, raw[0].gradient) < 1e-15);
  std::mt19937_64 rng(123);
  std::bernoulli_distribution z(gamma);
  const int draws = 100000;
  Vec sum = Vec::Zero(2), sumsq = Vec::Zero(2);
  for (int i = 0; i < draws; ++i) {
    const Vec f = ImportanceWeighted::weigh(raw, gamma, z(rng))[0].gradient;
    sum += f;
    sumsq += f.cwiseProduct(f);
  }
  const Vec mean = sum / draws;
  const Vec var = sumsq / draws - mean.cwiseProduct(mean);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(mean[i] - raw[0].gradient[i]) <= 3 * std::sqrt(var[i] / draws));
}
