#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mcr/testfns.hpp"

using namespace mcr;
using mcr::testing::max_abs_diff;
using mcr::testing::random_vec;
using mcr::testing::vec;

namespace {
const Vec kNoContext = Vec::Zero(0);
}

TEST_CASE("finite family mixtures") {
  const auto s = ConvexBody::simplex(3);
  std::vector<TestFunction> fs;
  for (int i = 0; i < 3; ++i) fs.push_back(table_test("t", random_table(2, 3, 3, -1, 1, 10 + i), s));
  const auto first = finite_family_mix(fs, vec({1, 0, 0}));
  std::mt19937_64 rng(1);
  const Vec w = vec({0.2, 0.5, 0.3});
  const auto mix = finite_family_mix(fs, w);
  for (int i = 0; i < 20; ++i) {
    const Vec p = s.sample(rng);
    const Vec x = vec({double(i % 2)});
    CHECK(first(x, p) == fs[0](x, p));
    const Vec direct = 0.2 * fs[0](x, p) + 0.5 * fs[1](x, p) + 0.3 * fs[2](x, p);
    CHECK(max_abs_diff(mix(x, p), direct) < 1e-14);
  }
  const auto same = finite_family_mix({fs[1], fs[1]}, vec({0.4, 0.6}));
  CHECK(max_abs_diff(same(vec({1}), vec({0.2, 0.3, 0.5})), fs[1](vec({1}), vec({0.2, 0.3, 0.5}))) < 1e-15);
  CHECK_THROWS_AS(finite_family_mix({}, Vec()), ContractError);
}

TEST_CASE("table value bounds hold on the simplex") {
  const auto s = ConvexBody::simplex(3);
  const auto t = table_test("t", random_table(1, 4, 3, 0, 1, 5), s);
  CHECK(t.value_bound <= 1.0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Vec p = s.sample(rng), y = s.sample(rng);
    CHECK(std::abs(t(kNoContext, p).dot(y - p)) <= t.value_bound + 1e-12);
  }
}

TEST_CASE("linear tests") {
  const auto box = ConvexBody::box(Vec::Zero(2), Vec::Ones(2));
  const auto id = identity_features(2);
  CHECK(linear_test(id, Vec::Zero(2), box)(kNoContext, vec({0.3, 0.1})) == Vec::Zero(2));
  CHECK(linear_test(id, vec({0.5, -2}), box)(kNoContext, vec({0.3, 0.1})) == vec({0.5, -2}));

  const auto mono = monomial_features(1, 2, 2, 1.0);
  const auto exps = monomial_exponents(3, 2);
  CHECK(mono.features == 10 * 2);
  const Vec x = vec({0.7});
  const Vec p = vec({0.2, 0.9});
  const Vec z = vec({0.7, 0.2, 0.9});
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 2; ++i) {
      Vec theta = Vec::Zero(20);
      theta[k * 2 + i] = 1.0;
      double m = 1.0;
      for (int v = 0; v < 3; ++v) m *= std::pow(z[v], exps[k][v]);
      Vec expect = Vec::Zero(2);
      expect[i] = m;
      CHECK(max_abs_diff(linear_test(mono, theta, box)(x, p), expect) < 1e-15);
    }
  }
  CHECK_THROWS_AS(linear_test(id, Vec::Zero(3), box), ContractError);
}

TEST_CASE("monomial counts") {
  for (int m = 0; m <= 2; ++m)
    for (int d = 1; d <= 3; ++d)
      for (int r = 0; r <= 4; ++r) {
        // C(m+d+r, r) by Pascal's rule, independent of the closed form.
        std::vector<std::vector<long>> c(20, std::vector<long>(20, 0));
        for (int n = 0; n < 20; ++n) {
          c[n][0] = 1;
          for (int k = 1; k <= n; ++k) c[n][k] = c[n - 1][k - 1] + c[n - 1][k];
        }
        CHECK(static_cast<long>(monomial_exponents(m + d, r).size()) == c[m + d + r][r]);
        CHECK(monomial_count(m + d, r) == c[m + d + r][r]);
      }
}

TEST_CASE("kernels are symmetric and positive semidefinite") {
  std::mt19937_64 rng(3);
  const auto fm = monomial_features(1, 2, 2, 1.0);
  std::vector<MatrixKernel> ks = {MatrixKernel::from_features(fm), MatrixKernel::linear(2, 3.0),
                                  MatrixKernel::polynomial(2, 2, 1.0, 16.0), MatrixKernel::gaussian(2, 0.5),
                                  MatrixKernel::sum({MatrixKernel::gaussian(2, 0.3), MatrixKernel::linear(2, 3.0)})};
  for (const auto& k : ks) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Vec> xs, ps;
      for (int i = 0; i < 3; ++i) {
        xs.push_back(random_vec(rng, 1, 0, 1));
        ps.push_back(random_vec(rng, 2, 0, 1));
      }
      CHECK(max_abs_diff(Eigen::Map<const Vec>(k(xs[0], ps[0], xs[1], ps[1]).data(), 4),
                         Eigen::Map<const Vec>(Mat(k(xs[1], ps[1], xs[0], ps[0]).transpose()).data(), 4)) < 1e-12);
      Mat gram(6, 6);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) gram.block(2 * a, 2 * b, 2, 2) = k(xs[a], ps[a], xs[b], ps[b]);
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (gram + gram.transpose()));
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
      CHECK(k(xs[0], ps[0], xs[0], ps[0]).operatorNorm() <= k.op_norm_bound() + 1e-9);
    }
  }
}

TEST_CASE("k29 operator basics") {
  K29History h;
  const auto g = MatrixKernel::gaussian(2, 0.5);
  CHECK(k29_operator(h, g, kNoContext)(vec({0.1, 0.2})) == Vec::Zero(2));
  h.append(kNoContext, Distribution::point_mass(vec({0.3, 0.3})), vec({0.3, 0.3}));
  CHECK(k29_operator(h, g, kNoContext)(vec({0.9, 0.2})) == Vec::Zero(2));
}

TEST_CASE("k29 operator matches a hand-expanded double sum") {
  // Linear feature kernel Ψ(x,p) = (1, p) in d = 1.
  FeatureMap fm{"affine", 2, 1, [](const Context&, const Vec& p) {
                  Mat m(2, 1);
                  m << 1.0, p[0];
                  return m;
                }, 2.0};
  const auto k = MatrixKernel::from_features(fm);
  K29History h;
  h.append(kNoContext, Distribution({{vec({0.2}), 0.5}, {vec({0.6}), 0.5}}), vec({1.0}));
  h.append(kNoContext, Distribution::point_mass(vec({0.4})), vec({0.0}));
  const double p = 0.7;
  // Σ_i E[(1 + p p_i)(y_i - p_i)]
  const double hand = 0.5 * (1 + p * 0.2) * (1 - 0.2) + 0.5 * (1 + p * 0.6) * (1 - 0.6) + (1 + p * 0.4) * (0 - 0.4);
  CHECK(k29_operator(h, k, kNoContext)(vec({p}))[0] == doctest::Approx(hand).epsilon(1e-14));
  CHECK(k29_operator(h, k, kNoContext, false)(vec({p}))[0] == doctest::Approx(hand).epsilon(1e-14));
}

TEST_CASE("factored and direct kernel sums agree") {
  std::mt19937_64 rng(6);
  const auto s = ConvexBody::simplex(3);
  const auto fm = monomial_features(1, 3, 2, 1.0);
  const auto k = MatrixKernel::from_features(fm);
  K29History h;
  for (int t = 0; t < 15; ++t) {
    std::vector<Atom> atoms = {{s.sample(rng), 0.3}, {s.sample(rng), 0.7}};
    h.append(random_vec(rng, 1, 0, 1), Distribution(atoms), s.sample(rng));
  }
  const Vec x = vec({0.4});
  const auto fast = k29_operator(h, k, x), slow = k29_operator(h, k, x, false);
  for (int i = 0; i < 20; ++i) {
    const Vec p = s.sample(rng);
    CHECK(max_abs_diff(fast(p), slow(p)) <= 1e-9);
    CHECK(fast(p).norm() <= k29_norm_bound(h, k) + 1e-12);
  }
  const auto g = MatrixKernel::gaussian(3, 0.4);
  const auto gfast = k29_operator(h, g, x);
  const auto generic = MatrixKernel::sum({g});
  const auto gslow = k29_operator(h, generic, x);
  for (int i = 0; i < 20; ++i) {
    const Vec p = s.sample(rng);
    CHECK(max_abs_diff(gfast(p), gslow(p)) <= 1e-12);
  }
}
