#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mcr/geometry.hpp"

using namespace mcr;
using mcr::testing::max_abs_diff;
using mcr::testing::random_vec;
using mcr::testing::vec;

TEST_CASE("linopt on the simplex picks the lowest-index minimizer") {
  const auto s = ConvexBody::simplex(3);
  CHECK(s.linopt(vec({3, 1, 2})) == vec({0, 1, 0}));
  CHECK(s.linopt(vec({1, 1, 2})) == vec({1, 0, 0}));
}

TEST_CASE("linopt on balls and boxes") {
  const auto b = ConvexBody::ball(Vec::Zero(2), 1.0);
  CHECK(max_abs_diff(b.linopt(vec({3, 4})), vec({-0.6, -0.8})) < 1e-15);
  CHECK(b.linopt(Vec::Zero(2)) == Vec::Zero(2));
  const auto box = ConvexBody::box(Vec::Zero(2), Vec::Ones(2));
  CHECK(box.linopt(vec({1, -2})) == vec({0, 1}));
  CHECK(box.linopt(vec({0, 0})) == vec({0, 0}));
}

TEST_CASE("linopt matches exhaustive vertex search") {
  std::mt19937_64 rng(7);
  std::vector<Vec> pts;
  for (int i = 0; i < 12; ++i) pts.push_back(random_vec(rng, 3));
  const auto poly = ConvexBody::polytope(pts);
  const auto simp = ConvexBody::simplex(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec c = random_vec(rng, 3);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (c.dot(pts[i]) < c.dot(pts[best])) best = i;
    CHECK(poly.linopt(c) == pts[best]);
    const Vec c4 = random_vec(rng, 4);
    Eigen::Index arg;
    c4.minCoeff(&arg);
    CHECK(simp.linopt(c4)[arg] == 1.0);
  }
}

TEST_CASE("linopt rejects dimension mismatch") {
  CHECK_THROWS_AS(ConvexBody::simplex(3).linopt(Vec::Zero(2)), ContractError);
  CHECK_THROWS_AS(ConvexBody::simplex(3).project(Vec::Zero(4)), ContractError);
}

TEST_CASE("simplex projection against a grid search") {
  const auto s = ConvexBody::simplex(3);
  const Vec v = vec({0.5, 0.9, 0.0});
  const Vec p = s.project(v);
  CHECK(max_abs_diff(p, vec({0.3, 0.7, 0.0})) < 1e-12);
  // Brute-force quadratic program over a fine lattice of the simplex.
  const int n = 400;
  double best = 1e300;
  Vec arg;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const Vec z = vec({double(i) / n, double(j) / n, double(n - i - j) / n});
      const double dist = (z - v).squaredNorm();
      if (dist < best) {
        best = dist;
        arg = z;
      }
    }
  }
  CHECK(max_abs_diff(p, arg) <= 1.0 / n + 1e-12);
  CHECK((p - v).squaredNorm() <= best + 1e-12);
}

TEST_CASE("projections satisfy the variational inequality and idempotence") {
  std::mt19937_64 rng(11);
  std::vector<Vec> pts;
  for (int i = 0; i < 8; ++i) pts.push_back(random_vec(rng, 3));
  const std::vector<ConvexBody> bodies = {
      ConvexBody::simplex(3), ConvexBody::box(vec({0, -1, 0}), vec({1, 1, 2})),
      ConvexBody::ball(vec({0.5, 0, -0.5}), 0.7), ConvexBody::polytope(pts),
      ConvexBody::frobenius_ball(1, 3, 2.0)};
  for (const auto& body : bodies) {
    for (int trial = 0; trial < 50; ++trial) {
      const Vec v = random_vec(rng, 3, -3, 3);
      const Vec p = body.project(v);
      CHECK(body.contains(p));
      CHECK(max_abs_diff(body.project(p), p) <= 1e-10);
      for (int s = 0; s < 20; ++s) {
        const Vec z = body.sample(rng);
        CHECK(body.contains(z));
        CHECK((v - p).dot(z - p) <= 1e-8);
      }
    }
  }
  const auto ball = ConvexBody::ball(Vec::Zero(2), 1.0);
  CHECK(max_abs_diff(ball.project(vec({3, 4})), vec({0.6, 0.8})) < 1e-15);
  CHECK(ball.project(vec({0.1, 0.2})) == vec({0.1, 0.2}));
}

TEST_CASE("outer radius bounds members; vertices enumerate the box") {
  std::mt19937_64 rng(3);
  const auto box = ConvexBody::box(vec({-1, 0, 2}), vec({1, 3, 2}));
  const auto verts = box.vertices();
  REQUIRE(verts.has_value());
  CHECK(verts->size() == 8);
  for (const Vec& v : *verts) CHECK(v.norm() <= box.outer_radius() + 1e-12);
  for (int i = 0; i < 100; ++i) CHECK(box.sample(rng).norm() <= box.outer_radius() + 1e-12);
  CHECK_FALSE(ConvexBody::ball(Vec::Zero(3), 1).vertices().has_value());
}

TEST_CASE("body JSON round trip") {
  const auto b = ConvexBody::box(vec({0, 0}), vec({1, 2}));
  const auto r = ConvexBody::from_json(b.to_json());
  CHECK(r.kind() == ConvexBody::Kind::box);
  CHECK(r.hi() == b.hi());
  const auto s = ConvexBody::from_json(nlohmann::json::parse(R"({"kind":"box","dim":3,"lo":0,"hi":1})"));
  CHECK(s.dim() == 3);
  CHECK_THROWS_AS(ConvexBody::from_json(nlohmann::json::parse(R"({"kind":"torus"})")), ContractError);
}

TEST_CASE("expectations over finite distributions") {
  const Vec p1 = vec({1, 2});
  const Vec p2 = vec({3, -1});
  const auto pm = Distribution::point_mass(p1);
  CHECK(pm.expect([](const Vec& p) { Vec r = 2 * p; return r; }) == 2 * p1);
  const Distribution d({{p1, 0.25}, {p2, 0.75}});
  CHECK(d.expect([](const Vec& p) { return Vec::Zero(p.size()).eval(); }) == Vec::Zero(2));
  CHECK(max_abs_diff(d.mean(), 0.25 * p1 + 0.75 * p2) < 1e-15);
  CHECK_THROWS_AS(Distribution({{p1, 0.5}, {p2, 0.6}}), ContractError);
  CHECK_THROWS_AS(Distribution({{p1, -0.5}, {p2, 1.5}}), ContractError);
  const auto mix = Distribution::mixture(pm, Distribution::point_mass(p2), 0.25);
  CHECK(mix.size() == 2);
  CHECK(mix.atoms()[1].weight == 0.25);
}

TEST_CASE("coalescing and JSON keep expectations") {
  const Vec p = vec({0.5, 0.5});
  const Distribution d({{p, 0.5}, {vec({0.0, 1.0}), 0.25}, {p, 0.25}});
  const auto c = d.coalesced();
  CHECK(c.size() == 2);
  CHECK(max_abs_diff(c.mean(), d.mean()) < 1e-15);
  const auto r = Distribution::from_json(d.to_json());
  CHECK(r.mean() == d.mean());
}

TEST_CASE("support reduction preserves the requested moments") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Atom> atoms;
    for (int i = 0; i < 30; ++i) atoms.push_back({random_vec(rng, 2), std::uniform_real_distribution<>(0.1, 1)(rng)});
    const auto d = Distribution::normalized(atoms);
    Mat moments(30, 3);
    for (int i = 0; i < 30; ++i) {
      const Vec& x = d.atoms()[i].point;
      moments.row(i) << x[0], x[1], x[0] * x[1];
    }
    const auto r = reduce_support(d, moments);
    CHECK(r.size() <= 4);
    Vec before = Vec::Zero(3), after = Vec::Zero(3);
    for (int i = 0; i < 30; ++i) before += d.atoms()[i].weight * moments.row(i).transpose();
    for (const Atom& a : r.atoms()) after += a.weight * Vec(vec({a.point[0], a.point[1], a.point[0] * a.point[1]}));
    CHECK(max_abs_diff(before, after) < 1e-12);
  }
}
