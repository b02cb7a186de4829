// Copyright 2026 The mcreduce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mcr/types.hpp"

namespace mcr {

/// Compact convex set given by oracles: membership, Euclidean projection and
/// linear minimization. Values are immutable after construction.
///
/// Supported kinds are the probability simplex, axis-aligned boxes, Euclidean
/// balls, convex hulls of finitely many points, and Frobenius-norm balls of
/// matrices flattened row-major into vectors.
class ConvexBody {
 public:
  enum class Kind { simplex, box, euclidean_ball, vertex_polytope, frobenius_ball };

  static ConvexBody simplex(int dim);
  static ConvexBody box(Vec lo, Vec hi);
  static ConvexBody ball(Vec center, double radius);
  static ConvexBody polytope(std::vector<Vec> vertices);
  static ConvexBody frobenius_ball(int rows, int cols, double radius);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  // Bound on the Euclidean norm of every member.
  double outer_radius() const { return outer_radius_; }
  double diameter() const { return diameter_; }
  // Absolute membership tolerance: 1e-9 scaled by max(1, outer_radius).
  double tolerance() const;

  bool contains(const Vec& z) const;
  bool contains(const Vec& z, double tol) const;

  /// argmin over the body of c^T z. Ties are broken by a fixed per-kind rule:
  /// simplex picks the lowest-index vertex, box takes lo on zero coordinates,
  /// balls return the center for c = 0, polytopes the lowest-index vertex.
  Vec linopt(const Vec& c) const;

  /// Euclidean projection onto the body.
  Vec project(const Vec& v) const;

  // Extreme points for polyhedral kinds (boxes only up to 2^16 vertices).
  std::optional<std::vector<Vec>> vertices() const;
  Vec center() const;
  // Random member; used for seeded warm starts and audit sampling.
  Vec sample(std::mt19937_64& rng) const;

  // Frobenius ball shape; zero for other kinds.
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  double radius() const { return radius_; }
  const std::vector<Vec>& polytope_vertices() const { return points_; }

  std::string describe() const;
  nlohmann::json to_json() const;
  static ConvexBody from_json(const nlohmann::json& j);

 private:
  ConvexBody() = default;
  void check_dim(const Vec& v, const char* op) const;
  Vec project_hull(const Vec& v) const;
  void finalize();

  Kind kind_ = Kind::simplex;
  int dim_ = 0;
  double outer_radius_ = 0.0;
  double diameter_ = 0.0;
  Vec lo_, hi_, center_;
  double radius_ = 0.0;
  int rows_ = 0, cols_ = 0;
  std::vector<Vec> points_;
};

struct Atom {
  Vec point;
  double weight = 0.0;
};

/// Distribution with finitely many weighted atoms. Weights are nonnegative and
/// sum to one within 1e-12; atom order is preserved by every operation.
class Distribution {
 public:
  Distribution() = default;
  explicit Distribution(std::vector<Atom> atoms);

  static Distribution point_mass(Vec p);
  static Distribution uniform(const std::vector<Vec>& points);
  // Renormalizes nonnegative weights before validating.
  static Distribution normalized(std::vector<Atom> atoms);
  // (1 - gamma) * a + gamma * b, atoms of a first.
  static Distribution mixture(const Distribution& a, const Distribution& b, double gamma);

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  int dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_.front().point.size()); }

  /// Exact weighted sum sum_i w_i f(p_i) in declared atom order.
  template <class F>
  Vec expect(F&& f) const {
    Vec acc;
    for (const Atom& a : atoms_) {
      Vec v = f(a.point);
      if (acc.size() == 0) acc = Vec::Zero(v.size());
      acc.noalias() += a.weight * v;
    }
    return acc;
  }

  template <class F>
  double expect_scalar(F&& f) const {
    double acc = 0.0;
    for (const Atom& a : atoms_) acc += a.weight * f(a.point);
    return acc;
  }

  Vec mean() const;

  // Image under f, weight for weight.
  template <class F>
  Distribution pushforward(F&& f) const {
    std::vector<Atom> out;
    out.reserve(atoms_.size());
    for (const Atom& a : atoms_) out.push_back({f(a.point), a.weight});
    Distribution d;
    d.atoms_ = std::move(out);
    return d;
  }

  // Throws ContractError unless every atom is a member of the body.
  void validate(const ConvexBody& body) const;

  // Merges atoms within `tol` (max-norm) of an earlier atom; drops zero weights.
  Distribution coalesced(double tol = 1e-12) const;

  nlohmann::json to_json() const;
  static Distribution from_json(const nlohmann::json& j);

 private:
  std::vector<Atom> atoms_;
};

/// Carathéodory support reduction: returns a sub-distribution of `dist` with at
/// most m + 1 atoms whose weighted sums of the per-atom moment rows
/// (`moments` is size() x m) agree with those of `dist`.
Distribution reduce_support(const Distribution& dist, const Mat& moments);

}  // namespace mcr
