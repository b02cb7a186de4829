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

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mcr/evi.hpp"
#include "mcr/geometry.hpp"

namespace mcr {

// Contexts are opaque real vectors; an empty vector means "no context".
using Context = Vec;

/// A test function h(x, p) ∈ ℝ^d.
struct TestFunction {
  std::string name;
  std::function<Vec(const Context&, const Vec&)> eval;
  // |h(x,p)ᵀ(y - p)| ≤ value_bound for y, p in the outcome body.
  double value_bound = 0.0;
  // sup ‖h(x, p)‖.
  double norm_bound = 0.0;

  Vec operator()(const Context& x, const Vec& p) const { return eval(x, p); }
  // p ↦ h(x, p), the EVI operator for a fixed context.
  Operator at(const Context& x) const;
};

// Bound on |hᵀ(y - p)| over the body for ‖h‖ ≤ norm_bound. On the simplex a
// vector with entries in [lo, hi] gives hi - lo, which is passed as
// `entry_range` when known (negative means unknown).
double value_bound_for(const ConvexBody& body, double norm_bound, double entry_range = -1.0);

// Smallest axis-aligned box containing the body.
std::pair<Vec, Vec> bounding_box(const ConvexBody& body);

TestFunction zero_test(int dim);
TestFunction constant_test(const Vec& c, const ConvexBody& body);

// Pointwise convex combination Σ λ_i h_i.
TestFunction finite_family_mix(const std::vector<TestFunction>& functions, const Vec& weights);

/// Piecewise-constant function on a `cells`-per-axis grid over the body's
/// bounding box, with one value table per context id (x[0], 0 if no context).
struct TableSpec {
  int contexts = 1;
  int cells = 2;
  // values[context][cell] ∈ ℝ^d, cells in row-major order with axis 0 slowest.
  std::vector<std::vector<Vec>> values;
};
int table_cell(const Vec& lo, const Vec& hi, int cells, const Vec& p);
TestFunction table_test(std::string name, TableSpec spec, const ConvexBody& body);
TableSpec random_table(int contexts, int cells, int dim, double lo, double hi, std::uint64_t seed);
// CSV with header function,context,cell,v1..vd. Returns one spec per function id.
std::vector<TableSpec> load_tables_csv(const std::string& path, int dim, int cells);

/// Feature map Ψ(x, p) ∈ ℝ^{r×d}.
struct FeatureMap {
  std::string name;
  int features = 0;  // r
  int dim = 0;       // d
  std::function<Mat(const Context&, const Vec&)> eval;
  // sup ‖Ψ(x,p)‖_op over the declared domain.
  double op_norm_bound = 1.0;

  Mat operator()(const Context& x, const Vec& p) const { return eval(x, p); }
};

// Ψ = I_d; h_θ is the constant θ.
FeatureMap identity_features(int dim);
// Ψ = φ(x,p) ⊗ I_d with φ listing all monomials of degree ≤ degree in the
// concatenation (x, p); row index = monomial * d + coordinate.
FeatureMap monomial_features(int context_dim, int dim, int degree, double coordinate_bound);
int monomial_count(int variables, int degree);
// Exponent vectors in graded lexicographic order.
std::vector<std::vector<int>> monomial_exponents(int variables, int degree);
// One-hot grid cell (per context id) ⊗ I_d; Ψᵀθ is a table function.
FeatureMap bin_features(const ConvexBody& body, int contexts, int cells);
// Random Fourier features of the Gaussian kernel on (x, p), lifted by ⊗ I_d.
FeatureMap fourier_features(int context_dim, int dim, int count, double bandwidth, std::uint64_t seed);
// Affine-augmented identity: rows (p, 1) ⊗ I_d. Used by linear deviation tests.
FeatureMap append_constant(const FeatureMap& base);

// h_θ(x, p) = Ψ(x,p)ᵀθ.
TestFunction linear_test(const FeatureMap& features, const Vec& theta, const ConvexBody& body);

/// Matrix-valued kernel Γ((x,p),(x',p')) ∈ ℝ^{d×d}.
class MatrixKernel {
 public:
  enum class Kind { feature, linear, polynomial, gaussian, sum, custom };

  static MatrixKernel from_features(FeatureMap features);
  // Scalar kernels on the concatenation (x, p), lifted as k·I_d.
  static MatrixKernel linear(int dim, double bound);
  static MatrixKernel polynomial(int dim, int degree, double offset, double bound);
  static MatrixKernel gaussian(int dim, double bandwidth);
  static MatrixKernel sum(std::vector<MatrixKernel> parts);
  static MatrixKernel custom(std::string name, int dim, double op_norm_bound,
                             std::function<Mat(const Context&, const Vec&, const Context&, const Vec&)> eval);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double op_norm_bound() const { return op_norm_bound_; }
  double bandwidth() const { return bandwidth_; }
  const std::string& name() const { return name_; }
  bool is_scalar() const;
  const FeatureMap* features() const { return features_ ? features_.get() : nullptr; }

  Mat operator()(const Context& x, const Vec& p, const Context& x2, const Vec& p2) const;
  // Γ(a, b)·v without forming the matrix when the kernel is scalar.
  Vec apply(const Context& x, const Vec& p, const Context& x2, const Vec& p2, const Vec& v) const;
  double scalar(const Context& x, const Vec& p, const Context& x2, const Vec& p2) const;

 private:
  Kind kind_ = Kind::custom;
  int dim_ = 0;
  double op_norm_bound_ = 0.0;
  std::string name_;
  int degree_ = 1;
  double offset_ = 0.0;
  double bandwidth_ = 1.0;
  std::shared_ptr<const FeatureMap> features_;
  std::vector<MatrixKernel> parts_;
  std::function<Mat(const Context&, const Vec&, const Context&, const Vec&)> custom_;
};

/// Append-only record of past rounds for the kernel forecaster. Each atom of
/// each past forecast is stored with its weighted residual w·(y - p).
class K29History {
 public:
  struct Record {
    Context x;
    Distribution dist;
    Vec outcome;
  };
  struct ResidualAtom {
    Context x;
    Vec point;
    Vec weighted_residual;
    int round;
  };

  void append(Context x, Distribution dist, Vec outcome);
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<Record>& records() const { return records_; }
  const std::vector<ResidualAtom>& residuals() const { return residuals_; }
  // Σ_i ‖y_i - p_i‖ weighted, used for operator norm bounds.
  double residual_mass() const { return residual_mass_; }

 private:
  std::vector<Record> records_;
  std::vector<ResidualAtom> residuals_;
  double residual_mass_ = 0.0;
};

// S(p) = Σ_i E_{p_i~D_i}[Γ((x, p), (x_i, p_i))(y_i - p_i)], summed exactly.
// Feature kernels are evaluated as Ψ(x,p)ᵀ Σ_i E[Ψ(x_i,p_i)(y_i - p_i)] unless
// `factored` is false. The closure refers to `history`, which must outlive it
// and must not be appended to while it is in use.
Operator k29_operator(const K29History& history, const MatrixKernel& kernel, const Context& x,
                      bool factored = true);
// Declared bound on sup ‖S(p)‖: op_norm_bound · residual mass (kernel
// Cauchy-Schwarz bound).
double k29_norm_bound(const K29History& history, const MatrixKernel& kernel);
// For feature kernels: Σ_i E[Ψ(x_i,p_i)(y_i - p_i)].
Vec k29_feature_sum(const K29History& history, const FeatureMap& features);

}  // namespace mcr
