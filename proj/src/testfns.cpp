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

#include "mcr/testfns.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace mcr {

namespace {

int context_id(const Context& x, int contexts) {
  if (x.size() == 0) return 0;
  const double v = x[0];
  require(v >= 0.0 && v == std::floor(v) && v < contexts, "table: context id out of range");
  return static_cast<int>(v);
}

int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

double sq_dist(const Vec& a, const Vec& b) { return (a - b).squaredNorm(); }

}  // namespace

Operator TestFunction::at(const Context& x) const {
  auto f = eval;
  return [f, x](const Vec& p) { return f(x, p); };
}

double value_bound_for(const ConvexBody& body, double norm_bound, double entry_range) {
  double bound = norm_bound * body.diameter();
  if (body.kind() == ConvexBody::Kind::simplex && entry_range >= 0.0) bound = std::min(bound, entry_range);
  return bound;
}

std::pair<Vec, Vec> bounding_box(const ConvexBody& body) {
  const int d = body.dim();
  switch (body.kind()) {
    case ConvexBody::Kind::simplex:
      return {Vec::Zero(d), Vec::Ones(d)};
    case ConvexBody::Kind::box:
      return {body.lo(), body.hi()};
    case ConvexBody::Kind::euclidean_ball:
    case ConvexBody::Kind::frobenius_ball:
      return {body.center().array() - body.radius(), body.center().array() + body.radius()};
    case ConvexBody::Kind::vertex_polytope: {
      Vec lo = body.polytope_vertices().front(), hi = lo;
      for (const Vec& v : body.polytope_vertices()) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
      return {lo, hi};
    }
  }
  return {Vec::Zero(d), Vec::Ones(d)};
}

TestFunction zero_test(int dim) {
  return {"zero", [dim](const Context&, const Vec&) { return Vec::Zero(dim).eval(); }, 0.0, 0.0};
}

TestFunction constant_test(const Vec& c, const ConvexBody& body) {
  require(c.size() == body.dim(), "constant_test: dimension mismatch");
  const double range = c.size() ? c.maxCoeff() - c.minCoeff() : 0.0;
  return {"constant", [c](const Context&, const Vec&) { return c; }, value_bound_for(body, c.norm(), range),
          c.norm()};
}

TestFunction finite_family_mix(const std::vector<TestFunction>& functions, const Vec& weights) {
  require(!functions.empty(), "finite_family_mix: empty family");
  require(weights.size() == static_cast<Eigen::Index>(functions.size()), "finite_family_mix: weight count");
  require((weights.array() >= 0.0).all() && std::abs(weights.sum() - 1.0) <= 1e-9,
          "finite_family_mix: weights must lie on the simplex");
  double vb = 0.0, nb = 0.0;
  for (const auto& f : functions) {
    vb = std::max(vb, f.value_bound);
    nb = std::max(nb, f.norm_bound);
  }
  auto fs = std::make_shared<const std::vector<TestFunction>>(functions);
  return {"mix",
          [fs, weights](const Context& x, const Vec& p) {
            Vec acc;
            for (std::size_t i = 0; i < fs->size(); ++i) {
              if (weights[static_cast<Eigen::Index>(i)] == 0.0) continue;
              Vec v = (*fs)[i](x, p);
              if (acc.size() == 0) acc = Vec::Zero(v.size());
              acc += weights[static_cast<Eigen::Index>(i)] * v;
            }
            if (acc.size() == 0) acc = Vec::Zero(p.size());
            return acc;
          },
          vb, nb};
}

int table_cell(const Vec& lo, const Vec& hi, int cells, const Vec& p) {
  int idx = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double width = hi[i] - lo[i];
    int c = width > 0.0 ? static_cast<int>(std::floor((p[i] - lo[i]) / width * cells)) : 0;
    c = std::clamp(c, 0, cells - 1);
    idx = idx * cells + c;
  }
  return idx;
}

TestFunction table_test(std::string name, TableSpec spec, const ConvexBody& body) {
  const int d = body.dim();
  const int count = ipow(spec.cells, d);
  require(spec.cells >= 1 && spec.contexts >= 1, "table: bad shape");
  require(static_cast<int>(spec.values.size()) == spec.contexts, "table: one row set per context");
  double nb = 0.0, lo = 1e300, hi = -1e300;
  for (const auto& row : spec.values) {
    require(static_cast<int>(row.size()) == count, "table: wrong cell count");
    for (const Vec& v : row) {
      require(v.size() == d && all_finite(v), "table: bad value");
      nb = std::max(nb, v.norm());
      lo = std::min(lo, v.minCoeff());
      hi = std::max(hi, v.maxCoeff());
    }
  }
  auto [blo, bhi] = bounding_box(body);
  auto shared = std::make_shared<const TableSpec>(std::move(spec));
  return {std::move(name),
          [shared, blo, bhi](const Context& x, const Vec& p) {
            return shared->values[context_id(x, shared->contexts)][table_cell(blo, bhi, shared->cells, p)];
          },
          value_bound_for(body, nb, hi - lo), nb};
}

TableSpec random_table(int contexts, int cells, int dim, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  TableSpec spec;
  spec.contexts = contexts;
  spec.cells = cells;
  const int count = ipow(cells, dim);
  spec.values.assign(contexts, std::vector<Vec>(count));
  for (auto& row : spec.values)
    for (Vec& v : row) {
      v.resize(dim);
      for (int i = 0; i < dim; ++i) v[i] = u(rng);
    }
  return spec;
}

std::vector<TableSpec> load_tables_csv(const std::string& path, int dim, int cells) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open table file: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::map<int, std::map<int, std::map<int, Vec>>> raw;
  int max_ctx = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != 3 + dim)
      throw ContractError("table file " + path + ": wrong column count on line " + std::to_string(lineno));
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = vals[3 + i];
    const int f = static_cast<int>(vals[0]), c = static_cast<int>(vals[1]), k = static_cast<int>(vals[2]);
    max_ctx = std::max(max_ctx, c);
    raw[f][c][k] = v;
  }
  const int count = ipow(cells, dim);
  std::vector<TableSpec> out;
  for (const auto& [f, ctxs] : raw) {
    TableSpec spec;
    spec.contexts = max_ctx + 1;
    spec.cells = cells;
    spec.values.assign(spec.contexts, std::vector<Vec>(count, Vec::Zero(dim)));
    for (const auto& [c, ks] : ctxs)
      for (const auto& [k, v] : ks) {
        require(k >= 0 && k < count, "table file: cell index out of range");
        spec.values[c][k] = v;
      }
    out.push_back(std::move(spec));
  }
  return out;
}

// --- feature maps ---------------------------------------------------------

FeatureMap identity_features(int dim) {
  return {"identity", dim, dim, [dim](const Context&, const Vec&) { return Mat::Identity(dim, dim).eval(); }, 1.0};
}

std::vector<std::vector<int>> monomial_exponents(int variables, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(variables, 0);
  for (int total = 0; total <= degree; ++total) {
    // All exponent vectors with this total, lexicographically decreasing.
    std::function<void(int, int)> rec = [&](int i, int left) {
      if (i == variables - 1) {
        e[i] = left;
        out.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[i] = k;
        rec(i + 1, left - k);
      }
    };
    if (variables == 0) {
      if (total == 0) out.push_back({});
      continue;
    }
    rec(0, total);
  }
  return out;
}

int monomial_count(int variables, int degree) {
  // C(variables + degree, degree)
  double c = 1.0;
  for (int i = 1; i <= degree; ++i) c = c * (variables + i) / i;
  return static_cast<int>(std::llround(c));
}

FeatureMap monomial_features(int context_dim, int dim, int degree, double coordinate_bound) {
  const int vars = context_dim + dim;
  auto exps = std::make_shared<const std::vector<std::vector<int>>>(monomial_exponents(vars, degree));
  const int n = static_cast<int>(exps->size());
  const double c = std::max(1.0, coordinate_bound);
  FeatureMap fm;
  fm.name = "monomial" + std::to_string(degree);
  fm.features = n * dim;
  fm.dim = dim;
  fm.op_norm_bound = std::sqrt(static_cast<double>(n)) * std::pow(c, degree);
  fm.eval = [exps, context_dim, dim, n](const Context& x, const Vec& p) {
    require(x.size() == context_dim && p.size() == dim, "monomial features: input shape");
    Vec z(context_dim + dim);
    z << x, p;
    Mat psi = Mat::Zero(static_cast<Eigen::Index>(n) * dim, dim);
    for (int k = 0; k < n; ++k) {
      double m = 1.0;
      const auto& e = (*exps)[k];
      for (std::size_t v = 0; v < e.size(); ++v)
        for (int r = 0; r < e[v]; ++r) m *= z[static_cast<Eigen::Index>(v)];
      for (int i = 0; i < dim; ++i) psi(static_cast<Eigen::Index>(k) * dim + i, i) = m;
    }
    return psi;
  };
  return fm;
}

FeatureMap bin_features(const ConvexBody& body, int contexts, int cells) {
  const int d = body.dim();
  const int count = ipow(cells, d);
  auto [lo, hi] = bounding_box(body);
  FeatureMap fm;
  fm.name = "bins" + std::to_string(cells);
  fm.features = contexts * count * d;
  fm.dim = d;
  fm.op_norm_bound = 1.0;
  fm.eval = [lo = lo, hi = hi, contexts, cells, count, d](const Context& x, const Vec& p) {
    Mat psi = Mat::Zero(static_cast<Eigen::Index>(contexts) * count * d, d);
    const int base = (context_id(x, contexts) * count + table_cell(lo, hi, cells, p)) * d;
    for (int i = 0; i < d; ++i) psi(base + i, i) = 1.0;
    return psi;
  };
  return fm;
}

FeatureMap fourier_features(int context_dim, int dim, int count, double bandwidth, std::uint64_t seed) {
  require(count >= 1 && bandwidth > 0.0, "fourier features: bad parameters");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0 / bandwidth);
  std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
  const int vars = context_dim + dim;
  Mat omega(count, vars);
  Vec phase(count);
  for (int j = 0; j < count; ++j) {
    for (int v = 0; v < vars; ++v) omega(j, v) = g(rng);
    phase[j] = u(rng);
  }
  const double scale = std::sqrt(2.0 / count);
  FeatureMap fm;
  fm.name = "fourier" + std::to_string(count);
  fm.features = count * dim;
  fm.dim = dim;
  fm.op_norm_bound = std::sqrt(2.0);
  fm.eval = [omega, phase, scale, context_dim, dim, count](const Context& x, const Vec& p) {
    require(x.size() == context_dim && p.size() == dim, "fourier features: input shape");
    Vec z(context_dim + dim);
    z << x, p;
    const Vec arg = omega * z + phase;
    Mat psi = Mat::Zero(static_cast<Eigen::Index>(count) * dim, dim);
    for (int k = 0; k < count; ++k)
      for (int i = 0; i < dim; ++i) psi(static_cast<Eigen::Index>(k) * dim + i, i) = scale * std::cos(arg[k]);
    return psi;
  };
  return fm;
}

FeatureMap append_constant(const FeatureMap& base) {
  FeatureMap fm;
  fm.name = base.name + "+const";
  fm.features = base.features + base.dim;
  fm.dim = base.dim;
  fm.op_norm_bound = std::sqrt(base.op_norm_bound * base.op_norm_bound + 1.0);
  auto inner = base.eval;
  const int r = base.features, d = base.dim;
  fm.eval = [inner, r, d](const Context& x, const Vec& p) {
    Mat psi(r + d, d);
    psi.topRows(r) = inner(x, p);
    psi.bottomRows(d).setIdentity();
    return psi;
  };
  return fm;
}

TestFunction linear_test(const FeatureMap& features, const Vec& theta, const ConvexBody& body) {
  require(theta.size() == features.features, "linear_test: parameter dimension mismatch");
  require(features.dim == body.dim(), "linear_test: outcome dimension mismatch");
  auto ev = features.eval;
  const double nb = features.op_norm_bound * theta.norm();
  return {features.name + "-linear", [ev, theta](const Context& x, const Vec& p) { return (ev(x, p).transpose() * theta).eval(); },
          value_bound_for(body, nb), nb};
}

// --- kernels --------------------------------------------------------------

MatrixKernel MatrixKernel::from_features(FeatureMap features) {
  MatrixKernel k;
  k.kind_ = Kind::feature;
  k.dim_ = features.dim;
  k.op_norm_bound_ = features.op_norm_bound * features.op_norm_bound;
  k.name_ = "feature(" + features.name + ")";
  k.features_ = std::make_shared<const FeatureMap>(std::move(features));
  return k;
}

MatrixKernel MatrixKernel::linear(int dim, double bound) {
  MatrixKernel k;
  k.kind_ = Kind::linear;
  k.dim_ = dim;
  k.op_norm_bound_ = bound;
  k.name_ = "linear";
  return k;
}

MatrixKernel MatrixKernel::polynomial(int dim, int degree, double offset, double bound) {
  require(degree >= 1 && offset >= 0.0, "polynomial kernel: bad parameters");
  MatrixKernel k;
  k.kind_ = Kind::polynomial;
  k.dim_ = dim;
  k.degree_ = degree;
  k.offset_ = offset;
  k.op_norm_bound_ = bound;
  k.name_ = "polynomial" + std::to_string(degree);
  return k;
}

MatrixKernel MatrixKernel::gaussian(int dim, double bandwidth) {
  require(bandwidth > 0.0, "gaussian kernel: bandwidth must be positive");
  MatrixKernel k;
  k.kind_ = Kind::gaussian;
  k.dim_ = dim;
  k.bandwidth_ = bandwidth;
  k.op_norm_bound_ = 1.0;
  k.name_ = "gaussian";
  return k;
}

MatrixKernel MatrixKernel::sum(std::vector<MatrixKernel> parts) {
  require(!parts.empty(), "sum kernel: no parts");
  MatrixKernel k;
  k.kind_ = Kind::sum;
  k.dim_ = parts.front().dim();
  k.name_ = "sum";
  for (const auto& p : parts) {
    require(p.dim() == k.dim_, "sum kernel: dimension mismatch");
    k.op_norm_bound_ += p.op_norm_bound();
  }
  k.parts_ = std::move(parts);
  return k;
}

MatrixKernel MatrixKernel::custom(std::string name, int dim, double op_norm_bound,
                                  std::function<Mat(const Context&, const Vec&, const Context&, const Vec&)> eval) {
  MatrixKernel k;
  k.kind_ = Kind::custom;
  k.dim_ = dim;
  k.op_norm_bound_ = op_norm_bound;
  k.name_ = std::move(name);
  k.custom_ = std::move(eval);
  return k;
}

bool MatrixKernel::is_scalar() const {
  return kind_ == Kind::linear || kind_ == Kind::polynomial || kind_ == Kind::gaussian;
}

double MatrixKernel::scalar(const Context& x, const Vec& p, const Context& x2, const Vec& p2) const {
  switch (kind_) {
    case Kind::linear:
      return x.dot(x2) + p.dot(p2);
    case Kind::polynomial:
      return std::pow(x.dot(x2) + p.dot(p2) + offset_, degree_);
    case Kind::gaussian:
      return std::exp(-(sq_dist(x, x2) + sq_dist(p, p2)) / (2.0 * bandwidth_ * bandwidth_));
    default:
      throw ContractError("kernel " + name_ + " is not scalar");
  }
}

Mat MatrixKernel::operator()(const Context& x, const Vec& p, const Context& x2, const Vec& p2) const {
  switch (kind_) {
    case Kind::feature:
      return (*features_)(x, p).transpose() * (*features_)(x2, p2);
    case Kind::linear:
    case Kind::polynomial:
    case Kind::gaussian:
      return scalar(x, p, x2, p2) * Mat::Identity(dim_, dim_);
    case Kind::sum: {
      Mat acc = Mat::Zero(dim_, dim_);
      for (const auto& part : parts_) acc += part(x, p, x2, p2);
      return acc;
    }
    case Kind::custom:
      return custom_(x, p, x2, p2);
  }
  return Mat::Zero(dim_, dim_);
}

Vec MatrixKernel::apply(const Context& x, const Vec& p, const Context& x2, const Vec& p2, const Vec& v) const {
  if (is_scalar()) return scalar(x, p, x2, p2) * v;
  if (kind_ == Kind::sum) {
    Vec acc = Vec::Zero(dim_);
    for (const auto& part : parts_) acc += part.apply(x, p, x2, p2, v);
    return acc;
  }
  if (kind_ == Kind::feature) return (*features_)(x, p).transpose() * ((*features_)(x2, p2) * v);
  return (*this)(x, p, x2, p2) * v;
}

// --- K29 history ----------------------------------------------------------

void K29History::append(Context x, Distribution dist, Vec outcome) {
  require(!dist.empty(), "history: empty forecast");
  require(outcome.size() == dist.dim(), "history: outcome dimension mismatch");
  const int round = static_cast<int>(records_.size()) + 1;
  for (const Atom& a : dist.atoms()) {
    if (a.weight == 0.0) continue;
    Vec r = a.weight * (outcome - a.point);
    residual_mass_ += r.norm();
    residuals_.push_back({x, a.point, std::move(r), round});
  }
  records_.push_back({std::move(x), std::move(dist), std::move(outcome)});
}

Operator k29_operator(const K29History& history, const MatrixKernel& kernel, const Context& x, bool factored) {
  const int d = kernel.dim();
  const auto* res = &history.residuals();
  if (kernel.kind() == MatrixKernel::Kind::gaussian) {
    // Hot path: the context part of the exponent is fixed for this round.
    const double inv = 1.0 / (2.0 * kernel.bandwidth() * kernel.bandwidth());
    std::vector<double> ctx_part(res->size());
    for (std::size_t i = 0; i < res->size(); ++i) ctx_part[i] = sq_dist(x, (*res)[i].x);
    return [res, ctx_part, inv, d](const Vec& p) {
      Vec acc = Vec::Zero(d);
      for (std::size_t i = 0; i < res->size(); ++i) {
        const auto& a = (*res)[i];
        acc += std::exp(-(ctx_part[i] + (p - a.point).squaredNorm()) * inv) * a.weighted_residual;
      }
      return acc;
    };
  }
  if (factored && kernel.kind() == MatrixKernel::Kind::feature) {
    const FeatureMap* fm = kernel.features();
    const Vec s = k29_feature_sum(history, *fm);
    auto ev = fm->eval;
    return [ev, s, x](const Vec& p) { return (ev(x, p).transpose() * s).eval(); };
  }
  MatrixKernel k = kernel;
  return [res, k, x, d](const Vec& p) {
    Vec acc = Vec::Zero(d);
    for (const auto& a : *res) acc += k.apply(x, p, a.x, a.point, a.weighted_residual);
    return acc;
  };
}

double k29_norm_bound(const K29History& history, const MatrixKernel& kernel) {
  return kernel.op_norm_bound() * history.residual_mass();
}

Vec k29_feature_sum(const K29History& history, const FeatureMap& features) {
  Vec s = Vec::Zero(features.features);
  for (const auto& a : history.residuals()) s += features(a.x, a.point) * a.weighted_residual;
  return s;
}

}  // namespace mcr
