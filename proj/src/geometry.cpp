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

#include "mcr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "mcr/json_util.hpp"

namespace mcr {

namespace {

constexpr int kMaxBoxVertexDim = 16;

}  // namespace

ConvexBody ConvexBody::simplex(int dim) {
  require(dim >= 1, "simplex: dimension must be positive");
  ConvexBody b;
  b.kind_ = Kind::simplex;
  b.dim_ = dim;
  b.finalize();
  return b;
}

ConvexBody ConvexBody::box(Vec lo, Vec hi) {
  require(lo.size() >= 1 && lo.size() == hi.size(), "box: lo/hi dimension mismatch");
  require(all_finite(lo) && all_finite(hi), "box: non-finite bounds");
  require(((hi - lo).array() >= 0.0).all(), "box: lo must not exceed hi");
  ConvexBody b;
  b.kind_ = Kind::box;
  b.dim_ = static_cast<int>(lo.size());
  b.lo_ = std::move(lo);
  b.hi_ = std::move(hi);
  b.finalize();
  return b;
}

ConvexBody ConvexBody::ball(Vec center, double radius) {
  require(center.size() >= 1, "ball: empty center");
  require(std::isfinite(radius) && radius >= 0.0, "ball: radius must be finite and nonnegative");
  ConvexBody b;
  b.kind_ = Kind::euclidean_ball;
  b.dim_ = static_cast<int>(center.size());
  b.center_ = std::move(center);
  b.radius_ = radius;
  b.finalize();
  return b;
}

ConvexBody ConvexBody::polytope(std::vector<Vec> vertices) {
  require(!vertices.empty(), "polytope: no vertices");
  const auto d = vertices.front().size();
  require(d >= 1, "polytope: zero-dimensional vertices");
  for (const Vec& v : vertices) {
    require(v.size() == d, "polytope: vertex dimension mismatch");
    require(all_finite(v), "polytope: non-finite vertex");
  }
  ConvexBody b;
  b.kind_ = Kind::vertex_polytope;
  b.dim_ = static_cast<int>(d);
  b.points_ = std::move(vertices);
  b.finalize();
  return b;
}

ConvexBody ConvexBody::frobenius_ball(int rows, int cols, double radius) {
  require(rows >= 1 && cols >= 1, "frobenius_ball: shape must be positive");
  require(std::isfinite(radius) && radius >= 0.0, "frobenius_ball: bad radius");
  ConvexBody b;
  b.kind_ = Kind::frobenius_ball;
  b.rows_ = rows;
  b.cols_ = cols;
  b.dim_ = rows * cols;
  b.radius_ = radius;
  b.center_ = Vec::Zero(b.dim_);
  b.finalize();
  return b;
}

void ConvexBody::finalize() {
  switch (kind_) {
    case Kind::simplex:
      outer_radius_ = 1.0;
      diameter_ = dim_ >= 2 ? std::sqrt(2.0) : 0.0;
      center_ = Vec::Constant(dim_, 1.0 / dim_);
      break;
    case Kind::box:
      outer_radius_ = lo_.cwiseAbs().cwiseMax(hi_.cwiseAbs()).norm();
      diameter_ = (hi_ - lo_).norm();
      center_ = 0.5 * (lo_ + hi_);
      break;
    case Kind::euclidean_ball:
    case Kind::frobenius_ball:
      outer_radius_ = center_.norm() + radius_;
      diameter_ = 2.0 * radius_;
      break;
    case Kind::vertex_polytope: {
      outer_radius_ = 0.0;
      diameter_ = 0.0;
      center_ = Vec::Zero(dim_);
      for (std::size_t i = 0; i < points_.size(); ++i) {
        outer_radius_ = std::max(outer_radius_, points_[i].norm());
        center_ += points_[i];
        for (std::size_t j = i + 1; j < points_.size(); ++j)
          diameter_ = std::max(diameter_, (points_[i] - points_[j]).norm());
      }
      center_ /= static_cast<double>(points_.size());
      break;
    }
  }
}

double ConvexBody::tolerance() const { return 1e-9 * std::max(1.0, outer_radius_); }

void ConvexBody::check_dim(const Vec& v, const char* op) const {
  if (v.size() != dim_) {
    std::ostringstream os;
    os << op << ": dimension mismatch (got " << v.size() << ", body has " << dim_ << ")";
    throw ContractError(os.str());
  }
}

bool ConvexBody::contains(const Vec& z) const { return contains(z, tolerance()); }

bool ConvexBody::contains(const Vec& z, double tol) const {
  if (z.size() != dim_ || !all_finite(z)) return false;
  switch (kind_) {
    case Kind::simplex:
      return z.minCoeff() >= -tol && std::abs(z.sum() - 1.0) <= tol;
    case Kind::box:
      return ((z - lo_).array() >= -tol).all() && ((hi_ - z).array() >= -tol).all();
    case Kind::euclidean_ball:
    case Kind::frobenius_ball:
      return (z - center_).norm() <= radius_ + tol;
    case Kind::vertex_polytope:
      return (project_hull(z) - z).norm() <= tol;
  }
  return false;
}

Vec ConvexBody::linopt(const Vec& c) const {
  check_dim(c, "linopt");
  require(all_finite(c), "linopt: non-finite direction");
  switch (kind_) {
    case Kind::simplex: {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < c.size(); ++i)
        if (c[i] < c[best]) best = i;
      Vec z = Vec::Zero(dim_);
      z[best] = 1.0;
      return z;
    }
    case Kind::box: {
      Vec z(dim_);
      for (int i = 0; i < dim_; ++i) z[i] = c[i] < 0.0 ? hi_[i] : lo_[i];
      return z;
    }
    case Kind::euclidean_ball:
    case Kind::frobenius_ball: {
      const double n = c.norm();
      if (n == 0.0) return center_;
      return center_ - (radius_ / n) * c;
    }
    case Kind::vertex_polytope: {
      std::size_t best = 0;
      double best_val = c.dot(points_[0]);
      for (std::size_t i = 1; i < points_.size(); ++i) {
        const double v = c.dot(points_[i]);
        if (v < best_val) {
          best_val = v;
          best = i;
        }
      }
      return points_[best];
    }
  }
  return center_;
}

namespace {

Vec project_simplex(const Vec& v) {
  const auto d = v.size();
  std::vector<double> u(v.data(), v.data() + d);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

}  // namespace

Vec ConvexBody::project(const Vec& v) const {
  check_dim(v, "project");
  require(all_finite(v), "project: non-finite input");
  switch (kind_) {
    case Kind::simplex:
      if (v.minCoeff() >= 0.0 && v.sum() == 1.0) return v;
      return project_simplex(v);
    case Kind::box:
      return v.cwiseMax(lo_).cwiseMin(hi_);
    case Kind::euclidean_ball:
    case Kind::frobenius_ball: {
      const Vec diff = v - center_;
      const double n = diff.norm();
      if (n <= radius_) return v;
      return center_ + (radius_ / n) * diff;
    }
    case Kind::vertex_polytope:
      return project_hull(v);
  }
  return v;
}

// Wolfe's minimum-norm-point algorithm on the translated points V_i - v.
Vec ConvexBody::project_hull(const Vec& v) const {
  const std::size_t n = points_.size();
  if (n == 1) return points_[0];
  std::vector<Vec> q(n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = points_[i] - v;
    scale = std::max(scale, q[i].squaredNorm());
  }
  const double eps = 1e-14 * std::max(scale, 1e-300);

  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (q[i].squaredNorm() < q[first].squaredNorm()) first = i;
  std::vector<std::size_t> S{first};
  std::vector<double> lambda{1.0};
  Vec x = q[first];

  for (int major = 0; major < 1000; ++major) {
    std::size_t j = 0;
    double best = x.dot(q[0]);
    for (std::size_t i = 1; i < n; ++i) {
      const double val = x.dot(q[i]);
      if (val < best) {
        best = val;
        j = i;
      }
    }
    if (best >= x.squaredNorm() - eps) break;
    if (std::find(S.begin(), S.end(), j) != S.end()) break;
    S.push_back(j);
    lambda.push_back(0.0);

    for (int minor = 0; minor < 1000; ++minor) {
      const auto k = static_cast<Eigen::Index>(S.size());
      Mat sys = Mat::Zero(k + 1, k + 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) sys(a, b) = q[S[a]].dot(q[S[b]]);
        sys(a, k) = 1.0;
        sys(k, a) = 1.0;
      }
      Vec rhs = Vec::Zero(k + 1);
      rhs[k] = 1.0;
      const Vec sol = sys.completeOrthogonalDecomposition().solve(rhs);
      const Vec alpha = sol.head(k);
      if (alpha.minCoeff() > 1e-15) {
        for (Eigen::Index a = 0; a < k; ++a) lambda[a] = alpha[a];
        break;
      }
      double step = 1.0;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (alpha[a] <= 1e-15) {
          const double denom = lambda[a] - alpha[a];
          if (denom > 0.0) step = std::min(step, lambda[a] / denom);
        }
      }
      for (Eigen::Index a = 0; a < k; ++a) lambda[a] += step * (alpha[a] - lambda[a]);
      std::vector<std::size_t> S2;
      std::vector<double> l2;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (lambda[a] > 1e-15) {
          S2.push_back(S[a]);
          l2.push_back(lambda[a]);
        }
      }
      if (S2.empty()) {
        S2.push_back(S.back());
        l2.push_back(1.0);
      }
      S = std::move(S2);
      lambda = std::move(l2);
    }
    const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
    x = Vec::Zero(dim_);
    for (std::size_t a = 0; a < S.size(); ++a) x += (lambda[a] / total) * q[S[a]];
  }
  Vec out = Vec::Zero(dim_);
  const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  for (std::size_t a = 0; a < S.size(); ++a) out += (lambda[a] / total) * points_[S[a]];
  return out;
}

std::optional<std::vector<Vec>> ConvexBody::vertices() const {
  switch (kind_) {
    case Kind::simplex: {
      std::vector<Vec> out;
      for (int i = 0; i < dim_; ++i) {
        Vec e = Vec::Zero(dim_);
        e[i] = 1.0;
        out.push_back(std::move(e));
      }
      return out;
    }
    case Kind::box: {
      if (dim_ > kMaxBoxVertexDim) return std::nullopt;
      std::vector<Vec> out;
      const std::size_t count = std::size_t{1} << dim_;
      out.reserve(count);
      for (std::size_t mask = 0; mask < count; ++mask) {
        Vec z(dim_);
        for (int i = 0; i < dim_; ++i) z[i] = (mask >> i) & 1U ? hi_[i] : lo_[i];
        out.push_back(std::move(z));
      }
      return out;
    }
    case Kind::vertex_polytope:
      return points_;
    case Kind::euclidean_ball:
    case Kind::frobenius_ball:
      if (dim_ == 1) return std::vector<Vec>{center_.array() - radius_, center_.array() + radius_};
      return std::nullopt;
  }
  return std::nullopt;
}

Vec ConvexBody::center() const { return center_; }

Vec ConvexBody::sample(std::mt19937_64& rng) const {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (kind_) {
    case Kind::simplex: {
      Vec w(dim_);
      for (int i = 0; i < dim_; ++i) w[i] = expo(rng);
      return w / w.sum();
    }
    case Kind::box: {
      Vec z(dim_);
      for (int i = 0; i < dim_; ++i) z[i] = lo_[i] + unif(rng) * (hi_[i] - lo_[i]);
      return z;
    }
    case Kind::euclidean_ball:
    case Kind::frobenius_ball: {
      Vec g(dim_);
      for (int i = 0; i < dim_; ++i) g[i] = gauss(rng);
      const double n = g.norm();
      if (n == 0.0) return center_;
      const double r = radius_ * std::pow(unif(rng), 1.0 / dim_);
      return center_ + (r / n) * g;
    }
    case Kind::vertex_polytope: {
      Vec z = Vec::Zero(dim_);
      double total = 0.0;
      std::vector<double> w(points_.size());
      for (double& x : w) {
        x = expo(rng);
        total += x;
      }
      for (std::size_t i = 0; i < points_.size(); ++i) z += (w[i] / total) * points_[i];
      return z;
    }
  }
  return center_;
}

std::string ConvexBody::describe() const { return to_json().dump(); }

nlohmann::json ConvexBody::to_json() const {
  nlohmann::json j;
  switch (kind_) {
    case Kind::simplex:
      j["kind"] = "simplex";
      j["dim"] = dim_;
      break;
    case Kind::box:
      j["kind"] = "box";
      j["lo"] = vec_to_json(lo_);
      j["hi"] = vec_to_json(hi_);
      break;
    case Kind::euclidean_ball:
      j["kind"] = "ball";
      j["center"] = vec_to_json(center_);
      j["radius"] = radius_;
      break;
    case Kind::vertex_polytope: {
      j["kind"] = "polytope";
      nlohmann::json vs = nlohmann::json::array();
      for (const Vec& v : points_) vs.push_back(vec_to_json(v));
      j["vertices"] = vs;
      break;
    }
    case Kind::frobenius_ball:
      j["kind"] = "frobenius_ball";
      j["rows"] = rows_;
      j["cols"] = cols_;
      j["radius"] = radius_;
      break;
  }
  return j;
}

ConvexBody ConvexBody::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "simplex") return simplex(j.at("dim").get<int>());
  if (kind == "box") {
    if (j.at("lo").is_number()) {
      const int d = j.at("dim").get<int>();
      return box(Vec::Constant(d, j.at("lo").get<double>()), Vec::Constant(d, j.at("hi").get<double>()));
    }
    return box(vec_from_json(j.at("lo")), vec_from_json(j.at("hi")));
  }
  if (kind == "ball") {
    Vec c = j.contains("center") ? vec_from_json(j.at("center")) : Vec::Zero(j.at("dim").get<int>());
    return ball(std::move(c), j.value("radius", 1.0));
  }
  if (kind == "polytope") {
    std::vector<Vec> vs;
    for (const auto& v : j.at("vertices")) vs.push_back(vec_from_json(v));
    return polytope(std::move(vs));
  }
  if (kind == "frobenius_ball")
    return frobenius_ball(j.at("rows").get<int>(), j.at("cols").get<int>(), j.value("radius", 1.0));
  throw ContractError("unknown body kind: " + kind);
}

// --- Distribution ---------------------------------------------------------

Distribution::Distribution(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
  require(!atoms_.empty(), "distribution: no atoms");
  double total = 0.0;
  const auto d = atoms_.front().point.size();
  for (const Atom& a : atoms_) {
    require(std::isfinite(a.weight) && a.weight >= 0.0 && a.weight <= 1.0 + 1e-12,
            "distribution: weight outside [0, 1]");
    require(a.point.size() == d, "distribution: atom dimension mismatch");
    require(all_finite(a.point), "distribution: non-finite atom");
    total += a.weight;
  }
  require(std::abs(total - 1.0) <= 1e-12, "distribution: weights do not sum to one");
}

Distribution Distribution::point_mass(Vec p) { return Distribution({Atom{std::move(p), 1.0}}); }

Distribution Distribution::uniform(const std::vector<Vec>& points) {
  require(!points.empty(), "uniform: no points");
  std::vector<Atom> atoms;
  atoms.reserve(points.size());
  const double w = 1.0 / static_cast<double>(points.size());
  for (const Vec& p : points) atoms.push_back({p, w});
  return normalized(std::move(atoms));
}

Distribution Distribution::normalized(std::vector<Atom> atoms) {
  double total = 0.0;
  for (const Atom& a : atoms) {
    require(std::isfinite(a.weight) && a.weight >= 0.0, "normalized: negative or non-finite weight");
    total += a.weight;
  }
  require(total > 0.0, "normalized: zero total weight");
  for (Atom& a : atoms) a.weight /= total;
  return Distribution(std::move(atoms));
}

Distribution Distribution::mixture(const Distribution& a, const Distribution& b, double gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, "mixture: gamma outside [0, 1]");
  std::vector<Atom> atoms;
  for (const Atom& x : a.atoms_) atoms.push_back({x.point, (1.0 - gamma) * x.weight});
  for (const Atom& x : b.atoms_) atoms.push_back({x.point, gamma * x.weight});
  Distribution d;
  d.atoms_ = std::move(atoms);
  return d;
}

Vec Distribution::mean() const {
  return expect([](const Vec& p) { return p; });
}

void Distribution::validate(const ConvexBody& body) const {
  require(!atoms_.empty(), "distribution: empty");
  for (const Atom& a : atoms_)
    require(body.contains(a.point), "distribution: atom outside body " + body.describe());
}

Distribution Distribution::coalesced(double tol) const {
  std::vector<Atom> out;
  for (const Atom& a : atoms_) {
    if (a.weight == 0.0) continue;
    bool merged = false;
    for (Atom& b : out) {
      if ((b.point - a.point).cwiseAbs().maxCoeff() <= tol) {
        b.weight += a.weight;
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back(a);
  }
  if (out.empty()) return *this;
  Distribution d;
  d.atoms_ = std::move(out);
  return d;
}

nlohmann::json Distribution::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const Atom& a : atoms_) arr.push_back({a.weight, vec_to_json(a.point)});
  return arr;
}

Distribution Distribution::from_json(const nlohmann::json& j) {
  std::vector<Atom> atoms;
  for (const auto& e : j) atoms.push_back({vec_from_json(e.at(1)), e.at(0).get<double>()});
  Distribution d;
  d.atoms_ = std::move(atoms);
  return d;
}

Distribution reduce_support(const Distribution& dist, const Mat& moments) {
  const auto k = static_cast<Eigen::Index>(dist.size());
  require(moments.rows() == k, "reduce_support: one moment row per atom required");
  const Eigen::Index m = moments.cols();
  // Working set of at most m + 2 atoms; each elimination removes one of them,
  // after which the next unseen atom joins.
  std::vector<Eigen::Index> work;
  std::vector<double> w;
  Eigen::Index next = 0;
  auto refill = [&] {
    while (static_cast<Eigen::Index>(work.size()) < m + 2 && next < k) {
      if (dist.atoms()[next].weight > 0.0) {
        work.push_back(next);
        w.push_back(dist.atoms()[next].weight);
      }
      ++next;
    }
  };
  refill();
  while (static_cast<Eigen::Index>(work.size()) > m + 1) {
    const auto n = static_cast<Eigen::Index>(work.size());
    Mat A(m + 1, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      A.block(0, c, m, 1) = moments.row(work[c]).transpose();
      A(m, c) = 1.0;
    }
    Eigen::FullPivLU<Mat> lu(A);
    Vec v = lu.kernel().col(0);
    if (v.maxCoeff() <= 0.0) v = -v;
    const double vmax = v.cwiseAbs().maxCoeff();
    double step = std::numeric_limits<double>::infinity();
    Eigen::Index drop = -1;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (v[c] > 1e-14 * vmax) {
        const double s = w[c] / v[c];
        if (s < step) {
          step = s;
          drop = c;
        }
      }
    }
    if (drop < 0) break;
    for (Eigen::Index c = 0; c < n; ++c) w[c] = std::max(0.0, w[c] - step * v[c]);
    w[drop] = 0.0;
    std::vector<Eigen::Index> w2i;
    std::vector<double> w2;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (w[c] > 0.0) {
        w2i.push_back(work[c]);
        w2.push_back(w[c]);
      }
    }
    work = std::move(w2i);
    w = std::move(w2);
    refill();
  }
  // Restore declared atom order.
  std::vector<std::size_t> order(work.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return work[a] < work[b]; });
  std::vector<Atom> atoms;
  for (std::size_t c : order) atoms.push_back({dist.atoms()[work[c]].point, w[c]});
  return Distribution::normalized(std::move(atoms));
}

}  // namespace mcr
