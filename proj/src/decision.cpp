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

#include "mcr/decision.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mcr/rng.hpp"

namespace mcr {

Vec best_response(const Vec& p, const ConvexBody& Z) { return Z.linopt(p); }

BestResponseCache::BestResponseCache(ConvexBody Z, std::size_t capacity) : Z_(std::move(Z)), capacity_(capacity) {}

const Vec& BestResponseCache::operator()(const Vec& p) {
  if (p.size() == last_p_.size() && p == last_p_) {
    ++hits_;
    return last_z_;
  }
  last_p_ = p;
  last_z_ = lookup(p);
  return last_z_;
}

const Vec& BestResponseCache::lookup(const Vec& p) {
  std::string key(reinterpret_cast<const char*>(p.data()), sizeof(double) * static_cast<std::size_t>(p.size()));
  auto it = table_.find(key);
  if (it != table_.end()) {
    ++hits_;
    return it->second;
  }
  if (table_.size() >= capacity_) table_.clear();
  return table_.emplace(std::move(key), Z_.linopt(p)).first->second;
}

// --- deviations ---------------------------------------------------------------

Deviation Deviation::constant(Vec z) {
  Deviation d;
  d.kind = Kind::constant;
  d.name = "const";
  d.target = z;
  d.eval = [z](const Context&, const Vec&) { return z; };
  return d;
}

Deviation Deviation::finite_swap(std::vector<int> swap) {
  const int n = static_cast<int>(swap.size());
  require(n > 0, "finite swap: empty table");
  for (int j : swap) require(j >= 0 && j < n, "finite swap: target outside the vertex range");
  Deviation d;
  d.kind = Kind::finite_swap;
  d.name = "swap";
  for (int j : swap) d.name += std::to_string(j);
  d.swap = swap;
  d.eval = [swap, n](const Context&, const Vec& z) {
    require(z.size() == n, "finite swap: point dimension mismatch");
    Vec out = Vec::Zero(n);
    for (int i = 0; i < n; ++i) out[swap[static_cast<std::size_t>(i)]] += z[i];
    return out;
  };
  return d;
}

Deviation Deviation::linear(Mat M, Vec b) {
  require(M.rows() == M.cols() && M.rows() > 0, "linear deviation: matrix must be square");
  if (b.size() == 0) b = Vec::Zero(M.rows());
  require(b.size() == M.rows(), "linear deviation: offset dimension mismatch");
  Deviation d;
  d.kind = Kind::linear;
  d.name = "linear";
  d.matrix = M;
  d.offset = b;
  d.spectral = Eigen::JacobiSVD<Mat>(M).singularValues()(0);
  d.eval = [M, b](const Context&, const Vec& z) -> Vec { return M * z + b; };
  return d;
}

Deviation Deviation::identity(int dim) {
  Deviation d = linear(Mat::Identity(dim, dim));
  d.name = "identity";
  return d;
}

Deviation Deviation::kernel(MatrixKernel gamma, std::vector<Context> xs, std::vector<Vec> zs, std::vector<Vec> ws,
                            Vec c) {
  require(xs.size() == zs.size() && zs.size() == ws.size(), "kernel deviation: ragged representers");
  require(c.size() == gamma.dim(), "kernel deviation: constant dimension mismatch");
  double sq = c.squaredNorm();
  for (std::size_t j = 0; j < zs.size(); ++j)
    for (std::size_t k = 0; k < zs.size(); ++k) sq += ws[j].dot(gamma.apply(xs[j], zs[j], xs[k], zs[k], ws[k]));
  Deviation d;
  d.kind = Kind::kernel;
  d.name = "kernel";
  d.offset = c;
  d.rkhs_norm = std::sqrt(std::max(sq, 0.0));
  auto g = std::make_shared<const MatrixKernel>(std::move(gamma));
  d.eval = [g, xs = std::move(xs), zs = std::move(zs), ws = std::move(ws), c](const Context& x, const Vec& z) {
    Vec out = c;
    for (std::size_t j = 0; j < zs.size(); ++j) out.noalias() += g->apply(x, z, xs[j], zs[j], ws[j]);
    return out;
  };
  return d;
}

bool is_endomorphic(const Deviation& phi, const ConvexBody& Z, const std::vector<std::pair<Context, Vec>>& probes) {
  const double tol = Z.tolerance();
  const bool affine_kind = phi.kind != Deviation::Kind::kernel;
  if (affine_kind) {
    if (auto vs = Z.vertices()) {
      for (const Vec& v : *vs)
        if (!Z.contains(phi(Context(), v), tol)) return false;
      return true;
    }
  }
  for (const auto& [x, z] : probes)
    if (!Z.contains(phi(x, z), tol)) return false;
  return true;
}

TestFunction phi_test(const Deviation& phi, const ConvexBody& Z, const ConvexBody& L,
                      std::shared_ptr<BestResponseCache> sigma) {
  require(Z.dim() == L.dim(), "phi test: strategy and loss dimensions differ");
  if (!sigma) sigma = std::make_shared<BestResponseCache>(Z);
  TestFunction h;
  h.name = "h_" + phi.name;
  const auto eval = phi.eval;
  h.eval = [sigma, eval](const Context& x, const Vec& p) -> Vec {
    const Vec& z = (*sigma)(p);
    return z - eval(x, z);
  };
  // σ(p) and φ(σ(p)) both lie in Z for endomorphic φ.
  h.norm_bound = Z.diameter();
  h.value_bound = value_bound_for(L, h.norm_bound);
  return h;
}

// --- decision maker -----------------------------------------------------------

PhiDecisionMaker::PhiDecisionMaker(ForecastEngine& forecaster, ConvexBody Z)
    : forecaster_(forecaster), sigma_(Z) {
  require(forecaster_.body().dim() == Z.dim(), "decision maker: loss and strategy dimensions differ");
  transcript_.Z = std::move(Z);
  transcript_.L = forecaster_.body();
}

const Distribution& PhiDecisionMaker::decide(const Context& x) {
  if (awaiting_) throw ProtocolError("decision maker: decide called before the previous loss");
  DecisionRound r;
  r.t = transcript_.horizon() + 1;
  r.x = x;
  r.forecast = forecaster_.predict(x);
  sigma_.clear();
  r.mixed = r.forecast.pushforward([&](const Vec& p) { return sigma_(p); });
  transcript_.rounds.push_back(std::move(r));
  awaiting_ = true;
  return transcript_.rounds.back().mixed;
}

void PhiDecisionMaker::observe(const Vec& loss) {
  if (!awaiting_) throw ProtocolError("decision maker: observe called without a pending decision");
  forecaster_.observe(loss);
  transcript_.rounds.back().loss = loss;
  awaiting_ = false;
}

// --- audits -------------------------------------------------------------------

namespace {

const Vec& realized_loss(const DecisionRound& r) {
  if (!r.loss) throw ProtocolError("phi audit: loss of round " + std::to_string(r.t) + " is missing");
  return *r.loss;
}

}  // namespace

PhiRegret phi_regret(const DecisionTranscript& tr, const Deviation& phi) {
  PhiRegret out;
  const TestFunction h = phi_test(phi, tr.Z, tr.L);
  out.max_slack = tr.rounds.empty() ? 0.0 : -INFINITY;
  for (const DecisionRound& r : tr.rounds) {
    const Vec& l = realized_loss(r);
    const double reg = r.mixed.expect_scalar([&](const Vec& z) { return l.dot(z - phi(r.x, z)); });
    double mc = 0.0, slack = 0.0;
    for (const Atom& a : r.forecast.atoms()) {
      const Vec hv = h(r.x, a.point);
      mc += a.weight * hv.dot(l - a.point);
      slack += a.weight * hv.dot(a.point);
    }
    out.regret += reg;
    out.mc_error += mc;
    out.slack += slack;
    out.max_slack = std::max(out.max_slack, slack);
    out.per_round.push_back(reg);
  }
  return out;
}

double external_regret(const DecisionTranscript& tr) {
  double incurred = 0.0;
  Vec total = Vec::Zero(tr.Z.dim());
  for (const DecisionRound& r : tr.rounds) {
    const Vec& l = realized_loss(r);
    incurred += l.dot(r.mixed.mean());
    total += l;
  }
  return incurred - total.dot(tr.Z.linopt(total));
}

double swap_regret(const DecisionTranscript& tr) {
  require(tr.Z.kind() == ConvexBody::Kind::simplex, "swap regret: strategy set must be a simplex");
  const int d = tr.Z.dim();
  // gain(i, j) = Σ_t μ_t(i)(ℓ_t[i] − ℓ_t[j])
  Mat gain = Mat::Zero(d, d);
  for (const DecisionRound& r : tr.rounds) {
    const Vec& l = realized_loss(r);
    const Vec mu = r.mixed.mean();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) gain(i, j) += mu[i] * (l[i] - l[j]);
  }
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += gain.row(i).maxCoeff();
  return s;
}

std::vector<Deviation> all_vertex_swaps(int d) {
  require(d >= 1 && d <= 7, "vertex swaps: dimension out of range");
  std::vector<Deviation> out;
  std::vector<int> map(static_cast<std::size_t>(d), 0);
  while (true) {
    out.push_back(Deviation::finite_swap(map));
    int i = d - 1;
    while (i >= 0 && map[static_cast<std::size_t>(i)] == d - 1) map[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++map[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<Deviation> pairwise_swaps(int d) {
  std::vector<Deviation> out;
  std::vector<int> id(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) id[static_cast<std::size_t>(i)] = i;
  out.push_back(Deviation::finite_swap(id));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      auto m = id;
      m[static_cast<std::size_t>(i)] = j;
      out.push_back(Deviation::finite_swap(m));
    }
  return out;
}

LedgerReport phi_ledger(const DecisionTranscript& tr, const std::vector<Deviation>& deviations, double tol) {
  LedgerReport rep;
  rep.title = "phi-regret ledger";
  const double T = tr.horizon();
  for (const Deviation& phi : deviations) {
    const PhiRegret pr = phi_regret(tr, phi);
    rep.rows.push_back({"regret " + phi.name, pr.regret, pr.mc_error + tol * T, pr.regret <= pr.mc_error + tol * T,
                        {{"slack", pr.slack}}});
    rep.rows.push_back({"slack " + phi.name, pr.max_slack, tol, pr.max_slack <= tol, nlohmann::json::object()});
    const double split = std::abs(pr.regret - pr.mc_error - pr.slack);
    const double scale = 1e-9 * std::max(1.0, std::abs(pr.regret) + std::abs(pr.mc_error));
    rep.rows.push_back({"split " + phi.name, split, scale, split <= scale, nlohmann::json::object()});
  }
  return rep;
}

// --- samplers -----------------------------------------------------------------

namespace {

bool maps_vertices_inside(const Mat& M, const Vec& b, const std::vector<Vec>& vs, const ConvexBody& Z) {
  for (const Vec& v : vs)
    if (!Z.contains(M * v + b, Z.tolerance())) return false;
  return true;
}

// Largest s ∈ [0,1] (to 1e-6) with (1−s)I + sR, s·b mapping every vertex into Z.
double mixing_limit(const Mat& R, const Vec& b, const std::vector<Vec>& vs, const ConvexBody& Z) {
  const Mat I = Mat::Identity(R.rows(), R.cols());
  if (maps_vertices_inside(R, b, vs, Z)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 20; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (maps_vertices_inside((1.0 - mid) * I + mid * R, mid * b, vs, Z)) lo = mid; else hi = mid;
  }
  return lo;
}

Vec random_simplex_point(std::mt19937_64& rng, int d) {
  std::exponential_distribution<double> e(1.0);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = e(rng);
  return v / v.sum();
}

}  // namespace

std::vector<Deviation> sample_linear_endomorphisms(const ConvexBody& Z, int count, std::uint64_t seed, bool affine) {
  require(count >= 0, "endomorphism sampler: negative count");
  const int d = Z.dim();
  auto rng = derive_stream(seed, 0, RngTag::audit);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Deviation> out;
  for (int k = 0; k < count; ++k) {
    Mat M(d, d);
    Vec b = Vec::Zero(d);
    switch (Z.kind()) {
      case ConvexBody::Kind::simplex:
        // Affine maps of the simplex are linear on it; b stays zero.
        for (int j = 0; j < d; ++j) M.col(j) = random_simplex_point(rng, d);
        break;
      case ConvexBody::Kind::euclidean_ball: {
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) M(i, j) = normal(rng);
        const double a = unif(rng);
        M *= a / Eigen::JacobiSVD<Mat>(M).singularValues()(0);
        const Vec c = Z.center();
        if (affine) {
          // z ↦ c + M(z − c) + u with ‖u‖ ≤ (1 − a)r.
          Vec u(d);
          for (int i = 0; i < d; ++i) u[i] = normal(rng);
          u *= (1.0 - a) * Z.radius() * unif(rng) / std::max(u.norm(), 1e-300);
          b = c - M * c + u;
        } else {
          require(c.norm() == 0.0, "endomorphism sampler: linear maps need an origin-centered ball; use affine");
        }
        break;
      }
      case ConvexBody::Kind::box: {
        const Vec lo = Z.lo(), hi = Z.hi();
        // Nonnegative rows with sums ≤ 1 map [0,1]^d into itself; conjugate by
        // the box scaling. Exact for boxes anchored at the origin.
        Mat R(d, d);
        for (int i = 0; i < d; ++i) {
          for (int j = 0; j < d; ++j) R(i, j) = unif(rng);
          R.row(i) *= unif(rng) / R.row(i).sum();
        }
        Vec u = Vec::Zero(d);
        if (affine) {
          for (int i = 0; i < d; ++i) u[i] = (1.0 - R.row(i).sum()) * unif(rng);
        }
        const Vec w = hi - lo;
        M = w.asDiagonal() * R * w.cwiseInverse().asDiagonal();
        b = affine ? Vec(lo + w.cwiseProduct(u) - M * lo) : Vec::Zero(d);
        break;
      }
      case ConvexBody::Kind::vertex_polytope:
      case ConvexBody::Kind::frobenius_ball: {
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) M(i, j) = (i == j ? 1.0 : 0.0) + 0.5 * normal(rng);
        if (affine)
          for (int i = 0; i < d; ++i) b[i] = 0.1 * normal(rng);
        break;
      }
    }
    if (auto vs = Z.vertices()) {
      if (!maps_vertices_inside(M, b, *vs, Z)) {
        const double s = mixing_limit(M, b, *vs, Z) * unif(rng);
        M = (1.0 - s) * Mat::Identity(d, d) + s * M;
        b *= s;
      }
      if (!maps_vertices_inside(M, b, *vs, Z)) continue;
    }
    Deviation dev = Deviation::linear(M, b);
    dev.name = (affine ? "affine" : "linear") + std::to_string(k);
    out.push_back(std::move(dev));
  }
  return out;
}

std::vector<Deviation> sample_kernel_deviations(const MatrixKernel& gamma, const ConvexBody& Z, int count, int atoms,
                                                std::uint64_t seed,
                                                const std::vector<std::pair<Context, Vec>>& probes) {
  require(gamma.dim() == Z.dim(), "kernel deviation sampler: dimension mismatch");
  auto rng = derive_stream(seed, 1, RngTag::audit);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::pair<Context, Vec>> checks = probes;
  const Context x0 = probes.empty() ? Context() : probes.front().first;
  if (auto vs = Z.vertices())
    for (const Vec& v : *vs) checks.emplace_back(x0, v);
  std::vector<Deviation> out;
  const int d = Z.dim();
  for (int k = 0; k < count; ++k) {
    const Vec c = Z.center() + 0.5 * (Z.sample(rng) - Z.center());
    std::vector<Context> xs;
    std::vector<Vec> zs, ws;
    for (int j = 0; j < atoms; ++j) {
      xs.push_back(probes.empty() ? Context() : probes[static_cast<std::size_t>(rng() % probes.size())].first);
      zs.push_back(Z.sample(rng));
      Vec w(d);
      for (int i = 0; i < d; ++i) w[i] = normal(rng);
      if (Z.kind() == ConvexBody::Kind::simplex) w.array() -= w.mean();
      ws.push_back(w);
    }
    double scale = 1.0;
    std::optional<Deviation> accepted;
    for (int halving = 0; halving < 40 && !accepted; ++halving, scale *= 0.5) {
      std::vector<Vec> scaled = ws;
      for (Vec& w : scaled) w *= scale;
      Deviation dev = Deviation::kernel(gamma, xs, zs, scaled, c);
      if (is_endomorphic(dev, Z, checks)) accepted = std::move(dev);
    }
    if (!accepted) continue;
    accepted->name = "kernel" + std::to_string(k);
    out.push_back(std::move(*accepted));
  }
  return out;
}

// --- engines ------------------------------------------------------------------

FeatureMap best_response_features(const ConvexBody& Z, bool affine) {
  const int d = Z.dim();
  const int c = affine ? d + 1 : d;
  FeatureMap f;
  f.name = affine ? "best-response-affine" : "best-response";
  f.features = d * c;
  f.dim = d;
  auto sigma = std::make_shared<BestResponseCache>(Z);
  f.eval = [sigma, d, c, affine](const Context&, const Vec& p) {
    const Vec& z = (*sigma)(p);
    Mat psi = Mat::Zero(d * c, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) psi(i * c + j, i) = z[j];
      if (affine) psi(i * c + d, i) = 1.0;
    }
    return psi;
  };
  // ‖Ψᵀθ‖ = ‖M u‖ ≤ ‖θ‖·‖u‖ with u = σ(p) or (σ(p), 1).
  const double B = Z.outer_radius();
  f.op_norm_bound = affine ? std::sqrt(B * B + 1.0) : B;
  return f;
}

LinearSwapEngine linear_swap_engine(const ConvexBody& Z, const ConvexBody& L, const LinearSwapConfig& config) {
  require(Z.dim() == L.dim(), "linear swap engine: dimension mismatch");
  require(config.spectral_bound >= 1.0, "linear swap engine: the identity forces S ≥ 1");
  require(config.horizon >= 1, "linear swap engine: horizon must be positive");
  const int d = Z.dim();
  const double sd = std::sqrt(static_cast<double>(d));
  const double S = config.spectral_bound;
  const double B = Z.outer_radius();
  LinearSwapEngine e;
  // θ = [I − M, −b] for the deviation z ↦ Mz + b; ‖b‖ ≤ B(1 + S).
  e.rho = sd + sd * S + (config.affine ? B * (1.0 + S) : 0.0);
  e.family = std::make_shared<LinearFamily>(best_response_features(Z, config.affine));
  const double grad = L.diameter() * e.family->features().op_norm_bound;
  const ConvexBody ball = ConvexBody::frobenius_ball(d, config.affine ? d + 1 : d, e.rho);
  e.step = Ogd::default_rate(ball, std::max(grad, 1e-12), config.horizon);
  e.forecaster = std::make_unique<Forecaster>(L, e.family, std::make_unique<Ogd>(ball, e.step), config.forecaster);
  return e;
}

MatrixKernel constant_kernel(int dim, double c) {
  require(c >= 0.0, "constant kernel: scale must be nonnegative");
  return MatrixKernel::custom("constant", dim, c, [dim, c](const Context&, const Vec&, const Context&, const Vec&) {
    return Mat(c * Mat::Identity(dim, dim));
  });
}

MatrixKernel rkhs_phi_kernel(const MatrixKernel& gamma, const ConvexBody& Z) {
  require(gamma.dim() == Z.dim(), "phi kernel: dimension mismatch");
  auto sigma = std::make_shared<BestResponseCache>(Z);
  const double B = Z.outer_radius();
  return MatrixKernel::custom(
      "phi(" + gamma.name() + ")", Z.dim(), B * B + gamma.op_norm_bound(),
      [sigma, gamma](const Context& x, const Vec& p, const Context& x2, const Vec& p2) -> Mat {
        const Vec z = (*sigma)(p);
        const Vec& z2 = (*sigma)(p2);
        return z * z2.transpose() + gamma(x, z, x2, z2);
      });
}

std::unique_ptr<Forecaster> finite_phi_forecaster(const std::vector<Deviation>& deviations, const ConvexBody& Z,
                                                  const ConvexBody& L, int horizon, ForecasterOptions options) {
  require(!deviations.empty(), "finite phi forecaster: no deviations");
  std::vector<TestFunction> members;
  auto sigma = std::make_shared<BestResponseCache>(Z);
  for (const Deviation& phi : deviations) members.push_back(phi_test(phi, Z, L, sigma));
  auto family = std::make_shared<FiniteFamily>(std::move(members), L.dim());
  // Affine deviations φ_i(z) = M_i z + b_i fold into one map per round:
  // Σ w_i h_i(p) = (Σ w_i)σ(p) − M_w σ(p) − b_w.
  const int d = Z.dim();
  std::vector<Mat> Ms;
  std::vector<Vec> bs;
  for (const Deviation& phi : deviations) {
    Mat M = Mat::Zero(d, d);
    Vec b = Vec::Zero(d);
    if (phi.kind == Deviation::Kind::constant) {
      b = phi.target;
    } else if (phi.kind == Deviation::Kind::finite_swap) {
      for (int i = 0; i < d; ++i) M(phi.swap[static_cast<std::size_t>(i)], i) = 1.0;
    } else if (phi.kind == Deviation::Kind::linear) {
      M = phi.matrix;
      b = phi.offset;
    } else {
      break;
    }
    Ms.push_back(std::move(M));
    bs.push_back(std::move(b));
  }
  if (Ms.size() == deviations.size()) {
    family->set_combiner([Ms, bs, sigma, d](const Vec& w, const Context&) -> std::function<Vec(const Vec&)> {
      Mat Mw = Mat::Zero(d, d);
      Vec bw = Vec::Zero(d);
      double s = 0.0;
      for (std::size_t i = 0; i < Ms.size(); ++i) {
        const double wi = w[static_cast<Eigen::Index>(i)];
        if (wi == 0.0) continue;
        Mw.noalias() += wi * Ms[i];
        bw.noalias() += wi * bs[i];
        s += wi;
      }
      return [Mw, bw, s, sigma](const Vec& p) -> Vec {
        const Vec& z = (*sigma)(p);
        return s * z - Mw * z - bw;
      };
    });
  }
  const int n = family->param_dim();
  const double eta = Hedge::default_rate(n, horizon, family->loss_range());
  return std::make_unique<Forecaster>(L, family, std::make_unique<Hedge>(n, eta), std::move(options));
}

LedgerReport kernel_phi_ledger(const Transcript& forecasts, const MatrixKernel& gamma_prime,
                               const std::vector<Deviation>& deviations, const ConvexBody& Z, const ConvexBody& L,
                               double tol) {
  LedgerReport rep;
  rep.title = "kernel phi ledger";
  const double energy = kernel_residual_energy(forecasts, gamma_prime);
  const double evi = evi_total(forecasts);
  const double root = std::sqrt(std::max(energy + 2.0 * evi, 0.0));
  for (const Deviation& phi : deviations) {
    const double mc = mc_error(forecasts, phi_test(phi, Z, L)).total;
    const double norm = std::sqrt(1.0 + phi.rkhs_norm * phi.rkhs_norm);
    const double rhs = norm * root + tol * forecasts.horizon();
    rep.rows.push_back({"mc-err " + phi.name, std::abs(mc), rhs, std::abs(mc) <= rhs,
                        {{"energy", energy}, {"evi", evi}, {"norm", norm}}});
  }
  return rep;
}

}  // namespace mcr
