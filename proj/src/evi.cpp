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

#include "mcr/evi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mcr/matrix_game.hpp"

namespace mcr {

namespace {

constexpr std::size_t kMaxEnumeratedVertices = 64;
constexpr int kMidpointDelay = 8;
// A jump of S between two support atoms is bracketed down to this width
// (max-norm), kept above the 1e-13 tolerance that identifies candidates.
constexpr double kBracketWidth = 1e-12;

class CheckedOperator {
 public:
  CheckedOperator(const EviProblem& p) : problem_(p) {}

  Vec operator()(const Vec& point) {
    ++evaluations_;
    Vec s = problem_.op(point);
    if (s.size() != problem_.body.dim() || !all_finite(s)) {
      std::ostringstream os;
      os << "evi: operator returned an invalid vector at evaluation " << evaluations_;
      throw ContractError(os.str());
    }
    if (s.norm() > problem_.norm_bound + 1e-9 * std::max(1.0, problem_.norm_bound)) {
      std::ostringstream os;
      os << "evi: operator norm " << s.norm() << " exceeds declared bound " << problem_.norm_bound
         << " at evaluation " << evaluations_;
      throw ContractError(os.str());
    }
    return s;
  }

  long evaluations() const { return evaluations_; }

 private:
  const EviProblem& problem_;
  long evaluations_ = 0;
};

double step_size(const ConvexBody& body, double norm_bound, long i) {
  const double diam = body.diameter() > 0.0 ? body.diameter() : 1.0;
  const double bound = norm_bound > 0.0 ? norm_bound : 1.0;
  return diam / (bound * std::sqrt(static_cast<double>(i)));
}

Vec start_point(const EviProblem& problem, const EviOptions& options) {
  if (!options.random_start) return problem.body.center();
  std::mt19937_64 rng(options.seed);
  return problem.body.sample(rng);
}

// Gap of a weighted set of cached evaluations.
struct CachedCertificate {
  Vec a;
  double b = 0.0;
  double gap = 0.0;
  Vec worst;
};

CachedCertificate certify_cached(const ConvexBody& body, const std::vector<Vec>& values,
                                 const std::vector<double>& inner, const Vec& weights) {
  CachedCertificate c;
  c.a = Vec::Zero(body.dim());
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (weights[j] == 0.0) continue;
    c.a += weights[j] * values[j];
    c.b += weights[j] * inner[j];
  }
  c.worst = body.linopt(-c.a);
  c.gap = c.a.dot(c.worst) - c.b;
  return c;
}

struct Candidates {
  std::vector<Vec> points;
  std::vector<Vec> values;
  std::vector<double> inner;

  bool contains(const Vec& p) const {
    for (const Vec& q : points)
      if ((q - p).cwiseAbs().maxCoeff() <= 1e-13) return true;
    return false;
  }
  void add(const Vec& p, CheckedOperator& op) {
    Vec s = op(p);
    inner.push_back(s.dot(p));
    values.push_back(std::move(s));
    points.push_back(p);
  }
};

// Drops zero-weight atoms; optionally applies support reduction and keeps it
// only if the certificate stays within max(target, uncompressed gap).
EviSolution finish(const EviProblem& problem, const EviOptions& options, const Candidates& cands,
                   const Vec& weights, long iterations, long evaluations) {
  std::vector<Atom> atoms;
  std::vector<Vec> vals;
  std::vector<double> inner;
  for (std::size_t j = 0; j < cands.points.size(); ++j) {
    if (weights[j] <= 0.0) continue;
    atoms.push_back({cands.points[j], weights[j]});
    vals.push_back(cands.values[j]);
    inner.push_back(cands.inner[j]);
  }
  Distribution dist = Distribution::normalized(atoms);
  Vec w(static_cast<Eigen::Index>(dist.size()));
  for (std::size_t j = 0; j < dist.size(); ++j) w[j] = dist.atoms()[j].weight;
  CachedCertificate cert = certify_cached(problem.body, vals, inner, w);

  const int d = problem.body.dim();
  if (options.compress && dist.size() > static_cast<std::size_t>(d + 2)) {
    Mat moments(static_cast<Eigen::Index>(dist.size()), d + 1);
    for (std::size_t j = 0; j < dist.size(); ++j) {
      moments.block(j, 0, 1, d) = vals[j].transpose();
      moments(j, d) = inner[j];
    }
    Distribution reduced = reduce_support(dist, moments);
    // Map reduced atoms back to cached evaluations by position.
    std::vector<Vec> rvals;
    std::vector<double> rinner;
    Vec rw(static_cast<Eigen::Index>(reduced.size()));
    std::size_t cursor = 0;
    for (std::size_t r = 0; r < reduced.size(); ++r) {
      while (dist.atoms()[cursor].point != reduced.atoms()[r].point) ++cursor;
      rvals.push_back(vals[cursor]);
      rinner.push_back(inner[cursor]);
      rw[r] = reduced.atoms()[r].weight;
      ++cursor;
    }
    CachedCertificate rcert = certify_cached(problem.body, rvals, rinner, rw);
    if (rcert.gap <= std::max(problem.target_eps, cert.gap)) {
      dist = std::move(reduced);
      cert = rcert;
    }
  }
  EviSolution sol;
  sol.dist = std::move(dist);
  sol.certified_gap = cert.gap;
  sol.iterations = iterations;
  sol.evaluations = evaluations;
  sol.met_target = cert.gap <= problem.target_eps;
  return sol;
}

EviSolution solve_regret(const EviProblem& problem, const EviOptions& options) {
  CheckedOperator op(problem);
  const ConvexBody& body = problem.body;
  const long cap = std::max(1L, std::min(regret_iteration_bound(problem), options.max_iterations));
  Candidates cands;
  Vec a = Vec::Zero(body.dim());
  double b = 0.0;
  Vec y = start_point(problem, options);
  long i = 1;
  for (;; ++i) {
    cands.add(y, op);
    a += cands.values.back();
    b += cands.inner.back();
    const double gap = (a.dot(body.linopt(-a)) - b) / static_cast<double>(i);
    if (gap <= problem.target_eps || i >= cap) break;
    y = body.project(y + step_size(body, problem.norm_bound, i) * cands.values.back());
  }
  const Vec w = Vec::Constant(static_cast<Eigen::Index>(cands.points.size()), 1.0 / static_cast<double>(i));
  return finish(problem, options, cands, w, i, op.evaluations());
}

EviSolution solve_refined(const EviProblem& problem, const EviOptions& options) {
  CheckedOperator op(problem);
  const ConvexBody& body = problem.body;
  const int d = body.dim();
  Candidates cands;

  Vec y = start_point(problem, options);
  for (int i = 1; i <= std::max(1, options.warm_start); ++i) {
    if (!cands.contains(y)) cands.add(y, op);
    const Vec& s = cands.values.back();
    if (s.isZero(0.0)) break;
    y = body.project(y + step_size(body, problem.norm_bound, i) * s);
  }

  std::vector<Vec> outcomes;
  bool complete = false;
  if (auto verts = body.vertices(); verts && verts->size() <= kMaxEnumeratedVertices) {
    outcomes = std::move(*verts);
    complete = true;
  } else {
    Vec a = Vec::Zero(d);
    for (const Vec& s : cands.values) a += s;
    outcomes.push_back(body.linopt(-a));
    outcomes.push_back(body.center());
  }

  double best_gap = std::numeric_limits<double>::infinity();
  Candidates best;
  Vec best_w;
  int rounds = 0;
  for (; rounds < options.max_oracle_rounds; ++rounds) {
    const auto m = static_cast<Eigen::Index>(outcomes.size());
    const auto n = static_cast<Eigen::Index>(cands.points.size());
    Mat payoff(m, n);
    for (Eigen::Index v = 0; v < m; ++v)
      for (Eigen::Index j = 0; j < n; ++j) payoff(v, j) = cands.values[j].dot(outcomes[v]) - cands.inner[j];
    const GameSolution game = solve_matrix_game(payoff);
    const Vec& w = game.column_strategy;
    const CachedCertificate cert = certify_cached(body, cands.values, cands.inner, w);
    if (cert.gap < best_gap) {
      best_gap = cert.gap;
      best = cands;
      best_w = w;
    }
    if (best_gap <= problem.target_eps) break;

    bool added = false;
    Vec mixed = Vec::Zero(d);
    for (Eigen::Index v = 0; v < m; ++v) mixed += game.row_strategy[v] * outcomes[v];
    mixed = body.project(mixed);

    // Keep the current support plus new candidates so the game stays small.
    Candidates kept;
    std::vector<double> weights;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (w[j] > 0.0) {
        weights.push_back(w[j]);
        kept.points.push_back(cands.points[j]);
        kept.values.push_back(cands.values[j]);
        kept.inner.push_back(cands.inner[j]);
      }
    }
    const std::size_t support = kept.points.size();
    if (!kept.contains(mixed)) {
      kept.add(mixed, op);
      added = true;
    }
    // Projection steps from the mean move toward a fixed point of
    // p ↦ proj(p + ηS(p)); on curved bodies the mean alone converges slowly.
    Vec s;
    for (std::size_t j = 0; j < kept.points.size(); ++j)
      if ((kept.points[j] - mixed).cwiseAbs().maxCoeff() <= 1e-13) s = kept.values[j];
    if (const double ns = s.norm(); ns > 0.0) {
      const double diam = body.diameter() > 0.0 ? body.diameter() : 1.0;
      for (const double scale : {1.0, 0.1, 0.01}) {
        const double eta = scale * diam / (ns * std::sqrt(rounds + 1.0));
        const Vec z = body.project(mixed + eta * s);
        if (!kept.contains(z)) {
          kept.add(z, op);
          added = true;
        }
      }
    }
    // Pairs of the heaviest support atoms close in on discontinuities of S,
    // where the solution mixes atoms on both sides of a boundary. A pair whose
    // segment contains a jump contributes the two points bracketing it; other
    // pairs contribute their midpoint. This starts once the plain oracle has
    // had a few rounds.
    std::vector<std::size_t> order(support);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return weights[i] > weights[j]; });
    order.resize(rounds < kMidpointDelay ? 0 : std::min<std::size_t>(support, 3));
    auto add_new = [&](const Vec& p) {
      if (!kept.contains(p)) {
        kept.add(p, op);
        added = true;
      }
    };
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const Vec pa = kept.points[order[i]], pb = kept.points[order[j]];
        const Vec sa = kept.values[order[i]], sb = kept.values[order[j]];
        const double spread = (sa - sb).norm();
        if (spread == 0.0) {
          add_new(0.5 * (pa + pb));
          continue;
        }
        Vec lo = pa, hi = pb, slo = sa, shi = sb;
        while ((hi - lo).cwiseAbs().maxCoeff() > kBracketWidth) {
          const Vec mid = 0.5 * (lo + hi);
          const Vec sm = op(mid);
          if ((sm - sa).norm() <= (sm - sb).norm()) {
            lo = mid;
            slo = sm;
          } else {
            hi = mid;
            shi = sm;
          }
        }
        if ((shi - slo).norm() > 1e-6 * spread) {
          add_new(lo);
          add_new(hi);
        } else {
          add_new(0.5 * (pa + pb));
        }
      }
    cands = std::move(kept);

    if (!complete) {
      bool seen = false;
      for (const Vec& o : outcomes)
        if ((o - cert.worst).cwiseAbs().maxCoeff() <= 1e-13) seen = true;
      if (!seen) {
        outcomes.push_back(cert.worst);
        added = true;
      }
    }
    if (!added) break;
  }
  return finish(problem, options, best, best_w, rounds + 1, op.evaluations());
}

}  // namespace

long regret_iteration_bound(const EviProblem& problem) {
  const double r = problem.body.outer_radius();
  if (problem.norm_bound == 0.0 || r == 0.0) return 1;
  const double k = std::ceil(std::pow(4.0 * problem.norm_bound * r / problem.target_eps, 2));
  if (!(k < 9e18)) return std::numeric_limits<long>::max();
  return std::max(1L, static_cast<long>(k));
}

EviSolution solve_evi(const EviProblem& problem, const EviOptions& options) {
  require(static_cast<bool>(problem.op), "evi: missing operator");
  require(std::isfinite(problem.target_eps) && problem.target_eps > 0.0, "evi: target must be positive");
  require(std::isfinite(problem.norm_bound) && problem.norm_bound >= 0.0, "evi: bad norm bound");
  if (options.method == EviMethod::regret) return solve_regret(problem, options);
  return solve_refined(problem, options);
}

EviCertificate certify_evi_detail(const Distribution& dist, const Operator& op, const ConvexBody& body) {
  require(!dist.empty(), "certify: empty distribution");
  EviCertificate c;
  c.mean_operator = Vec::Zero(body.dim());
  for (const Atom& atom : dist.atoms()) {
    const Vec s = op(atom.point);
    require(s.size() == body.dim(), "certify: operator dimension mismatch");
    c.mean_operator += atom.weight * s;
    c.mean_inner += atom.weight * s.dot(atom.point);
  }
  c.worst_outcome = body.linopt(-c.mean_operator);
  c.gap = c.mean_operator.dot(c.worst_outcome) - c.mean_inner;
  return c;
}

double certify_evi(const Distribution& dist, const Operator& op, const ConvexBody& body) {
  return certify_evi_detail(dist, op, body).gap;
}

double eps_schedule(int t, EpsPolicy policy) {
  require(t >= 1, "eps_schedule: round index must be positive");
  const double td = static_cast<double>(t);
  switch (policy) {
    case EpsPolicy::inverse_square_tenth:
      return 1.0 / (10.0 * td * td);
    case EpsPolicy::inverse_square:
      return 1.0 / (td * td);
    case EpsPolicy::inverse:
      return 1.0 / td;
    case EpsPolicy::inverse_sqrt:
      return 1.0 / std::sqrt(td);
  }
  return 1.0;
}

EpsPolicy eps_policy_from_string(const std::string& s) {
  if (s == "default" || s == "tenth-inverse-square") return EpsPolicy::inverse_square_tenth;
  if (s == "square" || s == "inverse-square") return EpsPolicy::inverse_square;
  if (s == "inverse") return EpsPolicy::inverse;
  if (s == "sqrt" || s == "inverse-sqrt") return EpsPolicy::inverse_sqrt;
  throw ContractError("unknown eps policy: " + s);
}

std::string to_string(EpsPolicy policy) {
  switch (policy) {
    case EpsPolicy::inverse_square_tenth:
      return "default";
    case EpsPolicy::inverse_square:
      return "square";
    case EpsPolicy::inverse:
      return "inverse";
    case EpsPolicy::inverse_sqrt:
      return "sqrt";
  }
  return "default";
}

}  // namespace mcr
