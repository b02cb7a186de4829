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

// mcr_acceptance [--only 1,4,...] [--configs DIR]
//
// Acceptance suite. Prints one PASS/FAIL line per criterion with its pinned
// tolerance. Ledgers are recomputed here from transcripts with code that does
// not call the library's audit functions, so each side checks the other.
// Exit code 0 when every selected criterion passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcr/harness.hpp"
#include "mcr/rng.hpp"

#ifndef MCR_SOURCE_DIR
#define MCR_SOURCE_DIR "."
#endif

namespace {

using namespace mcr;
using nlohmann::json;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

const Vec& outcome(const ForecastRound& r) {
  if (!r.y) throw ProtocolError("acceptance: unresolved outcome in round " + std::to_string(r.t));
  return *r.y;
}

using Field = std::function<Vec(const Context&, const Vec&)>;

double correlation(const Field& h, const Context& x, const Distribution& d, const Vec& y) {
  double s = 0.0;
  for (const Atom& a : d.atoms()) s += a.weight * h(x, a.point).dot(y - a.point);
  return s;
}

// Σ_t E_{p~audited D_t}[h(x_t,p)ᵀ(y_t − p)].
double mc_direct(const Transcript& tr, const Field& h) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) s += correlation(h, r.x, r.audited(), outcome(r));
  return s;
}

// Per round E_{p~D_t}[h_t(x_t,p)ᵀ(y_t − p)] with h_t rebuilt from the params.
std::vector<double> incurred_direct(const Transcript& tr, const ParamFamily& family) {
  std::vector<double> out;
  for (const ForecastRound& r : tr.rounds) {
    const Vec params = r.params;
    out.push_back(correlation([&](const Context& x, const Vec& p) { return family.eval(params, x, p); }, r.x, r.dist,
                              outcome(r)));
  }
  return out;
}

double eps_sum(const Transcript& tr) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) s += r.eps_realized;
  return s;
}

double eps_sum_positive(const Transcript& tr) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) s += std::max(r.eps_realized, 0.0);
  return s;
}

// Extreme points of simplex, box and polytope bodies, listed here.
std::optional<std::vector<Vec>> own_vertices(const ConvexBody& b) {
  const int d = b.dim();
  switch (b.kind()) {
    case ConvexBody::Kind::simplex: {
      std::vector<Vec> v;
      for (int i = 0; i < d; ++i) v.push_back(Vec::Unit(d, i));
      return v;
    }
    case ConvexBody::Kind::box: {
      std::vector<Vec> v;
      for (long mask = 0; mask < (1L << d); ++mask) {
        Vec z(d);
        for (int i = 0; i < d; ++i) z[i] = (mask >> i) & 1 ? b.hi()[i] : b.lo()[i];
        v.push_back(z);
      }
      return v;
    }
    case ConvexBody::Kind::vertex_polytope:
      return b.polytope_vertices();
    default:
      return std::nullopt;
  }
}

// --- EVI certificate audit -------------------------------------------------------

struct CertAudit {
  long calls = 0;
  long over_realized = 0;  // certify_evi > eps_realized + tol
  long inexact = 0;        // |certify_evi − enumeration or closed form| > tol
  long unsound = 0;        // max over 10⁴ sphere samples > certify_evi + tol
  long missed_target = 0;  // eps_realized > eps_target, or met_target false
  long polytope_calls = 0;
  long ball_calls = 0;
  double worst_excess = -INFINITY;

  void add(const Distribution& dist, const Operator& op, const ConvexBody& body, double eps_realized,
           double eps_target, bool met, std::mt19937_64& rng) {
    ++calls;
    Vec a = Vec::Zero(body.dim());
    double b = 0.0, scale = 1.0;
    for (const Atom& at : dist.atoms()) {
      const Vec s = op(at.point);
      a += at.weight * s;
      b += at.weight * s.dot(at.point);
      scale = std::max(scale, s.norm() * std::max(1.0, body.outer_radius()));
    }
    const double tol = 1e-9 * scale;
    const double lib = certify_evi(dist, op, body);
    double exact = NAN;
    if (auto vs = own_vertices(body)) {
      ++polytope_calls;
      exact = -INFINITY;
      for (const Vec& v : *vs) exact = std::max(exact, a.dot(v) - b);
    } else if (body.kind() == ConvexBody::Kind::euclidean_ball) {
      ++ball_calls;
      exact = a.dot(body.center()) + body.radius() * a.norm() - b;
      std::normal_distribution<double> g(0.0, 1.0);
      double sampled = -INFINITY;
      for (int i = 0; i < 10000; ++i) {
        Vec u(body.dim());
        for (int k = 0; k < body.dim(); ++k) u[k] = g(rng);
        const double n = u.norm();
        if (n > 0.0) sampled = std::max(sampled, a.dot(body.center() + body.radius() * u / n) - b);
      }
      if (sampled > lib + tol) ++unsound;
    }
    if (lib > eps_realized + tol) ++over_realized;
    if (!(std::abs(lib - exact) <= tol)) ++inexact;
    if (eps_realized > eps_target || !met) ++missed_target;
    worst_excess = std::max(worst_excess, lib - eps_realized);
  }
};

CertAudit& cert_audit() {
  static CertAudit audit;
  return audit;
}

void audit_family_run(const Transcript& tr, const ParamFamily& family, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  for (const ForecastRound& r : tr.rounds) {
    const Vec params = r.params;
    const Context x = r.x;
    Operator op = [&family, params, x](const Vec& p) { return family.eval(params, x, p); };
    cert_audit().add(r.dist, op, tr.body, r.eps_realized, r.eps_target, r.met_target, rng);
  }
}

// Kernel runs: S_t rebuilt from the transcript. Feature kernels use a running
// feature sum, others the direct double sum over past atoms.
void audit_kernel_run(const Transcript& tr, const MatrixKernel& kernel, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  const FeatureMap* features = kernel.features();
  Vec feature_sum;
  if (features) feature_sum = Vec::Zero(features->features);
  for (std::size_t t = 0; t < tr.rounds.size(); ++t) {
    const ForecastRound& r = tr.rounds[t];
    Operator op;
    if (features) {
      op = [features, v = feature_sum, x = r.x](const Vec& p) -> Vec { return (*features)(x, p).transpose() * v; };
    } else {
      op = [&tr, &kernel, t, x = r.x](const Vec& p) -> Vec {
        Vec s = Vec::Zero(p.size());
        for (std::size_t i = 0; i < t; ++i) {
          const ForecastRound& q = tr.rounds[i];
          for (const Atom& a : q.dist.atoms()) s += a.weight * (kernel(x, p, q.x, a.point) * (*q.y - a.point));
        }
        return s;
      };
    }
    cert_audit().add(r.dist, op, tr.body, r.eps_realized, r.eps_target, r.met_target, rng);
    if (features)
      for (const Atom& a : r.dist.atoms()) feature_sum += a.weight * ((*features)(r.x, a.point) * (outcome(r) - a.point));
  }
}

// --- online reduction ledger -------------------------------------------------------

struct LedgerTally {
  long rows = 0;
  long failures = 0;
  double worst = -INFINITY;  // max of lhs − rhs
};

// MC-Err(h) ≤ Regret(h) + Σ eps_realized + 1e-8·T with
// Regret(h) = Σ f_t(h_t) − Σ f_t(h), f_t(g) = −E_{p~D_t}[g(x_t,p)ᵀ(y_t − p)].
void check_online_ledger(const Transcript& tr, const ParamFamily& family, const std::vector<TestFunction>& grid,
                         LedgerTally& out) {
  double incurred = 0.0;
  for (double v : incurred_direct(tr, family)) incurred += v;
  const double T = tr.horizon();
  const double evi = eps_sum(tr);
  for (const TestFunction& h : grid) {
    const double mc = mc_direct(tr, h.eval);
    double on_dist = 0.0;
    for (const ForecastRound& r : tr.rounds) on_dist += correlation(h.eval, r.x, r.dist, outcome(r));
    const double gap = mc - ((on_dist - incurred) + evi + 1e-8 * T);
    ++out.rows;
    if (gap > 0.0) ++out.failures;
    out.worst = std::max(out.worst, gap);
  }
}

ExperimentConfig make_config(json j) {
  j["plots"] = false;
  ExperimentConfig c = ExperimentConfig::from_json(j);
  c.validate();
  return c;
}

json simplex_body(int d) { return {{"kind", "simplex"}, {"dim", d}}; }
json box_body(int d, double lo = 0.0, double hi = 1.0) { return {{"kind", "box"}, {"dim", d}, {"lo", lo}, {"hi", hi}}; }
json ball_body(int d) { return {{"kind", "ball"}, {"dim", d}, {"radius", 1.0}}; }

json online_config(const std::string& engine, const json& body, int T, std::uint64_t seed, const json& nature) {
  const bool finite = engine.rfind("hedge", 0) == 0;
  const json tests = finite ? json{{"kind", "tables"}, {"count", 8}, {"cells", 2}}
                            : json{{"kind", "linear"}, {"features", {{"kind", "monomial"}, {"degree", 1}}}, {"radius", 1.0}};
  return {{"name", engine + "-" + body.at("kind").get<std::string>() + std::to_string(body.at("dim").get<int>())},
          {"outcomes", body}, {"engine", engine}, {"tests", tests}, {"nature", nature},
          {"grid", 8},        {"horizon", T},     {"seed", seed}};
}

json iid(const std::string& sampler) { return {{"kind", "iid"}, {"sampler", sampler}}; }
json adversary(int target) { return {{"kind", "adversary"}, {"target", target}}; }

// --- criteria ----------------------------------------------------------------------

Outcome online_reduction() {
  const std::vector<json> runs = {
      online_config("hedge", simplex_body(2), 256, 101, iid("vertices")),
      online_config("hedge", simplex_body(3), 1024, 102, adversary(2)),
      online_config("hedge", simplex_body(5), 1024, 103, iid("uniform")),
      online_config("hedge", box_body(1), 4096, 104, iid("uniform")),
      online_config("hedge", box_body(3), 1024, 105, iid("vertices")),
      online_config("hedge-doubling", ball_body(2), 1024, 106, iid("uniform")),
      online_config("hedge", ball_body(5), 256, 107, iid("uniform")),
      online_config("ftrl", simplex_body(3), 1024, 108, iid("vertices")),
      online_config("ftrl", box_body(2), 4096, 109, iid("uniform")),
      online_config("ftrl", ball_body(2), 1024, 110, adversary(1)),
      online_config("ftrl", ball_body(3), 256, 111, iid("uniform")),
      online_config("ftrl", box_body(5), 256, 112, iid("vertices")),
      online_config("ftrl", ball_body(1), 4096, 113, iid("uniform")),
      online_config("ogd", simplex_body(2), 1024, 114, iid("uniform")),
  };
  LedgerTally tally;
  std::set<std::string> engines, bodies;
  std::set<int> dims, horizons;
  for (const json& j : runs) {
    const ExperimentConfig c = make_config(j);
    const ExperimentResult res = run_experiment(c);
    const FamilyBundle bundle = build_family(c.tests, c.outcomes, c.grid, c.seed);
    check_online_ledger(res.transcript, *bundle.family, bundle.grid, tally);
    audit_family_run(res.transcript, *bundle.family, c.seed);
    engines.insert(c.engine);
    bodies.insert(j.at("outcomes").at("kind").get<std::string>());
    dims.insert(c.outcomes.dim());
    horizons.insert(c.horizon);
  }
  const bool spans = runs.size() >= 12 && engines.count("hedge") && engines.count("ftrl") && bodies.size() == 3 &&
                     dims == std::set<int>{1, 2, 3, 5} && horizons == std::set<int>{256, 1024, 4096};
  return {tally.failures == 0 && spans,
          std::to_string(runs.size()) + " runs, " + std::to_string(tally.rows) + " (run, test) rows, " +
              std::to_string(tally.failures) + " failures, max(lhs-rhs) " + num(tally.worst) + ", tol 1e-8*T" +
              (spans ? "" : ", coverage incomplete")};
}

Outcome hedge_rate() {
  const int T = 4096;
  const double bound = 2.0 * std::sqrt(T * std::log(8.0));
  bool ok = true;
  std::string per;
  for (int seed = 1; seed <= 5; ++seed) {
    const ExperimentConfig c = make_config({{"name", "hedge-rate"},
                                            {"outcomes", simplex_body(3)},
                                            {"engine", "hedge"},
                                            {"tests", {{"kind", "tables"}, {"count", 8}, {"cells", 2}}},
                                            {"nature", adversary(seed % 8)},
                                            {"horizon", T},
                                            {"seed", seed}});
    const ExperimentResult res = run_experiment(c);
    const FamilyBundle bundle = build_family(c.tests, c.outcomes, c.grid, c.seed);
    audit_family_run(res.transcript, *bundle.family, c.seed);
    double worst = -INFINITY;
    for (const TestFunction& h : bundle.grid) worst = std::max(worst, mc_direct(res.transcript, h.eval));
    ok = ok && bundle.grid.size() == 8 && worst <= bound + eps_sum(res.transcript);
    per += (per.empty() ? "" : ", ") + num(worst);
  }
  return {ok, "max MC-Err per seed [" + per + "] <= 2*sqrt(T ln 8) = " + num(bound) + " + sum eps"};
}

Outcome kernel_equivalence() {
  const ConvexBody body = ConvexBody::box(Vec::Zero(2), Vec::Ones(2));
  const FeatureMap features = fourier_features(0, 2, 16, 0.5, 21);
  auto family = std::make_shared<LinearFamily>(features);
  const double radius = 1.0, eta = 0.4;
  ForecasterOptions opts;
  Forecaster ftrl(body, family, std::make_unique<FtrlBall>(features.features, radius, eta), opts);
  IidNature nature(body, IidNature::Sampler::uniform, ContextSampler{}, 77);
  const Transcript& tr = run_protocol(ftrl, nature, 100);
  audit_family_run(tr, *family, 77);
  const MatrixKernel kernel = MatrixKernel::from_features(features);

  std::mt19937_64 rng(5);
  K29History history;
  Vec v = Vec::Zero(features.features);
  double worst_probe = 0.0, worst_params = 0.0, worst_cross = -INFINITY;
  long bad = 0;
  for (const ForecastRound& r : tr.rounds) {
    // Closed form: θ_t = α_t v_t, v_t = Σ_{i<t} E[Ψ(x_i,p_i)(y_i − p_i)].
    const double vn = v.norm();
    const double alpha = vn == 0.0 ? eta / 2.0 : std::min(eta / 2.0, radius / vn);
    worst_params = std::max(worst_params, (r.params - alpha * v).cwiseAbs().maxCoeff());
    // Unfactored: Γ = ΨᵀΨ′ summed pairwise over the history.
    const Operator S = k29_operator(history, kernel, r.x, false);
    for (int k = 0; k < 50; ++k) {
      const Vec p = body.sample(rng);
      const Vec s = S(p);
      const double diff = (family->eval(r.params, r.x, p) - alpha * s).norm();
      worst_probe = std::max(worst_probe, diff / (1.0 + s.norm()));
      if (diff > 1e-6 * (1.0 + s.norm())) ++bad;
    }
    // The FTRL output solves the kernel EVI with gap eps/α, and a kernel EVI
    // solution solves the FTRL EVI with gap α·eps.
    const double cross_k = certify_evi(r.dist, S, body) - r.eps_realized / alpha;
    const EviProblem prob{body, S, std::max(k29_norm_bound(history, kernel), 1e-12), eps_schedule(r.t, opts.eps)};
    const EviSolution sol = solve_evi(prob, opts.evi);
    const Vec params = r.params;
    const Context x = r.x;
    const Operator H = [&family, params, x](const Vec& p) { return family->eval(params, x, p); };
    const double cross_f = certify_evi(sol.dist, H, body) - alpha * sol.certified_gap;
    const double tol = 1e-9 * (1.0 + vn);
    if (cross_k > tol / alpha || cross_f > tol || sol.certified_gap > prob.target_eps) ++bad;
    worst_cross = std::max({worst_cross, cross_k * alpha, cross_f});

    history.append(r.x, r.dist, outcome(r));
    for (const Atom& a : r.dist.atoms()) v += a.weight * (features(r.x, a.point) * (outcome(r) - a.point));
  }
  if (worst_params > 1e-9) ++bad;
  return {bad == 0, "100 rounds x 50 probes: max |h-aS|/(1+|S|) " + num(worst_probe) + " (tol 1e-6), |theta - a*v| " +
                        num(worst_params) + " (tol 1e-9), max cross-certificate excess " + num(worst_cross)};
}

Outcome kernel_bound() {
  const ExperimentConfig c = make_config(
      {{"name", "k29-bound"},
       {"outcomes", box_body(2)},
       {"engine", "k29"},
       {"kernel", {{"kind", "features"}, {"features", {{"kind", "fourier"}, {"count", 32}, {"bandwidth", 0.5}, {"seed", 9}}}}},
       {"nature", iid("uniform")},
       {"grid", 50},
       {"horizon", 2000},
       {"seed", 5}});
  const ExperimentResult res = run_experiment(c);
  const Transcript& tr = res.transcript;
  const MatrixKernel kernel = build_kernel(c.kernel, c.outcomes);
  const FeatureMap& f = *kernel.features();
  audit_kernel_run(tr, kernel, c.seed);

  double energy = 0.0;
  for (const ForecastRound& r : tr.rounds) {
    Vec e = Vec::Zero(f.features);
    for (const Atom& a : r.dist.atoms()) e += a.weight * (f(r.x, a.point) * (outcome(r) - a.point));
    energy += e.squaredNorm();
  }
  const double stated = std::sqrt(energy + 1.0) + eps_sum(tr);
  const double strict = std::sqrt(energy + 2.0 * eps_sum_positive(tr));
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  long violations = 0;
  for (int i = 0; i < 50; ++i) {
    Vec theta(f.features);
    for (int k = 0; k < f.features; ++k) theta[k] = g(rng);
    theta /= theta.norm();
    const double mc =
        std::abs(mc_direct(tr, [&](const Context& x, const Vec& p) -> Vec { return f(x, p).transpose() * theta; }));
    worst = std::max(worst, mc);
    if (mc > stated || mc > strict + 1e-9) ++violations;
  }
  return {violations == 0, "T=2000, 50 unit theta: max |MC-Err| " + num(worst) + " <= sqrt(E+1)+sum eps = " +
                               num(stated) + " and <= sqrt(E+2 sum eps+) = " + num(strict) + ", " +
                               std::to_string(violations) + " violations"};
}

// h_φ(x,p) = σ(p) − φ(x,σ(p)) with σ computed directly.
TestFunction own_phi_test(const Deviation& phi, const ConvexBody& Z) {
  TestFunction h;
  h.name = phi.name;
  h.eval = [phi, Z](const Context& x, const Vec& p) -> Vec {
    const Vec z = best_response(p, Z);
    return z - phi(x, z);
  };
  return h;
}

struct PhiTally {
  long rows = 0;
  long failures = 0;
  double max_slack = -INFINITY;
  double worst = -INFINITY;  // regret − MC − 1e-9·T
  double max_regret = -INFINITY;
};

void audit_phi(const DecisionTranscript& dt, const std::vector<Deviation>& devs, PhiTally& out) {
  const double T = dt.horizon();
  for (const Deviation& phi : devs) {
    double regret = 0.0, mc = 0.0;
    bool slack_ok = true;
    for (const DecisionRound& r : dt.rounds) {
      const Vec& l = *r.loss;
      double slack = 0.0;
      for (const Atom& a : r.forecast.atoms()) {
        const Vec z = best_response(a.point, dt.Z);
        const Vec h = z - phi(r.x, z);
        mc += a.weight * h.dot(l - a.point);
        slack += a.weight * h.dot(a.point);
      }
      for (const Atom& a : r.mixed.atoms()) regret += a.weight * l.dot(a.point - phi(r.x, a.point));
      out.max_slack = std::max(out.max_slack, slack);
      if (slack > 1e-9) slack_ok = false;
    }
    const double gap = regret - mc - 1e-9 * T;
    ++out.rows;
    if (gap > 0.0 || !slack_ok) ++out.failures;
    out.worst = std::max(out.worst, gap);
    out.max_regret = std::max(out.max_regret, regret);
  }
}

// μ_t must be the σ-pushforward of D_t, atom for atom.
bool pushforward_consistent(const DecisionTranscript& dt) {
  for (const DecisionRound& r : dt.rounds) {
    if (r.mixed.size() != r.forecast.size()) return false;
    for (std::size_t i = 0; i < r.forecast.size(); ++i) {
      const Atom& f = r.forecast.atoms()[i];
      const Atom& m = r.mixed.atoms()[i];
      if (f.weight != m.weight || best_response(f.point, dt.Z) != m.point) return false;
    }
  }
  return true;
}

// All d^d vertex maps of simplex(d), lexicographic in (image of e_1, ..., e_d).
std::vector<Deviation> own_swaps(int d) {
  std::vector<Deviation> out;
  std::vector<int> s(static_cast<std::size_t>(d), 0);
  while (true) {
    Mat M = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) M(s[static_cast<std::size_t>(i)], i) = 1.0;
    out.push_back(Deviation::linear(M));
    int k = d - 1;
    while (k >= 0 && s[static_cast<std::size_t>(k)] == d - 1) s[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
    ++s[static_cast<std::size_t>(k)];
  }
  return out;
}

bool maps_into(const std::vector<Deviation>& devs, const ConvexBody& Z, const std::vector<Vec>& probes) {
  for (const Deviation& phi : devs)
    for (const Vec& z : probes)
      if (!Z.contains(phi(Context(), z), 1e-9)) return false;
  return true;
}

// Γ′ = σσ′ᵀ + (1 + k(σ, σ′))·I for a scalar base kernel k.
MatrixKernel own_phi_kernel(const MatrixKernel& base, const ConvexBody& Z) {
  const int d = Z.dim();
  return MatrixKernel::custom("audit-phi", d, 0.0,
                              [base, Z, d](const Context& x, const Vec& p, const Context& x2, const Vec& p2) -> Mat {
                                const Vec s = best_response(p, Z), s2 = best_response(p2, Z);
                                return s * s2.transpose() + (1.0 + base.scalar(x, s, x2, s2)) * Mat::Identity(d, d);
                              });
}

Outcome phi_ledgers() {
  const json L01 = box_body(3);
  struct Run {
    std::string kind;
    json cfg;
  };
  auto run_cfg = [](const json& L, const json& Z, const json& devs, int T, int seed) {
    return json{{"mode", "phi"}, {"outcomes", L},  {"actions", Z},   {"deviations", devs},
                {"nature", iid("uniform")}, {"horizon", T}, {"seed", seed}};
  };
  const std::vector<Run> runs = {
      {"constant", run_cfg(L01, simplex_body(3), {{"kind", "constant"}}, 1000, 6)},
      {"swap", run_cfg(L01, simplex_body(3), {{"kind", "swap"}, {"maps", "all"}}, 1000, 7)},
      {"linear", run_cfg(box_body(3, -1.0, 1.0), box_body(3), {{"kind", "linear"}, {"count", 16}, {"affine", true}}, 1024, 8)},
      {"kernel", run_cfg(L01, simplex_body(3),
                         {{"kind", "kernel"}, {"kernel", {{"kind", "gaussian"}, {"bandwidth", 0.5}}}, {"count", 20}, {"atoms", 4}},
                         200, 9)},
  };
  PhiTally total;
  bool consistent = true, inside = true;
  std::string per;
  for (const Run& run : runs) {
    const ExperimentConfig c = make_config(run.cfg);
    const ExperimentResult res = run_experiment(c);
    const DecisionTranscript& dt = *res.decisions;
    const ConvexBody& Z = dt.Z;
    const ConvexBody& L = dt.L;
    consistent = consistent && pushforward_consistent(dt);

    std::mt19937_64 rng(c.seed + 1000);
    std::vector<Vec> probes;
    for (int i = 0; i < 200; ++i) probes.push_back(Z.sample(rng));
    const std::vector<Vec> verts = *own_vertices(Z);
    probes.insert(probes.end(), verts.begin(), verts.end());

    // Audited deviations: constants at every vertex and at random members,
    // plus the run's own class, sampled with a different seed.
    std::vector<Deviation> devs;
    for (const Vec& v : verts) devs.push_back(Deviation::constant(v));
    for (int i = 0; i < 8; ++i) devs.push_back(Deviation::constant(Z.sample(rng)));
    if (run.kind == "constant") {
      std::vector<TestFunction> members;
      for (const Vec& v : verts) members.push_back(own_phi_test(Deviation::constant(v), Z));
      audit_family_run(res.transcript, FiniteFamily(members, L.dim()), c.seed);
    } else if (run.kind == "swap") {
      const std::vector<Deviation> swaps = own_swaps(3);
      devs.insert(devs.end(), swaps.begin(), swaps.end());
      std::vector<TestFunction> members;
      for (const Deviation& s : swaps) members.push_back(own_phi_test(s, Z));
      audit_family_run(res.transcript, FiniteFamily(members, L.dim()), c.seed);
    } else if (run.kind == "linear") {
      const auto lin = sample_linear_endomorphisms(Z, 24, c.seed + 1, true);
      devs.insert(devs.end(), lin.begin(), lin.end());
      devs.push_back(Deviation::linear(Mat::Zero(3, 3), Vec::Constant(3, 0.5)));
      audit_family_run(res.transcript, LinearFamily(best_response_features(Z, true)), c.seed);
    } else {
      const MatrixKernel base = MatrixKernel::gaussian(3, 0.5);
      std::vector<std::pair<Context, Vec>> kp;
      for (const Vec& z : probes) kp.emplace_back(Context(), z);
      const auto ker = sample_kernel_deviations(base, Z, 20, 4, c.seed + 1, kp);
      devs.insert(devs.end(), ker.begin(), ker.end());
      audit_kernel_run(res.transcript, own_phi_kernel(base, Z), c.seed);
    }
    inside = inside && maps_into(devs, Z, probes);
    PhiTally one;
    audit_phi(dt, devs, one);
    total.rows += one.rows;
    total.failures += one.failures;
    total.max_slack = std::max(total.max_slack, one.max_slack);
    total.worst = std::max(total.worst, one.worst);
    per += (per.empty() ? "" : ", ") + run.kind + " " + std::to_string(one.rows);
  }
  return {total.failures == 0 && consistent && inside,
          std::to_string(total.rows) + " deviations (" + per + "), " + std::to_string(total.failures) +
              " failures, max per-round slack " + num(total.max_slack) + " (tol 1e-9), max(regret-MC-1e-9T) " +
              num(total.worst) + (consistent ? "" : ", mixed strategy is not the pushforward") +
              (inside ? "" : ", a deviation leaves Z")};
}

// max over all d^d maps φ of Σ_t Σ_i μ_t(i)(ℓ_t[i] − ℓ_t[φ(i)]).
double brute_swap(const std::vector<Vec>& mixed, const std::vector<Vec>& losses) {
  const int d = static_cast<int>(mixed.front().size());
  std::vector<int> phi(static_cast<std::size_t>(d), 0);
  double best = -INFINITY;
  while (true) {
    double v = 0.0;
    for (std::size_t t = 0; t < mixed.size(); ++t)
      for (int i = 0; i < d; ++i) v += mixed[t][i] * (losses[t][i] - losses[t][phi[static_cast<std::size_t>(i)]]);
    best = std::max(best, v);
    int k = d - 1;
    while (k >= 0 && phi[static_cast<std::size_t>(k)] == d - 1) phi[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
    ++phi[static_cast<std::size_t>(k)];
  }
  return best;
}

// Σ_i max_j Σ_c π(i,c)(ℓ(i,c) − ℓ(j,c)) for the row player, columns for the other.
double own_ce_gap(const Mat& joint, const Mat& loss, bool row) {
  const Eigen::Index d = row ? loss.rows() : loss.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double best = -INFINITY;
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = 0.0;
      if (row) {
        for (Eigen::Index c = 0; c < joint.cols(); ++c) v += joint(i, c) * (loss(i, c) - loss(j, c));
      } else {
        for (Eigen::Index r = 0; r < joint.rows(); ++r) v += joint(r, i) * (loss(r, i) - loss(r, j));
      }
      best = std::max(best, v);
    }
    total += best;
  }
  return total;
}

Outcome self_play() {
  // Losses (1 − payoff)/2 for rock, paper, scissors.
  Mat A(3, 3);
  A << 0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 1.0, 0.0, 0.5;
  const Mat B = A.transpose();
  const Mat* tables[2] = {&A, &B};
  double gap_sum[2][2] = {{0, 0}, {0, 0}};  // [horizon][player]
  double worst_rate = 0.0, worst_identity = 0.0, worst_loss = 0.0;
  std::vector<Deviation> swaps = own_swaps(3);
  std::vector<TestFunction> members;
  for (const Deviation& s : swaps) members.push_back(own_phi_test(s, ConvexBody::simplex(3)));
  const FiniteFamily family(members, 3);
  for (int seed = 1; seed <= 5; ++seed) {
    for (int h = 0; h < 2; ++h) {
      const int T = 5000 << h;
      const ExperimentConfig c = make_config({{"mode", "self_play"}, {"game", {{"preset", "rps"}}}, {"horizon", T}, {"seed", seed}});
      const ExperimentResult res = run_experiment(c);
      const SelfPlayResult& sp = *res.self_play;
      Mat joint = Mat::Zero(3, 3);
      for (int t = 0; t < T; ++t) {
        const Vec& m0 = sp.mixed[0][static_cast<std::size_t>(t)];
        const Vec& m1 = sp.mixed[1][static_cast<std::size_t>(t)];
        joint += m0 * m1.transpose();
        worst_loss = std::max({worst_loss, (sp.losses[0][static_cast<std::size_t>(t)] - A * m1).cwiseAbs().maxCoeff(),
                               (sp.losses[1][static_cast<std::size_t>(t)] - B.transpose() * m0).cwiseAbs().maxCoeff()});
      }
      joint /= T;
      for (int k = 0; k < 2; ++k) {
        const double swap = brute_swap(sp.mixed[static_cast<std::size_t>(k)], sp.losses[static_cast<std::size_t>(k)]);
        worst_identity = std::max(worst_identity, std::abs(own_ce_gap(joint, *tables[k], k == 0) - swap / T));
        gap_sum[h][k] += swap / T;
        if (h == 0) worst_rate = std::max(worst_rate, swap / T);
      }
      if (h == 0)
        for (const Transcript& f : sp.forecasts) audit_family_run(f, family, c.seed);
    }
  }
  const double r0 = gap_sum[1][0] / gap_sum[0][0], r1 = gap_sum[1][1] / gap_sum[0][1];
  const bool ok = worst_rate <= 0.06 && r0 <= 0.8 && r1 <= 0.8 && worst_identity <= 1e-9 && worst_loss <= 1e-12;
  return {ok, "5 seeds: max swap/T at T=5000 " + num(worst_rate) + " (<= 0.06), seed-avg gap ratio T=10000/5000 " +
                  num(r0) + ", " + num(r1) + " (<= 0.8), CE identity error " + num(worst_identity) + " (<= 1e-9)"};
}

Outcome linear_scaling() {
  double avg[2] = {0, 0};
  PhiTally tally;
  for (int seed = 1; seed <= 5; ++seed) {
    for (int h = 0; h < 2; ++h) {
      const int T = h == 0 ? 1024 : 4096;
      const ExperimentConfig c = make_config({{"mode", "phi"},
                                              {"outcomes", box_body(3, -1.0, 1.0)},
                                              {"actions", box_body(3)},
                                              {"deviations", {{"kind", "linear"}, {"count", 16}, {"affine", true}}},
                                              {"nature", adversary(seed)},
                                              {"horizon", T},
                                              {"seed", seed}});
      const ExperimentResult res = run_experiment(c);
      PhiTally one;
      audit_phi(*res.decisions, sample_linear_endomorphisms(res.decisions->Z, 16, c.seed, true), one);
      tally.failures += one.failures;
      avg[h] += one.max_regret / 5.0;
    }
  }
  const double ratio = avg[1] / avg[0];
  return {ratio <= 2.2 && tally.failures == 0, "Z=[0,1]^3, adversarial losses in [-1,1]^3: seed-avg max affine regret " +
                                                   num(avg[0]) + " at T=1024, " + num(avg[1]) + " at T=4096, ratio " +
                                                   num(ratio) + " (<= 2.2)"};
}

Outcome delayed() {
  auto cfg = [](const std::string& protocol, int D) {
    return json{{"outcomes", box_body(2)},
                {"protocol", protocol},
                {"delay", D},
                {"engine", "ftrl"},
                {"tests", {{"kind", "linear"}, {"features", {{"kind", "identity"}}}, {"radius", 1.0}}},
                {"nature", iid("uniform")},
                {"grid", 16},
                {"horizon", 2048},
                {"seed", 3}};
  };
  LedgerTally tally;
  std::string d1_csv, delivery;
  for (int D : {1, 8, 32}) {
    const ExperimentConfig c = make_config(cfg("delayed", D));
    const ExperimentResult res = run_experiment(c);
    const FamilyBundle bundle = build_family(c.tests, c.outcomes, c.grid, c.seed);
    check_online_ledger(res.transcript, *bundle.family, bundle.grid, tally);
    audit_family_run(res.transcript, *bundle.family, c.seed);
    bool late = true;
    for (const ForecastRound& r : res.transcript.rounds) late = late && r.delivery == r.t + D;
    if (!late) delivery += " D=" + std::to_string(D);
    if (D == 1) d1_csv = res.transcript.to_csv();
  }
  const ExperimentResult standard = run_experiment(make_config(cfg("standard", 1)));
  const bool identical = d1_csv == standard.transcript.to_csv();
  return {tally.failures == 0 && identical && delivery.empty(),
          "D in {1,8,32}, T=2048: " + std::to_string(tally.rows) + " rows, " + std::to_string(tally.failures) +
              " failures, max(lhs-rhs) " + num(tally.worst) + "; D=1 transcript " +
              (identical ? "byte-identical to" : "differs from") + " standard" +
              (delivery.empty() ? "" : ", wrong delivery rounds at" + delivery)};
}

Outcome censored() {
  const int T = 4096;
  const double gamma = std::pow(T, -0.25);
  long rows = 0, failures = 0;
  double worst = -INFINITY;
  for (int seed = 1; seed <= 20; ++seed) {
    const ExperimentConfig c = make_config({{"outcomes", simplex_body(3)},
                                            {"protocol", "censored"},
                                            {"gamma", "auto"},
                                            {"engine", "hedge"},
                                            {"tests", {{"kind", "tables"}, {"count", 8}, {"cells", 2}, {"seed", 4}}},
                                            {"nature", {{"kind", "iid"}, {"sampler", "vertices"}, {"seed", 4}}},
                                            {"horizon", T},
                                            {"seed", seed}});
    const ExperimentResult res = run_experiment(c);
    const Transcript& tr = res.transcript;
    const FamilyBundle bundle = build_family(c.tests, c.outcomes, c.grid, c.seed);
    audit_family_run(tr, *bundle.family, c.seed);
    if (std::abs(tr.gamma - gamma) > 1e-15) ++failures;
    const std::vector<double> inc = incurred_direct(tr, *bundle.family);
    const double evi = eps_sum(tr);
    for (const TestFunction& h : bundle.grid) {
      double mix = 0.0, iw = 0.0;
      for (std::size_t t = 0; t < tr.rounds.size(); ++t) {
        const ForecastRound& r = tr.rounds[t];
        const Vec& y = outcome(r);
        // The audited output is (1 − γ)D_t + γD*.
        mix += (1.0 - gamma) * correlation(h.eval, r.x, r.dist, y) + gamma * correlation(h.eval, r.x, tr.explore, y);
        const int z = derive_uniform(c.seed, static_cast<std::uint64_t>(r.t), RngTag::censor) < gamma ? 1 : 0;
        if (z != r.z) ++failures;
        iw += z / gamma * (correlation(h.eval, r.x, r.dist, y) - inc[t]);
      }
      const double rhs = gamma * h.value_bound * T + evi + iw + 1e-8 * T;
      ++rows;
      if (mix > rhs) ++failures;
      worst = std::max(worst, mix - rhs);
    }
  }
  // Unbiasedness: E[(z/γ)·g] = g for the weigh() rescaling with z drawn from
  // the protocol's own stream.
  const int N = 100000;
  const Vec g = (Vec(3) << 0.7, -0.2, 1.3).finished();
  const LinearLoss raw{g, 0};
  Vec mean = Vec::Zero(3);
  for (int t = 1; t <= N; ++t) {
    const bool z = derive_uniform(99, static_cast<std::uint64_t>(t), RngTag::censor) < gamma;
    const std::vector<LinearLoss> w = ImportanceWeighted::weigh(std::span<const LinearLoss>(&raw, 1), gamma, z);
    for (const LinearLoss& l : w) mean += l.gradient;
  }
  mean /= N;
  double zmax = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double sigma = std::abs(g[k]) * std::sqrt((1.0 - gamma) / gamma / N);
    zmax = std::max(zmax, std::abs(mean[k] - g[k]) / sigma);
  }
  return {failures == 0 && zmax <= 3.0,
          "gamma=T^-1/4=" + num(gamma) + ", 20 seeds, " + std::to_string(rows) + " rows, " + std::to_string(failures) +
              " failures, max(lhs-rhs) " + num(worst) + "; unbiasedness over 1e5 draws: max |z-score| " + num(zmax) +
              " (<= 3)"};
}

Outcome omniprediction() {
  // k = 2 classes, 3 losses over 2 actions, 2 contexts, so |C| = 4 rules.
  const std::vector<Mat> losses = {
      (Mat(2, 2) << 0.0, 1.0, 1.0, 0.0).finished(),  // 0-1 loss
      (Mat(2, 2) << 0.0, 4.0, 1.0, 0.0).finished(),  // asymmetric cost
      (Mat(2, 2) << 0.3, 0.6, 0.9, 0.1).finished(),  // shifted costs
  };
  json loss_json = json::array();
  for (std::size_t i = 0; i < losses.size(); ++i)
    loss_json.push_back({{"name", "l" + std::to_string(i)},
                         {"table", {{losses[i](0, 0), losses[i](0, 1)}, {losses[i](1, 0), losses[i](1, 1)}}}});
  const ExperimentConfig c = make_config(
      {{"mode", "omni"},
       {"outcomes", simplex_body(2)},
       {"omni", {{"losses", loss_json}, {"rules", "all"}, {"contexts", 2}}},
       {"nature", {{"kind", "iid"}, {"sampler", "conditional"}, {"table", {{0.7, 0.3}, {0.2, 0.8}}},
                   {"contexts", {{"kind", "ids"}, {"count", 2}}}}},
       {"horizon", 2000},
       {"seed", 10}});
  const ExperimentResult res = run_experiment(c);
  const Transcript& tr = res.transcript;

  auto pick = [](const Mat& l, const Vec& p) {
    int best = 0;
    for (int z = 1; z < l.rows(); ++z)
      if (l.row(z).dot(p) < l.row(best).dot(p)) best = z;
    return best;
  };
  std::vector<std::vector<int>> rules;  // rules[c][context] = action
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1) rules.push_back({a0, a1});
  auto ctx = [](const Context& x) { return x.size() == 0 ? 0 : static_cast<int>(x[0]); };

  // Omni tests: h_ℓ(p) = ℓ(π_ℓ(p), ·), then h_{ℓ,c}(x) = −ℓ(c(x), ·), ℓ slowest.
  std::vector<TestFunction> tests;
  for (const Mat& l : losses) {
    TestFunction h;
    h.eval = [l, pick](const Context&, const Vec& p) -> Vec { return l.row(pick(l, p)).transpose(); };
    tests.push_back(h);
  }
  for (const Mat& l : losses)
    for (const auto& rule : rules) {
      TestFunction h;
      h.eval = [l, rule, ctx](const Context& x, const Vec&) -> Vec {
        return -l.row(rule[static_cast<std::size_t>(ctx(x))]).transpose();
      };
      tests.push_back(h);
    }
  const FiniteFamily family(tests, 2);
  audit_family_run(tr, family, c.seed);
  double max_mc = -INFINITY;
  for (const TestFunction& h : tests) max_mc = std::max(max_mc, mc_direct(tr, h.eval));

  std::vector<LossSpec> specs;
  for (std::size_t i = 0; i < losses.size(); ++i) specs.push_back({"l" + std::to_string(i), losses[i]});
  const std::vector<DecisionRule> lib_rules = all_decision_rules(2, 2);
  long rows = 0, failures = 0;
  const double tol = 1e-9 * tr.horizon();
  double worst_ratio = 0.0;
  for (std::size_t li = 0; li < losses.size(); ++li) {
    const Mat& l = losses[li];
    double incurred = 0.0, self = 0.0;  // Σ E[ℓ(π,y)], Σ E_{ỹ~p}[ℓ(π,ỹ)]
    for (const ForecastRound& r : tr.rounds)
      for (const Atom& a : r.dist.atoms()) {
        const int z = pick(l, a.point);
        incurred += a.weight * l.row(z).dot(outcome(r));
        self += a.weight * l.row(z).dot(a.point);
      }
    double best = INFINITY;
    for (const auto& rule : rules) {
      double on_p = 0.0, realized = 0.0;
      for (const ForecastRound& r : tr.rounds) {
        const int z = rule[static_cast<std::size_t>(ctx(r.x))];
        for (const Atom& a : r.dist.atoms()) on_p += a.weight * l.row(z).dot(a.point);
        realized += l.row(z).dot(outcome(r));
      }
      best = std::min(best, realized);
      rows += 3;
      if (incurred - self > max_mc + tol) ++failures;
      if (self > on_p + tol) ++failures;
      if (on_p - realized > max_mc + tol) ++failures;
    }
    const double regret = incurred - best;
    const OmniRegret lib = omni_regret(tr, specs[li], lib_rules);
    rows += 2;
    if (regret > 2.0 * max_mc + tol) ++failures;
    if (std::abs(lib.best - best) > tol || std::abs(lib.regret - regret) > tol) ++failures;
    worst_ratio = std::max(worst_ratio, regret / (2.0 * max_mc));
  }
  return {failures == 0, "k=2, |L|=3, |C|=4, T=2000: " + std::to_string(rows) + " rows, " + std::to_string(failures) +
                             " failures, max MC-Err " + num(max_mc) + ", max regret/(2 MC-Err) " + num(worst_ratio)};
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = s.str();
  }
  return out;
}

Outcome determinism(const std::string& configs) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(configs))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const fs::path scratch = fs::temp_directory_path() / "mcr_acceptance_determinism";
  std::string diffs;
  long compared = 0;
  for (const fs::path& f : files) {
    std::string hashes[2];
    std::map<std::string, std::string> trees[2];
    for (int k = 0; k < 2; ++k) {
      ExperimentConfig c = load_config(f.string());
      c.out_dir = (scratch / (f.stem().string() + "_" + std::to_string(k))).string();
      fs::remove_all(c.out_dir);
      c.validate();
      const ExperimentResult res = run_experiment(c);
      write_outputs(res, c.out_dir);
      hashes[k] = hash_hex(content_hash(res.transcript.to_csv()));
      trees[k] = read_tree(c.out_dir);
      fs::remove_all(c.out_dir);
    }
    ++compared;
    if (hashes[0] != hashes[1] || trees[0] != trees[1] || trees[0].empty()) diffs += " " + f.stem().string();
  }
  return {compared > 0 && diffs.empty(), std::to_string(compared) + " configs run twice: transcript hashes and every " +
                                             "output file " + (diffs.empty() ? "identical" : "differ for" + diffs)};
}

Outcome certificates() {
  const CertAudit& a = cert_audit();
  return {a.calls > 0 && a.over_realized == 0 && a.inexact == 0 && a.unsound == 0,
          std::to_string(a.calls) + " EVI calls (" + std::to_string(a.polytope_calls) + " polytope, " +
              std::to_string(a.ball_calls) + " ball): above eps_realized " + std::to_string(a.over_realized) +
              ", inexact " + std::to_string(a.inexact) + ", sampled max above certificate " +
              std::to_string(a.unsound) + ", max(cert-eps) " + num(a.worst_excess) + " (tol 1e-9 scaled)"};
}

Outcome solver_success() {
  const CertAudit& a = cert_audit();
  return {a.calls > 0 && a.missed_target == 0,
          std::to_string(a.missed_target) + " of " + std::to_string(a.calls) + " EVI calls above their target eps_t"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite: recomputes every ledger from transcripts and prints one line per criterion."};
  std::vector<int> only;
  std::string configs = std::string(MCR_SOURCE_DIR) + "/configs";
  app.add_option("--only", only, "Run only these criterion numbers; 2 and 2b always audit whatever ran")
      ->delimiter(',');
  app.add_option("--configs", configs, "Directory of example configs for the determinism check")
      ->check(CLI::ExistingDirectory);
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    std::string id;
    std::string title;
    std::function<Outcome()> run;
  };
  // Certificate criteria come last: they audit the EVI calls of every run above.
  const std::vector<Criterion> criteria = {
      {"1", "online reduction ledger", online_reduction},
      {"3", "hedge multicalibration rate", hedge_rate},
      {"4", "kernel forecaster matches FTRL", kernel_equivalence},
      {"5", "kernel forecaster bound", kernel_bound},
      {"6", "phi-regret ledger and slack sign", phi_ledgers},
      {"7", "swap regret and correlated equilibrium", self_play},
      {"8", "linear swap regret scaling", linear_scaling},
      {"9", "delayed protocol", delayed},
      {"10", "censored protocol", censored},
      {"11", "omniprediction", omniprediction},
      {"12", "determinism", [&configs] { return determinism(configs); }},
      {"2", "EVI certificates", certificates},
      {"2b", "EVI solver success", solver_success},
  };
  auto selected = [&](const std::string& id) {
    const int n = std::stoi(id);
    return only.empty() || n == 2 || std::find(only.begin(), only.end(), n) != only.end();
  };
  bool all = true;
  const auto start = std::chrono::steady_clock::now();
  for (const Criterion& c : criteria) {
    if (!selected(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << "[" << c.id << "] " << c.title << ": " << o.detail << " ("
              << num(secs) << "s)" << std::endl;
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << (all ? "ALL PASS" : "SOME FAILED") << " in " << num(total) << "s" << std::endl;
  return all ? 0 : 1;
}
