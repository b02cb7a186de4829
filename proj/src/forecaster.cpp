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

#include "mcr/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mcr/json_util.hpp"
#include "mcr/rng.hpp"

namespace mcr {

// --- families ---------------------------------------------------------------

TestFunction ParamFamily::test(const Vec& params, const ConvexBody& body) const {
  require(params.size() == param_dim(), "family test: parameter dimension mismatch");
  TestFunction h;
  h.name = name();
  const ParamFamily* self = this;
  h.eval = [self, params](const Context& x, const Vec& p) { return self->eval(params, x, p); };
  h.norm_bound = norm_bound(params);
  h.value_bound = value_bound_for(body, h.norm_bound);
  return h;
}

std::function<Vec(const Vec&)> ParamFamily::bind(const Vec& params, const Context& x) const {
  const ParamFamily* self = this;
  return [self, params, x](const Vec& p) { return self->eval(params, x, p); };
}

FiniteFamily::FiniteFamily(std::vector<TestFunction> members, int dim) : members_(std::move(members)), dim_(dim) {
  require(!members_.empty(), "finite family: no members");
  require(dim_ > 0, "finite family: dimension must be positive");
  for (const TestFunction& h : members_) require(static_cast<bool>(h.eval), "finite family: member without evaluator");
}

Vec FiniteFamily::eval(const Vec& params, const Context& x, const Vec& p) const {
  require(params.size() == param_dim(), "finite family: weight dimension mismatch");
  Vec out = Vec::Zero(p.size());
  for (int i = 0; i < param_dim(); ++i) {
    if (params[i] == 0.0) continue;
    out.noalias() += params[i] * members_[static_cast<std::size_t>(i)].eval(x, p);
  }
  return out;
}

std::function<Vec(const Vec&)> FiniteFamily::bind(const Vec& params, const Context& x) const {
  require(params.size() == param_dim(), "finite family: weight dimension mismatch");
  if (combiner_) return combiner_(params, x);
  return ParamFamily::bind(params, x);
}

double FiniteFamily::norm_bound(const Vec& params) const {
  double b = 0.0;
  for (int i = 0; i < param_dim(); ++i) b += std::abs(params[i]) * members_[static_cast<std::size_t>(i)].norm_bound;
  return b;
}

Vec FiniteFamily::loss_gradient(const Context& x, const Distribution& dist, const Vec& y) const {
  Vec g(param_dim());
  for (int i = 0; i < param_dim(); ++i) {
    const TestFunction& h = members_[static_cast<std::size_t>(i)];
    g[i] = -dist.expect_scalar([&](const Vec& p) { return h.eval(x, p).dot(y - p); });
  }
  return g;
}

double FiniteFamily::loss_range() const {
  double v = 0.0;
  for (const TestFunction& h : members_) v = std::max(v, h.value_bound);
  return 2.0 * v;
}

LinearFamily::LinearFamily(FeatureMap features) : features_(std::move(features)) {
  require(features_.features > 0 && features_.dim > 0 && static_cast<bool>(features_.eval),
          "linear family: incomplete feature map");
}

Vec LinearFamily::eval(const Vec& params, const Context& x, const Vec& p) const {
  require(params.size() == features_.features, "linear family: parameter dimension mismatch");
  return features_.eval(x, p).transpose() * params;
}

double LinearFamily::norm_bound(const Vec& params) const { return features_.op_norm_bound * params.norm(); }

Vec LinearFamily::residual_feature(const Context& x, const Distribution& dist, const Vec& y) const {
  return dist.expect([&](const Vec& p) -> Vec { return features_.eval(x, p) * (y - p); });
}

Vec LinearFamily::loss_gradient(const Context& x, const Distribution& dist, const Vec& y) const {
  return -residual_feature(x, dist, y);
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::standard: return "standard";
    case Protocol::delayed: return "delayed";
    case Protocol::censored: return "censored";
  }
  return "standard";
}

// --- transcript -------------------------------------------------------------

namespace {

std::string vec_text(const Vec& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s + "]";
}

std::string atoms_text(const Distribution& d) {
  std::string s = "[";
  bool first = true;
  for (const Atom& a : d.atoms()) {
    if (!first) s += ',';
    first = false;
    s += "[" + format_double(a.weight) + "," + vec_text(a.point) + "]";
  }
  return s + "]";
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (char c : line) {
    if (c == '"') {
      in_quotes = !in_quotes;
    } else if (c == ',' && !in_quotes) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Distribution atoms_from_text(const std::string& s) {
  if (s.empty()) return {};
  const auto j = nlohmann::json::parse(s);
  if (j.empty()) return {};
  return Distribution::from_json(j);
}

}  // namespace

bool Transcript::resolved() const {
  return std::all_of(rounds.begin(), rounds.end(), [](const ForecastRound& r) { return r.y.has_value(); });
}

std::string Transcript::to_csv() const {
  std::string out = "t,x,atoms,params,eps_target,eps_realized,met_target,y,z,delivery,effective_atoms\n";
  for (const ForecastRound& r : rounds) {
    out += std::to_string(r.t);
    out += ',' + quoted(vec_text(r.x));
    out += ',' + quoted(atoms_text(r.dist));
    out += ',' + quoted(vec_text(r.params));
    out += ',' + format_double(r.eps_target);
    out += ',' + format_double(r.eps_realized);
    out += r.met_target ? ",1" : ",0";
    out += ',' + (r.y ? quoted(vec_text(*r.y)) : std::string());
    out += ',' + std::to_string(r.z);
    out += ',' + std::to_string(r.delivery);
    out += ',' + (r.effective.empty() ? std::string() : quoted(atoms_text(r.effective)));
    out += '\n';
  }
  return out;
}

Transcript Transcript::from_csv(const std::string& csv, const nlohmann::json& header) {
  Transcript tr;
  tr.header = header;
  if (header.contains("body")) tr.body = ConvexBody::from_json(header.at("body"));
  if (header.contains("protocol")) {
    const std::string p = header.at("protocol").get<std::string>();
    tr.protocol = p == "delayed" ? Protocol::delayed : p == "censored" ? Protocol::censored : Protocol::standard;
  }
  if (header.contains("gamma")) tr.gamma = header.at("gamma").get<double>();
  if (header.contains("explore")) tr.explore = Distribution::from_json(header.at("explore"));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // column names
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 11) throw ContractError("transcript csv: expected 11 columns, got " + std::to_string(cols.size()));
    ForecastRound r;
    r.t = std::stoi(cols[0]);
    r.x = vec_from_json(nlohmann::json::parse(cols[1]));
    r.dist = atoms_from_text(cols[2]);
    r.params = vec_from_json(nlohmann::json::parse(cols[3]));
    r.eps_target = std::stod(cols[4]);
    r.eps_realized = std::stod(cols[5]);
    r.met_target = cols[6] == "1";
    if (!cols[7].empty()) r.y = vec_from_json(nlohmann::json::parse(cols[7]));
    r.z = std::stoi(cols[8]);
    r.delivery = std::stoi(cols[9]);
    r.effective = atoms_from_text(cols[10]);
    tr.rounds.push_back(std::move(r));
  }
  return tr;
}

std::uint64_t Transcript::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_csv()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Transcript::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

nlohmann::json Transcript::header_json() const {
  nlohmann::json j = header;
  j["body"] = body.to_json();
  j["protocol"] = to_string(protocol);
  j["gamma"] = gamma;
  if (!explore.empty()) j["explore"] = explore.to_json();
  j["horizon"] = horizon();
  return j;
}

// --- generic reduction ------------------------------------------------------

namespace {

EviOptions round_options(const ForecasterOptions& o, int t) {
  EviOptions e = o.evi;
  e.seed = derive_seed(o.seed, static_cast<std::uint64_t>(t), RngTag::evi);
  return e;
}

void check_round_order(bool awaiting, const char* engine) {
  if (awaiting) throw ProtocolError(std::string(engine) + ": predict called before the previous outcome");
}

}  // namespace

Forecaster::Forecaster(ConvexBody body, std::shared_ptr<const ParamFamily> family, std::unique_ptr<Learner> learner,
                       ForecasterOptions options)
    : body_(std::move(body)), family_(std::move(family)), learner_(std::move(learner)), options_(std::move(options)) {
  require(family_ != nullptr && learner_ != nullptr, "forecaster: family and learner are required");
  require(learner_->dim() == family_->param_dim(), "forecaster: learner dimension differs from the family's");
  if (options_.protocol == Protocol::censored) {
    require(options_.gamma > 0.0 && options_.gamma <= 1.0, "forecaster: gamma must lie in (0, 1]");
    require(options_.explore.has_value() && !options_.explore->empty(),
            "forecaster: censored protocol needs an exploration distribution");
    options_.explore->validate(body_);
  }
  if (options_.protocol == Protocol::delayed && !options_.delay) options_.delay = [](int) { return 1; };
  transcript_.body = body_;
  transcript_.protocol = options_.protocol;
  transcript_.gamma = options_.protocol == Protocol::censored ? options_.gamma : 1.0;
  if (options_.protocol == Protocol::censored) transcript_.explore = *options_.explore;
  transcript_.header = {
      {"engine", "reduction"},
      {"family", family_->name()},
      {"learner", learner_->name()},
      {"eps_policy", to_string(options_.eps)},
      {"evi_method", options_.evi.method == EviMethod::refined ? "refined" : "regret"},
      {"seed", options_.seed},
  };
}

const Distribution& Forecaster::last_solution() const {
  if (transcript_.rounds.empty()) throw ProtocolError("forecaster: no rounds yet");
  return transcript_.rounds.back().dist;
}

void Forecaster::deliver_due(int round) {
  auto it = pending_.find(round);
  if (it == pending_.end()) return;
  std::vector<LinearLoss> batch;
  for (auto& [t, y] : it->second) {
    ForecastRound& r = transcript_.rounds[static_cast<std::size_t>(t - 1)];
    batch.push_back({family_->loss_gradient(r.x, r.dist, y), t});
    r.y = std::move(y);
  }
  pending_.erase(it);
  learner_->update(std::span<const LinearLoss>(batch));
}

const Distribution& Forecaster::predict(const Context& x) {
  if (finished_) throw ProtocolError("forecaster: run already finished");
  check_round_order(awaiting_outcome_, "forecaster");
  require(all_finite(x), "forecaster: non-finite context");
  const int t = transcript_.horizon() + 1;
  if (options_.protocol == Protocol::delayed) deliver_due(t);

  ForecastRound r;
  r.t = t;
  r.x = x;
  r.params = learner_->params();
  r.eps_target = eps_schedule(t, options_.eps);

  EviProblem problem{body_, nullptr, family_->norm_bound(r.params), r.eps_target};
  problem.op = family_->bind(r.params, x);
  EviSolution sol = solve_evi(problem, round_options(options_, t));
  r.dist = std::move(sol.dist);
  r.eps_realized = sol.certified_gap;
  r.met_target = sol.met_target;

  if (options_.protocol == Protocol::censored) {
    r.z = derive_uniform(options_.seed, static_cast<std::uint64_t>(t), RngTag::censor) < options_.gamma ? 1 : 0;
    r.effective = Distribution::mixture(r.dist, *options_.explore, options_.gamma);
  }
  r.delivery = t + 1;
  transcript_.rounds.push_back(std::move(r));
  awaiting_outcome_ = true;
  const ForecastRound& cur = transcript_.rounds.back();
  return cur.z == 1 ? *options_.explore : cur.dist;
}

void Forecaster::observe(const Vec& y) {
  if (!awaiting_outcome_) throw ProtocolError("forecaster: observe called without a pending forecast");
  require(y.size() == body_.dim() && all_finite(y), "forecaster: outcome has the wrong shape");
  require(body_.contains(y), "forecaster: outcome lies outside the outcome set");
  ForecastRound& r = transcript_.rounds.back();
  awaiting_outcome_ = false;
  switch (options_.protocol) {
    case Protocol::standard:
      r.y = y;
      learner_->update(LinearLoss{family_->loss_gradient(r.x, r.dist, y), r.t});
      break;
    case Protocol::delayed: {
      const int d = options_.delay(r.t);
      require(d >= 1, "forecaster: delays must be positive integers");
      r.delivery = r.t + d;
      pending_[r.delivery].emplace_back(r.t, y);
      break;
    }
    case Protocol::censored:
      // y is committed by Nature in advance, so it is recorded for auditing;
      // the learner only sees it on exploration rounds.
      r.y = y;
      if (r.z == 1) {
        const LinearLoss raw{family_->loss_gradient(r.x, r.dist, y), r.t};
        learner_->update(ImportanceWeighted::weigh(std::span<const LinearLoss>(&raw, 1), options_.gamma, true));
      }
      break;
  }
}

const Transcript& Forecaster::finish() {
  if (awaiting_outcome_) throw ProtocolError("forecaster: finish called with a forecast awaiting its outcome");
  if (!finished_ && options_.flush_pending) {
    for (auto& [round, batch] : pending_) {
      for (auto& [t, y] : batch) transcript_.rounds[static_cast<std::size_t>(t - 1)].y = std::move(y);
    }
    pending_.clear();
  }
  finished_ = true;
  return transcript_;
}

// --- kernel forecaster ------------------------------------------------------

K29Forecaster::K29Forecaster(ConvexBody body, MatrixKernel kernel, ForecasterOptions options)
    : body_(std::move(body)), kernel_(std::move(kernel)), options_(std::move(options)) {
  require(kernel_.dim() == body_.dim(), "k29: kernel dimension differs from the outcome set");
  require(options_.protocol == Protocol::standard, "k29: only the standard protocol is supported");
  transcript_.body = body_;
  transcript_.header = {
      {"engine", "k29"},
      {"kernel", kernel_.name()},
      {"eps_policy", to_string(options_.eps)},
      {"evi_method", options_.evi.method == EviMethod::refined ? "refined" : "regret"},
      {"seed", options_.seed},
  };
}

const Distribution& K29Forecaster::predict(const Context& x) {
  check_round_order(awaiting_outcome_, "k29");
  require(all_finite(x), "k29: non-finite context");
  const int t = transcript_.horizon() + 1;
  ForecastRound r;
  r.t = t;
  r.x = x;
  r.eps_target = eps_schedule(t, options_.eps);
  EviProblem problem{body_, k29_operator(history_, kernel_, x), k29_norm_bound(history_, kernel_), r.eps_target};
  EviSolution sol = solve_evi(problem, round_options(options_, t));
  r.dist = std::move(sol.dist);
  r.eps_realized = sol.certified_gap;
  r.met_target = sol.met_target;
  r.delivery = t + 1;
  transcript_.rounds.push_back(std::move(r));
  awaiting_outcome_ = true;
  return transcript_.rounds.back().dist;
}

void K29Forecaster::observe(const Vec& y) {
  if (!awaiting_outcome_) throw ProtocolError("k29: observe called without a pending forecast");
  require(y.size() == body_.dim() && all_finite(y), "k29: outcome has the wrong shape");
  require(body_.contains(y), "k29: outcome lies outside the outcome set");
  ForecastRound& r = transcript_.rounds.back();
  r.y = y;
  history_.append(r.x, r.dist, y);
  awaiting_outcome_ = false;
}

// --- natures ----------------------------------------------------------------

const Transcript& run_protocol(ForecastEngine& engine, Nature& nature, int horizon) {
  require(horizon >= 0, "run_protocol: negative horizon");
  const bool committed = engine.requires_committed_outcomes();
  if (committed) require(!nature.adaptive(), "run_protocol: censored protocol needs a non-adaptive nature");
  for (int t = 1; t <= horizon; ++t) {
    const Context x = nature.context(t);
    if (committed) {
      const Vec y = nature.outcome(t, x, Distribution{});
      engine.predict(x);
      engine.observe(y);
    } else {
      const Distribution& d = engine.predict(x);
      engine.observe(nature.outcome(t, x, d));
    }
  }
  return engine.finish();
}

EviAdversary::EviAdversary(TestFunction h, Context x, ConvexBody body)
    : h_(std::move(h)), x_(std::move(x)), body_(std::move(body)) {}

Vec EviAdversary::outcome(int, const Context& x, const Distribution& forecast) {
  require(!forecast.empty(), "evi adversary: needs the forecast");
  const Vec a = forecast.expect([&](const Vec& p) -> Vec { return h_.eval(x, p); });
  return body_.linopt(-a);
}

// --- audits -----------------------------------------------------------------

namespace {

const Vec& resolved_outcome(const ForecastRound& r) {
  if (!r.y) throw ProtocolError("audit: outcome of round " + std::to_string(r.t) + " is unresolved");
  return *r.y;
}

double correlation(const TestFunction& h, const Context& x, const Distribution& d, const Vec& y) {
  return d.expect_scalar([&](const Vec& p) { return h.eval(x, p).dot(y - p); });
}

}  // namespace

Series mc_error(const Transcript& tr, const TestFunction& h) {
  Series s;
  s.per_round.reserve(tr.rounds.size());
  for (const ForecastRound& r : tr.rounds) {
    const double v = correlation(h, r.x, r.audited(), resolved_outcome(r));
    s.per_round.push_back(v);
    s.total += v;
  }
  return s;
}

Series incurred_correlation(const Transcript& tr, const ParamFamily& family) {
  Series s;
  for (const ForecastRound& r : tr.rounds) {
    const Vec& y = resolved_outcome(r);
    const double v =
        r.dist.expect_scalar([&](const Vec& p) { return family.eval(r.params, r.x, p).dot(y - p); });
    s.per_round.push_back(v);
    s.total += v;
  }
  return s;
}

double regret(const Transcript& tr, const ParamFamily& family, const TestFunction& comparator,
              bool importance_weighted) {
  double total = 0.0;
  for (const ForecastRound& r : tr.rounds) {
    double scale = 1.0;
    if (importance_weighted) {
      require(r.z >= 0, "regret: importance weighting needs exploration bits");
      scale = r.z / tr.gamma;
      if (scale == 0.0) continue;
    }
    const Vec& y = resolved_outcome(r);
    const double own =
        -r.dist.expect_scalar([&](const Vec& p) { return family.eval(r.params, r.x, p).dot(y - p); });
    const double other = -correlation(comparator, r.x, r.dist, y);
    total += scale * (own - other);
  }
  return total;
}

double evi_total(const Transcript& tr) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) s += r.eps_realized;
  return s;
}

double evi_total_positive(const Transcript& tr) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) s += std::max(r.eps_realized, 0.0);
  return s;
}

double residual_feature_energy(const Transcript& tr, const LinearFamily& family) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) s += family.residual_feature(r.x, r.dist, resolved_outcome(r)).squaredNorm();
  return s;
}

double kernel_residual_energy(const Transcript& tr, const MatrixKernel& kernel) {
  double s = 0.0;
  for (const ForecastRound& r : tr.rounds) {
    const Vec& y = resolved_outcome(r);
    for (const Atom& a : r.dist.atoms()) {
      const Vec ra = y - a.point;
      for (const Atom& b : r.dist.atoms()) {
        s += a.weight * b.weight * ra.dot(kernel.apply(r.x, a.point, r.x, b.point, y - b.point));
      }
    }
  }
  return s;
}

std::vector<TestFunction> comparator_grid(const ParamFamily& family, const ConvexBody& body, double radius,
                                          int random_count, std::uint64_t seed) {
  if (const auto* fin = dynamic_cast<const FiniteFamily*>(&family)) return fin->members();
  const auto* lin = dynamic_cast<const LinearFamily*>(&family);
  require(lin != nullptr, "comparator grid: unsupported family " + family.name());
  require(radius > 0.0 && random_count >= 0, "comparator grid: bad radius or count");
  const int r = lin->param_dim();
  std::vector<TestFunction> grid;
  auto rng = derive_stream(seed, 0, RngTag::grid);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < random_count; ++k) {
    Vec theta(r);
    for (int i = 0; i < r; ++i) theta[i] = normal(rng);
    const double n = theta.norm();
    if (n == 0.0) theta[0] = 1.0; else theta /= n;
    TestFunction h = linear_test(lin->features(), radius * theta, body);
    h.name = "sphere" + std::to_string(k);
    grid.push_back(std::move(h));
  }
  for (int i = 0; i < r; ++i) {
    for (double sign : {1.0, -1.0}) {
      const Vec theta = sign * radius * Vec::Unit(r, i);
      TestFunction h = linear_test(lin->features(), theta, body);
      h.name = (sign > 0 ? "+e" : "-e") + std::to_string(i);
      grid.push_back(std::move(h));
    }
  }
  return grid;
}

bool LedgerReport::passed() const { return failures() == 0; }

std::size_t LedgerReport::failures() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const LedgerRow& r) { return !r.pass; }));
}

nlohmann::json LedgerReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const LedgerRow& r : rows) {
    rs.push_back({{"name", r.name}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"pass", r.pass}, {"detail", r.detail}});
  }
  return {{"title", title}, {"passed", passed()}, {"failures", failures()}, {"rows", rs}};
}

LedgerReport online_reduction_ledger(const Transcript& tr, const ParamFamily& family, const std::vector<TestFunction>& grid,
                              double tol) {
  LedgerReport rep;
  rep.title = "online-to-multicalibration ledger";
  const double T = tr.horizon();
  const double evi = evi_total(tr);
  const Series incurred = incurred_correlation(tr, family);

  // Per-round EVI inequality on the realized outcome.
  double worst = -INFINITY;
  int worst_t = 0;
  for (std::size_t i = 0; i < tr.rounds.size(); ++i) {
    const double excess = incurred.per_round[i] - tr.rounds[i].eps_realized;
    if (excess > worst) {
      worst = excess;
      worst_t = tr.rounds[i].t;
    }
  }
  if (!tr.rounds.empty()) {
    rep.rows.push_back({"per-round EVI", worst, tol, worst <= tol, {{"worst_round", worst_t}}});
  }

  for (const TestFunction& h : grid) {
    const double mc = mc_error(tr, h).total;
    const double reg = regret(tr, family, h);
    const double rhs = reg + evi + tol * T;
    rep.rows.push_back({"mc-err " + h.name, mc, rhs, mc <= rhs, {{"regret", reg}, {"evi", evi}}});
  }
  return rep;
}

LedgerReport censored_ledger(const Transcript& tr, const ParamFamily& family, const std::vector<TestFunction>& grid,
                             double tol) {
  require(tr.protocol == Protocol::censored && !tr.explore.empty(), "censored ledger: transcript is not censored");
  LedgerReport rep;
  rep.title = "censored-outcome ledger";
  const double T = tr.horizon();
  const double g = tr.gamma;
  const double evi = evi_total(tr);
  const double evi_pos = evi_total_positive(tr);
  for (const TestFunction& h : grid) {
    // MC-Err on the effective mixture, and its two components.
    double mix = 0.0, on_solution = 0.0, on_explore = 0.0;
    for (const ForecastRound& r : tr.rounds) {
      const Vec& y = resolved_outcome(r);
      mix += correlation(h, r.x, r.audited(), y);
      on_solution += correlation(h, r.x, r.dist, y);
      on_explore += correlation(h, r.x, tr.explore, y);
    }
    const double L = h.value_bound;
    const double iw = regret(tr, family, h, true);
    const double true_regret = regret(tr, family, h, false);
    const double scale = std::max(1.0, std::abs(mix));

    const double stated = g * L * T + evi + iw + tol * T;
    rep.rows.push_back({"stated bound " + h.name, mix, stated, mix <= stated,
                        {{"gamma_LT", g * L * T}, {"evi", evi}, {"iw_regret", iw}}});

    const double decomposed = (1.0 - g) * on_solution + g * on_explore;
    const double err = std::abs(mix - decomposed);
    rep.rows.push_back({"mixture split " + h.name, err, 1e-9 * scale, err <= 1e-9 * scale,
                        {{"solution_term", on_solution}, {"explore_term", on_explore}}});

    const double exact = g * L * T + (1.0 - g) * (true_regret + evi_pos) + tol * T;
    rep.rows.push_back({"per-seed bound " + h.name, mix, exact, mix <= exact,
                        {{"true_regret", true_regret}, {"iw_regret", iw}}});
  }
  return rep;
}

}  // namespace mcr
