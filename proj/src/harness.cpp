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

#include "mcr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>

#include "mcr/json_util.hpp"
#include "mcr/rng.hpp"

namespace mcr {

using nlohmann::json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::simulate: return "simulate";
    case Mode::evi: return "evi";
    case Mode::phi: return "phi";
    case Mode::omni: return "omni";
    case Mode::self_play: return "self_play";
  }
  return "simulate";
}

Mode mode_from_string(const std::string& s) {
  if (s == "simulate") return Mode::simulate;
  if (s == "evi" || s == "evi-solve") return Mode::evi;
  if (s == "phi" || s == "phi-regret") return Mode::phi;
  if (s == "omni" || s == "omnipredict") return Mode::omni;
  if (s == "self_play" || s == "self-play") return Mode::self_play;
  throw ContractError("unknown mode: " + s);
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; });
    require(known, where + ": unknown key '" + it.key() + "'");
  }
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "standard") return Protocol::standard;
  if (s == "delayed") return Protocol::delayed;
  if (s == "censored") return Protocol::censored;
  throw ContractError("unknown protocol: " + s);
}

json object_or_empty(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

std::string str(const json& j, const char* key, const std::string& fallback) {
  return j.contains(key) ? j.at(key).get<std::string>() : fallback;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j,
             {"name", "mode", "outcomes", "actions", "protocol", "delay", "gamma", "explore", "engine", "tests",
              "kernel", "deviations", "omni", "game", "evi", "nature", "horizon", "eps", "evi_method", "seed", "grid",
              "out_dir", "plots"},
             "config");
  ExperimentConfig c;
  c.name = str(j, "name", c.name);
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("outcomes")) c.outcomes = ConvexBody::from_json(j.at("outcomes"));
  if (j.contains("actions")) c.actions = ConvexBody::from_json(j.at("actions"));
  if (j.contains("protocol")) c.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  c.delay = j.value("delay", c.delay);
  if (j.contains("gamma")) {
    const json& g = j.at("gamma");
    if (g.is_string()) {
      require(g.get<std::string>() == "auto", "config: gamma must be a number or \"auto\"");
      c.gamma = -1.0;
    } else {
      c.gamma = g.get<double>();
    }
  }
  if (j.contains("explore")) c.explore = Distribution::from_json(j.at("explore"));
  c.engine = str(j, "engine", c.engine);
  c.tests = object_or_empty(j, "tests");
  c.kernel = object_or_empty(j, "kernel");
  c.deviations = object_or_empty(j, "deviations");
  c.omni = object_or_empty(j, "omni");
  c.game = object_or_empty(j, "game");
  c.evi = object_or_empty(j, "evi");
  c.nature = object_or_empty(j, "nature");
  c.horizon = j.value("horizon", c.horizon);
  if (j.contains("eps")) c.eps = eps_policy_from_string(j.at("eps").get<std::string>());
  if (j.contains("evi_method")) {
    const std::string m = j.at("evi_method").get<std::string>();
    require(m == "refined" || m == "regret", "evi_method: refined or regret");
    c.evi_method = m == "regret" ? EviMethod::regret : EviMethod::refined;
  }
  c.seed = j.value("seed", c.seed);
  c.grid = j.value("grid", c.grid);
  c.out_dir = str(j, "out_dir", c.out_dir);
  c.plots = j.value("plots", c.plots);
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  j["mode"] = to_string(mode);
  j["outcomes"] = outcomes.to_json();
  if (actions) j["actions"] = actions->to_json();
  j["protocol"] = mcr::to_string(protocol);
  j["delay"] = delay;
  if (gamma > 0.0) j["gamma"] = gamma; else j["gamma"] = "auto";
  if (explore) j["explore"] = explore->to_json();
  j["engine"] = engine;
  j["tests"] = tests;
  j["kernel"] = kernel;
  j["deviations"] = deviations;
  j["omni"] = omni;
  j["game"] = game;
  j["evi"] = evi;
  j["nature"] = nature;
  j["horizon"] = horizon;
  if (eps) j["eps"] = mcr::to_string(*eps);
  j["evi_method"] = evi_method == EviMethod::regret ? "regret" : "refined";
  j["seed"] = seed;
  j["grid"] = grid;
  j["out_dir"] = out_dir;
  j["plots"] = plots;
  return j;
}

void ExperimentConfig::validate() const {
  require(horizon >= 0, "config: horizon must be nonnegative");
  require(delay >= 1, "config: delay must be at least 1");
  require(grid >= 0, "config: grid must be nonnegative");
  require(!out_dir.empty(), "config: out_dir is empty");
  require(gamma < 0.0 || (gamma > 0.0 && gamma <= 1.0), "config: gamma must lie in (0, 1]");
  if (explore) explore->validate(outcomes);
  const bool standard = protocol == Protocol::standard;
  switch (mode) {
    case Mode::simulate: {
      static const std::vector<std::string> engines = {"hedge", "hedge-doubling", "ftrl", "ogd", "k29"};
      require(std::find(engines.begin(), engines.end(), engine) != engines.end(),
              "config: simulate engine must be one of hedge, hedge-doubling, ftrl, ogd, k29");
      if (engine == "k29") {
        require(!kernel.empty(), "config: the k29 engine needs a kernel");
        require(standard, "config: the k29 engine runs the standard protocol only");
      } else {
        const std::string kind = str(tests, "kind", "");
        const bool finite = engine == "hedge" || engine == "hedge-doubling";
        require(kind == (finite ? "tables" : "linear"),
                "config: engine " + engine + " needs tests.kind = " + (finite ? "tables" : "linear"));
      }
      break;
    }
    case Mode::evi:
      require(!evi.empty(), "config: evi mode needs an evi section");
      require(!tests.empty(), "config: evi mode needs a tests section for the operator");
      break;
    case Mode::phi:
      require(actions.has_value(), "config: phi mode needs an action body");
      require(!deviations.empty(), "config: phi mode needs a deviations section");
      require(standard, "config: phi mode runs the standard protocol only");
      require(actions->dim() == outcomes.dim(), "config: loss and action bodies differ in dimension");
      break;
    case Mode::omni:
      require(outcomes.kind() == ConvexBody::Kind::simplex, "config: omni mode needs simplex outcomes");
      require(standard, "config: omni mode runs the standard protocol only");
      break;
    case Mode::self_play:
      require(!game.empty(), "config: self_play mode needs a game section");
      require(standard, "config: self_play mode runs the standard protocol only");
      break;
  }
}

double ExperimentConfig::effective_gamma() const {
  if (gamma > 0.0) return gamma;
  return horizon > 0 ? std::pow(static_cast<double>(horizon), -0.25) : 1.0;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ContractError("config " + path + ": " + e.what());
  }
  try {
    return ExperimentConfig::from_json(j);
  } catch (const json::exception& e) {
    throw ContractError("config " + path + ": " + e.what());
  }
}

// --- builders ----------------------------------------------------------------

FeatureMap build_features(const json& spec, const ConvexBody& body) {
  check_keys(spec, {"kind", "context_dim", "degree", "coordinate_bound", "contexts", "cells", "count", "bandwidth",
                    "seed"},
             "features");
  const std::string kind = str(spec, "kind", "identity");
  const int d = body.dim();
  if (kind == "identity") return identity_features(d);
  if (kind == "affine") return append_constant(identity_features(d));
  if (kind == "monomial") {
    return monomial_features(spec.value("context_dim", 0), d, spec.value("degree", 1),
                             spec.value("coordinate_bound", std::max(1.0, body.outer_radius())));
  }
  if (kind == "bins") return bin_features(body, spec.value("contexts", 1), spec.value("cells", 2));
  if (kind == "fourier") {
    return fourier_features(spec.value("context_dim", 0), d, spec.value("count", 16), spec.value("bandwidth", 1.0),
                            spec.value("seed", std::uint64_t{0}));
  }
  throw ContractError("unknown feature map: " + kind);
}

MatrixKernel build_kernel(const json& spec, const ConvexBody& body) {
  check_keys(spec, {"kind", "bandwidth", "degree", "offset", "bound", "features", "parts", "scale"}, "kernel");
  const std::string kind = str(spec, "kind", "gaussian");
  const int d = body.dim();
  const double r2 = body.outer_radius() * body.outer_radius();
  if (kind == "gaussian") return MatrixKernel::gaussian(d, spec.value("bandwidth", 1.0));
  if (kind == "linear") return MatrixKernel::linear(d, spec.value("bound", r2));
  if (kind == "polynomial") {
    const int degree = spec.value("degree", 2);
    const double offset = spec.value("offset", 1.0);
    return MatrixKernel::polynomial(d, degree, offset, spec.value("bound", std::pow(offset + r2, degree)));
  }
  if (kind == "features") return MatrixKernel::from_features(build_features(object_or_empty(spec, "features"), body));
  if (kind == "constant") return constant_kernel(d, spec.value("scale", 1.0));
  if (kind == "sum") {
    std::vector<MatrixKernel> parts;
    for (const json& p : spec.at("parts")) parts.push_back(build_kernel(p, body));
    return MatrixKernel::sum(std::move(parts));
  }
  throw ContractError("unknown kernel: " + kind);
}

FamilyBundle build_family(const json& spec, const ConvexBody& body, int grid_count, std::uint64_t seed) {
  check_keys(spec, {"kind", "count", "contexts", "cells", "lo", "hi", "seed", "file", "features", "radius", "grid"},
             "tests");
  const std::string kind = str(spec, "kind", "");
  const int d = body.dim();
  const std::uint64_t root = spec.value("seed", seed);
  FamilyBundle out;
  if (kind == "tables") {
    const int cells = spec.value("cells", 2);
    std::vector<TableSpec> tables;
    if (spec.contains("file")) {
      tables = load_tables_csv(spec.at("file").get<std::string>(), d, cells);
    } else {
      const int count = spec.value("count", 8);
      require(count >= 1, "tests: count must be positive");
      for (int i = 0; i < count; ++i) {
        tables.push_back(random_table(spec.value("contexts", 1), cells, d, spec.value("lo", -1.0), spec.value("hi", 1.0),
                                      derive_seed(root, static_cast<std::uint64_t>(i), RngTag::grid)));
      }
    }
    std::vector<TestFunction> members;
    for (std::size_t i = 0; i < tables.size(); ++i)
      members.push_back(table_test("table" + std::to_string(i), std::move(tables[i]), body));
    auto fam = std::make_shared<FiniteFamily>(members, d);
    out.grid = std::move(members);
    out.family = std::move(fam);
    return out;
  }
  if (kind == "linear") {
    auto fam = std::make_shared<LinearFamily>(build_features(object_or_empty(spec, "features"), body));
    out.radius = spec.value("radius", 1.0);
    require(out.radius > 0.0, "tests: radius must be positive");
    out.grid = comparator_grid(*fam, body, out.radius, spec.value("grid", grid_count), root);
    out.family = std::move(fam);
    return out;
  }
  throw ContractError("tests.kind must be tables or linear");
}

std::unique_ptr<Learner> build_learner(const std::string& engine, const FamilyBundle& bundle, const ConvexBody& body,
                                       int horizon, const ExperimentConfig& config) {
  const double g = config.protocol == Protocol::censored ? config.effective_gamma() : 1.0;
  const int T = std::max(horizon, 1);
  if (engine == "hedge" || engine == "hedge-doubling") {
    const auto* fin = dynamic_cast<const FiniteFamily*>(bundle.family.get());
    require(fin != nullptr, "engine " + engine + " needs a finite family");
    const int n = fin->param_dim();
    // Importance weighting scales observed losses by 1/γ.
    const double range = (fin->loss_range() > 0.0 ? fin->loss_range() : 1.0) / g;
    if (engine == "hedge") return std::make_unique<Hedge>(n, Hedge::default_rate(n, T, range));
    return std::make_unique<DoublingHedge>(n, range);
  }
  const auto* lin = dynamic_cast<const LinearFamily*>(bundle.family.get());
  require(lin != nullptr, "engine " + engine + " needs a linear family");
  const int r = lin->param_dim();
  const double grad = std::max(lin->features().op_norm_bound * body.diameter(), 1e-12);
  if (engine == "ftrl") {
    const double budget = T * grad * grad / g;
    return std::make_unique<FtrlBall>(r, bundle.radius, FtrlBall::default_rate(bundle.radius, budget));
  }
  if (engine == "ogd") {
    const ConvexBody ball = ConvexBody::ball(Vec::Zero(r), bundle.radius);
    return std::make_unique<Ogd>(ball, Ogd::default_rate(ball, grad / std::sqrt(g), T));
  }
  throw ContractError("unknown engine: " + engine);
}

ForecasterOptions forecaster_options(const ExperimentConfig& config) {
  ForecasterOptions o;
  if (config.eps) o.eps = *config.eps;
  o.evi.method = config.evi_method;
  o.evi.seed = config.seed;
  o.seed = config.seed;
  o.protocol = config.protocol;
  if (config.protocol == Protocol::delayed) {
    const int d = config.delay;
    o.delay = [d](int) { return d; };
  }
  if (config.protocol == Protocol::censored) {
    o.gamma = config.effective_gamma();
    o.explore = config.explore ? *config.explore : Distribution::point_mass(config.outcomes.center());
  }
  return o;
}

// --- natures -----------------------------------------------------------------

ContextSampler ContextSampler::from_json(const json& j, std::uint64_t seed) {
  ContextSampler s;
  s.seed = seed;
  if (j.is_null() || j.empty()) return s;
  check_keys(j, {"kind", "count", "dim"}, "contexts");
  const std::string kind = str(j, "kind", "none");
  if (kind == "none") return s;
  if (kind == "ids") s.kind = Kind::ids;
  else if (kind == "cycle") s.kind = Kind::cycle;
  else if (kind == "uniform") s.kind = Kind::uniform;
  else throw ContractError("unknown context kind: " + kind);
  s.count = j.value("count", 1);
  s.dim = j.value("dim", 1);
  require(s.count >= 1 && s.dim >= 1, "contexts: count and dim must be positive");
  return s;
}

Context ContextSampler::operator()(int t) const {
  switch (kind) {
    case Kind::none: return Context();
    case Kind::cycle: {
      Context x(1);
      x[0] = static_cast<double>((t - 1) % count);
      return x;
    }
    case Kind::ids: {
      auto rng = derive_stream(seed, 2 * static_cast<std::uint64_t>(t), RngTag::nature);
      Context x(1);
      x[0] = static_cast<double>(std::uniform_int_distribution<int>(0, count - 1)(rng));
      return x;
    }
    case Kind::uniform: {
      auto rng = derive_stream(seed, 2 * static_cast<std::uint64_t>(t), RngTag::nature);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Context x(dim);
      for (int i = 0; i < dim; ++i) x[i] = u(rng);
      return x;
    }
  }
  return Context();
}

IidNature::IidNature(ConvexBody body, Sampler sampler, ContextSampler contexts, std::uint64_t seed, Distribution atoms,
                     Mat conditional)
    : body_(std::move(body)),
      sampler_(sampler),
      contexts_(contexts),
      seed_(seed),
      atoms_(std::move(atoms)),
      conditional_(std::move(conditional)) {
  if (sampler_ == Sampler::vertices) {
    auto vs = body_.vertices();
    require(vs.has_value() && !vs->empty(), "iid nature: vertex sampling needs a polyhedral body");
    vertices_ = std::move(*vs);
  }
  if (sampler_ == Sampler::atoms) {
    require(!atoms_.empty(), "iid nature: atoms sampler needs atoms");
    atoms_.validate(body_);
  }
  if (sampler_ == Sampler::conditional) {
    require(body_.kind() == ConvexBody::Kind::simplex, "iid nature: conditional labels need simplex outcomes");
    require(conditional_.cols() == body_.dim(), "iid nature: conditional table needs one column per class");
    for (Eigen::Index r = 0; r < conditional_.rows(); ++r) {
      require(conditional_.row(r).minCoeff() >= 0.0 && std::abs(conditional_.row(r).sum() - 1.0) <= 1e-9,
              "iid nature: conditional rows must be distributions");
    }
  }
}

namespace {

int draw_index(const std::vector<double>& weights, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

Vec IidNature::outcome(int t, const Context& x, const Distribution&) {
  auto rng = derive_stream(seed_, 2 * static_cast<std::uint64_t>(t) + 1, RngTag::nature);
  switch (sampler_) {
    case Sampler::vertices:
      return vertices_[static_cast<std::size_t>(
          std::uniform_int_distribution<int>(0, static_cast<int>(vertices_.size()) - 1)(rng))];
    case Sampler::uniform: return body_.sample(rng);
    case Sampler::atoms: {
      std::vector<double> w;
      for (const Atom& a : atoms_.atoms()) w.push_back(a.weight);
      return atoms_.atoms()[static_cast<std::size_t>(draw_index(w, rng))].point;
    }
    case Sampler::conditional: {
      const int id = context_id(x);
      require(id < conditional_.rows(), "iid nature: context id beyond the conditional table");
      std::vector<double> w;
      for (Eigen::Index i = 0; i < conditional_.cols(); ++i) w.push_back(conditional_(id, i));
      return one_hot(body_.dim(), draw_index(w, rng));
    }
  }
  return body_.center();
}

FixedSequenceNature::FixedSequenceNature(std::vector<Context> contexts, std::vector<Vec> outcomes)
    : contexts_(std::move(contexts)), outcomes_(std::move(outcomes)) {
  require(contexts_.empty() || contexts_.size() == outcomes_.size(),
          "fixed sequence: contexts and outcomes differ in length");
}

Context FixedSequenceNature::context(int t) {
  if (contexts_.empty()) return Context();
  require(t >= 1 && t <= static_cast<int>(contexts_.size()), "fixed sequence: round beyond the sequence");
  return contexts_[static_cast<std::size_t>(t - 1)];
}

Vec FixedSequenceNature::outcome(int t, const Context&, const Distribution&) {
  require(t >= 1 && t <= length(), "fixed sequence: round " + std::to_string(t) + " beyond the sequence");
  return outcomes_[static_cast<std::size_t>(t - 1)];
}

FixedSequenceNature load_sequence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open sequence file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "sequence file " + path + ": empty");
  std::vector<char> role;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      require(!cell.empty() && (cell[0] == 'x' || cell[0] == 'y'),
              "sequence file " + path + ": columns must be named x<i> or y<i>");
      role.push_back(cell[0]);
    }
  }
  const auto nx = std::count(role.begin(), role.end(), 'x');
  std::vector<Context> xs;
  std::vector<Vec> ys;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> xv, yv;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      require(col < role.size(), "sequence file " + path + ": too many cells");
      (role[col++] == 'x' ? xv : yv).push_back(std::stod(cell));
    }
    require(col == role.size(), "sequence file " + path + ": too few cells");
    ys.push_back(Eigen::Map<const Vec>(yv.data(), static_cast<Eigen::Index>(yv.size())));
    if (nx > 0) xs.push_back(Eigen::Map<const Vec>(xv.data(), static_cast<Eigen::Index>(xv.size())));
  }
  return FixedSequenceNature(std::move(xs), std::move(ys));
}

std::unique_ptr<Nature> build_nature(const json& spec, const ConvexBody& body, std::uint64_t seed,
                                     const TestFunction* adversary_target) {
  check_keys(spec, {"kind", "sampler", "atoms", "table", "contexts", "seed", "file", "outcomes", "x", "target"},
             "nature");
  const std::string kind = str(spec, "kind", "iid");
  const std::uint64_t root = spec.value("seed", seed);
  const ContextSampler contexts = ContextSampler::from_json(spec.contains("contexts") ? spec.at("contexts") : json(), root);
  if (kind == "iid") {
    const std::string s = str(spec, "sampler", body.vertices() ? "vertices" : "uniform");
    IidNature::Sampler sampler;
    if (s == "vertices") sampler = IidNature::Sampler::vertices;
    else if (s == "uniform") sampler = IidNature::Sampler::uniform;
    else if (s == "atoms") sampler = IidNature::Sampler::atoms;
    else if (s == "conditional") sampler = IidNature::Sampler::conditional;
    else throw ContractError("unknown iid sampler: " + s);
    Distribution atoms = spec.contains("atoms") ? Distribution::from_json(spec.at("atoms")) : Distribution();
    Mat table = spec.contains("table") ? mat_from_json(spec.at("table")) : Mat();
    return std::make_unique<IidNature>(body, sampler, contexts, root, std::move(atoms), std::move(table));
  }
  if (kind == "fixed_sequence") {
    if (spec.contains("file"))
      return std::make_unique<FixedSequenceNature>(load_sequence_csv(spec.at("file").get<std::string>()));
    std::vector<Vec> ys;
    std::vector<Context> xs;
    for (const json& y : spec.at("outcomes")) ys.push_back(vec_from_json(y));
    if (spec.contains("x"))
      for (const json& x : spec.at("x")) xs.push_back(vec_from_json(x));
    return std::make_unique<FixedSequenceNature>(std::move(xs), std::move(ys));
  }
  if (kind == "adversary") {
    require(adversary_target != nullptr, "nature: adversary needs a target test");
    return std::make_unique<EviAdversary>(*adversary_target, contexts(1), body);
  }
  if (kind == "self_play") throw ContractError("nature: self_play runs through the self_play mode");
  throw ContractError("unknown nature kind: " + kind);
}

// --- metrics -------------------------------------------------------------------------

void Metrics::add(std::string name, std::vector<double> series) {
  require(columns.empty() || series.size() == columns.front().size(), "metrics: series length mismatch for " + name);
  names.push_back(std::move(name));
  columns.push_back(std::move(series));
}

const std::vector<double>* Metrics::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &columns[i];
  return nullptr;
}

std::size_t Metrics::length() const { return columns.empty() ? 0 : columns.front().size(); }

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string Metrics::to_csv() const {
  std::string out = "t";
  for (const std::string& n : names) out += "," + csv_quote(n);
  out += "\n";
  for (std::size_t t = 0; t < length(); ++t) {
    out += std::to_string(t + 1);
    for (const auto& c : columns) out += "," + format_double(c[t]);
    out += "\n";
  }
  return out;
}

std::vector<double> cumulative(const std::vector<double>& per_round) {
  std::vector<double> out(per_round.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < per_round.size(); ++i) out[i] = acc += per_round[i];
  return out;
}

// --- experiment ------------------------------------------------------------------------

bool ExperimentResult::passed() const {
  return std::all_of(ledgers.begin(), ledgers.end(), [](const LedgerReport& r) { return r.passed(); });
}

namespace {

constexpr std::size_t kMaxMetricSeries = 32;

const Transcript& drive(ForecastEngine& engine, Nature& nature, int horizon) {
  const bool committed = engine.requires_committed_outcomes();
  if (committed) require(!nature.adaptive(), "censored protocol needs a non-adaptive nature");
  for (int t = 1; t <= horizon; ++t) {
    try {
      const Context x = nature.context(t);
      if (committed) {
        const Vec y = nature.outcome(t, x, Distribution{});
        engine.predict(x);
        engine.observe(y);
      } else {
        const Distribution& d = engine.predict(x);
        engine.observe(nature.outcome(t, x, d));
      }
    } catch (const ContractError& e) {
      throw ContractError("round " + std::to_string(t) + ": " + e.what());
    }
  }
  return engine.finish();
}

std::vector<double> eps_series(const Transcript& tr) {
  std::vector<double> v;
  for (const ForecastRound& r : tr.rounds) v.push_back(r.eps_realized);
  return v;
}

json ledger_summary(const std::vector<LedgerReport>& ledgers) {
  json j = json::object();
  for (const LedgerReport& r : ledgers)
    j[r.title] = {{"rows", r.rows.size()}, {"failures", r.failures()}};
  return j;
}

std::size_t pick_target(const json& nature, std::size_t n) {
  const int k = nature.value("target", 0);
  require(k >= 0 && static_cast<std::size_t>(k) < n, "nature: adversary target out of range");
  return static_cast<std::size_t>(k);
}

// MC-Err columns, regret columns from MC-Err minus the incurred correlation,
// and the regret-plus-EVI right side for the test with the largest final MC-Err.
void family_metrics(ExperimentResult& res, const ParamFamily& family, const std::vector<TestFunction>& grid) {
  const Transcript& tr = res.transcript;
  const std::vector<double> evi = cumulative(eps_series(tr));
  const bool censored = tr.protocol == Protocol::censored;
  std::vector<double> incurred;
  if (!censored) incurred = cumulative(incurred_correlation(tr, family).per_round);
  double worst = -INFINITY;
  std::size_t worst_i = 0;
  std::vector<std::vector<double>> mcs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    mcs.push_back(cumulative(mc_error(tr, grid[i]).per_round));
    const double final = mcs.back().empty() ? 0.0 : mcs.back().back();
    if (final > worst) {
      worst = final;
      worst_i = i;
    }
  }
  for (std::size_t i = 0; i < grid.size() && i < kMaxMetricSeries; ++i) res.metrics.add("mc:" + grid[i].name, mcs[i]);
  if (!censored) {
    for (std::size_t i = 0; i < grid.size() && i < kMaxMetricSeries; ++i) {
      std::vector<double> reg(mcs[i].size());
      for (std::size_t t = 0; t < reg.size(); ++t) reg[t] = mcs[i][t] - incurred[t];
      res.metrics.add("regret:" + grid[i].name, std::move(reg));
    }
  }
  res.metrics.add("evi:sum", evi);
  if (!grid.empty() && !censored) {
    std::vector<double> rhs(evi.size());
    for (std::size_t t = 0; t < rhs.size(); ++t) rhs[t] = mcs[worst_i][t] - incurred[t] + evi[t];
    res.metrics.add("bound:mc " + grid[worst_i].name, mcs[worst_i]);
    res.metrics.add("bound:regret+evi " + grid[worst_i].name, std::move(rhs));
  }
  double max_mc = -INFINITY;
  for (const auto& m : mcs) max_mc = std::max(max_mc, m.empty() ? 0.0 : m.back());
  res.summary["max_mc_err"] = grid.empty() ? 0.0 : max_mc;
}

void finish_summary(ExperimentResult& res) {
  const Transcript& tr = res.transcript;
  res.summary["name"] = res.config.name;
  res.summary["mode"] = to_string(res.config.mode);
  res.summary["engine"] = res.config.engine;
  res.summary["horizon"] = res.config.horizon;
  res.summary["seed"] = res.config.seed;
  res.summary["transcript_hash"] = tr.hash_hex();
  res.summary["evi_total"] = evi_total(tr);
  int met = 0;
  for (const ForecastRound& r : tr.rounds) met += r.met_target ? 1 : 0;
  res.summary["evi_met_target"] = met;
  res.summary["ledgers"] = ledger_summary(res.ledgers);
  res.summary["passed"] = res.passed();
}

std::vector<Context> context_pool(const json& nature, std::uint64_t seed, int n) {
  const std::uint64_t root = nature.value("seed", seed);
  const ContextSampler s = ContextSampler::from_json(nature.contains("contexts") ? nature.at("contexts") : json(), root);
  std::vector<Context> out;
  for (int t = 1; t <= n; ++t) out.push_back(s(t));
  return out;
}

void run_simulate(ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  const ConvexBody& body = c.outcomes;
  const ForecasterOptions opts = forecaster_options(c);
  if (c.engine == "k29") {
    const MatrixKernel kernel = build_kernel(c.kernel, body);
    std::vector<RkhsTest> tests;
    if (const FeatureMap* f = kernel.features()) {
      // ‖h_θ‖ in the feature kernel's RKHS is at most ‖θ‖ = 1.
      LinearFamily fam(*f);
      for (TestFunction& h : comparator_grid(fam, body, 1.0, c.grid, c.seed)) tests.push_back({std::move(h), 1.0});
    } else {
      tests = sample_rkhs_tests(kernel, body, std::max(c.grid, 1), 4, c.seed, context_pool(c.nature, c.seed, 4));
    }
    K29Forecaster engine(body, kernel, opts);
    auto nature = build_nature(c.nature, body, c.seed, &tests[pick_target(c.nature, tests.size())].test);
    res.transcript = drive(engine, *nature, c.horizon);
    res.ledgers.push_back(k29_bound_ledger(res.transcript, kernel, tests));
    res.ledgers.push_back(k29_certificate_ledger(res.transcript, kernel, 10000, 1e-9, c.seed));
    std::vector<TestFunction> grid;
    for (const RkhsTest& t : tests) grid.push_back(t.test);
    std::vector<std::vector<double>> mcs;
    for (std::size_t i = 0; i < grid.size() && i < kMaxMetricSeries; ++i)
      res.metrics.add("mc:" + grid[i].name, cumulative(mc_error(res.transcript, grid[i]).per_round));
    res.metrics.add("evi:sum", cumulative(eps_series(res.transcript)));
    return;
  }
  const FamilyBundle bundle = build_family(c.tests, body, c.grid, c.seed);
  require(bundle.family->dim() == body.dim(), "tests: family dimension differs from the outcome body");
  Forecaster engine(body, bundle.family, build_learner(c.engine, bundle, body, c.horizon, c), opts);
  auto nature = build_nature(c.nature, body, c.seed, &bundle.grid[pick_target(c.nature, bundle.grid.size())]);
  res.transcript = drive(engine, *nature, c.horizon);
  if (c.protocol == Protocol::censored) {
    res.ledgers.push_back(censored_ledger(res.transcript, *bundle.family, bundle.grid));
  } else {
    res.ledgers.push_back(online_reduction_ledger(res.transcript, *bundle.family, bundle.grid));
  }
  res.ledgers.push_back(evi_certificate_ledger(res.transcript, *bundle.family, 10000, 1e-9, c.seed));
  family_metrics(res, *bundle.family, bundle.grid);
}

void run_evi(ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  const json& spec = c.evi;
  check_keys(spec, {"member", "theta", "context", "eps"}, "evi");
  const FamilyBundle bundle = build_family(c.tests, c.outcomes, 0, c.seed);
  TestFunction h;
  if (spec.contains("theta")) {
    const auto* lin = dynamic_cast<const LinearFamily*>(bundle.family.get());
    require(lin != nullptr, "evi: theta needs a linear test family");
    const Vec theta = vec_from_json(spec.at("theta"));
    require(theta.size() == lin->param_dim(), "evi: theta has the wrong length");
    h = linear_test(lin->features(), theta, c.outcomes);
  } else {
    const int k = spec.value("member", 0);
    require(k >= 0 && static_cast<std::size_t>(k) < bundle.grid.size(), "evi: member out of range");
    h = bundle.grid[static_cast<std::size_t>(k)];
  }
  const Context x = spec.contains("context") ? vec_from_json(spec.at("context")) : Context();
  EviProblem problem{c.outcomes, h.at(x), std::max(h.norm_bound, 1e-12), spec.value("eps", 1e-3)};
  EviOptions options;
  options.method = c.evi_method;
  options.seed = c.seed;
  const EviSolution sol = solve_evi(problem, options);

  // A one-round transcript so the certificate ledger and hashes apply as usual.
  Transcript tr;
  tr.body = c.outcomes;
  tr.header = {{"engine", "evi"}, {"test", h.name}};
  ForecastRound r;
  r.t = 1;
  r.x = x;
  r.dist = sol.dist;
  r.eps_target = problem.target_eps;
  r.eps_realized = sol.certified_gap;
  r.met_target = sol.met_target;
  tr.rounds.push_back(r);
  res.transcript = tr;

  const EviCertificate cert = certify_evi_detail(sol.dist, problem.op, c.outcomes);
  LedgerReport rep;
  rep.title = "evi solve";
  rep.rows.push_back({"certified gap <= eps", sol.certified_gap, problem.target_eps,
                      sol.certified_gap <= problem.target_eps, {{"iterations", sol.iterations}}});
  res.ledgers.push_back(std::move(rep));
  // Exactness of the certificate against enumeration or sampling.
  auto fam = std::make_shared<FiniteFamily>(std::vector<TestFunction>{h}, c.outcomes.dim());
  res.transcript.rounds[0].params = Vec::Ones(1);
  res.ledgers.push_back(evi_certificate_ledger(res.transcript, *fam, 10000, 1e-9, c.seed));
  json out = {{"atoms", sol.dist.to_json()},
              {"certified_gap", sol.certified_gap},
              {"target_eps", problem.target_eps},
              {"met_target", sol.met_target},
              {"iterations", sol.iterations},
              {"evaluations", sol.evaluations},
              {"mean_operator", vec_to_json(cert.mean_operator)},
              {"worst_outcome", vec_to_json(cert.worst_outcome)}};
  res.tables.emplace_back("solution.json", out.dump(2) + "\n");
  res.summary["certified_gap"] = sol.certified_gap;
}

std::vector<Deviation> constant_deviations(const ConvexBody& Z, int count, std::uint64_t seed) {
  std::vector<Deviation> out;
  if (auto vs = Z.vertices()) {
    for (const Vec& v : *vs) out.push_back(Deviation::constant(v));
    return out;
  }
  auto rng = derive_stream(seed, 0, RngTag::grid);
  for (int i = 0; i < count; ++i) out.push_back(Deviation::constant(Z.sample(rng)));
  return out;
}

void run_phi(ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  const ConvexBody& L = c.outcomes;
  const ConvexBody& Z = *c.actions;
  const json& spec = c.deviations;
  check_keys(spec, {"kind", "maps", "count", "affine", "spectral_bound", "kernel", "atoms"}, "deviations");
  const std::string kind = str(spec, "kind", "");
  const int count = spec.value("count", 16);
  ForecasterOptions opts = forecaster_options(c);

  std::unique_ptr<ForecastEngine> engine;
  std::shared_ptr<const ParamFamily> family;
  std::vector<TestFunction> family_grid;
  std::optional<MatrixKernel> gamma_prime;
  std::vector<Deviation> audited;

  auto use_finite = [&](std::vector<Deviation> devs) {
    auto f = finite_phi_forecaster(devs, Z, L, std::max(c.horizon, 1), opts);
    family = f->family_ptr();
    family_grid = dynamic_cast<const FiniteFamily&>(*family).members();
    engine = std::move(f);
    audited = std::move(devs);
  };
  if (kind == "constant") {
    use_finite(constant_deviations(Z, count, c.seed));
  } else if (kind == "swap") {
    require(Z.kind() == ConvexBody::Kind::simplex, "deviations: swap maps need a simplex action set");
    const std::string maps = str(spec, "maps", "all");
    require(maps == "all" || maps == "pairwise", "deviations: maps must be all or pairwise");
    use_finite(maps == "all" ? all_vertex_swaps(Z.dim()) : pairwise_swaps(Z.dim()));
  } else if (kind == "linear") {
    LinearSwapConfig cfg;
    cfg.spectral_bound = spec.value("spectral_bound", 1.0);
    cfg.affine = spec.value("affine", false);
    cfg.horizon = std::max(c.horizon, 1);
    const EpsPolicy linear_default = cfg.forecaster.eps;
    cfg.forecaster = opts;
    cfg.forecaster.eps = c.eps.value_or(linear_default);
    LinearSwapEngine lse = linear_swap_engine(Z, L, cfg);
    family = lse.family;
    family_grid = comparator_grid(*lse.family, L, lse.rho, c.grid, c.seed);
    engine = std::move(lse.forecaster);
    audited = sample_linear_endomorphisms(Z, count, c.seed, cfg.affine);
    audited.push_back(Deviation::identity(Z.dim()));
  } else if (kind == "kernel") {
    const MatrixKernel base =
        build_kernel(spec.contains("kernel") ? spec.at("kernel") : json{{"kind", "gaussian"}, {"bandwidth", 0.5}}, Z);
    // The constant summand carries the constant part of each deviation.
    gamma_prime = rkhs_phi_kernel(MatrixKernel::sum({constant_kernel(Z.dim()), base}), Z);
    engine = std::make_unique<K29Forecaster>(L, *gamma_prime, opts);
    std::vector<std::pair<Context, Vec>> probes;
    auto rng = derive_stream(c.seed, 1, RngTag::grid);
    for (int i = 0; i < 64; ++i) probes.emplace_back(Context(), Z.sample(rng));
    if (auto vs = Z.vertices())
      for (const Vec& v : *vs) probes.emplace_back(Context(), v);
    audited = sample_kernel_deviations(base, Z, count, spec.value("atoms", 4), c.seed, probes);
    require(!audited.empty(), "deviations: no kernel deviation stayed inside the action set");
  } else {
    throw ContractError("deviations.kind must be constant, swap, linear or kernel");
  }

  const TestFunction target = phi_test(audited[pick_target(c.nature, audited.size())], Z, L);
  auto nature = build_nature(c.nature, L, c.seed, &target);
  PhiDecisionMaker dm(*engine, Z);
  for (int t = 1; t <= c.horizon; ++t) {
    try {
      const Context x = nature->context(t);
      dm.decide(x);
      dm.observe(nature->outcome(t, x, dm.transcript().rounds.back().forecast));
    } catch (const ContractError& e) {
      throw ContractError("round " + std::to_string(t) + ": " + e.what());
    }
  }
  res.transcript = engine->finish();
  res.decisions = dm.transcript();
  const DecisionTranscript& dt = *res.decisions;

  res.ledgers.push_back(phi_ledger(dt, audited));
  if (gamma_prime) {
    res.ledgers.push_back(kernel_phi_ledger(res.transcript, *gamma_prime, audited, Z, L));
    res.ledgers.push_back(k29_certificate_ledger(res.transcript, *gamma_prime, 10000, 1e-9, c.seed));
  } else {
    res.ledgers.push_back(online_reduction_ledger(res.transcript, *family, family_grid));
    res.ledgers.push_back(evi_certificate_ledger(res.transcript, *family, 10000, 1e-9, c.seed));
  }

  std::string table = "deviation,regret,mc_err,slack,max_slack\n";
  for (std::size_t i = 0; i < audited.size(); ++i) {
    const PhiRegret pr = phi_regret(dt, audited[i]);
    table += csv_quote(audited[i].name) + "," + format_double(pr.regret) + "," + format_double(pr.mc_error) + "," +
             format_double(pr.slack) + "," + format_double(pr.max_slack) + "\n";
    if (i < kMaxMetricSeries) {
      res.metrics.add("regret:" + audited[i].name, cumulative(pr.per_round));
      res.metrics.add("mc:" + audited[i].name, cumulative(mc_error(res.transcript, phi_test(audited[i], Z, L)).per_round));
    }
  }
  res.metrics.add("evi:sum", cumulative(eps_series(res.transcript)));
  res.tables.emplace_back("phi_regret.csv", table);
  res.summary["external_regret"] = external_regret(dt);
  if (Z.kind() == ConvexBody::Kind::simplex) res.summary["swap_regret"] = swap_regret(dt);
  res.summary["deviations"] = audited.size();
}

std::vector<LossSpec> omni_losses(const json& spec, int k, std::uint64_t seed) {
  std::vector<LossSpec> out;
  if (spec.contains("losses")) {
    for (const json& l : spec.at("losses"))
      out.push_back(LossSpec{l.at("name").get<std::string>(), mat_from_json(l.at("table"))});
  } else if (spec.contains("losses_file")) {
    out = load_losses_csv(spec.at("losses_file").get<std::string>());
  } else {
    const json r = object_or_empty(spec, "random_losses");
    const int count = r.value("count", 3), actions = r.value("actions", k);
    auto rng = derive_stream(r.value("seed", seed), 0, RngTag::grid);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < count; ++i) {
      LossSpec l{"loss" + std::to_string(i), Mat(actions, k)};
      for (int a = 0; a < actions; ++a)
        for (int j = 0; j < k; ++j) l.table(a, j) = u(rng);
      out.push_back(std::move(l));
    }
  }
  require(!out.empty(), "omni: no losses");
  for (const LossSpec& l : out) require(l.classes() == k, "omni: loss " + l.name + " has the wrong class count");
  return out;
}

void run_omni(ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  const json& spec = c.omni;
  check_keys(spec, {"losses", "losses_file", "random_losses", "rules", "rules_file", "contexts"}, "omni");
  const int k = c.outcomes.dim();
  const std::vector<LossSpec> losses = omni_losses(spec, k, c.seed);
  std::vector<DecisionRule> rules;
  if (spec.contains("rules_file")) {
    rules = load_rules_csv(spec.at("rules_file").get<std::string>());
  } else {
    require(str(spec, "rules", "all") == "all", "omni: rules must be \"all\" or given by rules_file");
    int actions = losses.front().actions();
    for (const LossSpec& l : losses) actions = std::min(actions, l.actions());
    rules = all_decision_rules(spec.value("contexts", 1), actions);
  }
  auto engine = omni_engine(losses, rules, std::max(c.horizon, 1), forecaster_options(c));
  const auto& fam = dynamic_cast<const FiniteFamily&>(engine->family());
  auto nature = build_nature(c.nature, c.outcomes, c.seed, &fam.members()[pick_target(c.nature, fam.members().size())]);
  res.transcript = drive(*engine, *nature, c.horizon);
  res.ledgers.push_back(omni_ledger(res.transcript, losses, rules));
  res.ledgers.push_back(online_reduction_ledger(res.transcript, fam, fam.members()));
  res.ledgers.push_back(evi_certificate_ledger(res.transcript, fam, 10000, 1e-9, c.seed));

  double mc = 0.0;
  for (const TestFunction& h : fam.members()) mc = std::max(mc, mc_error(res.transcript, h).total);
  std::string table = "loss,incurred,best,best_rule,regret,max_mc_err,bound\n";
  for (const LossSpec& l : losses) {
    const OmniRegret r = omni_regret(res.transcript, l, rules);
    table += csv_quote(l.name) + "," + format_double(r.incurred) + "," + format_double(r.best) + "," +
             csv_quote(rules[static_cast<std::size_t>(r.best_rule)].name) + "," + format_double(r.regret) + "," +
             format_double(mc) + "," + format_double(2.0 * mc) + "\n";
  }
  res.tables.emplace_back("omni_regret.csv", table);
  family_metrics(res, fam, fam.members());
}

Mat game_table(const json& j) { return mat_from_json(j); }

void run_self_play(ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  const json& spec = c.game;
  check_keys(spec, {"preset", "A", "B", "players", "play"}, "game");
  const std::string play = str(spec, "play", "sampled");
  require(play == "sampled" || play == "expected", "game: play must be sampled or expected");
  Mat A, B;
  if (str(spec, "preset", "") == "rps") {
    A = rock_paper_scissors();
    B = A.transpose();
  } else {
    require(spec.contains("A") && spec.contains("B"), "game: give preset \"rps\" or both loss tables A and B");
    A = game_table(spec.at("A"));
    B = game_table(spec.at("B"));
  }
  const json players = spec.contains("players") ? spec.at("players") : json::array({json::object(), json::object()});
  ForecasterOptions opts = forecaster_options(c);
  // Seeds only reach the run through randomized EVI starts.
  opts.evi.random_start = true;
  SelfPlayResult sp = self_play_game(A, B, players, c.horizon, opts, play == "sampled");
  const double T = std::max(c.horizon, 1);

  LedgerReport rep;
  rep.title = "self-play ledger";
  for (int k = 0; k < 2; ++k) {
    const double lhs = std::abs(sp.ce_gap[k] - sp.swap_regret[k] / T);
    rep.rows.push_back({"ce identity p" + std::to_string(k + 1), lhs, 1e-9, lhs <= 1e-9,
                        {{"ce_gap", sp.ce_gap[k]}, {"swap_regret", sp.swap_regret[k]}}});
  }
  // Decision transcripts keep μ_t, so only expected play matches them exactly.
  for (std::size_t e = 0; e < sp.transcripts.size() && !sp.sampled; ++e) {
    const int k = sp.engine_players[e];
    const double direct = swap_regret(sp.transcripts[e]);
    const double lhs = std::abs(direct - sp.swap_regret[k]);
    rep.rows.push_back({"swap regret cross-check p" + std::to_string(k + 1), lhs, 1e-9 * T, lhs <= 1e-9 * T,
                        {{"decision_transcript", direct}}});
  }
  res.ledgers.push_back(std::move(rep));
  for (std::size_t e = 0; e < sp.transcripts.size(); ++e) {
    const int d = sp.transcripts[e].Z.dim();
    if (d <= 5) {
      LedgerReport pl = phi_ledger(sp.transcripts[e], all_vertex_swaps(d));
      pl.title += " p" + std::to_string(sp.engine_players[e] + 1);
      res.ledgers.push_back(std::move(pl));
    }
  }

  for (int k = 0; k < 2; ++k) {
    const auto& mixed = sp.mixed[static_cast<std::size_t>(k)];
    const auto& losses = sp.losses[static_cast<std::size_t>(k)];
    const Eigen::Index d = mixed.empty() ? 0 : mixed.front().size();
    Mat R = Mat::Zero(d, d);
    std::vector<double> series;
    for (std::size_t t = 0; t < mixed.size(); ++t) {
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) R(i, j) += mixed[t][i] * (losses[t][i] - losses[t][j]);
      series.push_back(R.rowwise().maxCoeff().sum());
    }
    res.metrics.add("swap:p" + std::to_string(k + 1), std::move(series));
  }
  std::string table = "i,j,probability\n";
  for (Eigen::Index i = 0; i < sp.joint.rows(); ++i)
    for (Eigen::Index j = 0; j < sp.joint.cols(); ++j)
      table += std::to_string(i) + "," + std::to_string(j) + "," + format_double(sp.joint(i, j)) + "\n";
  res.tables.emplace_back("joint.csv", table);
  res.summary["ce_gap"] = {sp.ce_gap[0], sp.ce_gap[1]};
  res.summary["swap_regret"] = {sp.swap_regret[0], sp.swap_regret[1]};
  json hashes = json::array();
  for (const Transcript& tr : sp.forecasts) hashes.push_back(tr.hash_hex());
  res.summary["forecast_hashes"] = hashes;
  if (!sp.forecasts.empty()) res.transcript = sp.forecasts.front();
  res.self_play = std::move(sp);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult res;
  res.config = config;
  res.summary = json::object();
  res.transcript.body = config.outcomes;
  switch (config.mode) {
    case Mode::simulate: run_simulate(res); break;
    case Mode::evi: run_evi(res); break;
    case Mode::phi: run_phi(res); break;
    case Mode::omni: run_omni(res); break;
    case Mode::self_play: run_self_play(res); break;
  }
  finish_summary(res);
  return res;
}

// --- self-play -----------------------------------------------------------------------------

Mat rock_paper_scissors() {
  Mat L(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      // 0 rock, 1 paper, 2 scissors; i beats j when i − j ≡ 1 (mod 3).
      const int diff = ((i - j) % 3 + 3) % 3;
      const double payoff = diff == 0 ? 0.0 : diff == 1 ? 1.0 : -1.0;
      L(i, j) = 0.5 * (1.0 - payoff);
    }
  return L;
}

double ce_violation(const Mat& joint, const Mat& loss, bool row_player) {
  require(joint.rows() == loss.rows() && joint.cols() == loss.cols(), "ce violation: table shapes differ");
  const int d = static_cast<int>(row_player ? loss.rows() : loss.cols());
  require(std::pow(static_cast<double>(d), d) <= 1e6, "ce violation: too many maps to enumerate");
  std::vector<int> phi(static_cast<std::size_t>(d), 0);
  double best = -INFINITY;
  while (true) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i)
      for (Eigen::Index j = 0; j < joint.cols(); ++j) {
        const double dev = row_player ? loss(phi[static_cast<std::size_t>(i)], j) : loss(i, phi[static_cast<std::size_t>(j)]);
        v += joint(i, j) * (loss(i, j) - dev);
      }
    best = std::max(best, v);
    int k = d - 1;
    while (k >= 0 && phi[static_cast<std::size_t>(k)] == d - 1) phi[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
    ++phi[static_cast<std::size_t>(k)];
  }
  return best;
}

SelfPlayResult self_play_game(const Mat& A, const Mat& B, const json& players, int horizon,
                              const ForecasterOptions& options, bool sampled) {
  require(A.rows() == B.rows() && A.cols() == B.cols(), "self play: payoff tables differ in shape");
  require(A.allFinite() && B.allFinite(), "self play: non-finite payoff");
  require(players.is_array() && players.size() == 2, "self play: exactly two players");
  const int dims[2] = {static_cast<int>(A.rows()), static_cast<int>(A.cols())};
  const Mat* tables[2] = {&A, &B};

  struct Seat {
    std::unique_ptr<Forecaster> forecaster;
    std::unique_ptr<PhiDecisionMaker> dm;
    int constant = -1;
  };
  Seat seats[2];
  SelfPlayResult out;
  out.sampled = sampled;
  out.mixed.resize(2);
  out.losses.resize(2);
  for (int k = 0; k < 2; ++k) {
    const json& p = players[static_cast<std::size_t>(k)];
    check_keys(p, {"engine", "action"}, "player");
    const std::string engine = str(p, "engine", "swap");
    const int d = dims[k];
    if (engine == "constant") {
      seats[k].constant = p.value("action", 0);
      require(seats[k].constant >= 0 && seats[k].constant < d, "self play: constant action out of range");
      continue;
    }
    require(engine == "swap" || engine == "pairwise", "self play: engine must be swap, pairwise or constant");
    double lo = tables[k]->minCoeff(), hi = tables[k]->maxCoeff();
    if (hi <= lo) hi = lo + 1.0;  // constant tables still need a nondegenerate loss body
    const ConvexBody L = ConvexBody::box(Vec::Constant(d, lo), Vec::Constant(d, hi));
    ForecasterOptions o = options;
    o.seed = derive_seed(options.seed, static_cast<std::uint64_t>(k + 1), RngTag::evi);
    o.evi.seed = o.seed;
    seats[k].forecaster = finite_phi_forecaster(engine == "swap" ? all_vertex_swaps(d) : pairwise_swaps(d),
                                                ConvexBody::simplex(d), L, std::max(horizon, 1), o);
    seats[k].dm = std::make_unique<PhiDecisionMaker>(*seats[k].forecaster, ConvexBody::simplex(d));
  }

  out.joint = Mat::Zero(A.rows(), A.cols());
  for (int t = 1; t <= horizon; ++t) {
    Vec m[2];
    for (int k = 0; k < 2; ++k) {
      if (seats[k].dm) {
        m[k] = seats[k].dm->decide(Context()).mean();
      } else {
        m[k] = Vec::Unit(dims[k], seats[k].constant);
      }
      if (sampled) {
        const std::uint64_t stream = derive_seed(options.seed, static_cast<std::uint64_t>(k + 1), RngTag::nature);
        const double u = derive_uniform(stream, static_cast<std::uint64_t>(t), RngTag::nature);
        int a = 0;
        double acc = m[k][0];
        while (a + 1 < dims[k] && u >= acc) acc += m[k][++a];
        m[k] = Vec::Unit(dims[k], a);
      }
    }
    const Vec l1 = A * m[1];
    const Vec l2 = B.transpose() * m[0];
    out.joint += m[0] * m[1].transpose();
    const Vec* ls[2] = {&l1, &l2};
    for (int k = 0; k < 2; ++k) {
      if (seats[k].dm) seats[k].dm->observe(*ls[k]);
      out.mixed[static_cast<std::size_t>(k)].push_back(m[k]);
      out.losses[static_cast<std::size_t>(k)].push_back(*ls[k]);
    }
  }
  if (horizon > 0) out.joint /= static_cast<double>(horizon);
  out.ce_gap[0] = ce_violation(out.joint, A, true);
  out.ce_gap[1] = ce_violation(out.joint, B, false);
  for (int k = 0; k < 2; ++k) {
    const auto& mixed = out.mixed[static_cast<std::size_t>(k)];
    const auto& losses = out.losses[static_cast<std::size_t>(k)];
    const int d = dims[k];
    Mat R = Mat::Zero(d, d);
    for (std::size_t t = 0; t < mixed.size(); ++t)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) R(i, j) += mixed[t][i] * (losses[t][i] - losses[t][j]);
    out.swap_regret[k] = R.rowwise().maxCoeff().sum();
    if (seats[k].dm) {
      seats[k].forecaster->finish();
      out.transcripts.push_back(seats[k].dm->transcript());
      out.forecasts.push_back(seats[k].forecaster->transcript());
      out.engine_players.push_back(k);
    }
  }
  return out;
}

}  // namespace mcr
