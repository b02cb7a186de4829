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

#include "mcr/omni.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mcr {

void LossSpec::validate() const {
  require(table.rows() > 0 && table.cols() > 0, "loss " + name + ": empty table");
  require(table.allFinite(), "loss " + name + ": non-finite entry");
  require(table.minCoeff() >= 0.0, "loss " + name + ": negative entry");
}

int context_id(const Context& x) {
  if (x.size() == 0) return 0;
  const double v = x[0];
  require(v >= 0.0 && v == std::floor(v), "context id must be a nonnegative integer");
  return static_cast<int>(v);
}

int DecisionRule::operator()(const Context& x) const {
  const int id = context_id(x);
  require(id < static_cast<int>(action.size()), "decision rule " + name + ": context id out of range");
  return action[static_cast<std::size_t>(id)];
}

int class_of(const Vec& y) {
  int idx = -1;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0 && idx < 0) {
      idx = static_cast<int>(i);
    } else if (y[i] != 0.0) {
      throw ContractError("outcome is not one-hot");
    }
  }
  require(idx >= 0, "outcome is not one-hot");
  return idx;
}

Vec one_hot(int k, int i) {
  require(i >= 0 && i < k, "one_hot: class out of range");
  return Vec::Unit(k, i);
}

int post_process(const LossSpec& loss, const Vec& p) {
  require(p.size() == loss.classes(), "post_process: forecast dimension differs from the class count");
  int best = 0;
  double best_value = loss.expected(0, p);
  for (int z = 1; z < loss.actions(); ++z) {
    const double v = loss.expected(z, p);
    if (v < best_value) {
      best_value = v;
      best = z;
    }
  }
  return best;
}

std::vector<TestFunction> build_omni_tests(const std::vector<LossSpec>& losses, const std::vector<DecisionRule>& rules) {
  require(!losses.empty(), "omni tests: no losses");
  const int k = losses.front().classes();
  for (const LossSpec& l : losses) {
    l.validate();
    require(l.classes() == k, "omni tests: inconsistent class counts");
  }
  std::vector<TestFunction> out;
  const ConvexBody simplex = ConvexBody::simplex(k);
  auto make = [&](std::string name, std::function<Vec(const Context&, const Vec&)> f, const LossSpec& l) {
    TestFunction h;
    h.name = std::move(name);
    h.eval = std::move(f);
    h.norm_bound = std::sqrt(static_cast<double>(k)) * l.table.maxCoeff();
    // Entries lie in [0, max] (or [−max, 0]); on the simplex |hᵀ(y − p)| ≤ max.
    h.value_bound = value_bound_for(simplex, h.norm_bound, l.table.maxCoeff());
    return h;
  };
  for (const LossSpec& l : losses) {
    out.push_back(make("h_" + l.name,
                       [l](const Context&, const Vec& p) -> Vec { return l.table.row(post_process(l, p)).transpose(); },
                       l));
  }
  for (const LossSpec& l : losses) {
    for (const DecisionRule& c : rules) {
      for (int a : c.action) require(a >= 0 && a < l.actions(), "omni tests: rule " + c.name + " has an unknown action");
      out.push_back(make("h_" + l.name + "_" + c.name,
                         [l, c](const Context& x, const Vec&) -> Vec { return -l.table.row(c(x)).transpose(); }, l));
    }
  }
  return out;
}

std::vector<DecisionRule> all_decision_rules(int contexts, int actions) {
  require(contexts >= 1 && actions >= 1, "decision rules: empty domain");
  require(std::pow(static_cast<double>(actions), contexts) <= 1e6, "decision rules: too many rules to enumerate");
  std::vector<DecisionRule> out;
  std::vector<int> a(static_cast<std::size_t>(contexts), 0);
  while (true) {
    DecisionRule r;
    r.name = "rule";
    for (int v : a) r.name += std::to_string(v);
    r.action = a;
    out.push_back(std::move(r));
    int i = contexts - 1;
    while (i >= 0 && a[static_cast<std::size_t>(i)] == actions - 1) a[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++a[static_cast<std::size_t>(i)];
  }
  return out;
}

namespace {

const Vec& outcome_of(const ForecastRound& r) {
  if (!r.y) throw ProtocolError("omni audit: outcome of round " + std::to_string(r.t) + " is unresolved");
  return *r.y;
}

struct RuleTotals {
  std::vector<double> realized;  // Σ ℓ(c(x_t), y_t)
  std::vector<double> simulated;  // Σ E_{p~D_t} E_{ỹ~p}[ℓ(c(x_t), ỹ)]
};

RuleTotals rule_totals(const Transcript& tr, const LossSpec& loss, const std::vector<DecisionRule>& rules) {
  RuleTotals out{std::vector<double>(rules.size(), 0.0), std::vector<double>(rules.size(), 0.0)};
  for (const ForecastRound& r : tr.rounds) {
    const int y = class_of(outcome_of(r));
    const Vec mean = r.audited().mean();
    for (std::size_t j = 0; j < rules.size(); ++j) {
      const int a = rules[j](r.x);
      out.realized[j] += loss.table(a, y);
      out.simulated[j] += loss.expected(a, mean);
    }
  }
  return out;
}

}  // namespace

OmniRegret omni_regret(const Transcript& tr, const LossSpec& loss, const std::vector<DecisionRule>& rules) {
  require(!rules.empty(), "omni regret: no decision rules");
  OmniRegret out;
  for (const ForecastRound& r : tr.rounds) {
    const int y = class_of(outcome_of(r));
    out.incurred += r.audited().expect_scalar([&](const Vec& p) { return loss.table(post_process(loss, p), y); });
  }
  const RuleTotals totals = rule_totals(tr, loss, rules);
  out.best = INFINITY;
  for (std::size_t j = 0; j < rules.size(); ++j) {
    if (totals.realized[j] < out.best) {
      out.best = totals.realized[j];
      out.best_rule = static_cast<int>(j);
    }
  }
  out.regret = out.incurred - out.best;
  return out;
}

LedgerReport omni_ledger(const Transcript& tr, const std::vector<LossSpec>& losses,
                         const std::vector<DecisionRule>& rules, double tol) {
  LedgerReport rep;
  rep.title = "omniprediction ledger";
  const auto tests = build_omni_tests(losses, rules);
  double mc = -INFINITY;
  for (const TestFunction& h : tests) mc = std::max(mc, mc_error(tr, h).total);
  const double T = tr.horizon();
  const double slack = tol * std::max(1.0, T);

  for (const LossSpec& l : losses) {
    double realized_pi = 0.0, simulated_pi = 0.0;
    for (const ForecastRound& r : tr.rounds) {
      const int y = class_of(outcome_of(r));
      for (const Atom& a : r.audited().atoms()) {
        const int z = post_process(l, a.point);
        realized_pi += a.weight * l.table(z, y);
        simulated_pi += a.weight * l.expected(z, a.point);
      }
    }
    const double gap_i = realized_pi - simulated_pi;
    rep.rows.push_back({"(i) " + l.name, gap_i, mc + slack, gap_i <= mc + slack, nlohmann::json::object()});

    const RuleTotals totals = rule_totals(tr, l, rules);
    for (std::size_t j = 0; j < rules.size(); ++j) {
      const std::string tag = l.name + "," + rules[j].name;
      rep.rows.push_back({"(ii) " + tag, simulated_pi, totals.simulated[j] + slack,
                          simulated_pi <= totals.simulated[j] + slack, nlohmann::json::object()});
      const double gap_iii = totals.simulated[j] - totals.realized[j];
      rep.rows.push_back({"(iii) " + tag, gap_iii, mc + slack, gap_iii <= mc + slack, nlohmann::json::object()});
    }
    const OmniRegret reg = omni_regret(tr, l, rules);
    rep.rows.push_back({"omni " + l.name, reg.regret, 2.0 * mc + slack, reg.regret <= 2.0 * mc + slack,
                        {{"best_rule", reg.best_rule}, {"mc_err", mc}}});
  }
  return rep;
}

std::unique_ptr<Forecaster> omni_engine(const std::vector<LossSpec>& losses, const std::vector<DecisionRule>& rules,
                                        int horizon, ForecasterOptions options) {
  auto tests = build_omni_tests(losses, rules);
  const int k = losses.front().classes();
  auto family = std::make_shared<FiniteFamily>(std::move(tests), k);
  const int n = family->param_dim();
  // An all-zero loss family gives range 0; any rate is then exact.
  const double range = family->loss_range() > 0.0 ? family->loss_range() : 1.0;
  const double eta = Hedge::default_rate(n, horizon, range);
  return std::make_unique<Forecaster>(ConvexBody::simplex(k), family, std::make_unique<Hedge>(n, eta),
                                      std::move(options));
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open file: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> row;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<LossSpec> load_losses_csv(const std::string& path) {
  std::map<std::string, std::map<int, std::vector<double>>> raw;
  std::vector<std::string> order;
  std::size_t k = 0;
  for (const auto& row : read_csv_rows(path)) {
    require(row.size() >= 3, "loss file " + path + ": need loss,action,c1..ck");
    if (k == 0) k = row.size() - 2;
    require(row.size() - 2 == k, "loss file " + path + ": inconsistent class count");
    if (!raw.count(row[0])) order.push_back(row[0]);
    std::vector<double> vals;
    for (std::size_t i = 2; i < row.size(); ++i) vals.push_back(std::stod(row[i]));
    raw[row[0]][std::stoi(row[1])] = std::move(vals);
  }
  std::vector<LossSpec> out;
  for (const std::string& name : order) {
    const auto& actions = raw[name];
    const int n = actions.rbegin()->first + 1;
    require(static_cast<int>(actions.size()) == n, "loss file " + path + ": loss " + name + " skips an action");
    LossSpec l{name, Mat(n, static_cast<Eigen::Index>(k))};
    for (const auto& [a, vals] : actions)
      for (std::size_t i = 0; i < k; ++i) l.table(a, static_cast<Eigen::Index>(i)) = vals[i];
    l.validate();
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<DecisionRule> load_rules_csv(const std::string& path) {
  std::map<std::string, std::map<int, int>> raw;
  std::vector<std::string> order;
  for (const auto& row : read_csv_rows(path)) {
    require(row.size() == 3, "rule file " + path + ": need rule,context,action");
    if (!raw.count(row[0])) order.push_back(row[0]);
    raw[row[0]][std::stoi(row[1])] = std::stoi(row[2]);
  }
  std::vector<DecisionRule> out;
  for (const std::string& name : order) {
    const auto& m = raw[name];
    const int n = m.rbegin()->first + 1;
    require(static_cast<int>(m.size()) == n, "rule file " + path + ": rule " + name + " skips a context");
    DecisionRule r{name, std::vector<int>(static_cast<std::size_t>(n))};
    for (const auto& [x, a] : m) r.action[static_cast<std::size_t>(x)] = a;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mcr
