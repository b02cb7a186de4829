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

#include <memory>
#include <string>
#include <vector>

#include "mcr/forecaster.hpp"

namespace mcr {

/// Loss over a finite action set and k classes: table(z, i) = ℓ(z, i) ≥ 0.
struct LossSpec {
  std::string name;
  Mat table;  // actions × k

  int actions() const { return static_cast<int>(table.rows()); }
  int classes() const { return static_cast<int>(table.cols()); }
  void validate() const;
  // Expected loss of action z under class distribution p: Σ_i ℓ(z,i)p_i.
  double expected(int z, const Vec& p) const { return table.row(z).dot(p); }
};

/// Decision rule on a finite context set: context id x[0] ↦ action index.
struct DecisionRule {
  std::string name;
  std::vector<int> action;  // indexed by context id

  int operator()(const Context& x) const;
};

// Context ids are x[0]; an empty context means id 0.
int context_id(const Context& x);
// Class index of a one-hot outcome; throws ContractError otherwise.
int class_of(const Vec& y);
Vec one_hot(int k, int i);

// π_ℓ(p) = argmin_z Σ_i ℓ(z,i)p_i, lowest index on ties.
int post_process(const LossSpec& loss, const Vec& p);

// h_ℓ for each ℓ, then h_{ℓ,c} for each (ℓ, c) with ℓ slowest.
std::vector<TestFunction> build_omni_tests(const std::vector<LossSpec>& losses, const std::vector<DecisionRule>& rules);

// Every map from `contexts` ids to `actions` indices.
std::vector<DecisionRule> all_decision_rules(int contexts, int actions);

struct OmniRegret {
  double incurred = 0.0;   // Σ_t E_{p~D_t}[ℓ(π_ℓ(p), y_t)]
  double best = 0.0;       // min_c Σ_t ℓ(c(x_t), y_t)
  int best_rule = -1;      // lowest index attaining the minimum
  double regret = 0.0;     // incurred − best
};

OmniRegret omni_regret(const Transcript& tr, const LossSpec& loss, const std::vector<DecisionRule>& rules);

// Three-step chain per (ℓ, c), with MC-Err the largest MC-Err over the
// omni tests:
//   (i)   Σ E[ℓ(π,y)] − Σ E_{ỹ~p}[ℓ(π,ỹ)] ≤ MC-Err
//   (ii)  Σ E_{ỹ~p}[ℓ(π,ỹ)] ≤ Σ E_{ỹ~p}[ℓ(c(x),ỹ)]
//   (iii) Σ E_{ỹ~p}[ℓ(c(x),ỹ)] − Σ ℓ(c(x),y) ≤ MC-Err
// and per ℓ: omni regret ≤ 2·MC-Err.
LedgerReport omni_ledger(const Transcript& tr, const std::vector<LossSpec>& losses,
                         const std::vector<DecisionRule>& rules, double tol = 1e-9);

// Hedge over the omni tests, outcomes on simplex(k).
std::unique_ptr<Forecaster> omni_engine(const std::vector<LossSpec>& losses, const std::vector<DecisionRule>& rules,
                                        int horizon, ForecasterOptions options = {});

// CSV loaders. Losses: loss,action,c1..ck. Rules: rule,context,action.
std::vector<LossSpec> load_losses_csv(const std::string& path);
std::vector<DecisionRule> load_rules_csv(const std::string& path);

}  // namespace mcr
