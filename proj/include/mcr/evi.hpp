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

#include <cstdint>
#include <functional>
#include <string>

#include "mcr/geometry.hpp"

namespace mcr {

using Operator = std::function<Vec(const Vec&)>;

/// Find a distribution D over `body` with E_{p~D}[S(p)ᵀ(y - p)] ≤ target_eps
/// for every y in the body. S may be discontinuous; only boundedness is used.
struct EviProblem {
  ConvexBody body;
  Operator op;
  double norm_bound = 1.0;  // sup ‖S(p)‖, checked on every evaluation
  double target_eps = 1e-3;
};

enum class EviMethod {
  // Self-play gradient ascent; uniform distribution over the iterates.
  regret,
  // Matrix-game double oracle warm-started by a few self-play iterates.
  refined,
};

struct EviOptions {
  EviMethod method = EviMethod::refined;
  long max_iterations = 200000;  // self-play iterations for the regret path
  int max_oracle_rounds = 1500;  // candidate rounds for the refined path
  int warm_start = 8;
  bool random_start = false;  // start from body.sample(seed) instead of the center
  std::uint64_t seed = 0;
  bool compress = true;  // shrink the support to at most dim + 2 atoms
};

struct EviSolution {
  Distribution dist;
  double certified_gap = 0.0;
  long iterations = 0;
  long evaluations = 0;
  bool met_target = false;
};

struct EviCertificate {
  Vec mean_operator;      // a = E[S(p)]
  double mean_inner = 0;  // b = E[S(p)ᵀp]
  Vec worst_outcome;      // argmax_y aᵀy
  double gap = 0.0;       // aᵀy* - b
};

/// Self-play iteration count that guarantees the target on the regret path:
/// ceil((4·B_S·outer_radius / ε)²).
long regret_iteration_bound(const EviProblem& problem);

EviSolution solve_evi(const EviProblem& problem, const EviOptions& options = {});

/// Exact worst case over y of E_{p~D}[S(p)ᵀ(y - p)], by linearity in y.
EviCertificate certify_evi_detail(const Distribution& dist, const Operator& op, const ConvexBody& body);
double certify_evi(const Distribution& dist, const Operator& op, const ConvexBody& body);

enum class EpsPolicy { inverse_square_tenth, inverse_square, inverse, inverse_sqrt };

// 1/(10t²), 1/t², 1/t or 1/√t.
double eps_schedule(int t, EpsPolicy policy);
EpsPolicy eps_policy_from_string(const std::string& s);
std::string to_string(EpsPolicy policy);

}  // namespace mcr
