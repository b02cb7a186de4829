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

#include "mcr/matrix_game.hpp"

#include <cmath>
#include <vector>

namespace mcr {

// With A = payoff + shift > 0, the minimizer's problem becomes
//   max 1ᵀx  s.t.  A x ≤ 1, x ≥ 0,
// with w = x / Σx and value 1/Σx - shift. Slack reduced costs give the
// maximizer's strategy.
namespace {

GameSolution solve_tableau(const Mat& payoff) {
  const auto m = payoff.rows();
  const auto n = payoff.cols();
  require(m >= 1 && n >= 1, "matrix game: empty payoff");
  require(payoff.allFinite(), "matrix game: non-finite payoff");
  const double shift = 1.0 - payoff.minCoeff();
  const Eigen::Index width = n + m + 1;
  Mat tab = Mat::Zero(m + 1, width);
  tab.block(0, 0, m, n) = payoff.array() + shift;
  tab.block(0, n, m, m).setIdentity();
  tab.block(0, width - 1, m, 1).setOnes();
  tab.block(m, 0, 1, n).setConstant(-1.0);
  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index r = 0; r < m; ++r) basis[r] = n + r;

  const double tol = 1e-12;
  const int max_pivots = static_cast<int>(50 * (m + n) + 1000);
  const int bland_after = static_cast<int>(10 * (m + n) + 100);
  int pivots = 0;
  for (; pivots < max_pivots; ++pivots) {
    Eigen::Index enter = -1;
    if (pivots < bland_after) {
      double most = -tol;
      for (Eigen::Index c = 0; c < width - 1; ++c) {
        if (tab(m, c) < most) {
          most = tab(m, c);
          enter = c;
        }
      }
    } else {
      for (Eigen::Index c = 0; c < width - 1; ++c) {
        if (tab(m, c) < -tol) {
          enter = c;
          break;
        }
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best_ratio = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (tab(r, enter) > tol) {
        const double ratio = tab(r, width - 1) / tab(r, enter);
        if (leave < 0 || ratio < best_ratio - 1e-15 ||
            (std::abs(ratio - best_ratio) <= 1e-15 && basis[r] < basis[leave])) {
          leave = r;
          best_ratio = ratio;
        }
      }
    }
    if (leave < 0) break;  // unbounded cannot happen with a positive A
    tab.row(leave) /= tab(leave, enter);
    for (Eigen::Index r = 0; r <= m; ++r) {
      if (r != leave && tab(r, enter) != 0.0) tab.row(r) -= tab(r, enter) * tab.row(leave);
    }
    basis[leave] = enter;
  }

  Vec x = Vec::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r)
    if (basis[r] < n) x[basis[r]] = std::max(0.0, tab(r, width - 1));
  Vec u = tab.block(m, n, 1, m).transpose().cwiseMax(0.0);

  GameSolution sol;
  sol.pivots = pivots;
  const double sx = x.sum();
  if (sx > 0.0) {
    sol.column_strategy = x / sx;
  } else {
    sol.column_strategy = Vec::Constant(n, 1.0 / n);
  }
  const double su = u.sum();
  sol.row_strategy = su > 0.0 ? Vec(u / su) : Vec(Vec::Constant(m, 1.0 / m));
  sol.value = (payoff * sol.column_strategy).maxCoeff();
  return sol;
}

}  // namespace

GameSolution solve_matrix_game(const Mat& payoff) {
  require(payoff.rows() >= 1 && payoff.cols() >= 1, "matrix game: empty payoff");
  if (payoff.rows() <= payoff.cols()) return solve_tableau(payoff);
  // The tableau grows with the row count; for tall games solve −Pᵀ, whose
  // maximizer is our minimizer, and swap the strategies back.
  const Mat flipped = -payoff.transpose();
  const GameSolution t = solve_tableau(flipped);
  GameSolution sol;
  sol.pivots = t.pivots;
  sol.column_strategy = t.row_strategy;
  sol.row_strategy = t.column_strategy;
  sol.value = (payoff * sol.column_strategy).maxCoeff();
  return sol;
}

}  // namespace mcr
