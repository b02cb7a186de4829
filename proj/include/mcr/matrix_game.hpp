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

#include "mcr/types.hpp"

namespace mcr {

struct GameSolution {
  Vec column_strategy;  // minimizer's mixed strategy over columns
  Vec row_strategy;     // maximizer's mixed strategy over rows
  double value = 0.0;
  int pivots = 0;
};

/// Solves min_w max_v (payoff · w)_v over mixed strategies with a dense
/// tableau simplex. Rows belong to the maximizer, columns to the minimizer.
GameSolution solve_matrix_game(const Mat& payoff);

}  // namespace mcr
