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
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcr/forecaster.hpp"

namespace mcr {

// σ(p) = argmin_{z∈Z} pᵀz with the body's deterministic tie rule.
Vec best_response(const Vec& p, const ConvexBody& Z);

/// Bitwise memo of σ. Bounded: the table is dropped once it holds `capacity`
/// entries, so long runs keep a fixed footprint.
class BestResponseCache {
 public:
  explicit BestResponseCache(ConvexBody Z, std::size_t capacity = 1 << 14);
  const Vec& operator()(const Vec& p);
  void clear() {
    table_.clear();
    last_p_.resize(0);
  }
  const ConvexBody& body() const { return Z_; }
  std::size_t hits() const { return hits_; }

 private:
  const Vec& lookup(const Vec& p);

  ConvexBody Z_;
  std::size_t capacity_;
  std::size_t hits_ = 0;
  // Deviation families query the same p many times in a row.
  Vec last_p_;
  Vec last_z_;
  std::unordered_map<std::string, Vec> table_;
};

/// Strategy deviation φ(x, z) ∈ Z.
struct Deviation {
  enum class Kind { constant, finite_swap, linear, kernel };

  Kind kind = Kind::constant;
  std::string name;
  std::function<Vec(const Context&, const Vec&)> eval;

  Vec target;              // constant: z*
  std::vector<int> swap;   // finite_swap: vertex i ↦ vertex swap[i]
  Mat matrix;              // linear: M
  Vec offset;              // linear: b (affine maps); kernel: constant component
  double spectral = 0.0;   // linear: ‖M‖₂
  double rkhs_norm = 0.0;  // kernel: norm bound in the deviation kernel's RKHS

  Vec operator()(const Context& x, const Vec& z) const { return eval(x, z); }

  static Deviation constant(Vec z);
  // On simplex(d): e_i ↦ e_{swap[i]}, extended linearly.
  static Deviation finite_swap(std::vector<int> swap);
  static Deviation linear(Mat M, Vec b = Vec());
  static Deviation identity(int dim);
  // φ(x,z) = c + Σ_j Γ((x,z),(x_j,z_j)) w_j. `rkhs_norm` is computed as
  // √(‖c‖² + Σ_jk w_jᵀΓ(j,k)w_k), i.e. c lives in a constant-kernel summand.
  static Deviation kernel(MatrixKernel gamma, std::vector<Context> xs, std::vector<Vec> zs, std::vector<Vec> ws,
                          Vec c);
};

// True when φ(x, v) ∈ Z for every vertex v (polyhedral Z, linear φ), or on
// every point of `probes` otherwise.
bool is_endomorphic(const Deviation& phi, const ConvexBody& Z, const std::vector<std::pair<Context, Vec>>& probes);

// h_φ(x, p) = σ(p) − φ(x, σ(p)). `L` is the loss body, used for value bounds.
// `sigma` may be shared across a family so σ(p) is computed once per p.
TestFunction phi_test(const Deviation& phi, const ConvexBody& Z, const ConvexBody& L,
                      std::shared_ptr<BestResponseCache> sigma = nullptr);

struct DecisionRound {
  int t = 0;
  Context x;
  Distribution forecast;  // D_t over L, as output by the forecaster
  Distribution mixed;     // μ_t = σ-pushforward of D_t
  std::optional<Vec> loss;
};

struct DecisionTranscript {
  ConvexBody Z = ConvexBody::simplex(1);
  ConvexBody L = ConvexBody::simplex(1);
  std::vector<DecisionRound> rounds;
  int horizon() const { return static_cast<int>(rounds.size()); }
};

/// Best-responds to a loss forecaster and relays realized losses as outcomes.
class PhiDecisionMaker {
 public:
  PhiDecisionMaker(ForecastEngine& forecaster, ConvexBody Z);

  const Distribution& decide(const Context& x);
  void observe(const Vec& loss);
  const DecisionTranscript& transcript() const { return transcript_; }
  ForecastEngine& forecaster() { return forecaster_; }

 private:
  ForecastEngine& forecaster_;
  BestResponseCache sigma_;
  DecisionTranscript transcript_;
  bool awaiting_ = false;
};

struct PhiRegret {
  double regret = 0.0;      // Σ E_{z~μ_t}[ℓ_tᵀ(z − φ(x_t,z))]
  double mc_error = 0.0;    // Σ E_{p~D_t}[h_φ(x_t,p)ᵀ(ℓ_t − p)]
  double slack = 0.0;       // Σ E_{p~D_t}[h_φ(x_t,p)ᵀp]
  double max_slack = 0.0;   // max_t of the per-round slack term
  std::vector<double> per_round;  // regret terms
};

PhiRegret phi_regret(const DecisionTranscript& tr, const Deviation& phi);

// Σ_t ℓ_tᵀE[z_t] − min_{z*} Σ_t ℓ_tᵀz* via one linear minimization.
double external_regret(const DecisionTranscript& tr);
// On simplex(d): Σ_i max_j Σ_t μ_t(i)(ℓ_t[i] − ℓ_t[j]).
double swap_regret(const DecisionTranscript& tr);
// All d^d vertex maps of simplex(d), lexicographic.
std::vector<Deviation> all_vertex_swaps(int d);
// e_i ↦ e_j for every ordered pair (i ≠ j), and the identity.
std::vector<Deviation> pairwise_swaps(int d);

// Per φ: regret ≤ MC-Err(h_φ) + tol·T, max per-round slack ≤ tol, and the
// exact split regret = MC-Err + slack.
LedgerReport phi_ledger(const DecisionTranscript& tr, const std::vector<Deviation>& deviations, double tol = 1e-9);

// --- seeded endomorphism samplers ------------------------------------------

// Linear (or affine) endomorphisms of Z. Simplex: column-stochastic matrices.
// Origin-centered balls: Gaussian M scaled to spectral norm ≤ 1. Other bodies:
// M = (1 − s)I + sR for a random R and the largest s ∈ [0,1] found by
// bisection with every vertex image inside Z.
std::vector<Deviation> sample_linear_endomorphisms(const ConvexBody& Z, int count, std::uint64_t seed,
                                                   bool affine = false);

// Kernel deviations c + Σ_j k(·,(x_j,z_j))w_j with c a random member of Z and
// perturbations kept in the direction space of Z (zero-sum on the simplex),
// scaled down until every probe maps into Z. Instances that still fail are
// dropped; the result may be shorter than `count`.
std::vector<Deviation> sample_kernel_deviations(const MatrixKernel& gamma, const ConvexBody& Z, int count,
                                                int atoms, std::uint64_t seed,
                                                const std::vector<std::pair<Context, Vec>>& probes);

// --- engines -------------------------------------------------------------------

// Θ ↦ Mσ(p) (plus b with `affine`): rows (i·(d[+1]) + j) of Ψᵀ pick σ_j (or 1).
FeatureMap best_response_features(const ConvexBody& Z, bool affine);

struct LinearSwapConfig {
  double spectral_bound = 1.0;  // S
  bool affine = false;
  int horizon = 1024;           // tunes the OGD step
  ForecasterOptions forecaster = [] {
    ForecasterOptions o;
    o.eps = EpsPolicy::inverse_square;
    return o;
  }();
};

struct LinearSwapEngine {
  std::shared_ptr<LinearFamily> family;
  std::unique_ptr<Forecaster> forecaster;
  double rho = 0.0;
  double step = 0.0;
};

// OGD on {‖M‖_F ≤ ρ}, ρ = √d + √d·S (one more √d·S-sized block for affine),
// feeding the generic reduction over L.
LinearSwapEngine linear_swap_engine(const ConvexBody& Z, const ConvexBody& L, const LinearSwapConfig& config);

// Γ′((x,p),(x',p')) = σ(p)σ(p')ᵀ + Γ((x,σ(p)),(x',σ(p'))).
MatrixKernel rkhs_phi_kernel(const MatrixKernel& gamma, const ConvexBody& Z);
// Constant kernel c·I_d.
MatrixKernel constant_kernel(int dim, double c = 1.0);

// Hedge over {h_φ : φ ∈ deviations}.
std::unique_ptr<Forecaster> finite_phi_forecaster(const std::vector<Deviation>& deviations, const ConvexBody& Z,
                                                  const ConvexBody& L, int horizon, ForecasterOptions options = {});

// For a kernel transcript with Γ′: |MC-Err(h_φ)| ≤ √(1 + ‖φ‖²)·√(Σ‖ℓ_t‖² + 2Σε_t).
LedgerReport kernel_phi_ledger(const Transcript& forecasts, const MatrixKernel& gamma_prime,
                               const std::vector<Deviation>& deviations, const ConvexBody& Z, const ConvexBody& L,
                               double tol = 1e-9);

}  // namespace mcr
