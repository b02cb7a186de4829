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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcr/evi.hpp"
#include "mcr/learners.hpp"
#include "mcr/testfns.hpp"

namespace mcr {

/// Parameterized test family: learner parameters ↦ h_params. Losses handed to
/// the learner are linear in the parameters:
///   f_t(params) = gradientᵀ params = -E_{p~D_t}[h_params(x_t, p)ᵀ(y_t - p)].
class ParamFamily {
 public:
  virtual ~ParamFamily() = default;
  virtual std::string name() const = 0;
  virtual int param_dim() const = 0;
  virtual int dim() const = 0;
  virtual Vec eval(const Vec& params, const Context& x, const Vec& p) const = 0;
  // Bound on sup_p ‖h_params(x, p)‖, used as the EVI operator bound.
  virtual double norm_bound(const Vec& params) const = 0;
  virtual Vec loss_gradient(const Context& x, const Distribution& dist, const Vec& y) const = 0;
  // p ↦ h_params(x, p) for one round. Families with structure override this
  // to fold the parameters in once; the default forwards to eval.
  virtual std::function<Vec(const Vec&)> bind(const Vec& params, const Context& x) const;

  TestFunction test(const Vec& params, const ConvexBody& body) const;
};

/// Convex hull of finitely many tests; parameters are simplex weights.
class FiniteFamily final : public ParamFamily {
 public:
  FiniteFamily(std::vector<TestFunction> members, int dim);
  std::string name() const override { return "finite"; }
  int param_dim() const override { return static_cast<int>(members_.size()); }
  int dim() const override { return dim_; }
  Vec eval(const Vec& params, const Context& x, const Vec& p) const override;
  double norm_bound(const Vec& params) const override;
  Vec loss_gradient(const Context& x, const Distribution& dist, const Vec& y) const override;
  std::function<Vec(const Vec&)> bind(const Vec& params, const Context& x) const override;

  // Builds the weighted sum Σ w_i h_i(x, ·) directly. It must agree with eval
  // up to rounding; members are still used for gradients and audits.
  using Combiner = std::function<std::function<Vec(const Vec&)>(const Vec& weights, const Context& x)>;
  void set_combiner(Combiner combiner) { combiner_ = std::move(combiner); }

  const std::vector<TestFunction>& members() const { return members_; }
  // Width of the per-member loss range, 2·max value_bound.
  double loss_range() const;

 private:
  std::vector<TestFunction> members_;
  int dim_;
  Combiner combiner_;
};

/// h_θ = Ψᵀθ for a feature map Ψ.
class LinearFamily final : public ParamFamily {
 public:
  explicit LinearFamily(FeatureMap features);
  std::string name() const override { return "linear(" + features_.name + ")"; }
  int param_dim() const override { return features_.features; }
  int dim() const override { return features_.dim; }
  Vec eval(const Vec& params, const Context& x, const Vec& p) const override;
  double norm_bound(const Vec& params) const override;
  Vec loss_gradient(const Context& x, const Distribution& dist, const Vec& y) const override;

  const FeatureMap& features() const { return features_; }
  // E_{p~D}[Ψ(x,p)(y-p)], the negated gradient.
  Vec residual_feature(const Context& x, const Distribution& dist, const Vec& y) const;

 private:
  FeatureMap features_;
};

enum class Protocol { standard, delayed, censored };
std::string to_string(Protocol p);

struct ForecastRound {
  int t = 0;
  Context x;
  Vec params;             // learner parameters defining h_t (empty for kernel engines)
  Distribution dist;      // D_t, the EVI solution
  Distribution effective; // output actually audited; empty means D_t
  double eps_target = 0.0;
  double eps_realized = 0.0;  // certified gap of D_t for h_t(x_t, ·)
  bool met_target = true;
  std::optional<Vec> y;   // absent while pending
  int z = -1;             // exploration bit of the censored protocol, -1 otherwise
  int delivery = 0;       // round at which the learner receives the loss

  const Distribution& audited() const { return effective.empty() ? dist : effective; }
};

/// Full per-round record. Every audit in this library reads only this.
struct Transcript {
  nlohmann::json header;
  ConvexBody body = ConvexBody::simplex(1);
  Protocol protocol = Protocol::standard;
  double gamma = 1.0;
  Distribution explore;  // D*, censored protocol only
  std::vector<ForecastRound> rounds;

  int horizon() const { return static_cast<int>(rounds.size()); }
  bool resolved() const;

  // CSV columns: t,x,atoms,params,eps_target,eps_realized,met_target,y,z,delivery,effective_atoms
  std::string to_csv() const;
  static Transcript from_csv(const std::string& csv, const nlohmann::json& header);
  // FNV-1a 64 of to_csv().
  std::uint64_t hash() const;
  std::string hash_hex() const;
  nlohmann::json header_json() const;
};

/// Forecasting engine shared by the generic reduction and the kernel forecaster.
class ForecastEngine {
 public:
  virtual ~ForecastEngine() = default;
  virtual const ConvexBody& body() const = 0;
  // Returns the distribution actually output this round.
  virtual const Distribution& predict(const Context& x) = 0;
  virtual void observe(const Vec& y) = 0;
  virtual const Transcript& transcript() const = 0;
  // Ends the run; for delayed protocols pending outcomes are revealed to the
  // transcript (never to the learner) unless flushing is disabled.
  virtual const Transcript& finish() = 0;
  // Outcome must be committed before the forecast (censored protocol).
  virtual bool requires_committed_outcomes() const { return false; }
};

struct ForecasterOptions {
  EpsPolicy eps = EpsPolicy::inverse_square_tenth;
  EviOptions evi;
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::standard;
  std::function<int(int)> delay;  // d_t ≥ 1, delayed protocol only
  bool flush_pending = true;
  double gamma = 1.0;              // censored protocol only
  std::optional<Distribution> explore;  // D*, censored protocol only
};

/// Generic reduction: the learner proposes h_t, an EVI over h_t(x_t, ·) gives
/// D_t, and the observed outcome becomes the linear loss f_t.
class Forecaster final : public ForecastEngine {
 public:
  Forecaster(ConvexBody body, std::shared_ptr<const ParamFamily> family, std::unique_ptr<Learner> learner,
             ForecasterOptions options);

  const ConvexBody& body() const override { return body_; }
  const Distribution& predict(const Context& x) override;
  void observe(const Vec& y) override;
  const Transcript& transcript() const override { return transcript_; }
  const Transcript& finish() override;
  bool requires_committed_outcomes() const override { return options_.protocol == Protocol::censored; }

  const Learner& learner() const { return *learner_; }
  const ParamFamily& family() const { return *family_; }
  std::shared_ptr<const ParamFamily> family_ptr() const { return family_; }
  // The most recent EVI solution D_t (differs from the output on exploration
  // rounds of the censored protocol).
  const Distribution& last_solution() const;

 private:
  void deliver_due(int round);

  ConvexBody body_;
  std::shared_ptr<const ParamFamily> family_;
  std::unique_ptr<Learner> learner_;
  ForecasterOptions options_;
  Transcript transcript_;
  bool awaiting_outcome_ = false;
  bool finished_ = false;
  std::map<int, std::vector<std::pair<int, Vec>>> pending_;  // delivery round -> (t, y)
};

/// Kernel forecaster: D_t solves the EVI over
///   S_t(p) = Σ_{i<t} E_{p_i~D_i}[Γ((x_t,p),(x_i,p_i))(y_i - p_i)].
class K29Forecaster final : public ForecastEngine {
 public:
  K29Forecaster(ConvexBody body, MatrixKernel kernel, ForecasterOptions options);

  const ConvexBody& body() const override { return body_; }
  const Distribution& predict(const Context& x) override;
  void observe(const Vec& y) override;
  const Transcript& transcript() const override { return transcript_; }
  const Transcript& finish() override { return transcript_; }

  const K29History& history() const { return history_; }
  const MatrixKernel& kernel() const { return kernel_; }

 private:
  ConvexBody body_;
  MatrixKernel kernel_;
  ForecasterOptions options_;
  K29History history_;
  Transcript transcript_;
  bool awaiting_outcome_ = false;
};

/// Outcome process. Contexts come first; the outcome may depend on the
/// forecast unless the nature declares itself non-adaptive.
class Nature {
 public:
  virtual ~Nature() = default;
  virtual Context context(int t) = 0;
  virtual Vec outcome(int t, const Context& x, const Distribution& forecast) = 0;
  virtual bool adaptive() const = 0;
};

// Drives `engine` for `horizon` rounds and returns the finished transcript.
const Transcript& run_protocol(ForecastEngine& engine, Nature& nature, int horizon);

/// y_t = argmax_ŷ ŷᵀ E_{p~D_t}[h(x, p)] with a fixed context x.
class EviAdversary final : public Nature {
 public:
  EviAdversary(TestFunction h, Context x, ConvexBody body);
  Context context(int) override { return x_; }
  Vec outcome(int t, const Context& x, const Distribution& forecast) override;
  bool adaptive() const override { return true; }

 private:
  TestFunction h_;
  Context x_;
  ConvexBody body_;
};

// --- audits ---------------------------------------------------------------

struct Series {
  double total = 0.0;
  std::vector<double> per_round;
};

// Σ_t E_{p~audited D_t}[h(x_t,p)ᵀ(y_t - p)]. Throws ProtocolError if an
// outcome is unresolved.
Series mc_error(const Transcript& tr, const TestFunction& h);
// Σ_t E_{p~D_t}[h_t(x_t,p)ᵀ(y_t - p)], with h_t rebuilt from the stored params.
Series incurred_correlation(const Transcript& tr, const ParamFamily& family);
// Σ_t f_t(h_t) - Σ_t f_t(h) with f_t(g) = -E_{p~D_t}[g(x_t,p)ᵀ(y_t - p)].
// With `importance_weighted`, each term is scaled by z_t/γ.
double regret(const Transcript& tr, const ParamFamily& family, const TestFunction& comparator,
              bool importance_weighted = false);
double evi_total(const Transcript& tr);
// Σ_t max(eps_realized_t, 0).
double evi_total_positive(const Transcript& tr);
// Σ_t ‖E_{p~D_t}[Ψ(x_t,p)(y_t - p)]‖².
double residual_feature_energy(const Transcript& tr, const LinearFamily& family);

// Σ_t ‖ℓ_t‖² in the kernel's RKHS, ℓ_t = E_{p~D_t}[Γ(·,(x_t,p))(y_t - p)]:
// Σ_t E_{p,p'~D_t}[(y_t - p)ᵀ Γ((x_t,p),(x_t,p'))(y_t - p')].
double kernel_residual_energy(const Transcript& tr, const MatrixKernel& kernel);

// Finite families: all members. Linear families: `random_count` seeded θ on
// the sphere of radius B plus ±B·e_i for every basis vector.
std::vector<TestFunction> comparator_grid(const ParamFamily& family, const ConvexBody& body, double radius,
                                          int random_count, std::uint64_t seed);

struct LedgerRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  nlohmann::json detail;
};

struct LedgerReport {
  std::string title;
  std::vector<LedgerRow> rows;
  bool passed() const;
  std::size_t failures() const;
  nlohmann::json to_json() const;
};

// MC-Err(h) ≤ Regret(h) + Σ eps_realized + tol·T for every comparator, plus
// the per-round EVI inequality E[h_tᵀ(y_t - p)] ≤ eps_realized_t + tol.
LedgerReport online_reduction_ledger(const Transcript& tr, const ParamFamily& family,
                              const std::vector<TestFunction>& grid, double tol = 1e-8);

// Censored protocol: MC-Err on the effective mixture ≤ γLT + Σ eps + realized
// importance-weighted regret, plus the exact mixture decomposition.
LedgerReport censored_ledger(const Transcript& tr, const ParamFamily& family, const std::vector<TestFunction>& grid,
                             double tol = 1e-8);

}  // namespace mcr
