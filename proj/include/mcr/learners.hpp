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

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcr/geometry.hpp"
#include "mcr/types.hpp"

namespace mcr {

/// Loss θ ↦ gradientᵀθ (for Hedge, the per-expert loss vector).
struct LinearLoss {
  Vec gradient;
  int tag = 0;
};

/// Online linear optimizer over a fixed parameter space.
///
/// `update` applies a batch of losses that became available at the same time;
/// the batch is summed and applied as one step, so a batch of one loss is an
/// ordinary step.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual int dim() const = 0;
  virtual Vec params() const = 0;
  virtual void update(std::span<const LinearLoss> losses) = 0;
  void update(const LinearLoss& loss) { update(std::span<const LinearLoss>(&loss, 1)); }

  virtual std::string name() const = 0;
  virtual nlohmann::json state() const = 0;
  virtual std::unique_ptr<Learner> clone() const = 0;
};

// Validates shape and finiteness and returns Σ gradients.
Vec sum_gradients(std::span<const LinearLoss> losses, int dim);

/// Exponential weights over n experts. Weights are kept as cumulative losses,
/// so consecutive steps compose exactly into one step on the summed loss.
class Hedge final : public Learner {
 public:
  Hedge(int n, double eta);
  Hedge(Vec initial_weights, double eta);
  // η = sqrt(ln n / horizon); any positive rate when n = 1.
  static double default_rate(int n, int horizon, double loss_range = 1.0);

  int dim() const override { return n_; }
  Vec params() const override;
  void update(std::span<const LinearLoss> losses) override;
  using Learner::update;
  std::string name() const override { return "hedge"; }
  nlohmann::json state() const override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<Hedge>(*this); }

  double eta() const { return eta_; }
  const Vec& cumulative_loss() const { return cumulative_; }

 private:
  int n_;
  double eta_;
  Vec log_prior_;
  Vec cumulative_;
};

/// Hedge with the doubling trick: epoch k lasts 2^k rounds and restarts with
/// the rate tuned for that length.
class DoublingHedge final : public Learner {
 public:
  DoublingHedge(int n, double loss_range = 1.0);

  int dim() const override { return n_; }
  Vec params() const override { return inner_.params(); }
  void update(std::span<const LinearLoss> losses) override;
  using Learner::update;
  std::string name() const override { return "hedge-doubling"; }
  nlohmann::json state() const override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<DoublingHedge>(*this); }

 private:
  int n_;
  double loss_range_;
  int epoch_ = 0;
  int rounds_in_epoch_ = 0;
  Hedge inner_;
};

/// Projected online gradient descent with a constant step.
class Ogd final : public Learner {
 public:
  Ogd(ConvexBody body, double eta);
  Ogd(ConvexBody body, double eta, Vec start);
  // η = diameter / (G sqrt(horizon)).
  static double default_rate(const ConvexBody& body, double grad_bound, int horizon);

  int dim() const override { return body_.dim(); }
  Vec params() const override { return theta_; }
  void update(std::span<const LinearLoss> losses) override;
  using Learner::update;
  std::string name() const override { return "ogd"; }
  nlohmann::json state() const override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<Ogd>(*this); }

  const ConvexBody& body() const { return body_; }
  double eta() const { return eta_; }

 private:
  ConvexBody body_;
  double eta_;
  Vec theta_;
};

/// Follow-the-regularized-leader on the Euclidean ball of radius B with
/// regularizer ‖θ‖²: θ = argmin_{‖θ‖≤B} −η sᵀθ + ‖θ‖² where s is the running
/// sum of negated gradients. The minimizer is α·s with α = min(η/2, B/‖s‖).
class FtrlBall final : public Learner {
 public:
  FtrlBall(int dim, double radius, double eta);
  // η = 2B / sqrt(budget), budget a declared bound on Σ‖gradient‖².
  static double default_rate(double radius, double norm_budget);

  int dim() const override { return static_cast<int>(sum_.size()); }
  Vec params() const override { return alpha() * sum_; }
  void update(std::span<const LinearLoss> losses) override;
  using Learner::update;
  std::string name() const override { return "ftrl-ball"; }
  nlohmann::json state() const override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<FtrlBall>(*this); }

  double alpha() const;
  const Vec& running_sum() const { return sum_; }
  double radius() const { return radius_; }
  double eta() const { return eta_; }
  // Regret bound against the ball for the realized Σ‖gradient‖²:
  // B²/η + (η/2)·Σ‖gradient‖².
  double regret_bound(double sum_sq_norms) const;

 private:
  double radius_;
  double eta_;
  Vec sum_;
};

/// Projected OGD whose gradients arrive late. Each gradient is scheduled for a
/// delivery round; when the round counter reaches it, all gradients due are
/// summed and applied with a single projection. Delivery at round t + 1 for an
/// emission at round t reproduces plain OGD.
class DelayedOgd final : public Learner {
 public:
  DelayedOgd(ConvexBody body, double eta);
  // η = R / (G sqrt(horizon + delay_budget)), R the body's diameter.
  static double default_rate(const ConvexBody& body, double grad_bound, int horizon,
                             double delay_budget);

  int dim() const override { return ogd_.dim(); }
  Vec params() const override { return ogd_.params(); }
  // Treats the batch as due now: equivalent to feeding with delay 1 at the
  // previous round.
  void update(std::span<const LinearLoss> losses) override { ogd_.update(losses); }
  using Learner::update;
  std::string name() const override { return "delayed-ogd"; }
  nlohmann::json state() const override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<DelayedOgd>(*this); }

  int round() const { return round_; }
  void feed(LinearLoss loss, int delivery_round);
  // Moves to the next round, applying every gradient due there.
  void advance();
  std::size_t pending() const;

 private:
  Ogd ogd_;
  int round_ = 1;
  std::map<int, std::vector<LinearLoss>> queue_;
};

/// Feeds (z/γ)·loss to the inner learner; rounds with z = 0 leave it untouched.
class ImportanceWeighted final : public Learner {
 public:
  ImportanceWeighted(std::unique_ptr<Learner> inner, double gamma);
  ImportanceWeighted(const ImportanceWeighted& other);

  static std::vector<LinearLoss> weigh(std::span<const LinearLoss> raw, double gamma, bool observed);

  int dim() const override { return inner_->dim(); }
  Vec params() const override { return inner_->params(); }
  // Losses here are assumed already weighted.
  void update(std::span<const LinearLoss> losses) override { inner_->update(losses); }
  using Learner::update;
  void feed(std::span<const LinearLoss> raw, bool observed);
  std::string name() const override { return "iw(" + inner_->name() + ")"; }
  nlohmann::json state() const override;
  std::unique_ptr<Learner> clone() const override { return std::make_unique<ImportanceWeighted>(*this); }

  double gamma() const { return gamma_; }
  const Learner& inner() const { return *inner_; }

 private:
  std::unique_ptr<Learner> inner_;
  double gamma_;
};

}  // namespace mcr
