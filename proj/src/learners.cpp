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

#include "mcr/learners.hpp"

#include <cmath>

#include "mcr/json_util.hpp"

namespace mcr {

Vec sum_gradients(std::span<const LinearLoss> losses, int dim) {
  Vec total = Vec::Zero(dim);
  for (const LinearLoss& l : losses) {
    require(l.gradient.size() == dim, "learner: loss dimension mismatch");
    require(all_finite(l.gradient), "learner: non-finite loss");
    total += l.gradient;
  }
  return total;
}

// --- Hedge ----------------------------------------------------------------

Hedge::Hedge(int n, double eta) : Hedge(Vec::Constant(std::max(n, 1), 1.0 / std::max(n, 1)), eta) {
  require(n >= 1, "hedge: need at least one expert");
}

Hedge::Hedge(Vec initial_weights, double eta)
    : n_(static_cast<int>(initial_weights.size())), eta_(eta) {
  require(n_ >= 1, "hedge: need at least one expert");
  require(std::isfinite(eta) && eta > 0.0, "hedge: rate must be positive");
  require((initial_weights.array() > 0.0).all() && std::abs(initial_weights.sum() - 1.0) <= 1e-12,
          "hedge: initial weights must be a positive simplex point");
  log_prior_ = initial_weights.array().log().matrix();
  cumulative_ = Vec::Zero(n_);
}

double Hedge::default_rate(int n, int horizon, double loss_range) {
  require(horizon >= 1 && loss_range > 0.0, "hedge: bad rate parameters");
  if (n <= 1) return 1.0;
  return std::sqrt(8.0 * std::log(static_cast<double>(n)) / horizon) / loss_range;
}

Vec Hedge::params() const {
  Vec logits = log_prior_ - eta_ * cumulative_;
  logits.array() -= logits.maxCoeff();
  Vec w = logits.array().exp().matrix();
  return w / w.sum();
}

void Hedge::update(std::span<const LinearLoss> losses) {
  const Vec g = sum_gradients(losses, n_);
  cumulative_ += g;
}

nlohmann::json Hedge::state() const {
  return {{"kind", name()}, {"eta", eta_}, {"weights", vec_to_json(params())}};
}

DoublingHedge::DoublingHedge(int n, double loss_range)
    : n_(n), loss_range_(loss_range), inner_(n, Hedge::default_rate(n, 1, loss_range)) {}

void DoublingHedge::update(std::span<const LinearLoss> losses) {
  inner_.update(losses);
  if (++rounds_in_epoch_ >= (1 << epoch_)) {
    ++epoch_;
    rounds_in_epoch_ = 0;
    inner_ = Hedge(n_, Hedge::default_rate(n_, 1 << epoch_, loss_range_));
  }
}

nlohmann::json DoublingHedge::state() const {
  auto j = inner_.state();
  j["kind"] = name();
  j["epoch"] = epoch_;
  return j;
}

// --- OGD ------------------------------------------------------------------

Ogd::Ogd(ConvexBody body, double eta) : Ogd(body, eta, body.center()) {}

Ogd::Ogd(ConvexBody body, double eta, Vec start) : body_(std::move(body)), eta_(eta) {
  require(std::isfinite(eta) && eta > 0.0, "ogd: rate must be positive");
  theta_ = body_.project(start);
}

double Ogd::default_rate(const ConvexBody& body, double grad_bound, int horizon) {
  require(grad_bound > 0.0 && horizon >= 1, "ogd: bad rate parameters");
  const double diam = body.diameter() > 0.0 ? body.diameter() : 1.0;
  return diam / (grad_bound * std::sqrt(static_cast<double>(horizon)));
}

void Ogd::update(std::span<const LinearLoss> losses) {
  if (losses.empty()) return;
  const Vec g = sum_gradients(losses, dim());
  if (g.isZero(0.0)) return;
  theta_ = body_.project(theta_ - eta_ * g);
}

nlohmann::json Ogd::state() const {
  return {{"kind", name()}, {"eta", eta_}, {"theta", vec_to_json(theta_)}};
}

// --- FTRL on the ball -----------------------------------------------------

FtrlBall::FtrlBall(int dim, double radius, double eta)
    : radius_(radius), eta_(eta), sum_(Vec::Zero(dim)) {
  require(dim >= 1, "ftrl: dimension must be positive");
  require(std::isfinite(radius) && radius > 0.0, "ftrl: radius must be positive");
  require(std::isfinite(eta) && eta > 0.0, "ftrl: rate must be positive");
}

double FtrlBall::default_rate(double radius, double norm_budget) {
  require(radius > 0.0, "ftrl: radius must be positive");
  return norm_budget > 0.0 ? 2.0 * radius / std::sqrt(norm_budget) : 1.0;
}

double FtrlBall::alpha() const {
  const double n = sum_.norm();
  if (n == 0.0) return eta_ / 2.0;
  return std::min(eta_ / 2.0, radius_ / n);
}

void FtrlBall::update(std::span<const LinearLoss> losses) {
  sum_ -= sum_gradients(losses, dim());
}

double FtrlBall::regret_bound(double sum_sq_norms) const {
  return radius_ * radius_ / eta_ + 0.5 * eta_ * sum_sq_norms;
}

nlohmann::json FtrlBall::state() const {
  return {{"kind", name()}, {"eta", eta_}, {"radius", radius_}, {"alpha", alpha()},
          {"sum", vec_to_json(sum_)}};
}

// --- Delayed OGD ----------------------------------------------------------

DelayedOgd::DelayedOgd(ConvexBody body, double eta) : ogd_(std::move(body), eta) {}

double DelayedOgd::default_rate(const ConvexBody& body, double grad_bound, int horizon,
                                double delay_budget) {
  require(grad_bound > 0.0 && horizon >= 1 && delay_budget >= 0.0, "delayed-ogd: bad rate parameters");
  const double diam = body.diameter() > 0.0 ? body.diameter() : 1.0;
  return diam / (grad_bound * std::sqrt(horizon + delay_budget));
}

void DelayedOgd::feed(LinearLoss loss, int delivery_round) {
  if (delivery_round <= round_)
    throw ContractError("delayed-ogd: delivery round " + std::to_string(delivery_round) +
                        " is not after the current round " + std::to_string(round_));
  require(loss.gradient.size() == dim() && all_finite(loss.gradient), "delayed-ogd: bad gradient");
  queue_[delivery_round].push_back(std::move(loss));
}

void DelayedOgd::advance() {
  ++round_;
  auto it = queue_.find(round_);
  if (it == queue_.end()) return;
  ogd_.update(it->second);
  queue_.erase(it);
}

std::size_t DelayedOgd::pending() const {
  std::size_t n = 0;
  for (const auto& [round, batch] : queue_) n += batch.size();
  return n;
}

nlohmann::json DelayedOgd::state() const {
  auto j = ogd_.state();
  j["kind"] = name();
  j["round"] = round_;
  j["pending"] = pending();
  return j;
}

// --- Importance weighting -------------------------------------------------

ImportanceWeighted::ImportanceWeighted(std::unique_ptr<Learner> inner, double gamma)
    : inner_(std::move(inner)), gamma_(gamma) {
  require(inner_ != nullptr, "iw: null inner learner");
  require(std::isfinite(gamma) && gamma > 0.0 && gamma <= 1.0, "iw: gamma must lie in (0, 1]");
}

ImportanceWeighted::ImportanceWeighted(const ImportanceWeighted& other)
    : inner_(other.inner_->clone()), gamma_(other.gamma_) {}

std::vector<LinearLoss> ImportanceWeighted::weigh(std::span<const LinearLoss> raw, double gamma,
                                                  bool observed) {
  require(gamma > 0.0 && gamma <= 1.0, "iw: gamma must lie in (0, 1]");
  std::vector<LinearLoss> out;
  out.reserve(raw.size());
  for (const LinearLoss& l : raw)
    out.push_back({observed ? Vec(l.gradient / gamma) : Vec(Vec::Zero(l.gradient.size())), l.tag});
  return out;
}

void ImportanceWeighted::feed(std::span<const LinearLoss> raw, bool observed) {
  if (!observed) return;
  inner_->update(weigh(raw, gamma_, true));
}

nlohmann::json ImportanceWeighted::state() const {
  return {{"kind", "iw"}, {"gamma", gamma_}, {"inner", inner_->state()}};
}

}  // namespace mcr
