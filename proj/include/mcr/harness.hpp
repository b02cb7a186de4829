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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mcr/decision.hpp"
#include "mcr/forecaster.hpp"
#include "mcr/omni.hpp"

namespace mcr {

// --- configuration -----------------------------------------------------------

enum class Mode { simulate, evi, phi, omni, self_play };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// One experiment. The file format is JSON; docs/config.md lists every key.
/// Sub-specs (tests, kernel, deviations, omni, game, nature) stay as JSON and
/// are interpreted by the builders below, so unknown keys inside them are
/// reported by the builder that owns them.
struct ExperimentConfig {
  std::string name = "experiment";
  Mode mode = Mode::simulate;
  ConvexBody outcomes = ConvexBody::simplex(2);  // 𝒴, or the loss body ℒ in phi mode
  std::optional<ConvexBody> actions;             // 𝒵, phi mode only
  Protocol protocol = Protocol::standard;
  int delay = 1;                 // delayed protocol: constant d_t
  double gamma = -1.0;           // censored protocol; negative means T^(-1/4)
  std::optional<Distribution> explore;  // censored D*; default is the body center
  std::string engine = "hedge";  // hedge | hedge-doubling | ftrl | ogd | k29 | omni | phi
  nlohmann::json tests;          // test family / audit grid
  nlohmann::json kernel;         // k29 engine
  nlohmann::json deviations;     // phi mode
  nlohmann::json omni;           // omni mode
  nlohmann::json game;           // self_play mode
  nlohmann::json evi;            // evi mode: operator, eps, method
  nlohmann::json nature;
  int horizon = 256;
  std::optional<EpsPolicy> eps;  // unset: the engine's default schedule
  EviMethod evi_method = EviMethod::refined;
  std::uint64_t seed = 0;
  int grid = 16;                 // random comparators for linear families
  std::string out_dir = "out";
  bool plots = true;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Throws ContractError naming the first inconsistency.
  void validate() const;
  double effective_gamma() const;
};

ExperimentConfig load_config(const std::string& path);

// --- builders ----------------------------------------------------------------

struct FamilyBundle {
  std::shared_ptr<const ParamFamily> family;
  // Radius of the learner's parameter set (linear families), 1 otherwise.
  double radius = 1.0;
  std::vector<TestFunction> grid;  // audited comparators
};

FamilyBundle build_family(const nlohmann::json& spec, const ConvexBody& body, int grid_count, std::uint64_t seed);
FeatureMap build_features(const nlohmann::json& spec, const ConvexBody& body);
MatrixKernel build_kernel(const nlohmann::json& spec, const ConvexBody& body);
std::unique_ptr<Learner> build_learner(const std::string& engine, const FamilyBundle& bundle, const ConvexBody& body,
                                       int horizon, const ExperimentConfig& config);
ForecasterOptions forecaster_options(const ExperimentConfig& config);

// Contexts drawn per round. "none" gives the empty vector, "ids" a uniform
// integer id as x[0], "uniform" a point of [0,1]^dim.
struct ContextSampler {
  enum class Kind { none, ids, uniform, cycle };
  Kind kind = Kind::none;
  int count = 1;
  int dim = 1;
  std::uint64_t seed = 0;

  static ContextSampler from_json(const nlohmann::json& j, std::uint64_t seed);
  Context operator()(int t) const;
};

/// iid outcomes: vertex-uniform, body-uniform, explicit atoms, or a one-hot
/// label drawn from a per-context class distribution.
class IidNature final : public Nature {
 public:
  enum class Sampler { vertices, uniform, atoms, conditional };
  IidNature(ConvexBody body, Sampler sampler, ContextSampler contexts, std::uint64_t seed,
            Distribution atoms = {}, Mat conditional = {});
  Context context(int t) override { return contexts_(t); }
  Vec outcome(int t, const Context& x, const Distribution& forecast) override;
  bool adaptive() const override { return false; }

 private:
  ConvexBody body_;
  Sampler sampler_;
  ContextSampler contexts_;
  std::uint64_t seed_;
  Distribution atoms_;
  Mat conditional_;  // contexts × classes
  std::vector<Vec> vertices_;
};

class FixedSequenceNature final : public Nature {
 public:
  FixedSequenceNature(std::vector<Context> contexts, std::vector<Vec> outcomes);
  Context context(int t) override;
  Vec outcome(int t, const Context& x, const Distribution& forecast) override;
  bool adaptive() const override { return false; }
  int length() const { return static_cast<int>(outcomes_.size()); }

 private:
  std::vector<Context> contexts_;
  std::vector<Vec> outcomes_;
};

// CSV with columns x1..xm (optional) and y1..yd; header names pick the role.
FixedSequenceNature load_sequence_csv(const std::string& path);

// `adversary_target` is used by the "adversary" kind: y_t = linopt(−E[h]).
std::unique_ptr<Nature> build_nature(const nlohmann::json& spec, const ConvexBody& body, std::uint64_t seed,
                                     const TestFunction* adversary_target);

// --- metrics -------------------------------------------------------------------

/// Named cumulative series over t = 1..T, written column-wise.
struct Metrics {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  void add(std::string name, std::vector<double> cumulative);
  const std::vector<double>* find(const std::string& name) const;
  std::size_t length() const;
  // t,<names...>; numbers in shortest round-trip form.
  std::string to_csv() const;
};

std::vector<double> cumulative(const std::vector<double>& per_round);

// --- experiment --------------------------------------------------------------------

struct SelfPlayResult {
  Mat joint;                       // empirical joint distribution of (i, j)
  std::vector<std::vector<Vec>> mixed;   // per player, μ_t means
  std::vector<std::vector<Vec>> losses;  // per player, ℓ_t
  double ce_gap[2] = {0.0, 0.0};         // exhaustive, per player
  double swap_regret[2] = {0.0, 0.0};    // brute force from (μ_t, ℓ_t)
  std::vector<DecisionTranscript> transcripts;  // engine players only
  std::vector<Transcript> forecasts;            // their loss forecasters
  std::vector<int> engine_players;              // player index of each transcript
  bool sampled = false;  // mixed/losses hold realized actions and loss columns
};

struct ExperimentResult {
  ExperimentConfig config;
  Transcript transcript;
  std::optional<DecisionTranscript> decisions;
  std::optional<SelfPlayResult> self_play;
  std::vector<LedgerReport> ledgers;
  Metrics metrics;
  nlohmann::json summary;
  // Extra CSV tables keyed by file name (omni regret, per-deviation regret).
  std::vector<std::pair<std::string, std::string>> tables;

  bool passed() const;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// For each player k: max over all d_k^{d_k} maps φ of Σ π(i,j)(ℓ_k(i,j) − ℓ_k(φ(i),j)),
// by explicit enumeration. Tables are losses, A for the row player and B for
// the column player.
double ce_violation(const Mat& joint, const Mat& loss, bool row_player);
// With `sampled`, each player draws its action from μ_t (stream keyed by the
// options seed, the player and the round) and both observe the realized loss
// columns; the joint, the swap regrets and the CE gaps are then those of the
// realized play. Otherwise players see expected losses under the other's μ_t.
SelfPlayResult self_play_game(const Mat& A, const Mat& B, const nlohmann::json& players, int horizon,
                              const ForecasterOptions& options, bool sampled = false);
// Rock-paper-scissors as losses in [0, 1]: (1 − payoff)/2.
Mat rock_paper_scissors();

// --- ledgers built here ----------------------------------------------------------

// Per round: recomputed certificate ≤ eps_realized + tol, and exactness of the
// certificate against vertex enumeration (polyhedral bodies) or the maximum
// over `samples` boundary points (balls).
LedgerReport evi_certificate_ledger(const Transcript& tr, const ParamFamily& family, int samples = 10000,
                                    double tol = 1e-9, std::uint64_t seed = 0);
// Same, with S_t rebuilt from the kernel history.
LedgerReport k29_certificate_ledger(const Transcript& tr, const MatrixKernel& kernel, int samples = 10000,
                                    double tol = 1e-9, std::uint64_t seed = 0);

/// RKHS element h = Σ_j Γ(·,(x_j,p_j))w_j with its norm.
struct RkhsTest {
  TestFunction test;
  double norm = 0.0;
};
// Unit-norm RKHS elements with `atoms` centers drawn from the body.
// Centers take their contexts from `contexts` in turn (empty contexts if none).
std::vector<RkhsTest> sample_rkhs_tests(const MatrixKernel& kernel, const ConvexBody& body, int count, int atoms,
                                        std::uint64_t seed, const std::vector<Context>& contexts = {});
// |MC-Err(h)| ≤ ‖h‖·√(Σ‖ℓ_t‖² + 2Σε⁺) for each test.
LedgerReport k29_bound_ledger(const Transcript& tr, const MatrixKernel& kernel, const std::vector<RkhsTest>& tests,
                              double tol = 1e-9);

// --- output ------------------------------------------------------------------------

std::uint64_t content_hash(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

// Writes transcript.csv, header.json, metrics.csv, ledger.json, the extra
// tables, plots, and summary.json (with content hashes of the others).
// Returns the summary.
nlohmann::json write_outputs(const ExperimentResult& result, const std::string& dir);

/// One SVG line chart. Points are stored in data coordinates inside a
/// transformed group, so re-parsing recovers the series exactly.
std::string render_svg(const std::string& title, const std::vector<std::string>& names,
                       const std::vector<std::vector<double>>& series);
// (name, points) pairs recovered from render_svg output.
std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> parse_svg(const std::string& svg);
// One file per series group (prefix before ':'), returns the paths written.
std::vector<std::string> emit_plots(const Metrics& metrics, const std::string& dir);

}  // namespace mcr
