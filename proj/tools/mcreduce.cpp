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

// mcreduce <subcommand> --config FILE [--seed N] [--out-dir DIR] [--horizon T]
//
// Exit codes: 0 every ledger passed, 2 some ledger failed, 1 usage or config
// error (including contract violations during a run).

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcr/harness.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> horizon;
  bool quiet = false;
};

int run(const std::string& subcommand, const Overrides& o) {
  std::ifstream in(o.config);
  if (!in) throw mcr::ContractError("cannot open config: " + o.config);
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw mcr::ContractError("config " + o.config + ": " + e.what());
  }
  mcr::ExperimentConfig cfg;
  try {
    cfg = mcr::ExperimentConfig::from_json(raw);
  } catch (const nlohmann::json::exception& e) {
    throw mcr::ContractError("config " + o.config + ": " + e.what());
  }
  const mcr::Mode mode = mcr::mode_from_string(subcommand);
  if (raw.contains("mode") && cfg.mode != mode)
    throw mcr::ContractError("config mode '" + mcr::to_string(cfg.mode) + "' does not match subcommand " + subcommand);
  cfg.mode = mode;
  if (o.seed) cfg.seed = *o.seed;
  if (o.horizon) cfg.horizon = *o.horizon;
  if (o.out_dir) {
    cfg.out_dir = *o.out_dir;
  } else if (!raw.contains("out_dir")) {
    if (const char* env = std::getenv("MCR_OUT_DIR"); env != nullptr && *env != '\0') cfg.out_dir = env;
  }

  const mcr::ExperimentResult result = mcr::run_experiment(cfg);
  const nlohmann::json summary = mcr::write_outputs(result, cfg.out_dir);
  if (!o.quiet) {
    for (const mcr::LedgerReport& r : result.ledgers) {
      std::cout << (r.passed() ? "PASS " : "FAIL ") << r.title << " (" << r.rows.size() << " rows, " << r.failures()
                << " failures)\n";
      for (const mcr::LedgerRow& row : r.rows)
        if (!row.pass) std::cout << "  " << row.name << ": " << row.lhs << " > " << row.rhs << "\n";
    }
    std::cout << "transcript " << summary.value("transcript_hash", std::string()) << "\n";
    std::cout << "outputs in " << cfg.out_dir << "\n";
  }
  return result.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multicalibration reductions: forecasting, EVI solving, Phi-regret, omniprediction and self-play."};
  app.require_subcommand(1);
  Overrides o;
  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"simulate", "Run a forecaster against a nature and audit the multicalibration ledgers"},
      {"evi-solve", "Solve one expected variational inequality and certify it"},
      {"phi-regret", "Run a best-responding decision maker and audit Phi-regret"},
      {"omnipredict", "Run the omnipredictor and report per-loss regret"},
      {"self-play", "Two swap-regret players in a repeated matrix game"},
  };
  std::string chosen;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Root seed override");
    sub->add_option("--out-dir", o.out_dir, "Output directory (default: config out_dir, then $MCR_OUT_DIR, then out)");
    sub->add_option("--horizon", o.horizon, "Horizon override")->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", o.quiet, "Print nothing on success");
    sub->callback([&chosen, name = std::string(e.name)] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    return run(chosen, o);
  } catch (const std::exception& e) {
    std::cerr << "mcreduce: " << e.what() << "\n";
    return 1;
  }
}
