#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "mcr/harness.hpp"

using namespace mcr;
using mcr::testing::vec;
using nlohmann::json;

namespace {

ExperimentConfig hedge_config(int horizon, json nature) {
  return ExperimentConfig::from_json({{"name", "unit"},
                                      {"outcomes", {{"kind", "simplex"}, {"dim", 2}}},
                                      {"engine", "hedge"},
                                      {"tests", {{"kind", "tables"}, {"count", 4}, {"cells", 2}}},
                                      {"nature", std::move(nature)},
                                      {"horizon", horizon},
                                      {"seed", 3}});
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mcr_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("zero horizon gives an empty transcript and passing ledgers") {
  const ExperimentResult res = run_experiment(hedge_config(0, {{"kind", "iid"}}));
  CHECK(res.transcript.rounds.empty());
  CHECK(res.passed());
  for (const LedgerReport& r : res.ledgers)
    for (const LedgerRow& row : r.rows) CHECK(row.pass);
  CHECK(res.summary.at("evi_total").get<double>() == 0.0);
}

TEST_CASE("metrics on a fixed two-round sequence match a direct recomputation") {
  const ExperimentConfig cfg =
      hedge_config(2, {{"kind", "fixed_sequence"}, {"outcomes", json::array({json::array({1, 0}), json::array({0, 1})})}});
  const ExperimentResult res = run_experiment(cfg);
  REQUIRE(res.transcript.rounds.size() == 2);
  CHECK(*res.transcript.rounds[0].y == vec({1, 0}));
  CHECK(*res.transcript.rounds[1].y == vec({0, 1}));

  const FamilyBundle bundle = build_family(cfg.tests, cfg.outcomes, cfg.grid, cfg.seed);
  for (const TestFunction& h : bundle.grid) {
    const std::vector<double>* series = res.metrics.find("mc:" + h.name);
    REQUIRE(series != nullptr);
    REQUIRE(series->size() == 2);
    double acc = 0.0;
    for (std::size_t t = 0; t < 2; ++t) {
      const ForecastRound& r = res.transcript.rounds[t];
      for (const Atom& a : r.audited().atoms()) acc += a.weight * h(r.x, a.point).dot(*r.y - a.point);
      CHECK((*series)[t] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  const std::vector<double>* evi = res.metrics.find("evi:sum");
  REQUIRE(evi != nullptr);
  CHECK((*evi)[1] ==
        doctest::Approx(res.transcript.rounds[0].eps_realized + res.transcript.rounds[1].eps_realized).epsilon(1e-12));
  CHECK(res.passed());

  const std::string csv = res.metrics.to_csv();
  CHECK(csv.rfind("t,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("same config and seed give identical hashes and output bytes") {
  ExperimentConfig cfg = hedge_config(64, {{"kind", "iid"}, {"sampler", "vertices"}});
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(cfg);
  CHECK(a.transcript.hash() == b.transcript.hash());
  const auto da = temp_dir("det_a"), db = temp_dir("det_b");
  const json sa = write_outputs(a, da.string());
  const json sb = write_outputs(b, db.string());
  CHECK(sa.at("files") == sb.at("files"));
  CHECK(slurp(da / "transcript.csv") == slurp(db / "transcript.csv"));
  CHECK(slurp(da / "summary.json") == slurp(db / "summary.json"));
  for (const char* f : {"header.json", "metrics.csv", "ledger.json"}) CHECK(std::filesystem::exists(da / f));

  cfg.seed = 4;
  CHECK(run_experiment(cfg).transcript.hash() != a.transcript.hash());
}

TEST_CASE("the output directory does not affect the hashed header") {
  ExperimentConfig cfg = hedge_config(8, {{"kind", "iid"}});
  const ExperimentResult a = run_experiment(cfg);
  cfg.out_dir = "elsewhere";
  const ExperimentResult b = run_experiment(cfg);
  const auto da = temp_dir("hdr_a"), db = temp_dir("hdr_b");
  write_outputs(a, da.string());
  write_outputs(b, db.string());
  CHECK(slurp(da / "header.json") == slurp(db / "header.json"));
}

TEST_CASE("self-play with constant players is a product point mass") {
  Mat A(2, 3), B(2, 3);
  A << 0.2, 0.5, 0.9, 0.4, 0.1, 0.3;
  B << 0.6, 0.3, 0.8, 0.1, 0.7, 0.2;
  const json players = json::array({{{"engine", "constant"}, {"action", 1}}, {{"engine", "constant"}, {"action", 2}}});
  const SelfPlayResult sp = self_play_game(A, B, players, 10, ForecasterOptions{});
  Mat expect = Mat::Zero(2, 3);
  expect(1, 2) = 1.0;
  CHECK((sp.joint - expect).cwiseAbs().maxCoeff() == 0.0);
  // Row player at (1, 2) could switch to row 0: 0.3 − min(0.9, 0.3) = 0.
  CHECK(sp.ce_gap[0] == doctest::Approx(0.0));
  // Column player at (1, 2) could switch to column 0: 0.2 − 0.1 = 0.1.
  CHECK(sp.ce_gap[1] == doctest::Approx(0.1));
  CHECK(sp.swap_regret[1] == doctest::Approx(1.0));
  CHECK(sp.transcripts.empty());
}

TEST_CASE("self-play on zero losses has no correlated-equilibrium gap") {
  const Mat Z = Mat::Zero(3, 3);
  const SelfPlayResult sp = self_play_game(Z, Z, json::array({json::object(), json::object()}), 20, ForecasterOptions{});
  CHECK(sp.ce_gap[0] == 0.0);
  CHECK(sp.ce_gap[1] == 0.0);
  CHECK(sp.joint.sum() == doctest::Approx(1.0));
}

TEST_CASE("rock-paper-scissors self-play keeps the equilibrium identity") {
  const Mat A = rock_paper_scissors();
  CHECK(A(0, 0) == 0.5);
  CHECK(A(1, 0) == 0.0);  // paper beats rock
  CHECK(A(0, 1) == 1.0);
  const int T = 200;
  ForecasterOptions o;
  o.evi.random_start = true;
  const SelfPlayResult sp = self_play_game(A, A.transpose(), json::array({json::object(), json::object()}), T, o);
  REQUIRE(sp.transcripts.size() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(sp.ce_gap[k] - sp.swap_regret[k] / T) <= 1e-9);
    CHECK(std::abs(swap_regret(sp.transcripts[static_cast<std::size_t>(k)]) - sp.swap_regret[k]) <= 1e-9 * T);
  }
  CHECK(ce_violation(sp.joint, A, true) == doctest::Approx(sp.ce_gap[0]));
}

TEST_CASE("sampled self-play records realized actions and loss columns") {
  const Mat A = rock_paper_scissors();
  const int T = 200;
  ForecasterOptions o;
  o.seed = 3;
  const SelfPlayResult sp = self_play_game(A, A.transpose(), json::array({json::object(), json::object()}), T, o, true);
  CHECK(sp.sampled);
  Mat counts = Mat::Zero(3, 3);
  for (int t = 0; t < T; ++t) {
    const Vec& a = sp.mixed[0][static_cast<std::size_t>(t)];
    const Vec& b = sp.mixed[1][static_cast<std::size_t>(t)];
    CHECK(a.sum() == 1.0);
    CHECK(a.maxCoeff() == 1.0);
    CHECK((sp.losses[0][static_cast<std::size_t>(t)] - A * b).cwiseAbs().maxCoeff() == 0.0);
    counts += a * b.transpose();
  }
  // Joint entries are counts of realized pairs.
  CHECK((sp.joint * T - counts).cwiseAbs().maxCoeff() <= 1e-9);
  for (int k = 0; k < 2; ++k) CHECK(std::abs(sp.ce_gap[k] - sp.swap_regret[k] / T) <= 1e-9);
  const SelfPlayResult again = self_play_game(A, A.transpose(), json::array({json::object(), json::object()}), T, o, true);
  CHECK((again.joint - sp.joint).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ce violation by enumeration on a two-action table") {
  Mat joint(2, 2), loss(2, 2);
  joint << 0.5, 0.0, 0.0, 0.5;
  loss << 1.0, 0.0, 0.0, 1.0;
  // Each row player's action costs 1 and swapping costs 0.
  CHECK(ce_violation(joint, loss, true) == doctest::Approx(1.0));
  CHECK(ce_violation(joint, loss, false) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ce_violation(Mat::Zero(2, 3), loss, true), ContractError);
}

TEST_CASE("svg with no series has axes and no polylines") {
  const std::string svg = render_svg("empty", {}, {});
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<line") != std::string::npos);
  CHECK(svg.find("<polyline") == std::string::npos);
  CHECK(parse_svg(svg).empty());
  const auto dir = temp_dir("svg_empty");
  const auto paths = emit_plots(Metrics{}, dir.string());
  REQUIRE(paths.size() == 1);
  CHECK(std::filesystem::path(paths[0]).filename() == "metrics.svg");
}

TEST_CASE("svg round trip recovers the data exactly") {
  std::vector<double> up, wiggle;
  for (int t = 1; t <= 50; ++t) {
    up.push_back(std::sqrt(static_cast<double>(t)) / 3.0);
    wiggle.push_back(std::sin(0.37 * t) * 1e-3 + 1.0 / 7.0);
  }
  const std::string svg = render_svg("a<b & c", {"mc:up", "mc:w\"q"}, {up, wiggle});
  const auto parsed = parse_svg(svg);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].first == "mc:up");
  CHECK(parsed[1].first == "mc:w\"q");
  for (std::size_t i = 0; i < up.size(); ++i) {
    CHECK(parsed[0].second[i].first == static_cast<double>(i + 1));
    CHECK(parsed[0].second[i].second == up[i]);
    CHECK(parsed[1].second[i].second == wiggle[i]);
  }
  for (std::size_t i = 1; i < up.size(); ++i) {
    CHECK(parsed[0].second[i].first > parsed[0].second[i - 1].first);
    CHECK(parsed[0].second[i].second >= parsed[0].second[i - 1].second);
  }
}

TEST_CASE("plots group series by prefix") {
  Metrics m;
  m.add("mc:a", {1, 2});
  m.add("mc:b", {0, 1});
  m.add("evi:sum", {0.1, 0.2});
  const auto dir = temp_dir("svg_groups");
  const auto paths = emit_plots(m, dir.string());
  CHECK(paths.size() == 2);
  CHECK(std::filesystem::exists(dir / "mc.svg"));
  CHECK(std::filesystem::exists(dir / "evi.svg"));
  CHECK(parse_svg(slurp(dir / "mc.svg")).size() == 2);
}

TEST_CASE("cumulative sums and metric lookup") {
  CHECK(cumulative({1, 2, 3}) == std::vector<double>{1, 3, 6});
  CHECK(cumulative({}).empty());
  Metrics m;
  m.add("x", {1, 2});
  CHECK(m.find("x") != nullptr);
  CHECK(m.find("y") == nullptr);
  CHECK(m.length() == 2);
}

TEST_CASE("config validation names the problem") {
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"horizan", 10}}), ContractError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"mode", "dance"}}), ContractError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"gamma", "often"}}), ContractError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"eps", "fast"}}), ContractError);

  auto invalid = [](json j) {
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    CHECK_THROWS_AS(c.validate(), ContractError);
  };
  invalid({{"horizon", -1}});
  invalid({{"delay", 0}});
  invalid({{"gamma", 1.5}});
  invalid({{"engine", "sgd"}});
  invalid({{"engine", "hedge"}, {"tests", {{"kind", "linear"}}}});
  invalid({{"engine", "ftrl"}, {"tests", {{"kind", "tables"}}}});
  invalid({{"engine", "k29"}});
  invalid({{"mode", "phi"}, {"deviations", {{"kind", "swap"}}}});
  invalid({{"mode", "omni"}, {"outcomes", {{"kind", "box"}, {"dim", 2}, {"lo", 0}, {"hi", 1}}}});
  invalid({{"mode", "self_play"}});

  const ExperimentConfig ok = hedge_config(10, {{"kind", "iid"}});
  CHECK_NOTHROW(ok.validate());
  const ExperimentConfig back = ExperimentConfig::from_json(ok.to_json());
  CHECK(back.to_json() == ok.to_json());
  CHECK(ExperimentConfig::from_json({{"horizon", 256}}).effective_gamma() == doctest::Approx(0.25));
}

TEST_CASE("unknown keys in sub-specs are rejected by their builders") {
  ExperimentConfig cfg = hedge_config(4, {{"kind", "iid"}, {"speed", 2}});
  CHECK_THROWS_AS(run_experiment(cfg), ContractError);
  cfg = hedge_config(4, {{"kind", "tidal"}});
  CHECK_THROWS_AS(run_experiment(cfg), ContractError);
}

TEST_CASE("sequence CSV names columns by role") {
  const auto dir = temp_dir("seq");
  std::filesystem::create_directories(dir);
  const auto path = dir / "seq.csv";
  {
    std::ofstream out(path);
    out << "x1,y1,y2\n0.5,1,0\n0.25,0,1\n";
  }
  FixedSequenceNature n = load_sequence_csv(path.string());
  CHECK(n.length() == 2);
  CHECK(n.context(1) == vec({0.5}));
  CHECK(n.outcome(2, n.context(2), Distribution{}) == vec({0, 1}));
  CHECK_THROWS(load_sequence_csv((dir / "missing.csv").string()));
}

TEST_CASE("modes parse from subcommand names") {
  CHECK(mode_from_string("evi-solve") == Mode::evi);
  CHECK(mode_from_string("phi-regret") == Mode::phi);
  CHECK(mode_from_string("omnipredict") == Mode::omni);
  CHECK(mode_from_string("self-play") == Mode::self_play);
  CHECK(to_string(Mode::self_play) == "self_play");
  CHECK_THROWS_AS(mode_from_string("play"), ContractError);
}

TEST_CASE("content hash is FNV-1a") {
  CHECK(content_hash("") == 0xcbf29ce484222325ULL);
  CHECK(content_hash("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}
