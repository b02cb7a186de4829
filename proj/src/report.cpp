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

// Ledgers that need more than one module, and everything written to disk.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "mcr/harness.hpp"
#include "mcr/json_util.hpp"
#include "mcr/rng.hpp"

namespace mcr {

using nlohmann::json;

namespace {

// Worst outcome value of a certificate by enumeration or sampling. For
// polyhedral bodies the result must equal cert.gap; for balls it must not
// exceed it.
struct CertificateCheck {
  double value = 0.0;
  bool exact = false;
};

CertificateCheck check_certificate(const EviCertificate& cert, const ConvexBody& body, int samples,
                                   std::mt19937_64& rng) {
  CertificateCheck out;
  out.value = -INFINITY;
  if (auto vs = body.vertices()) {
    out.exact = true;
    for (const Vec& v : *vs) out.value = std::max(out.value, cert.mean_operator.dot(v) - cert.mean_inner);
    return out;
  }
  const bool round = body.kind() == ConvexBody::Kind::euclidean_ball || body.kind() == ConvexBody::Kind::frobenius_ball;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int s = 0; s < samples; ++s) {
    Vec y;
    if (round) {
      // The maximum of a linear function sits on the sphere.
      Vec u(body.dim());
      for (int i = 0; i < body.dim(); ++i) u[i] = normal(rng);
      if (u.norm() == 0.0) continue;
      const Vec c = body.kind() == ConvexBody::Kind::euclidean_ball ? body.center() : Vec::Zero(body.dim());
      y = c + body.radius() * u / u.norm();
    } else {
      y = body.sample(rng);
    }
    out.value = std::max(out.value, cert.mean_operator.dot(y) - cert.mean_inner);
  }
  return out;
}

LedgerReport certificate_ledger(const Transcript& tr, const std::function<Operator(const ForecastRound&)>& op_at,
                                const std::function<void(const ForecastRound&)>& after, int samples, double tol,
                                std::uint64_t seed) {
  LedgerReport rep;
  rep.title = "evi certificates";
  auto rng = derive_stream(seed, 0, RngTag::audit);
  double worst_excess = -INFINITY, worst_exact = 0.0, worst_sample = -INFINITY;
  int worst_t = 0, met = 0;
  bool exact = true;
  for (const ForecastRound& r : tr.rounds) {
    const EviCertificate cert = certify_evi_detail(r.dist, op_at(r), tr.body);
    const double scale = 1.0 + cert.mean_operator.norm() * std::max(1.0, tr.body.outer_radius());
    const double excess = (cert.gap - r.eps_realized) / scale;
    if (excess > worst_excess) {
      worst_excess = excess;
      worst_t = r.t;
    }
    const CertificateCheck chk = check_certificate(cert, tr.body, samples, rng);
    exact = chk.exact;
    if (chk.exact) {
      worst_exact = std::max(worst_exact, std::abs(chk.value - cert.gap) / scale);
    } else {
      worst_sample = std::max(worst_sample, (chk.value - cert.gap) / scale);
    }
    met += r.met_target ? 1 : 0;
    if (after) after(r);
  }
  if (tr.rounds.empty()) return rep;
  rep.rows.push_back({"certificate <= eps_realized", worst_excess, tol, worst_excess <= tol,
                      {{"worst_round", worst_t}, {"met_target", met}, {"rounds", tr.horizon()}}});
  if (exact) {
    rep.rows.push_back({"certificate = vertex maximum", worst_exact, tol, worst_exact <= tol, json::object()});
  } else {
    rep.rows.push_back({"sampled maximum <= certificate", worst_sample, tol, worst_sample <= tol,
                        {{"samples_per_round", samples}}});
  }
  return rep;
}

}  // namespace

LedgerReport evi_certificate_ledger(const Transcript& tr, const ParamFamily& family, int samples, double tol,
                                    std::uint64_t seed) {
  return certificate_ledger(
      tr, [&](const ForecastRound& r) { return family.test(r.params, tr.body).at(r.x); }, nullptr, samples, tol, seed);
}

LedgerReport k29_certificate_ledger(const Transcript& tr, const MatrixKernel& kernel, int samples, double tol,
                                    std::uint64_t seed) {
  K29History history;
  // The operator closure reads `history`, which only grows after the check.
  return certificate_ledger(
      tr, [&](const ForecastRound& r) { return k29_operator(history, kernel, r.x); },
      [&](const ForecastRound& r) {
        if (!r.y) throw ProtocolError("k29 certificates: round " + std::to_string(r.t) + " is unresolved");
        history.append(r.x, r.dist, *r.y);
      },
      samples, tol, seed);
}

std::vector<RkhsTest> sample_rkhs_tests(const MatrixKernel& kernel, const ConvexBody& body, int count, int atoms,
                                        std::uint64_t seed, const std::vector<Context>& contexts) {
  require(count >= 0 && atoms >= 1, "rkhs tests: bad count");
  const int d = body.dim();
  std::vector<RkhsTest> out;
  for (int k = 0; k < count; ++k) {
    auto rng = derive_stream(seed, static_cast<std::uint64_t>(k), RngTag::grid);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Context> xs;
    std::vector<Vec> ps, ws;
    for (int j = 0; j < atoms; ++j) {
      xs.push_back(contexts.empty() ? Context() : contexts[static_cast<std::size_t>(j) % contexts.size()]);
      ps.push_back(body.sample(rng));
      Vec w(d);
      for (int i = 0; i < d; ++i) w[i] = normal(rng);
      ws.push_back(w);
    }
    double n2 = 0.0;
    for (int a = 0; a < atoms; ++a)
      for (int b = 0; b < atoms; ++b) n2 += ws[a].dot(kernel(xs[a], ps[a], xs[b], ps[b]) * ws[b]);
    if (!(n2 > 1e-300)) continue;
    const double s = 1.0 / std::sqrt(n2);
    for (Vec& w : ws) w *= s;
    TestFunction h;
    h.name = "rkhs" + std::to_string(k);
    h.eval = [kernel, xs, ps, ws](const Context& x, const Vec& p) {
      Vec v = Vec::Zero(p.size());
      for (std::size_t j = 0; j < xs.size(); ++j) v += kernel.apply(x, p, xs[j], ps[j], ws[j]);
      return v;
    };
    // Reproducing property: ‖h(z)‖ ≤ ‖h‖·√‖Γ(z,z)‖ ≤ √(op bound).
    h.norm_bound = std::sqrt(kernel.op_norm_bound());
    h.value_bound = value_bound_for(body, h.norm_bound);
    out.push_back({std::move(h), 1.0});
  }
  return out;
}

LedgerReport k29_bound_ledger(const Transcript& tr, const MatrixKernel& kernel, const std::vector<RkhsTest>& tests,
                              double tol) {
  LedgerReport rep;
  rep.title = "kernel forecaster bound";
  const double energy = kernel_residual_energy(tr, kernel);
  const double evi = evi_total_positive(tr);
  const double slack = tol * std::max(1.0, static_cast<double>(tr.horizon()));
  for (const RkhsTest& t : tests) {
    const double mc = mc_error(tr, t.test).total;
    const double rhs = t.norm * std::sqrt(energy + 2.0 * evi) + slack;
    rep.rows.push_back({"|mc-err| " + t.test.name, std::abs(mc), rhs, std::abs(mc) <= rhs,
                        {{"mc_err", mc}, {"energy", energy}, {"evi", evi}, {"norm", t.norm}}});
  }
  return rep;
}

// --- output --------------------------------------------------------------------------

std::uint64_t content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    static const std::pair<const char*, char> table[] = {{"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}};
    bool matched = false;
    for (const auto& [ent, ch] : table) {
      const std::size_t n = std::char_traits<char>::length(ent);
      if (s.compare(i, n, ent) == 0) {
        out += ch;
        i += n - 1;
        matched = true;
        break;
      }
    }
    if (!matched) out += '&';
  }
  return out;
}

}  // namespace

json write_outputs(const ExperimentResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  std::map<std::string, std::string> files;

  files["transcript.csv"] = result.transcript.to_csv();
  // The output directory is left out so identical runs hash identically
  // wherever they are written.
  json config = result.config.to_json();
  config.erase("out_dir");
  files["header.json"] = json{{"config", config}, {"transcript", result.transcript.header_json()}}.dump(2) + "\n";
  files["metrics.csv"] = result.metrics.to_csv();
  json ledgers = json::array();
  for (const LedgerReport& r : result.ledgers) ledgers.push_back(r.to_json());
  files["ledger.json"] = ledgers.dump(2) + "\n";
  for (const auto& [name, content] : result.tables) files[name] = content;
  for (const auto& [name, content] : files) write_file(root / name, content);

  json hashes = json::object();
  for (const auto& [name, content] : files) hashes[name] = hash_hex(content_hash(content));
  if (result.config.plots) {
    for (const std::string& p : emit_plots(result.metrics, dir))
      hashes[fs::path(p).filename().string()] = hash_hex(content_hash(read_file(p)));
  }
  json summary = result.summary;
  summary["files"] = hashes;
  write_file(root / "summary.json", summary.dump(2) + "\n");
  return summary;
}

std::string render_svg(const std::string& title, const std::vector<std::string>& names,
                       const std::vector<std::vector<double>>& series) {
  require(names.size() == series.size(), "svg: one name per series");
  constexpr double W = 720, H = 420, left = 70, right = 200, top = 40, bottom = 50;
  double xmin = 1, xmax = 1, ymin = 0, ymax = 0;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!std::isfinite(s[i])) continue;
      const double x = static_cast<double>(i + 1);
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = s[i];
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, s[i]);
      ymax = std::max(ymax, s[i]);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double sx = (W - left - right) / (xmax - xmin);
  const double sy = (H - top - bottom) / (ymax - ymin);
  const double tx = left - xmin * sx;
  const double ty = (H - bottom) + ymin * sy;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\">\n";
  o << "<title>" << xml_escape(title) << "</title>\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
    << "\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom << "\"/>\n";
  o << "</g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<text x=\"" << left << "\" y=\"" << H - bottom + 16 << "\">" << format_double(xmin) << "</text>\n";
  o << "<text x=\"" << W - right << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"end\">" << format_double(xmax)
    << "</text>\n";
  o << "<text x=\"" << left - 4 << "\" y=\"" << H - bottom << "\" text-anchor=\"end\">" << format_double(ymin)
    << "</text>\n";
  o << "<text x=\"" << left - 4 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << format_double(ymax)
    << "</text>\n";
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">t</text>\n";
  o << "<text x=\"" << left << "\" y=\"" << top - 14 << "\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    o << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 14 * (k + 1) << "\" fill=\"" << colors[k % 8] << "\">"
      << xml_escape(names[k]) << "</text>\n";
  }
  o << "</g>\n";
  // Points are raw (t, value); the group transform maps them to the canvas.
  o << "<g transform=\"matrix(" << format_double(sx) << " 0 0 " << format_double(-sy) << " " << format_double(tx) << " "
    << format_double(ty) << ")\">\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    o << "<polyline data-series=\"" << xml_escape(names[k]) << "\" fill=\"none\" stroke=\"" << colors[k % 8]
      << "\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < series[k].size(); ++i) {
      if (!std::isfinite(series[k][i])) continue;
      if (!first) o << ' ';
      first = false;
      o << (i + 1) << ',' << format_double(series[k][i]);
    }
    o << "\"/>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> parse_svg(const std::string& svg) {
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> out;
  const std::string tag = "<polyline data-series=\"";
  std::size_t pos = 0;
  while ((pos = svg.find(tag, pos)) != std::string::npos) {
    pos += tag.size();
    const std::size_t name_end = svg.find('"', pos);
    require(name_end != std::string::npos, "svg: unterminated series name");
    std::string name = xml_unescape(svg.substr(pos, name_end - pos));
    const std::size_t pts = svg.find("points=\"", name_end);
    require(pts != std::string::npos, "svg: polyline without points");
    const std::size_t pts_end = svg.find('"', pts + 8);
    std::istringstream ss(svg.substr(pts + 8, pts_end - pts - 8));
    std::vector<std::pair<double, double>> points;
    std::string pair;
    while (ss >> pair) {
      const std::size_t comma = pair.find(',');
      require(comma != std::string::npos, "svg: malformed point");
      points.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    out.emplace_back(std::move(name), std::move(points));
    pos = pts_end;
  }
  return out;
}

std::vector<std::string> emit_plots(const Metrics& metrics, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  constexpr std::size_t kPerPlot = 8;
  std::vector<std::string> groups;
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::vector<double>>>> by_group;
  for (std::size_t i = 0; i < metrics.names.size(); ++i) {
    const std::string& n = metrics.names[i];
    const std::size_t colon = n.find(':');
    const std::string group = colon == std::string::npos ? "metrics" : n.substr(0, colon);
    const std::string label = colon == std::string::npos ? n : n.substr(colon + 1);
    if (!by_group.count(group)) groups.push_back(group);
    auto& g = by_group[group];
    if (g.first.size() >= kPerPlot) continue;
    g.first.push_back(label);
    g.second.push_back(metrics.columns[i]);
  }
  std::vector<std::string> paths;
  if (groups.empty()) {
    const std::string p = (fs::path(dir) / "metrics.svg").string();
    write_file(p, render_svg("metrics", {}, {}));
    paths.push_back(p);
    return paths;
  }
  for (const std::string& g : groups) {
    const std::string p = (fs::path(dir) / (g + ".svg")).string();
    write_file(p, render_svg(g, by_group[g].first, by_group[g].second));
    paths.push_back(p);
  }
  return paths;
}

}  // namespace mcr
