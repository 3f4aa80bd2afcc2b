#include "rawpc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "rawpc/data_io.hpp"
#include "rawpc/error.hpp"

namespace rawpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double interpolate_threshold(double a, double b, double t) {
  if (std::isinf(a) && std::isinf(b)) return t < 0.5 ? a : b;
  if (std::isinf(a)) return b;
  if (std::isinf(b)) return a;
  return a + t * (b - a);
}

void split_scores(std::span<const ScoreRecord> records, std::vector<double>& bona, std::vector<double>& spoof) {
  for (const auto& r : records) (r.label == 0 ? bona : spoof).push_back(r.score);
}

}  // namespace

std::vector<OperatingPoint> operating_points(std::span<const double> targets, std::span<const double> nontargets) {
  if (targets.empty() || nontargets.empty()) throw DataError("score lists must be non-empty");
  std::vector<double> t(targets.begin(), targets.end()), n(nontargets.begin(), nontargets.end());
  for (double v : t)
    if (!std::isfinite(v)) throw NumericError("non-finite score");
  for (double v : n)
    if (!std::isfinite(v)) throw NumericError("non-finite score");
  std::sort(t.begin(), t.end());
  std::sort(n.begin(), n.end());
  std::vector<double> all(t);
  all.insert(all.end(), n.begin(), n.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const double nt = static_cast<double>(t.size()), nn = static_cast<double>(n.size());
  std::vector<OperatingPoint> pts;
  pts.reserve(all.size() + 2);
  pts.push_back({-kInf, 0.0, 1.0});
  for (double s : all) {
    const auto miss = std::lower_bound(t.begin(), t.end(), s) - t.begin();
    const auto below = std::lower_bound(n.begin(), n.end(), s) - n.begin();
    pts.push_back({s, static_cast<double>(miss) / nt, static_cast<double>(n.size() - below) / nn});
  }
  pts.push_back({kInf, 1.0, 0.0});
  return pts;
}

EerResult compute_eer(std::span<const double> targets, std::span<const double> nontargets) {
  const auto pts = operating_points(targets, nontargets);
  // Lower convex hull; points arrive with p_miss ascending and p_fa descending.
  std::vector<OperatingPoint> hull;
  auto cross = [](const OperatingPoint& o, const OperatingPoint& a, const OperatingPoint& b) {
    return (a.p_miss - o.p_miss) * (b.p_fa - o.p_fa) - (a.p_fa - o.p_fa) * (b.p_miss - o.p_miss);
  };
  for (const auto& p : pts) {
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), p) <= 0.0) hull.pop_back();
    hull.push_back(p);
  }
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    const double d0 = hull[i].p_miss - hull[i].p_fa;
    const double d1 = hull[i + 1].p_miss - hull[i + 1].p_fa;
    if (d0 <= 0.0 && d1 >= 0.0) {
      const double t = d0 == d1 ? 0.0 : d0 / (d0 - d1);
      const double eer = hull[i].p_miss + t * (hull[i + 1].p_miss - hull[i].p_miss);
      return {eer, interpolate_threshold(hull[i].threshold, hull[i + 1].threshold, t)};
    }
  }
  throw NumericError("compute_eer: no crossing found");
}

void TdcfCosts::validate() const {
  for (double p : {p_spoof, p_tar, p_non})
    if (!(p > 0.0)) throw ConfigError("t-DCF priors must be positive");
  if (std::abs(p_spoof + p_tar + p_non - 1.0) > 1e-9) throw ConfigError("t-DCF priors must sum to 1");
  for (double c : {c_miss_asv, c_fa_asv, c_miss_cm, c_fa_cm})
    if (!(c > 0.0)) throw ConfigError("t-DCF costs must be positive");
  for (double r : {p_miss_asv, p_fa_asv, p_miss_spoof_asv})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ASV error rates must lie in [0, 1]");
  if (!(c1() > 0.0) || !(c2() > 0.0)) throw ConfigError("t-DCF weights C1 and C2 must be positive");
}

double TdcfCosts::c1() const { return p_tar * (c_miss_cm - c_miss_asv * p_miss_asv) - p_non * c_fa_asv * p_fa_asv; }
double TdcfCosts::c2() const { return c_fa_cm * p_spoof * (1.0 - p_miss_spoof_asv); }

TdcfCosts parse_tdcf_costs(std::string_view text) {
  TdcfCosts c;
  const std::map<std::string, double*> fields{
      {"p_spoof", &c.p_spoof},       {"p_tar", &c.p_tar},       {"p_non", &c.p_non},
      {"c_miss_asv", &c.c_miss_asv}, {"c_fa_asv", &c.c_fa_asv}, {"c_miss_cm", &c.c_miss_cm},
      {"c_fa_cm", &c.c_fa_cm},       {"p_miss_asv", &c.p_miss_asv}, {"p_fa_asv", &c.p_fa_asv},
      {"p_miss_spoof_asv", &c.p_miss_spoof_asv}};
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    std::istringstream probe(line);
    std::string any;
    if (!(probe >> any)) continue;
    if (eq == std::string::npos) throw ConfigError("t-DCF config line " + std::to_string(lineno) + ": expected key = value");
    std::istringstream ks(line.substr(0, eq)), vs(line.substr(eq + 1));
    std::string key;
    double value = 0.0;
    ks >> key;
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("t-DCF config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!(vs >> value)) throw ConfigError("t-DCF config line " + std::to_string(lineno) + ": bad value");
    *it->second = value;
  }
  c.validate();
  return c;
}

TdcfCosts read_tdcf_costs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read t-DCF config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tdcf_costs(ss.str());
}

TdcfResult min_normalized_tdcf(std::span<const double> bonafide, std::span<const double> spoof, double c1,
                               double c2) {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("t-DCF weights C1 and C2 must be positive");
  const double norm = std::min(c1, c2);
  TdcfResult best{kInf, 0.0};
  for (const auto& p : operating_points(bonafide, spoof)) {
    const double v = (c1 * p.p_miss + c2 * p.p_fa) / norm;
    if (v < best.min_tdcf) best = {v, p.threshold};
  }
  return best;
}

TdcfResult compute_min_tdcf(std::span<const ScoreRecord> records, const TdcfCosts& costs) {
  costs.validate();
  std::vector<double> bona, spoof;
  split_scores(records, bona, spoof);
  if (bona.empty() || spoof.empty()) throw DataError("t-DCF needs both bona fide and spoof scores");
  return min_normalized_tdcf(bona, spoof, costs.c1(), costs.c2());
}

AttackReport per_attack_report(std::span<const ScoreRecord> records) {
  AttackReport rep;
  std::vector<double> bona, spoof;
  std::map<std::string, std::vector<double>> by_attack;
  for (const auto& r : records) {
    if (r.label == 0) {
      bona.push_back(r.score);
    } else {
      spoof.push_back(r.score);
      by_attack[r.attack_id].push_back(r.score);
    }
  }
  if (bona.empty() || spoof.empty()) throw DataError("report needs both bona fide and spoof scores");
  rep.n_bonafide = bona.size();
  for (const auto& [id, scores] : by_attack) {
    const auto e = compute_eer(bona, scores);
    rep.attacks.push_back({id, scores.size(), e.eer, e.threshold});
  }
  const auto pooled = compute_eer(bona, spoof);
  rep.pooled = {"pooled", spoof.size(), pooled.eer, pooled.threshold};
  rep.worst = *std::max_element(rep.attacks.begin(), rep.attacks.end(),
                                [](const AttackRow& a, const AttackRow& b) { return a.eer < b.eer; });
  return rep;
}

std::string format_report(const AttackReport& rep) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %10s %12s\n", "attack", "n_spoof", "EER(%)", "threshold");
  os << line;
  auto row = [&](const std::string& name, const AttackRow& r) {
    std::snprintf(line, sizeof line, "%-12s %8zu %10.4f %12.6g\n", name.c_str(), r.n_spoof, 100.0 * r.eer, r.threshold);
    os << line;
  };
  for (const auto& r : rep.attacks) row(r.attack_id, r);
  row("pooled", rep.pooled);
  row("worst:" + rep.worst.attack_id, rep.worst);
  std::snprintf(line, sizeof line, "bona fide trials: %zu\n", rep.n_bonafide);
  os << line;
  if (rep.tdcf) {
    std::snprintf(line, sizeof line, "min t-DCF: %.6f (threshold %.6g)\n", rep.tdcf->min_tdcf, rep.tdcf->threshold);
    os << line;
  }
  return os.str();
}

std::string format_report_tsv(const AttackReport& rep) {
  std::ostringstream os;
  char line[160];
  os << "row\tattack\tn_spoof\teer\tthreshold\n";
  auto row = [&](const char* kind, const AttackRow& r) {
    std::snprintf(line, sizeof line, "%s\t%s\t%zu\t%.10g\t%.10g\n", kind, r.attack_id.c_str(), r.n_spoof, r.eer,
                  r.threshold);
    os << line;
  };
  for (const auto& r : rep.attacks) row("attack", r);
  row("pooled", rep.pooled);
  row("worst", rep.worst);
  if (rep.tdcf) {
    std::snprintf(line, sizeof line, "min_tdcf\t-\t-\t%.10g\t%.10g\n", rep.tdcf->min_tdcf, rep.tdcf->threshold);
    os << line;
  }
  return os.str();
}

std::string format_scores(std::span<const ScoreRecord> records) {
  std::string s;
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.6g", r.score);
    s += r.utterance_id + " " + r.attack_id + " " + std::string(key_name(r.label)) + " " + buf + "\n";
  }
  return s;
}

std::vector<ScoreRecord> parse_scores(std::string_view text) {
  std::vector<ScoreRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string tok; ls >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    const std::string where = "score line " + std::to_string(lineno) + ": ";
    if (f.size() != 4) throw DataError(where + "expected 4 fields");
    ScoreRecord r;
    r.utterance_id = f[0];
    r.attack_id = f[1];
    try {
      r.label = key_from_name(f[2]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    std::size_t used = 0;
    try {
      r.score = std::stod(f[3], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f[3].size() || !std::isfinite(r.score)) throw DataError(where + "bad score '" + f[3] + "'");
    out.push_back(std::move(r));
  }
  return out;
}

void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_scores(records);
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scores(ss.str());
}

}  // namespace rawpc
