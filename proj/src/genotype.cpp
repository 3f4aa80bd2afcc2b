#include "rawpc/genotype.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rawpc/error.hpp"

namespace rawpc {

namespace {

constexpr std::array<std::string_view, kNumOps> kOpNames = {"none",     "skip",     "conv3",    "conv5",
                                                            "dilconv3", "dilconv5", "maxpool3", "avgpool3"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view op_name(OpKind op) { return kOpNames.at(static_cast<std::size_t>(op)); }

OpKind op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumOps; ++i)
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  throw ConfigError("unknown operation '" + std::string(name) + "'");
}

std::size_t edge_index(std::size_t node, std::size_t input) {
  if (node >= kIntermediateNodes || input > node + 1) throw ShapeError("edge_index: no such edge");
  // Node m has m + 2 incoming edges; offsets 0, 2, 5, 9.
  return node * (node + 3) / 2 + input;
}

std::string_view cell_kind_name(CellKind kind) { return kind == CellKind::normal ? "normal" : "expand"; }

void validate(const CellGenotype& cell) {
  for (std::size_t m = 0; m < kIntermediateNodes; ++m) {
    const auto& pair = cell.nodes[m];
    for (const auto& e : pair) {
      if (e.input > m + 1) {
        throw ConfigError("genotype: node " + std::to_string(m + 3) + " cannot read from node " +
                          std::to_string(e.input + 1));
      }
      if (e.op == OpKind::none) throw ConfigError("genotype: 'none' is not a valid retained operation");
    }
    if (pair[0].input == pair[1].input) {
      throw ConfigError("genotype: node " + std::to_string(m + 3) + " repeats input " +
                        std::to_string(pair[0].input + 1));
    }
  }
}

CellGenotype derive_cell(std::span<const double> alpha) {
  if (alpha.size() != kCellEdges * kNumOps) {
    throw ShapeError("derive_cell: expected a 14x8 table, got " + std::to_string(alpha.size()) + " values");
  }
  CellGenotype cell;
  for (std::size_t m = 0; m < kIntermediateNodes; ++m) {
    struct Candidate {
      std::size_t input;
      OpKind op;
      double strength;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i <= m + 1; ++i) {
      const double* row = alpha.data() + edge_index(m, i) * kNumOps;
      std::size_t best = 1;
      for (std::size_t o = 2; o < kNumOps; ++o)
        if (row[o] > row[best]) best = o;
      cands.push_back({i, static_cast<OpKind>(best), row[best]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.strength > b.strength; });
    std::array<GenotypeEdge, 2> pair{GenotypeEdge{cands[0].input, cands[0].op},
                                     GenotypeEdge{cands[1].input, cands[1].op}};
    if (pair[1].input < pair[0].input) std::swap(pair[0], pair[1]);
    cell.nodes[m] = pair;
  }
  return cell;
}

Genotype derive_genotype(std::span<const double> alpha_normal, std::span<const double> alpha_expand,
                         std::size_t k_c) {
  for (double v : alpha_normal)
    if (!std::isfinite(v)) throw NumericError("derive_genotype: non-finite architecture weight");
  for (double v : alpha_expand)
    if (!std::isfinite(v)) throw NumericError("derive_genotype: non-finite architecture weight");
  Genotype g;
  g.normal = derive_cell(alpha_normal);
  g.expand = derive_cell(alpha_expand);
  g.k_c = k_c;
  return g;
}

std::string format_genotype(const Genotype& g) {
  std::ostringstream os;
  os << "# rawpc genotype\n";
  os << "version " << kOpVocabularyVersion << "\n";
  os << "nodes " << kCellNodes << "\n";
  os << "k_c " << g.k_c << "\n";
  os << "ops ";
  for (std::size_t i = 0; i < kNumOps; ++i) os << (i ? "," : "") << kOpNames[i];
  os << "\n";
  for (CellKind kind : {CellKind::normal, CellKind::expand}) {
    const auto& cell = g.cell(kind);
    for (std::size_t m = 0; m < kIntermediateNodes; ++m) {
      os << cell_kind_name(kind) << " node" << (m + 3) << ":";
      for (std::size_t k = 0; k < 2; ++k) {
        const auto& e = cell.nodes[m][k];
        os << (k ? ", " : " ") << "(input=" << (e.input + 1) << ", " << op_name(e.op) << ")";
      }
      os << "\n";
    }
  }
  return os.str();
}

Genotype parse_genotype(std::string_view text) {
  Genotype g;
  std::array<std::array<bool, kIntermediateNodes>, 2> seen{};
  bool have_version = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError("genotype line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "version") {
      int v = 0;
      if (!(ls >> v) || v != kOpVocabularyVersion) fail("unsupported vocabulary version");
      have_version = true;
    } else if (head == "nodes") {
      std::size_t n = 0;
      if (!(ls >> n) || n != kCellNodes) fail("only 7-node cells are supported");
    } else if (head == "k_c") {
      if (!(ls >> g.k_c) || g.k_c == 0) fail("invalid k_c");
    } else if (head == "ops") {
      std::string list;
      ls >> list;
      std::string expected;
      for (std::size_t i = 0; i < kNumOps; ++i) expected += (i ? "," : "") + std::string(kOpNames[i]);
      if (list != expected) fail("operation vocabulary mismatch");
    } else if (head == "normal" || head == "expand") {
      const int kind = head == "normal" ? 0 : 1;
      std::string node_tok;
      ls >> node_tok;
      if (node_tok.size() < 6 || node_tok.rfind("node", 0) != 0 || node_tok.back() != ':') fail("expected 'nodeN:'");
      std::size_t node = 0;
      try {
        node = std::stoul(node_tok.substr(4, node_tok.size() - 5));
      } catch (const std::exception&) {
        fail("bad node number");
      }
      if (node < 3 || node > 2 + kIntermediateNodes) fail("node number out of range");
      std::string rest;
      std::getline(ls, rest);
      std::array<GenotypeEdge, 2> pair{};
      std::size_t count = 0, pos = 0;
      while (true) {
        const auto open = rest.find('(', pos);
        if (open == std::string::npos) break;
        const auto close = rest.find(')', open);
        if (close == std::string::npos) fail("unbalanced parenthesis");
        const std::string body = rest.substr(open + 1, close - open - 1);
        const auto comma = body.find(',');
        if (comma == std::string::npos) fail("expected '(input=I, op)'");
        const std::string lhs = trim(body.substr(0, comma));
        const std::string op = trim(body.substr(comma + 1));
        if (lhs.rfind("input=", 0) != 0) fail("expected 'input='");
        std::size_t input = 0;
        try {
          input = std::stoul(lhs.substr(6));
        } catch (const std::exception&) {
          fail("bad input number");
        }
        if (count >= 2) fail("more than two inputs");
        if (input < 1) fail("input numbers start at 1");
        try {
          pair[count++] = GenotypeEdge{input - 1, op_from_name(op)};
        } catch (const ConfigError& e) {
          fail(e.what());
        }
        pos = close + 1;
      }
      if (count != 2) fail("expected exactly two inputs");
      if (seen[kind][node - 3]) fail("duplicate node");
      seen[kind][node - 3] = true;
      (kind == 0 ? g.normal : g.expand).nodes[node - 3] = pair;
    } else {
      fail("unknown record '" + head + "'");
    }
  }
  if (!have_version) throw ConfigError("genotype: missing version header");
  for (const auto& kind : seen)
    for (bool s : kind)
      if (!s) throw ConfigError("genotype: missing node record");
  validate(g.normal);
  validate(g.expand);
  return g;
}

void write_genotype(const std::filesystem::path& path, const Genotype& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write genotype file " + path.string());
  out << format_genotype(g);
}

Genotype read_genotype(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read genotype file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_genotype(ss.str());
}

Genotype reference_genotype() {
  using O = OpKind;
  Genotype g;
  g.normal.nodes = {{
      {GenotypeEdge{0, O::dilconv3}, GenotypeEdge{1, O::dilconv3}},
      {GenotypeEdge{0, O::skip}, GenotypeEdge{2, O::dilconv3}},
      {GenotypeEdge{1, O::maxpool3}, GenotypeEdge{3, O::dilconv3}},
      {GenotypeEdge{2, O::skip}, GenotypeEdge{4, O::avgpool3}},
  }};
  g.expand.nodes = {{
      {GenotypeEdge{0, O::dilconv5}, GenotypeEdge{1, O::dilconv3}},
      {GenotypeEdge{1, O::skip}, GenotypeEdge{2, O::dilconv3}},
      {GenotypeEdge{2, O::maxpool3}, GenotypeEdge{3, O::skip}},
      {GenotypeEdge{3, O::avgpool3}, GenotypeEdge{4, O::skip}},
  }};
  g.k_c = 2;
  return g;
}

}  // namespace rawpc
