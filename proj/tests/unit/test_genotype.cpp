#include <set>

#include "doctest.h"
#include "rawpc/error.hpp"
#include "rawpc/genotype.hpp"
#include "rawpc/rng.hpp"
#include "support/oracles.hpp"

using namespace rawpc;

namespace {

std::vector<double> random_table(Rng& rng) {
  std::vector<double> a(kCellEdges * kNumOps);
  for (double& v : a) v = rng.normal();
  return a;
}

}  // namespace

TEST_CASE("edge indices enumerate the cell DAG") {
  std::set<std::size_t> seen;
  for (std::size_t m = 0; m < kIntermediateNodes; ++m)
    for (std::size_t i = 0; i < m + 2; ++i) seen.insert(edge_index(m, i));
  CHECK(seen.size() == kCellEdges);
  CHECK(*seen.rbegin() == kCellEdges - 1);
  CHECK(edge_index(0, 0) == 0);
  CHECK(edge_index(1, 0) == 2);
  CHECK(edge_index(3, 4) == 13);
}

TEST_CASE("derivation matches the exhaustive oracle and is shift invariant") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    auto a = random_table(rng);
    const auto got = derive_cell(a);
    CHECK(got == testing::brute_force_derive(a));
    for (const auto& node : got.nodes) {
      CHECK(node[0].input < node[1].input);
      CHECK(node[0].op != OpKind::none);
      CHECK(node[1].op != OpKind::none);
    }
    CHECK_NOTHROW(validate(got));
    const double c = rng.uniform(-5.0, 5.0);
    for (double& v : a) v += c;
    CHECK(derive_cell(a) == got);
  }
}

TEST_CASE("a dominant none column is never chosen") {
  std::vector<double> a(kCellEdges * kNumOps, 0.0);
  for (std::size_t e = 0; e < kCellEdges; ++e) {
    a[e * kNumOps] = 100.0;
    a[e * kNumOps + 2] = 1.0;
  }
  const auto g = derive_cell(a);
  for (const auto& node : g.nodes) {
    CHECK(node[0].op == OpKind::conv3);
    CHECK(node[1].op == OpKind::conv3);
  }
}

TEST_CASE("ties go to lower input, then lower op") {
  const std::vector<double> a(kCellEdges * kNumOps, 0.5);
  const auto g = derive_cell(a);
  for (const auto& node : g.nodes) {
    CHECK(node[0] == GenotypeEdge{0, OpKind::skip});
    CHECK(node[1] == GenotypeEdge{1, OpKind::skip});
  }
}

TEST_CASE("derive_genotype rejects non-finite tables") {
  std::vector<double> a(kCellEdges * kNumOps, 0.0), b = a;
  b[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(derive_genotype(a, b, 2), NumericError);
}

TEST_CASE("genotype text round trip") {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_table(rng), b = random_table(rng);
    const Genotype g = derive_genotype(a, b, 1 + rng.uniform_int(4));
    const auto text = format_genotype(g);
    CHECK(parse_genotype(text) == g);
    CHECK(format_genotype(parse_genotype(text)) == text);
  }
  const auto ref = format_genotype(reference_genotype());
  CHECK(ref.rfind("# rawpc genotype\nversion 1\n", 0) == 0);
  CHECK(parse_genotype(ref) == reference_genotype());
}

TEST_CASE("malformed genotype files are rejected") {
  auto text = format_genotype(reference_genotype());
  CHECK_THROWS_AS(parse_genotype("version 2\n"), ConfigError);
  auto bad = text;
  bad.replace(bad.find("dilconv3"), 8, "conv7");
  CHECK_THROWS_AS(parse_genotype(bad), ConfigError);
  auto self_loop = text;
  self_loop.replace(self_loop.find("input=1"), 7, "input=3");
  CHECK_THROWS_AS(parse_genotype(self_loop), ConfigError);
  CHECK_THROWS_AS(parse_genotype(text.substr(0, text.rfind("expand node6"))), ConfigError);
}

TEST_CASE("op vocabulary") {
  for (std::size_t o = 0; o < kNumOps; ++o) CHECK(op_from_name(op_name(static_cast<OpKind>(o))) == static_cast<OpKind>(o));
  CHECK_THROWS_AS(op_from_name("sepconv3"), ConfigError);
}
