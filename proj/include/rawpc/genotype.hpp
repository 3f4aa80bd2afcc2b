#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rawpc {

/// Candidate operations. The enumerator order is the architecture-weight
/// column order and part of the genotype file format (vocabulary version 1).
enum class OpKind : int { none = 0, skip, conv3, conv5, dilconv3, dilconv5, maxpool3, avgpool3 };

inline constexpr std::size_t kNumOps = 8;
inline constexpr int kOpVocabularyVersion = 1;
/// Cell nodes: 2 inputs, 4 intermediates, 1 output.
inline constexpr std::size_t kCellNodes = 7;
inline constexpr std::size_t kIntermediateNodes = 4;
/// Searchable edges per cell: 2 + 3 + 4 + 5.
inline constexpr std::size_t kCellEdges = 14;

std::string_view op_name(OpKind op);
OpKind op_from_name(std::string_view name);

/// Index of the edge feeding intermediate node `node` (0-based among
/// intermediates) from state `input` (0 and 1 are the cell inputs).
std::size_t edge_index(std::size_t node, std::size_t input);

enum class CellKind { normal, expand };
std::string_view cell_kind_name(CellKind kind);

struct GenotypeEdge {
  std::size_t input = 0;  ///< 0-based state index; printed 1-based
  OpKind op = OpKind::skip;
  bool operator==(const GenotypeEdge&) const = default;
};

/// Two retained (input, op) pairs per intermediate node, inputs ascending.
struct CellGenotype {
  std::array<std::array<GenotypeEdge, 2>, kIntermediateNodes> nodes{};
  bool operator==(const CellGenotype&) const = default;
};

struct Genotype {
  CellGenotype normal;
  CellGenotype expand;
  std::size_t k_c = 2;
  bool operator==(const Genotype&) const = default;

  const CellGenotype& cell(CellKind kind) const { return kind == CellKind::normal ? normal : expand; }
};

/// Throws ConfigError unless every node has two distinct, earlier inputs and no `none` op.
void validate(const CellGenotype& cell);

/// Discretises one [14 x 8] architecture-weight table (row-major): each edge
/// keeps its strongest non-none op; each node keeps the two edges whose kept
/// op weighs most. Ties go to the lower op index, then the lower input index.
CellGenotype derive_cell(std::span<const double> alpha);
Genotype derive_genotype(std::span<const double> alpha_normal, std::span<const double> alpha_expand,
                         std::size_t k_c);

/// Text form:
///   # rawpc genotype
///   version 1
///   nodes 7
///   k_c 2
///   ops none,skip,conv3,conv5,dilconv3,dilconv5,maxpool3,avgpool3
///   normal node3: (input=1, conv5), (input=2, dilconv3)
///   ...
///   expand node6: (input=3, skip), (input=5, dilconv5)
/// Node and input numbers are 1-based (inputs 1-2 are the cell inputs).
std::string format_genotype(const Genotype& g);
Genotype parse_genotype(std::string_view text);
void write_genotype(const std::filesystem::path& path, const Genotype& g);
Genotype read_genotype(const std::filesystem::path& path);

/// Genotype used when a parameter count is requested without a searched
/// architecture: dilated convolutions dominate, with skip and pooling edges.
Genotype reference_genotype();

}  // namespace rawpc
