#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hcmgan/data.hpp"
#include "hcmgan/hctree.hpp"
#include "json.hpp"

namespace hcmgan::eval {

/// counts[r][c]: examples with the r-th distinct cluster id and the c-th
/// distinct class id (both sorted ascending).
struct ContingencyTable {
  std::vector<int> clusters;
  std::vector<int> classes;
  std::vector<std::vector<long>> counts;
  long n = 0;
};

ContingencyTable contingency(std::span<const int> pred, std::span<const int> labels);

// Maximum-weight perfect matching on a square matrix; result[row] = column.
std::vector<std::size_t> max_weight_matching(const std::vector<std::vector<double>>& weights);

// Fraction matched under the best one-to-one cluster/class assignment.
double acc(std::span<const int> pred, std::span<const int> labels);
// Mean per-class recall under the same assignment.
double acc_macro(std::span<const int> pred, std::span<const int> labels);
// I(pred; labels) / sqrt(H(pred) H(labels)); zero if either side is constant.
double nmi(std::span<const int> pred, std::span<const int> labels);

struct ClassMass {
  int label;
  double mass;
};

// Σ_i s_i · 1(label_i = c) per class present in `labels`, heaviest first.
std::vector<ClassMass> class_mass(const split::MembershipVector& s, std::span<const int> labels);

struct LeafSummary {
  int leaf = 0;
  std::size_t size = 0;  // hard-assigned examples
  double mass = 0;
  int majority_class = -1;
  double purity = 0;  // majority share of the hard-assigned examples
};

struct Metrics {
  double acc = 0;
  double acc_macro = 0;
  double nmi = 0;
  std::size_t n = 0;
  std::size_t c_leaves = 0;
  std::vector<LeafSummary> per_leaf;
};

Metrics compute_metrics(const tree::ClusterTree& t, std::span<const int> labels);
nlohmann::json to_json(const Metrics& m);

// Binary PGM (P5) of a rows × cols grid of tiles; tiles are values in
// [-1, 1] of shape tile_h × tile_w, each pixel repeated `scale` times.
void write_pgm_grid(const std::filesystem::path& path, const std::vector<std::vector<double>>& tiles,
                    std::size_t tile_h, std::size_t tile_w, std::size_t rows, std::size_t cols, std::size_t scale);

/// Per-node 5×5 grids of examples drawn from P_{s_k}, class-mass keys
/// (when labelled), tree.dot and metrics.json.
void render_reports(const tree::ClusterTree& t, const data::Dataset& ds, const std::filesystem::path& out_dir,
                    std::uint64_t seed);

}  // namespace hcmgan::eval
