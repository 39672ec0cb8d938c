#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hcmgan/split_engine.hpp"
#include "json.hpp"

namespace hcmgan::tree {

using split::MembershipVector;

/// What a split did. trajectory[t] is the left child's vector after
/// refinement t (t = 0 is the raw split); the right child is the parent
/// minus it.
struct SplitMeta {
  int refinements = 0;
  int epochs = 0;
  std::uint64_t raw_seed = 0;
  std::vector<std::uint64_t> refinement_seeds;
  std::vector<std::pair<double, double>> mass_trace;
  std::vector<std::vector<double>> trajectory;
  // Loss curve and final checkpoint of each phase, in trajectory order.
  std::vector<std::vector<split::LossRecord>> losses;
  std::vector<std::vector<std::uint8_t>> checkpoints;
};

struct TreeNode {
  int id = 0;
  MembershipVector membership;
  std::optional<int> parent;
  std::optional<std::pair<int, int>> children;
  std::optional<SplitMeta> meta;

  bool is_leaf() const { return !children.has_value(); }
  double total_mass() const { return membership.total_mass(); }
};

struct ClusterTree {
  std::vector<TreeNode> nodes;  // indexed by id; root is 0
  std::size_t n = 0;

  const TreeNode& node(int id) const;
  TreeNode& node(int id);
  std::vector<int> leaves() const;  // ascending id
  std::size_t leaf_count() const;
};

ClusterTree init_tree(std::size_t n);

// Leaf with the largest total mass, ties to the smallest id.
int select_leaf(const ClusterTree& tree);

// Seeds for one node's split phases, derived from a run-level seed.
std::uint64_t raw_split_seed(std::uint64_t run_seed, int node_id);
std::uint64_t refinement_seed(std::uint64_t run_seed, int node_id, int t);

// Raw split followed by cfg.refinements refinement rounds. cfg.seed is the
// run-level seed; per-phase seeds are derived from it and the node id.
std::pair<int, int> split_node(ClusterTree& tree, int node_id, const Tensor& x, const split::SplitConfig& cfg);

using SplitCallback = std::function<void(const ClusterTree&, int node_id)>;

// Splits the heaviest leaf until there are `leaves` leaves. The callback
// runs after each split.
void grow_until(ClusterTree& tree, std::size_t leaves, const Tensor& x, const split::SplitConfig& cfg,
                const SplitCallback& on_split = {});

// Leaf id of largest mass per example, ties to the smallest id.
std::vector<int> hard_assign(const ClusterTree& tree);

// Max over examples of |Σ_leaves s - 1|.
double leaf_mass_defect(const ClusterTree& tree);

std::string membership_path(int node_id);  // relative to a run directory
void write_membership_csv(const std::filesystem::path& path, const MembershipVector& s);
MembershipVector read_membership_csv(const std::filesystem::path& path, int node_id);

nlohmann::json to_json(const ClusterTree& tree);
// Structure from JSON; membership vectors are read from `run_dir`.
ClusterTree from_json(const nlohmann::json& j, const std::filesystem::path& run_dir);
// `annotate` may add a line (e.g. class masses) to each node label.
std::string to_dot(const ClusterTree& tree, const std::function<std::string(const TreeNode&)>& annotate = {});

}  // namespace hcmgan::tree
