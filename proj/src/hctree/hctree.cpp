#include "hcmgan/hctree.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hcmgan/errors.hpp"
#include "hcmgan/rng.hpp"

namespace hcmgan::tree {

namespace {

constexpr double kConservationTol = 1e-9;

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void check_children(const MembershipVector& parent, const MembershipVector& l, const MembershipVector& r) {
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (std::abs(l.masses[i] + r.masses[i] - parent.masses[i]) > kConservationTol) {
      throw ContractError("split broke mass conservation at example " + std::to_string(i));
    }
  }
}

}  // namespace

const TreeNode& ClusterTree::node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes.size()) throw ContractError("no node " + std::to_string(id));
  return nodes[static_cast<std::size_t>(id)];
}

TreeNode& ClusterTree::node(int id) { return const_cast<TreeNode&>(std::as_const(*this).node(id)); }

std::vector<int> ClusterTree::leaves() const {
  std::vector<int> out;
  for (const auto& nd : nodes)
    if (nd.is_leaf()) out.push_back(nd.id);
  return out;
}

std::size_t ClusterTree::leaf_count() const { return leaves().size(); }

ClusterTree init_tree(std::size_t n) {
  if (n < 2) throw ContractError("a tree needs at least 2 examples");
  ClusterTree t;
  t.n = n;
  t.nodes.push_back(TreeNode{0, MembershipVector{std::vector<double>(n, 1.0), 0}, std::nullopt, std::nullopt, {}});
  return t;
}

int select_leaf(const ClusterTree& tree) {
  int best = -1;
  double best_mass = -std::numeric_limits<double>::infinity();
  for (const auto& nd : tree.nodes) {
    if (!nd.is_leaf()) continue;
    const double m = nd.total_mass();
    if (m > best_mass) {
      best = nd.id;
      best_mass = m;
    }
  }
  if (best < 0) throw ContractError("tree has no leaves");
  return best;
}

std::uint64_t raw_split_seed(std::uint64_t run_seed, int node_id) {
  return derive_seed(derive_seed(run_seed, static_cast<std::uint64_t>(node_id)), 0);
}

std::uint64_t refinement_seed(std::uint64_t run_seed, int node_id, int t) {
  return derive_seed(derive_seed(run_seed, static_cast<std::uint64_t>(node_id)), static_cast<std::uint64_t>(t));
}

std::pair<int, int> split_node(ClusterTree& tree, int node_id, const Tensor& x, const split::SplitConfig& cfg) {
  if (!tree.node(node_id).is_leaf()) throw ContractError("node " + std::to_string(node_id) + " is already split");
  if (x.rank() != 2 || x.dim(0) != tree.n) throw ShapeError("split_node: data does not match tree size");
  const MembershipVector parent = tree.node(node_id).membership;

  SplitMeta meta;
  meta.refinements = cfg.refinements;
  meta.epochs = cfg.epochs;
  auto phase = cfg;
  phase.seed = meta.raw_seed = raw_split_seed(cfg.seed, node_id);
  auto out = split::raw_split(x, parent, phase);
  check_children(parent, out.left, out.right);

  auto record = [&meta](split::SplitOutcome& o) {
    meta.mass_trace.emplace_back(o.left.total_mass(), o.right.total_mass());
    meta.trajectory.push_back(o.left.masses);
    meta.losses.push_back(std::move(o.losses));
    meta.checkpoints.push_back(std::move(o.checkpoint));
  };
  MembershipVector left = out.left, right = out.right;
  record(out);
  for (int t = 1; t <= cfg.refinements; ++t) {
    phase.seed = refinement_seed(cfg.seed, node_id, t);
    meta.refinement_seeds.push_back(phase.seed);
    auto r = split::refinement(x, left, right, phase);
    check_children(parent, r.left, r.right);
    left = r.left;
    right = r.right;
    record(r);
  }

  const int l = static_cast<int>(tree.nodes.size());
  const int r = l + 1;
  left.node_id = l;
  right.node_id = r;
  tree.nodes.push_back(TreeNode{l, std::move(left), node_id, std::nullopt, {}});
  tree.nodes.push_back(TreeNode{r, std::move(right), node_id, std::nullopt, {}});
  auto& nd = tree.node(node_id);
  nd.children = std::make_pair(l, r);
  nd.meta = std::move(meta);
  return {l, r};
}

void grow_until(ClusterTree& tree, std::size_t leaves, const Tensor& x, const split::SplitConfig& cfg,
                const SplitCallback& on_split) {
  if (leaves < 2) throw ConfigError("leaf count must be at least 2");
  while (tree.leaf_count() < leaves) {
    const int id = select_leaf(tree);
    split_node(tree, id, x, cfg);
    if (on_split) on_split(tree, id);
  }
}

std::vector<int> hard_assign(const ClusterTree& tree) {
  const auto ls = tree.leaves();
  if (ls.empty()) throw ContractError("tree has no leaves");
  std::vector<int> out(tree.n, ls.front());
  std::vector<double> best(tree.n, -1.0);
  for (int id : ls) {
    const auto& m = tree.node(id).membership.masses;
    for (std::size_t i = 0; i < tree.n; ++i) {
      if (m[i] > best[i]) {
        best[i] = m[i];
        out[i] = id;
      }
    }
  }
  return out;
}

double leaf_mass_defect(const ClusterTree& tree) {
  std::vector<double> sum(tree.n, 0.0);
  for (int id : tree.leaves()) {
    const auto& m = tree.node(id).membership.masses;
    for (std::size_t i = 0; i < tree.n; ++i) sum[i] += m[i];
  }
  double worst = 0;
  for (double s : sum) worst = std::max(worst, std::abs(s - 1.0));
  return worst;
}

std::string membership_path(int node_id) { return "nodes/" + std::to_string(node_id) + "/membership.csv"; }

void write_membership_csv(const std::filesystem::path& path, const MembershipVector& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,mass\n";
  for (std::size_t i = 0; i < s.size(); ++i) out << i << ',' << shortest(s.masses[i]) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

MembershipVector read_membership_csv(const std::filesystem::path& path, int node_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,mass", 0) != 0)
    throw FormatError(path.string() + ": expected header 'index,mass'");
  MembershipVector s{{}, node_id};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    double v = 0;
    std::size_t idx = 0;
    const auto r1 = std::from_chars(line.data(), line.data() + (comma == std::string::npos ? 0 : comma), idx);
    const auto r2 = comma == std::string::npos ? std::from_chars_result{nullptr, std::errc::invalid_argument}
                                               : std::from_chars(line.data() + comma + 1, line.data() + line.size(), v);
    if (r1.ec != std::errc() || r2.ec != std::errc() || idx != s.masses.size())
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    s.masses.push_back(v);
  }
  return s;
}

nlohmann::json to_json(const ClusterTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : tree.nodes) {
    nlohmann::json j{{"id", nd.id}, {"total_mass", nd.total_mass()}, {"leaf", nd.is_leaf()},
                     {"membership", membership_path(nd.id)}};
    j["parent"] = nd.parent ? nlohmann::json(*nd.parent) : nlohmann::json(nullptr);
    j["children"] = nd.children ? nlohmann::json{nd.children->first, nd.children->second} : nlohmann::json(nullptr);
    if (nd.meta) {
      nlohmann::json trace = nlohmann::json::array();
      for (const auto& [l, r] : nd.meta->mass_trace) trace.push_back({l, r});
      j["split"] = {{"refinements", nd.meta->refinements},
                    {"epochs", nd.meta->epochs},
                    {"raw_seed", nd.meta->raw_seed},
                    {"refinement_seeds", nd.meta->refinement_seeds},
                    {"mass_trace", trace}};
    }
    nodes.push_back(std::move(j));
  }
  return {{"n", tree.n}, {"root", 0}, {"nodes", nodes}};
}

ClusterTree from_json(const nlohmann::json& j, const std::filesystem::path& run_dir) {
  try {
    ClusterTree t;
    t.n = j.at("n").get<std::size_t>();
    for (const auto& jn : j.at("nodes")) {
      TreeNode nd;
      nd.id = jn.at("id").get<int>();
      if (nd.id != static_cast<int>(t.nodes.size())) throw FormatError("tree.json: node ids must be 0..n-1 in order");
      if (!jn.at("parent").is_null()) nd.parent = jn.at("parent").get<int>();
      if (!jn.at("children").is_null()) nd.children = std::make_pair(jn["children"][0].get<int>(), jn["children"][1].get<int>());
      nd.membership = read_membership_csv(run_dir / jn.at("membership").get<std::string>(), nd.id);
      if (nd.membership.size() != t.n) throw FormatError("membership of node " + std::to_string(nd.id) + " has wrong length");
      if (jn.contains("split")) {
        const auto& js = jn["split"];
        SplitMeta m;
        m.refinements = js.at("refinements").get<int>();
        m.epochs = js.at("epochs").get<int>();
        m.raw_seed = js.at("raw_seed").get<std::uint64_t>();
        m.refinement_seeds = js.at("refinement_seeds").get<std::vector<std::uint64_t>>();
        for (const auto& p : js.at("mass_trace")) m.mass_trace.emplace_back(p[0].get<double>(), p[1].get<double>());
        nd.meta = std::move(m);
      }
      t.nodes.push_back(std::move(nd));
    }
    if (t.nodes.empty()) throw FormatError("tree.json: no nodes");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tree.json: ") + e.what());
  }
}

std::string to_dot(const ClusterTree& tree, const std::function<std::string(const TreeNode&)>& annotate) {
  std::ostringstream os;
  os << "digraph hcmgan {\n  node [shape=box, fontname=\"Helvetica\"];\n";
  for (const auto& nd : tree.nodes) {
    os << "  n" << nd.id << " [label=\"node " << nd.id << "\\nmass " << std::fixed << std::setprecision(2)
       << nd.total_mass();
    if (annotate) {
      const auto extra = annotate(nd);
      if (!extra.empty()) os << "\\n" << extra;
    }
    os << "\"" << (nd.is_leaf() ? ", style=rounded" : "") << "];\n";
  }
  for (const auto& nd : tree.nodes)
    if (nd.children) os << "  n" << nd.id << " -> n" << nd.children->first << ";\n  n" << nd.id << " -> n" << nd.children->second << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace hcmgan::tree
