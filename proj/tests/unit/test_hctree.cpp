#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "hcmgan/errors.hpp"
#include "hcmgan/hctree.hpp"

using namespace hcmgan;
using namespace hcmgan::tree;
namespace fs = std::filesystem;

namespace {

split::SplitConfig small_config(std::uint64_t seed, int epochs, int refinements = 0) {
  split::SplitConfig cfg;
  cfg.seed = seed;
  cfg.epochs = epochs;
  cfg.refinements = refinements;
  cfg.batch_real = 16;
  cfg.batch_per_generator = 16;
  cfg.network.latent_dim = 8;
  cfg.network.gen_hidden = {16};
  cfg.network.trunk_hidden = {16, 8};
  return cfg;
}

Tensor uniform_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<double> v(n * d);
  for (auto& x : v) x = u(rng);
  return Tensor({n, d}, std::move(v));
}

// A hand-built tree: root 0 split into leaves 1 and 2 with given masses.
ClusterTree two_leaf_tree(std::vector<double> left, std::vector<double> right, int first_id = 1) {
  const std::size_t n = left.size();
  ClusterTree t = init_tree(n);
  t.nodes.push_back({first_id, {std::move(left), first_id}, 0, std::nullopt, {}});
  t.nodes.push_back({first_id + 1, {std::move(right), first_id + 1}, 0, std::nullopt, {}});
  t.nodes[0].children = std::make_pair(first_id, first_id + 1);
  return t;
}

}  // namespace

TEST_CASE("init_tree") {
  auto t = init_tree(5);
  CHECK(t.node(0).total_mass() == 5.0);
  CHECK(t.leaves() == std::vector<int>{0});
  CHECK(select_leaf(t) == 0);
  CHECK(hard_assign(t) == std::vector<int>(5, 0));
  CHECK_THROWS_AS(init_tree(1), ContractError);
}

TEST_CASE("select_leaf") {
  auto t = two_leaf_tree({1, 1, 1, 0, 0}, {0, 0, 0, 1, 1});
  CHECK(select_leaf(t) == 1);
  auto u = two_leaf_tree({0.5, 0.5}, {0.5, 0.5});
  CHECK(select_leaf(u) == 1);
  auto v = two_leaf_tree({0.25, 0.5}, {0.75, 0.5});
  CHECK(select_leaf(v) == 2);
}

TEST_CASE("hard_assign") {
  auto t = two_leaf_tree({1.0, 0.0, 0.5, 0.2}, {0.0, 1.0, 0.5, 0.8});
  CHECK(hard_assign(t) == std::vector<int>{1, 2, 1, 2});
  for (double k : {0.5, 3.0, 1e-3}) {
    auto s = t;
    for (int id : s.leaves())
      for (auto& m : s.node(id).membership.masses) m *= k;
    CHECK(hard_assign(s) == hard_assign(t));
  }
}

TEST_CASE("split_node") {
  const auto x = uniform_rows(40, 2, 1);
  SUBCASE("T = 0 gives the raw split") {
    auto t = init_tree(40);
    auto cfg = small_config(5, 1);
    auto [l, r] = split_node(t, 0, x, cfg);
    CHECK(l == 1);
    CHECK(r == 2);
    auto phase = cfg;
    phase.seed = raw_split_seed(cfg.seed, 0);
    auto raw = split::raw_split(x, t.node(0).membership, phase);
    CHECK(t.node(1).membership.masses == raw.left.masses);
    CHECK(t.node(2).membership.masses == raw.right.masses);
    CHECK(t.node(0).meta->mass_trace.size() == 1);
    CHECK(*t.node(1).parent == 0);
    CHECK_THROWS_AS(split_node(t, 0, x, cfg), ContractError);
  }
  SUBCASE("with refinements") {
    auto t = init_tree(40);
    split_node(t, 0, x, small_config(6, 1, 2));
    const auto& meta = *t.node(0).meta;
    CHECK(meta.mass_trace.size() == 3);
    CHECK(meta.trajectory.size() == 3);
    CHECK(meta.refinement_seeds.size() == 2);
    CHECK(meta.trajectory.back() == t.node(1).membership.masses);
    for (std::size_t i = 0; i < 40; ++i)
      CHECK(std::abs(t.node(1).membership.masses[i] + t.node(2).membership.masses[i] - 1.0) <= 1e-9);
    for (const auto& [a, b] : meta.mass_trace) CHECK(std::abs(a + b - 40.0) <= 1e-9);
  }
}

TEST_CASE("grow_until") {
  const auto x = uniform_rows(30, 2, 2);
  SUBCASE("C = 2") {
    auto t = init_tree(30);
    int calls = 0;
    grow_until(t, 2, x, small_config(1, 1), [&](const ClusterTree&, int id) {
      CHECK(id == 0);
      ++calls;
    });
    CHECK(calls == 1);
    CHECK(t.nodes.size() == 3);
  }
  SUBCASE("C = 4") {
    auto t = init_tree(30);
    std::vector<int> split_ids;
    grow_until(t, 4, x, small_config(2, 1, 1), [&](const ClusterTree& tr, int id) {
      split_ids.push_back(id);
      CHECK(leaf_mass_defect(tr) <= 1e-8);
    });
    CHECK(split_ids.size() == 3);
    CHECK(t.leaf_count() == 4);
    double total = 0;
    for (int id : t.leaves()) total += t.node(id).total_mass();
    CHECK(total == doctest::Approx(30.0).epsilon(1e-12));
    for (const auto& nd : t.nodes) {
      if (nd.children) {
        CHECK(nd.children->first > nd.id);
        CHECK(nd.children->second > nd.id);
      }
    }
    CHECK_THROWS_AS(grow_until(t, 1, x, small_config(2, 1)), ConfigError);
  }
  SUBCASE("deterministic") {
    auto a = init_tree(30), b = init_tree(30);
    grow_until(a, 3, x, small_config(9, 1, 1));
    grow_until(b, 3, x, small_config(9, 1, 1));
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(hard_assign(a) == hard_assign(b));
    for (std::size_t i = 0; i < a.nodes.size(); ++i) CHECK(a.nodes[i].membership.masses == b.nodes[i].membership.masses);
  }
}

TEST_CASE("serialization") {
  const auto x = uniform_rows(20, 2, 3);
  auto t = init_tree(20);
  grow_until(t, 3, x, small_config(4, 1, 1));
  const auto dir = fs::temp_directory_path() / ("hcmgan_tree_" + std::to_string(::getpid()));
  for (const auto& nd : t.nodes) {
    fs::create_directories(dir / fs::path(membership_path(nd.id)).parent_path());
    write_membership_csv(dir / membership_path(nd.id), nd.membership);
  }
  auto back = from_json(nlohmann::json::parse(to_json(t).dump()), dir);
  REQUIRE(back.nodes.size() == t.nodes.size());
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    CHECK(back.nodes[i].membership.masses == t.nodes[i].membership.masses);
    CHECK(back.nodes[i].children == t.nodes[i].children);
    CHECK(back.nodes[i].parent == t.nodes[i].parent);
  }
  CHECK(back.node(0).meta->raw_seed == t.node(0).meta->raw_seed);
  CHECK(hard_assign(back) == hard_assign(t));

  const auto dot = to_dot(t, [](const TreeNode& nd) { return nd.is_leaf() ? "leaf" : ""; });
  CHECK(dot.find("n0 -> n1") != std::string::npos);
  CHECK(dot.find("n0 -> n2") != std::string::npos);
  CHECK(dot.find("leaf") != std::string::npos);

  std::ofstream(dir / "bad.csv") << "index,mass\n0,0.5\n2,0.5\n";
  CHECK_THROWS_AS(read_membership_csv(dir / "bad.csv", 0), FormatError);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"n", 20}}, dir), FormatError);
  fs::remove_all(dir);
}
