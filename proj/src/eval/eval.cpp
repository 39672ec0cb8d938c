#include "hcmgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "hcmgan/errors.hpp"
#include "hcmgan/rng.hpp"

namespace hcmgan::eval {

namespace {

void check_lengths(std::span<const int> pred, std::span<const int> labels) {
  if (pred.size() != labels.size())
    throw ContractError("metric inputs differ in length: " + std::to_string(pred.size()) + " predictions, " +
                        std::to_string(labels.size()) + " labels");
  if (pred.empty()) throw ContractError("metrics need at least one example");
}

std::vector<int> distinct(std::span<const int> v) {
  std::vector<int> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t index_of(const std::vector<int>& sorted, int v) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
}

// Cluster row -> class column (or npos for a padding column).
std::vector<std::size_t> best_assignment(const ContingencyTable& t) {
  const std::size_t k = std::max(t.clusters.size(), t.classes.size());
  std::vector<std::vector<double>> w(k, std::vector<double>(k, 0.0));
  for (std::size_t r = 0; r < t.clusters.size(); ++r)
    for (std::size_t c = 0; c < t.classes.size(); ++c) w[r][c] = static_cast<double>(t.counts[r][c]);
  auto match = max_weight_matching(w);
  match.resize(t.clusters.size());
  for (auto& c : match)
    if (c >= t.classes.size()) c = std::numeric_limits<std::size_t>::max();
  return match;
}

double entropy(const std::vector<long>& counts, double n) {
  double h = 0;
  for (long c : counts)
    if (c > 0) h -= (c / n) * std::log(c / n);
  return h;
}

}  // namespace

ContingencyTable contingency(std::span<const int> pred, std::span<const int> labels) {
  check_lengths(pred, labels);
  ContingencyTable t;
  t.clusters = distinct(pred);
  t.classes = distinct(labels);
  t.counts.assign(t.clusters.size(), std::vector<long>(t.classes.size(), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++t.counts[index_of(t.clusters, pred[i])][index_of(t.classes, labels[i])];
  t.n = static_cast<long>(pred.size());
  return t;
}

// Hungarian method with row/column potentials on costs -w, O(k^3).
std::vector<std::size_t> max_weight_matching(const std::vector<std::vector<double>>& weights) {
  const std::size_t k = weights.size();
  for (const auto& row : weights)
    if (row.size() != k) throw ShapeError("matching needs a square weight matrix");
  if (k == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] is the row matched to column j.
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
  std::vector<std::size_t> p(k + 1, 0), way(k + 1, 0);
  for (std::size_t i = 1; i <= k; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<bool> used(k + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= k; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(k);
  for (std::size_t j = 1; j <= k; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double acc(std::span<const int> pred, std::span<const int> labels) {
  const auto t = contingency(pred, labels);
  const auto match = best_assignment(t);
  long hit = 0;
  for (std::size_t r = 0; r < match.size(); ++r)
    if (match[r] < t.classes.size()) hit += t.counts[r][match[r]];
  return static_cast<double>(hit) / static_cast<double>(t.n);
}

double acc_macro(std::span<const int> pred, std::span<const int> labels) {
  const auto t = contingency(pred, labels);
  const auto match = best_assignment(t);
  std::vector<long> class_size(t.classes.size(), 0), matched(t.classes.size(), 0);
  for (std::size_t r = 0; r < t.clusters.size(); ++r)
    for (std::size_t c = 0; c < t.classes.size(); ++c) class_size[c] += t.counts[r][c];
  for (std::size_t r = 0; r < match.size(); ++r)
    if (match[r] < t.classes.size()) matched[match[r]] = t.counts[r][match[r]];
  double sum = 0;
  for (std::size_t c = 0; c < t.classes.size(); ++c) sum += static_cast<double>(matched[c]) / class_size[c];
  return sum / static_cast<double>(t.classes.size());
}

double nmi(std::span<const int> pred, std::span<const int> labels) {
  const auto t = contingency(pred, labels);
  const double n = static_cast<double>(t.n);
  std::vector<long> rows(t.clusters.size(), 0), cols(t.classes.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      rows[r] += t.counts[r][c];
      cols[c] += t.counts[r][c];
    }
  const double hp = entropy(rows, n), hl = entropy(cols, n);
  if (hp <= 0.0 || hl <= 0.0) return 0.0;
  double mi = 0;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double nij = static_cast<double>(t.counts[r][c]);
      if (nij > 0) mi += (nij / n) * std::log(n * nij / (static_cast<double>(rows[r]) * cols[c]));
    }
  return std::clamp(mi / std::sqrt(hp * hl), 0.0, 1.0);
}

std::vector<ClassMass> class_mass(const split::MembershipVector& s, std::span<const int> labels) {
  if (labels.size() != s.size()) throw ContractError("class_mass: labels do not match membership length");
  std::map<int, double> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]] += s.masses[i];
  std::vector<ClassMass> out;
  for (const auto& [c, m] : by_class) out.push_back({c, m});
  std::stable_sort(out.begin(), out.end(), [](const ClassMass& a, const ClassMass& b) { return a.mass > b.mass; });
  return out;
}

Metrics compute_metrics(const tree::ClusterTree& t, std::span<const int> labels) {
  if (labels.size() != t.n)
    throw ContractError("labels have length " + std::to_string(labels.size()) + " but the tree has " +
                        std::to_string(t.n) + " examples");
  const auto pred = tree::hard_assign(t);
  Metrics m;
  m.acc = acc(pred, labels);
  m.acc_macro = acc_macro(pred, labels);
  m.nmi = nmi(pred, labels);
  m.n = t.n;
  for (int id : t.leaves()) {
    LeafSummary s;
    s.leaf = id;
    s.mass = t.node(id).total_mass();
    std::map<int, std::size_t> counts;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == id) ++counts[labels[i]], ++s.size;
    for (const auto& [c, k] : counts) {
      if (static_cast<double>(k) > s.purity * static_cast<double>(s.size)) {
        s.majority_class = c;
        s.purity = static_cast<double>(k) / static_cast<double>(s.size);
      }
    }
    m.per_leaf.push_back(s);
  }
  m.c_leaves = m.per_leaf.size();
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json leaves = nlohmann::json::array();
  for (const auto& l : m.per_leaf) {
    leaves.push_back({{"leaf", l.leaf}, {"size", l.size}, {"mass", l.mass}, {"majority_class", l.majority_class},
                      {"purity", l.purity}});
  }
  return {{"acc", m.acc}, {"acc_macro", m.acc_macro}, {"nmi", m.nmi}, {"n", m.n}, {"c_leaves", m.c_leaves},
          {"per_leaf", leaves}};
}

void write_pgm_grid(const std::filesystem::path& path, const std::vector<std::vector<double>>& tiles,
                    std::size_t tile_h, std::size_t tile_w, std::size_t rows, std::size_t cols, std::size_t scale) {
  if (tiles.size() != rows * cols) throw ContractError("grid needs exactly rows*cols tiles");
  const std::size_t th = tile_h * scale, tw = tile_w * scale;
  const std::size_t h = rows * th, w = cols * tw;
  std::vector<unsigned char> px(h * w);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].size() != tile_h * tile_w) throw ShapeError("grid tile has the wrong size");
    const std::size_t oy = (t / cols) * th, ox = (t % cols) * tw;
    for (std::size_t y = 0; y < th; ++y)
      for (std::size_t x = 0; x < tw; ++x) {
        const double v = std::clamp(tiles[t][(y / scale) * tile_w + x / scale], -1.0, 1.0);
        px[(oy + y) * w + ox + x] = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
      }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void render_reports(const tree::ClusterTree& t, const data::Dataset& ds, const std::filesystem::path& out_dir,
                    std::uint64_t seed) {
  namespace fs = std::filesystem;
  const bool image = ds.image_h > 0 && ds.image_w > 0;
  const std::size_t tile_h = image ? ds.image_h : 1;
  const std::size_t tile_w = image ? ds.image_w : ds.dim();
  const std::size_t scale = std::max<std::size_t>(1, 16 / std::max(tile_h, tile_w));
  std::map<int, std::string> keys;

  for (const auto& nd : t.nodes) {
    const auto dir = out_dir / "nodes" / std::to_string(nd.id);
    fs::create_directories(dir);
    if (nd.total_mass() > 0) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(nd.id)));
      const auto dist = split::normalize_membership(nd.membership);
      std::vector<std::vector<double>> tiles;
      for (auto i : split::sample_batch(dist, 25, rng)) {
        const auto row = ds.x.values().subspan(i * ds.dim(), ds.dim());
        tiles.emplace_back(row.begin(), row.end());
      }
      write_pgm_grid(dir / "grid.pgm", tiles, tile_h, tile_w, 5, 5, scale);
    }
    if (ds.labels) {
      nlohmann::json key = nlohmann::json::array();
      std::ostringstream label;
      int shown = 0;
      for (const auto& cm : class_mass(nd.membership, *ds.labels)) {
        key.push_back({{"class", cm.label}, {"mass", cm.mass}});
        if (shown++ < 3) label << (shown > 1 ? " " : "") << cm.label << ":" << std::fixed << std::setprecision(0) << cm.mass;
      }
      std::ofstream(dir / "class_mass.json") << key.dump(2) << '\n';
      keys[nd.id] = label.str();
    }
  }

  std::ofstream dot(out_dir / "tree.dot");
  dot << tree::to_dot(t, [&](const tree::TreeNode& nd) { return keys.count(nd.id) ? keys[nd.id] : std::string(); });
  if (!dot) throw IoError("cannot write tree.dot");
  if (ds.labels) {
    std::ofstream m(out_dir / "metrics.json");
    m << to_json(compute_metrics(t, *ds.labels)).dump(2) << '\n';
    if (!m) throw IoError("cannot write metrics.json");
  }
}

}  // namespace hcmgan::eval
