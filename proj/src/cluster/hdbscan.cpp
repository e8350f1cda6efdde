#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lens/cluster.hpp"
#include "lens/error.hpp"
#include "lens/util.hpp"

namespace lens::cluster {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Single-linkage dendrogram: node ids < n are points, node n + i is the i-th
// merge.
struct Dendrogram {
  std::size_t n = 0;
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  std::vector<double> distance;
  std::vector<std::size_t> size;

  std::size_t root() const { return n + left.size() - 1; }
  std::size_t node_size(std::size_t node) const { return node < n ? 1 : size[node - n]; }
};

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void attach(std::size_t child, std::size_t parent) { parent_[child] = parent; }

 private:
  std::vector<std::size_t> parent_;
};

Dendrogram single_linkage(std::size_t n, std::vector<MstEdge> edges) {
  std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    const auto xl = std::min(x.a, x.b), yl = std::min(y.a, y.b);
    if (xl != yl) return xl < yl;
    return std::max(x.a, x.b) < std::max(y.a, y.b);
  });
  Dendrogram tree;
  tree.n = n;
  // Union-find over point ids and merge-node ids; each set's representative
  // is its newest dendrogram node.
  DisjointSet sets(2 * n);
  for (const auto& e : edges) {
    const auto ra = sets.find(e.a);
    const auto rb = sets.find(e.b);
    const auto node = n + tree.left.size();
    tree.left.push_back(ra);
    tree.right.push_back(rb);
    tree.distance.push_back(e.weight);
    tree.size.push_back(tree.node_size(ra) + tree.node_size(rb));
    sets.attach(ra, node);
    sets.attach(rb, node);
  }
  return tree;
}

void collect_points(const Dendrogram& tree, std::size_t node, std::vector<std::size_t>& out) {
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const auto cur = stack.back();
    stack.pop_back();
    if (cur < tree.n) {
      out.push_back(cur);
    } else {
      stack.push_back(tree.right[cur - tree.n]);
      stack.push_back(tree.left[cur - tree.n]);
    }
  }
}

// One row of the condensed tree: `child` left `parent` at `lambda`. Children
// below n are points; others are cluster ids offset by n.
struct CondensedRow {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t child_size;
};

struct Condensed {
  std::vector<CondensedRow> rows;
  std::size_t num_clusters = 0;  // cluster ids are n .. n + num_clusters - 1; root is n
};

Condensed condense(const Dendrogram& tree, std::size_t min_cluster_size) {
  const auto n = tree.n;
  Condensed out;
  out.num_clusters = 1;

  // Zero-distance merges have infinite density; they get a finite lambda
  // above every real one so stabilities stay finite.
  double min_positive = kInf;
  for (double d : tree.distance) {
    if (d > 0.0) min_positive = std::min(min_positive, d);
  }
  const double lambda_cap = std::isfinite(min_positive) ? 2.0 / min_positive : 1.0;
  auto lambda_of = [&](double d) { return d > 0.0 ? 1.0 / d : lambda_cap; };

  if (tree.left.empty()) {
    // Single point.
    out.rows.push_back({n, 0, lambda_cap, 1});
    return out;
  }

  std::vector<std::size_t> points;
  auto fall_out = [&](std::size_t cluster, std::size_t node, double lambda) {
    points.clear();
    collect_points(tree, node, points);
    for (auto p : points) out.rows.push_back({cluster, p, lambda, 1});
  };

  // (dendrogram node, condensed cluster it belongs to)
  std::vector<std::pair<std::size_t, std::size_t>> queue{{tree.root(), n}};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const auto [node, cluster] = queue[qi];
    if (node < n) {
      out.rows.push_back({cluster, node, lambda_cap, 1});
      continue;
    }
    const auto idx = node - n;
    const double dist = tree.distance[idx];
    const double lambda = lambda_of(dist);
    if (dist == 0.0) {
      fall_out(cluster, node, lambda);
      continue;
    }
    const auto l = tree.left[idx];
    const auto r = tree.right[idx];
    const auto l_size = tree.node_size(l);
    const auto r_size = tree.node_size(r);
    const bool l_big = l_size >= min_cluster_size;
    const bool r_big = r_size >= min_cluster_size;
    if (l_big && r_big) {
      for (auto [child, size] : {std::pair{l, l_size}, std::pair{r, r_size}}) {
        const auto id = n + out.num_clusters++;
        out.rows.push_back({cluster, id, lambda, size});
        queue.emplace_back(child, id);
      }
    } else if (!l_big && !r_big) {
      fall_out(cluster, l, lambda);
      fall_out(cluster, r, lambda);
    } else if (l_big) {
      fall_out(cluster, r, lambda);
      queue.emplace_back(l, cluster);
    } else {
      fall_out(cluster, l, lambda);
      queue.emplace_back(r, cluster);
    }
  }
  return out;
}

}  // namespace

void HdbscanConfig::validate() const {
  if (min_cluster_size < 2) throw ConfigError("hdbscan.min_cluster_size must be >= 2");
  const auto ms = effective_min_samples();
  if (ms < 1) throw ConfigError("hdbscan.min_samples must be >= 1");
  if (ms > min_cluster_size) throw ConfigError("hdbscan.min_samples must be <= min_cluster_size");
}

double euclidean(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return std::sqrt(s);
}

std::vector<double> core_distances(const PointSet& points, std::size_t k) {
  const auto n = points.rows;
  std::vector<double> core(n, 0.0);
  if (n == 0 || k == 0) return core;
  const auto kth = std::min(k, n) - 1;
  util::parallel_for(n, [&](std::size_t i) {
    std::vector<double> dists(n);
    for (std::size_t j = 0; j < n; ++j) dists[j] = j == i ? 0.0 : euclidean(points.row(i), points.row(j), points.cols);
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(kth), dists.end());
    core[i] = dists[kth];
  });
  return core;
}

std::vector<MstEdge> mutual_reachability_mst(const PointSet& points, const std::vector<double>& core) {
  const auto n = points.rows;
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, kInf);
  std::vector<std::size_t> best_from(n, 0);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    const double* cur_row = points.row(current);
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = std::max({core[current], core[j], euclidean(cur_row, points.row(j), points.cols)});
      if (d < best[j] || (d == best[j] && current < best_from[j])) {
        best[j] = d;
        best_from[j] = current;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({best_from[next], next, best[next]});
    current = next;
  }
  return edges;
}

HdbscanResult hdbscan_detailed(const PointSet& points, const HdbscanConfig& cfg) {
  cfg.validate();
  const auto n = points.rows;
  if (n == 0) throw ContractError("hdbscan needs at least one point");
  const auto mcs = cfg.min_cluster_size;

  HdbscanResult result;
  result.assignment.labels.assign(n, -1);
  result.assignment.probabilities.assign(n, 0.0);
  result.core_distances = core_distances(points, cfg.effective_min_samples());
  result.mst = mutual_reachability_mst(points, result.core_distances);

  const auto tree = single_linkage(n, result.mst);
  const auto condensed = condense(tree, mcs);
  const auto k = condensed.num_clusters;

  std::vector<std::ptrdiff_t> parent(k, -1);
  std::vector<double> birth(k, 0.0), death(k, 0.0), stability(k, 0.0);
  std::vector<std::size_t> size(k, 0);
  std::vector<std::vector<std::size_t>> children(k);
  size[0] = n;
  for (const auto& row : condensed.rows) {
    if (row.child >= n) {
      const auto c = row.child - n;
      parent[c] = static_cast<std::ptrdiff_t>(row.parent - n);
      birth[c] = row.lambda;
      size[c] = row.child_size;
      children[row.parent - n].push_back(c);
    }
  }
  for (const auto& row : condensed.rows) {
    const auto p = row.parent - n;
    stability[p] += (row.lambda - birth[p]) * static_cast<double>(row.child_size);
    death[p] = std::max(death[p], row.lambda);
  }

  // Excess-of-mass selection, leaves first. Cluster ids are assigned in BFS
  // order, so every child has a larger id than its parent.
  std::vector<bool> selected(k, false);
  std::vector<double> subtree(k, 0.0);
  auto deselect_below = [&](std::size_t c) {
    std::vector<std::size_t> stack(children[c].begin(), children[c].end());
    while (!stack.empty()) {
      const auto x = stack.back();
      stack.pop_back();
      selected[x] = false;
      stack.insert(stack.end(), children[x].begin(), children[x].end());
    }
  };
  for (std::size_t c = k; c-- > 1;) {
    if (children[c].empty()) {
      selected[c] = true;
      subtree[c] = stability[c];
      continue;
    }
    double child_sum = 0.0;
    for (auto ch : children[c]) child_sum += subtree[ch];
    // Equal within tolerance prefers the finer split.
    if (stability[c] > child_sum + 1e-12 * std::max(1.0, std::abs(child_sum))) {
      selected[c] = true;
      subtree[c] = stability[c];
      deselect_below(c);
    } else {
      subtree[c] = child_sum;
    }
  }
  // The root only stands as a cluster when the data never splits.
  if (children[0].empty() && n >= mcs) selected[0] = true;

  // Label points by the selected ancestor of the cluster they left.
  std::vector<std::ptrdiff_t> owner(k, -1);
  for (std::size_t c = 0; c < k; ++c) {
    if (selected[c]) {
      owner[c] = static_cast<std::ptrdiff_t>(c);
    } else if (parent[c] >= 0) {
      owner[c] = owner[static_cast<std::size_t>(parent[c])];
    }
  }
  std::vector<std::ptrdiff_t> point_owner(n, -1);
  std::vector<double> point_lambda(n, 0.0);
  std::vector<double> owner_max_lambda(k, 0.0);
  for (const auto& row : condensed.rows) {
    if (row.child >= n) continue;
    const auto o = owner[row.parent - n];
    point_owner[row.child] = o;
    point_lambda[row.child] = row.lambda;
    if (o >= 0) {
      auto& m = owner_max_lambda[static_cast<std::size_t>(o)];
      m = std::max(m, row.lambda);
    }
  }

  // Renumber selected clusters by ascending index of their first member.
  std::vector<int> label_of_cluster(k, -1);
  int next_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto o = point_owner[i];
    if (o < 0) continue;
    auto& lab = label_of_cluster[static_cast<std::size_t>(o)];
    if (lab < 0) lab = next_label++;
    result.assignment.labels[i] = lab;
    const double lmax = owner_max_lambda[static_cast<std::size_t>(o)];
    result.assignment.probabilities[i] = lmax > 0.0 ? std::min(point_lambda[i], lmax) / lmax : 1.0;
  }
  result.assignment.num_clusters = static_cast<std::size_t>(next_label);

  result.condensed.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    CondensedNode node;
    node.id = c;
    node.parent = parent[c];
    node.lambda_birth = birth[c];
    node.lambda_death = death[c];
    node.size = size[c];
    node.stability = stability[c];
    node.selected = selected[c];
    result.condensed.push_back(node);
  }
  return result;
}

ClusterAssignment hdbscan(const PointSet& points, const HdbscanConfig& cfg) {
  return hdbscan_detailed(points, cfg).assignment;
}

nlohmann::ordered_json HdbscanResult::condensed_tree_json() const {
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& c : condensed) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["parent"] = c.parent < 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(c.parent);
    j["lambda_birth"] = c.lambda_birth;
    j["lambda_death"] = c.lambda_death;
    j["size"] = c.size;
    j["stability"] = c.stability;
    j["selected"] = c.selected;
    nodes.push_back(std::move(j));
  }
  return nlohmann::ordered_json{{"nodes", std::move(nodes)}};
}

}  // namespace lens::cluster
