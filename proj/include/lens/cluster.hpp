#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "lens/embed.hpp"

namespace lens::cluster {

// Row-major n x d point set in double precision.
struct PointSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  PointSet() = default;
  PointSet(std::size_t n, std::size_t d) : rows(n), cols(d), data(n * d, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static PointSet from_embeddings(const std::vector<embed::EmbeddingVector>& vectors);
};

enum class ReducerMethod { pca, none };

struct ReducerConfig {
  ReducerMethod method = ReducerMethod::pca;
  std::size_t target_dim = 5;
  // Recorded for reducers that need randomness; PCA is deterministic.
  std::uint64_t random_seed = 42;
};

// Fitted PCA: `components` holds target_dim orthonormal rows of length d,
// ordered by decreasing variance, each with its largest-magnitude loading
// positive.
struct PcaModel {
  std::vector<double> mean;
  PointSet components;
  std::vector<double> explained_variance;  // eigenvalues of the (n-1)-normalized covariance
};

PcaModel fit_pca(const PointSet& points, std::size_t target_dim);
PointSet project(const PcaModel& model, const PointSet& points);

// Throws ConfigError when target_dim >= input dim (for PCA) and
// ContractError when fewer than two points are given.
PointSet reduce(const PointSet& points, const ReducerConfig& cfg);

struct HdbscanConfig {
  std::size_t min_cluster_size = 15;
  // 0 means "same as min_cluster_size". The neighbourhood counts the point
  // itself, so min_samples = 1 gives plain single linkage.
  std::size_t min_samples = 0;

  std::size_t effective_min_samples() const { return min_samples == 0 ? min_cluster_size : min_samples; }
  void validate() const;
};

struct ClusterAssignment {
  std::vector<int> labels;  // -1 = noise, otherwise 0..num_clusters-1
  std::size_t num_clusters = 0;
  std::vector<double> probabilities;
};

struct MstEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

struct CondensedNode {
  std::size_t id = 0;
  std::ptrdiff_t parent = -1;  // -1 for the root
  double lambda_birth = 0.0;
  double lambda_death = 0.0;   // largest lambda at which a point left the node
  std::size_t size = 0;
  double stability = 0.0;
  bool selected = false;
};

struct HdbscanResult {
  ClusterAssignment assignment;
  std::vector<double> core_distances;
  std::vector<MstEdge> mst;
  std::vector<CondensedNode> condensed;

  nlohmann::ordered_json condensed_tree_json() const;
};

double euclidean(const double* a, const double* b, std::size_t d);

// Distance to the k-th nearest point, the point itself counted first.
std::vector<double> core_distances(const PointSet& points, std::size_t k);

// Prim's algorithm over the dense mutual-reachability graph; ties go to the
// smaller point index. Edges are returned in insertion order.
std::vector<MstEdge> mutual_reachability_mst(const PointSet& points, const std::vector<double>& core);

HdbscanResult hdbscan_detailed(const PointSet& points, const HdbscanConfig& cfg);
ClusterAssignment hdbscan(const PointSet& points, const HdbscanConfig& cfg);

}  // namespace lens::cluster
