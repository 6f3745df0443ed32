#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lgplug/llm_gateway.hpp"
#include "lgplug/matrix.hpp"
#include "lgplug/tag_data.hpp"

namespace lgplug {

struct ClusterAssignment {
  std::vector<std::vector<std::size_t>> clusters;  // row indices per cluster
  Matrix centroids;                                // one row per cluster
  double objective = 0.0;                          // within-cluster sum of squares

  std::size_t size() const { return clusters.size(); }
};

// Lloyd's iterations from k-means++ seeding; empty clusters are repaired by
// reseeding from the point farthest from its centroid. Deterministic given
// the seed.
ClusterAssignment cluster_embeddings(const Matrix& points, std::size_t num_clusters,
                                     std::uint64_t seed, std::size_t max_iters = 100);

// The ⌈ratio·|cluster|⌉ members closest to the centroid, distance ties broken
// by node-id order (ids indexed by row).
std::vector<std::size_t> near_centroid(const std::vector<std::size_t>& members,
                                       const Matrix& points, const double* centroid,
                                       double ratio, const std::vector<NodeId>& ids);

// Ordered (category, count) store. Initial entries carry count 0; updates
// match on the normalized form and either increment or append.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(const std::vector<std::string>& initial_categories);

  void update(const std::string& assigned);
  // Top-K categories by count, ties broken by earliest insertion; returns all
  // entries when fewer than k exist.
  std::vector<std::string> top_k(std::size_t k) const;
  std::size_t total_count() const;
  const std::vector<std::pair<std::string, std::size_t>>& entries() const { return entries_; }
  std::vector<std::string> categories() const;

 private:
  std::vector<std::pair<std::string, std::size_t>> entries_;
};

struct ExposureConfig {
  std::size_t num_clusters = 10;      // M
  double near_centroid_ratio = 0.5;   // ρ in (0,1]
  std::size_t query_batch = 3;        // b
  std::size_t max_trials = 3;         // T
  std::size_t top_k = 2;              // K
  std::uint64_t seed = 11;
  std::size_t kmeans_max_iters = 100;
  // Optional broader reading of the exposure assembly: when a cluster reached
  // unanimous consensus, expose its whole near-centroid set, not only the
  // queried nodes.
  bool expose_full_cluster_on_unanimous = false;

  void validate() const;
};

struct ExposureSet {
  struct Provenance {
    std::size_t cluster = 0;
    std::string category;
  };
  std::vector<NodeId> node_ids;
  std::map<NodeId, Provenance> provenance;

  bool contains(const NodeId& id) const { return provenance.count(id) > 0; }
  void save(const std::string& path) const;
  static ExposureSet load(const std::string& path);
};

struct ClusterReport {
  std::size_t cluster = 0;
  std::size_t cluster_size = 0;
  std::size_t near_centroid_size = 0;
  std::size_t queried = 0;
  bool early_stopped = false;
  bool skipped_backend_failure = false;
  bool accepted = false;  // top-K disjoint from the ID classes
  std::vector<std::string> top_categories;
};

struct ExposureResult {
  ExposureSet set;
  std::vector<ClusterReport> clusters;
  ClusterAssignment assignment;
  std::vector<std::size_t> pool;  // row indices clustered (nodes outside train/val)
};

// Consensus-driven exposure over the unlabeled pool (everything outside
// train/val): cluster, filter near-centroid, query the backend in batches
// with early stop on unanimous batches, then keep only clusters whose top-K
// categories exclude every ID class. Query records go to `ledger`; total
// successful queries never exceed M·b·T.
ExposureResult run_exposure(const TextAttributedGraph& g, const Matrix& embeddings,
                            const SplitSpec& split, const ExposureConfig& config,
                            LlmBackend& backend, QueryLedger& ledger,
                            const GatewayOptions& gateway = {});

}  // namespace lgplug
