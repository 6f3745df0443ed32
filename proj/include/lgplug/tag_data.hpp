#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lgplug/errors.hpp"
#include "lgplug/matrix.hpp"

namespace lgplug {

using NodeId = std::string;

// Text-attributed graph: every node carries a raw UTF-8 text, edges are
// undirected and stored once as index pairs (lo, hi). Immutable once built;
// helpers below construct and validate.
struct TextAttributedGraph {
  std::vector<NodeId> node_ids;
  std::vector<std::string> texts;                   // aligned with node_ids
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // lo < hi, unique, sorted
  std::unordered_map<NodeId, std::string> labels;   // partial
  std::string domain_hint = "general text";
  std::unordered_map<NodeId, std::size_t> index_of;

  std::size_t num_nodes() const { return node_ids.size(); }
  std::size_t num_edges() const { return edges.size(); }
  const std::string& text_of(std::size_t idx) const { return texts[idx]; }
  const std::string* label_of(std::size_t idx) const {
    auto it = labels.find(node_ids[idx]);
    return it == labels.end() ? nullptr : &it->second;
  }
  std::size_t index(const NodeId& id) const;

  // Neighbor lists (no self-loops; symmetric).
  std::vector<std::vector<std::size_t>> adjacency() const;
};

// Builds a validated graph from rows and raw id pairs. Duplicate edges and
// self-loops are dropped, counted in the stats. Unknown endpoints throw.
struct GraphBuilder {
  std::size_t duplicate_edges = 0;
  std::size_t self_loops_dropped = 0;
  TextAttributedGraph build(std::vector<NodeId> ids, std::vector<std::string> texts,
                            std::unordered_map<NodeId, std::string> labels,
                            const std::vector<std::pair<NodeId, NodeId>>& raw_edges);
};

struct LoadStats {
  std::size_t duplicate_edges = 0;
  std::size_t self_loops_dropped = 0;
};

// nodes file: one JSON object per line with fields id, text, label (optional).
// edges file: one "src<TAB>dst" pair per line.
TextAttributedGraph load_graph(const std::string& nodes_path, const std::string& edges_path,
                               LoadStats* stats = nullptr);
void save_graph(const TextAttributedGraph& g, const std::string& nodes_path,
                const std::string& edges_path);

// ID/OOD node partition: train/val/test_id hold labeled ID nodes, test_ood
// holds every node whose label falls outside id_classes.
struct SplitSpec {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test_id;
  std::vector<NodeId> test_ood;
  std::vector<std::string> id_classes;

  std::unordered_set<NodeId> train_set() const { return {train.begin(), train.end()}; }
  std::unordered_set<NodeId> val_set() const { return {val.begin(), val.end()}; }
  std::unordered_set<NodeId> test_id_set() const { return {test_id.begin(), test_id.end()}; }
  std::unordered_set<NodeId> test_ood_set() const { return {test_ood.begin(), test_ood.end()}; }
  bool is_id_class(const std::string& label) const;
  void validate(const TextAttributedGraph& g) const;

  void save(const std::string& path) const;
  static SplitSpec load(const std::string& path);
};

// Deterministic ID split by largest-remainder rounding of the ratios; all
// OOD-labeled nodes go to test_ood. Ratios must sum to 1 (1e-9).
SplitSpec make_ood_split(const TextAttributedGraph& g, const std::vector<std::string>& id_classes,
                         std::array<double, 3> ratios, std::uint64_t seed);

struct SynthClass {
  std::string name;
  std::vector<std::string> keywords;
};

// Planted-partition generator: same-class pairs wired with probability
// intra_p, cross-class with inter_p, texts templated from per-class keyword
// lists plus a shared filler vocabulary.
struct SynthConfig {
  std::size_t n_id_classes = 3;
  std::size_t n_ood_classes = 2;
  std::size_t nodes_per_class = 20;
  double intra_p = 0.1;
  double inter_p = 0.01;
  std::vector<SynthClass> classes;  // optional; defaults supplied when empty
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::uint64_t seed = 7;
  std::string domain_hint = "academic computer science";

  void validate() const;
};

std::vector<SynthClass> default_synth_classes();

std::pair<TextAttributedGraph, SplitSpec> synth_tag(const SynthConfig& config);

}  // namespace lgplug
