#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lgplug/alignment.hpp"
#include "lgplug/detect.hpp"
#include "lgplug/evalx.hpp"
#include "lgplug/exposure.hpp"
#include "lgplug/tag_data.hpp"

namespace lgplug {

// Flat section.key -> value view of the INI-style config document. Values
// keep their raw string form; typed accessors parse on demand.
class ConfigDoc {
 public:
  static ConfigDoc parse_file(const std::string& path);
  static ConfigDoc parse_string(const std::string& text);

  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;

  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key, double fallback) const;
  std::size_t get_count(const std::string& section, const std::string& key,
                        std::size_t fallback) const;
  bool get_flag(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_seed(const std::string& section, const std::string& key,
                         std::uint64_t fallback) const;

  // Canonical serialization (sorted sections and keys) of a section subset;
  // the basis for stage config hashes.
  std::string canonical(const std::vector<std::string>& sections) const;
  std::string canonical_all() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return data_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

struct PipelineConfig {
  ConfigDoc doc;
  std::string output_dir = "out";
  std::uint64_t seed = 7;
  bool force = false;

  // Typed views assembled from the document.
  std::optional<std::string> nodes_path;  // absent -> synthetic data
  std::optional<std::string> edges_path;
  std::vector<std::string> id_classes;    // file-backed ingest only
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::string domain_hint = "academic computer science";
  SynthConfig synth;
  FeatureConfig features;
  AlignmentConfig alignment;
  ExposureConfig exposure;
  DetectorConfig detector;
  std::size_t eval_bins = 20;

  std::string backend_kind = "keyword-oracle";
  std::vector<std::pair<std::string, std::string>> oracle_rules;  // empty -> derived
  std::string oracle_fallback;
  RemoteBackendConfig remote;
  std::string cache_dir;
  RetryPolicy retry;

  static PipelineConfig from_doc(ConfigDoc doc);
  static PipelineConfig from_file(const std::string& path);
};

enum class Stage { Ingest, Align, Expose, Train, Eval };

const char* stage_name(Stage s);
std::vector<Stage> parse_stages(const std::string& spec);  // "all" or comma list

struct StageOutcome {
  Stage stage;
  bool skipped = false;  // up to date per manifest
  std::vector<std::string> files;
};

// Runs the requested stages in order against the config's output directory,
// writing artifacts and the manifest. Stages consume the previous stage's
// persisted artifacts; a missing upstream artifact raises DependencyError
// naming the stage that should have produced it.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& config,
                                       const std::vector<Stage>& stages);

struct SweepPoint {
  std::map<std::string, std::string> overrides;  // "section.key" -> value
  std::string directory;
  std::string status;  // "ok" or "error: ..."
  double auroc = 0.0;
  double fpr95 = 0.0;
  std::size_t query_count = 0;
};

struct SweepGrid {
  // Each axis: "section.key" plus the list of values; points are the cross
  // product, capped at max_points.
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::size_t max_points = 64;
};

SweepGrid parse_sweep_axes(const std::vector<std::string>& axis_specs, std::size_t max_points);

// Reuses the parent run's ingest+align artifacts and evaluates
// expose->train->eval per grid point in its own subdirectory. Point failures
// are recorded and the sweep continues.
std::vector<SweepPoint> run_sweep(const PipelineConfig& config, const SweepGrid& grid);

void save_sweep_csv(const std::vector<SweepPoint>& points, const SweepGrid& grid,
                    const std::string& path);

// Loaders shared by stages and tests.
TextAttributedGraph load_stage_graph(const std::string& dir);
Matrix load_embeddings(const TextAttributedGraph& g, const std::string& path);
void save_embeddings(const TextAttributedGraph& g, const Matrix& z, const std::string& path);

std::uint64_t file_hash(const std::string& path);

}  // namespace lgplug
