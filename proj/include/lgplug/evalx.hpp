#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgplug/tag_data.hpp"

namespace lgplug {

// Probability that a random OOD node outscores a random ID node, ties ½
// (Mann–Whitney). Requires at least one node of each kind.
double auroc(std::span<const double> scores, std::span<const bool> is_ood);

// (FPR at the target ID true-positive rate, threshold). Positives are ID
// nodes classified ID when s ≤ threshold; the threshold is the smallest
// observed score reaching ID-TPR ≥ target; the FPR is the fraction of OOD
// nodes at or below it.
std::pair<double, double> fpr_at_tpr(std::span<const double> scores,
                                     std::span<const bool> is_ood, double tpr_target = 0.95);

struct EvalReport {
  double auroc = 0.0;
  double fpr95 = 0.0;
  double threshold_at_tpr95 = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::size_t bins = 0;
  std::vector<double> bin_centers;
  std::vector<double> id_density;   // masses summing to 1
  std::vector<double> ood_density;  // masses summing to 1

  void save(const std::string& path) const;
  static EvalReport load(const std::string& path);
};

// Metrics over test_id ∪ test_ood plus equal-width score histograms over the
// combined [min, max] range.
EvalReport evaluate(const std::unordered_map<NodeId, double>& scores, const SplitSpec& split,
                    std::size_t bins = 20);

// Two-series density CSV (bin_center, id_density, ood_density).
void save_density_csv(const EvalReport& report, const std::string& path);

// Histogram helper shared by evaluate and the density artifact.
void build_histograms(std::span<const double> id_scores, std::span<const double> ood_scores,
                      std::size_t bins, std::vector<double>& centers, std::vector<double>& id_d,
                      std::vector<double>& ood_d);

}  // namespace lgplug
