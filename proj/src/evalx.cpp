#include "lgplug/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "lgplug/errors.hpp"

namespace lgplug {

using nlohmann::json;

double auroc(std::span<const double> scores, std::span<const bool> is_ood) {
  if (scores.size() != is_ood.size()) throw ShapeError("auroc: size mismatch");
  std::size_t n_id = 0, n_ood = 0;
  for (bool b : is_ood) (b ? n_ood : n_id)++;
  if (n_id == 0 || n_ood == 0)
    throw NumericError("auroc: need at least one ID and one OOD score");

  // Rank-sum formulation with midranks for ties.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_ood = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (is_ood[order[k]]) rank_sum_ood += midrank;
    i = j;
  }
  const double u = rank_sum_ood - 0.5 * static_cast<double>(n_ood) *
                                      static_cast<double>(n_ood + 1);
  return u / (static_cast<double>(n_id) * static_cast<double>(n_ood));
}

std::pair<double, double> fpr_at_tpr(std::span<const double> scores,
                                     std::span<const bool> is_ood, double tpr_target) {
  if (scores.size() != is_ood.size()) throw ShapeError("fpr_at_tpr: size mismatch");
  if (tpr_target <= 0.0 || tpr_target > 1.0)
    throw ConfigError("fpr_at_tpr: target must lie in (0,1]");
  std::vector<double> id_scores, ood_scores;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (is_ood[i] ? ood_scores : id_scores).push_back(scores[i]);
  if (id_scores.empty() || ood_scores.empty())
    throw NumericError("fpr_at_tpr: need at least one ID and one OOD score");

  // Candidate thresholds are the observed scores; the smallest one whose
  // ID-TPR reaches the target wins.
  std::vector<double> candidates(scores.begin(), scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::sort(id_scores.begin(), id_scores.end());
  std::sort(ood_scores.begin(), ood_scores.end());

  const double need = tpr_target * static_cast<double>(id_scores.size()) -
                      1e-9 * static_cast<double>(id_scores.size());
  for (double t : candidates) {
    const auto id_below =
        std::upper_bound(id_scores.begin(), id_scores.end(), t) - id_scores.begin();
    if (static_cast<double>(id_below) >= need) {
      const auto ood_below =
          std::upper_bound(ood_scores.begin(), ood_scores.end(), t) - ood_scores.begin();
      return {static_cast<double>(ood_below) / static_cast<double>(ood_scores.size()), t};
    }
  }
  // tpr_target ≤ 1 and the largest score admits every ID node, so this line
  // is unreachable; keep the compiler satisfied.
  return {1.0, candidates.back()};
}

void build_histograms(std::span<const double> id_scores, std::span<const double> ood_scores,
                      std::size_t bins, std::vector<double>& centers, std::vector<double>& id_d,
                      std::vector<double>& ood_d) {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double s : id_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  for (double s : ood_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (!(hi > lo)) {  // constant scores collapse into one bucket
    bins = 1;
    hi = lo + 1.0;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  centers.assign(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) centers[b] = lo + (static_cast<double>(b) + 0.5) * width;
  auto fill = [&](std::span<const double> xs, std::vector<double>& d) {
    d.assign(bins, 0.0);
    if (xs.empty()) return;
    for (double s : xs) {
      std::size_t b = static_cast<std::size_t>((s - lo) / width);
      if (b >= bins) b = bins - 1;  // right edge
      d[b] += 1.0;
    }
    for (double& v : d) v /= static_cast<double>(xs.size());
  };
  fill(id_scores, id_d);
  fill(ood_scores, ood_d);
}

EvalReport evaluate(const std::unordered_map<NodeId, double>& scores, const SplitSpec& split,
                    std::size_t bins) {
  if (split.test_id.empty() && split.test_ood.empty())
    throw ConfigError("evaluate: empty test partition");
  std::vector<double> all;
  std::vector<double> id_scores, ood_scores;
  auto pull = [&](const std::vector<NodeId>& ids, bool ood) {
    for (const auto& id : ids) {
      auto it = scores.find(id);
      if (it == scores.end())
        throw IntegrityError("evaluate: missing score for test node " + id);
      all.push_back(it->second);
      (ood ? ood_scores : id_scores).push_back(it->second);
    }
  };
  pull(split.test_id, false);
  pull(split.test_ood, true);
  // span<const bool> needs contiguous plain bools, which vector<bool> is not.
  std::unique_ptr<bool[]> flags(new bool[all.size()]);
  for (std::size_t i = 0; i < all.size(); ++i) flags[i] = i >= split.test_id.size();
  const std::span<const bool> flag_view(flags.get(), all.size());

  EvalReport r;
  r.n_id = id_scores.size();
  r.n_ood = ood_scores.size();
  r.auroc = auroc(all, flag_view);
  const auto [fpr, thr] = fpr_at_tpr(all, flag_view, 0.95);
  r.fpr95 = fpr;
  r.threshold_at_tpr95 = thr;
  build_histograms(id_scores, ood_scores, bins, r.bin_centers, r.id_density, r.ood_density);
  r.bins = r.bin_centers.size();
  return r;
}

void EvalReport::save(const std::string& path) const {
  json doc;
  doc["auroc"] = auroc;
  doc["fpr95"] = fpr95;
  doc["threshold_at_tpr95"] = threshold_at_tpr95;
  doc["n_id"] = n_id;
  doc["n_ood"] = n_ood;
  doc["bins"] = bins;
  doc["bin_centers"] = bin_centers;
  doc["id_density"] = id_density;
  doc["ood_density"] = ood_density;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write report: " + path);
  out << doc.dump(2) << "\n";
}

EvalReport EvalReport::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("malformed report " + path + ": " + e.what());
  }
  EvalReport r;
  r.auroc = doc.at("auroc").get<double>();
  r.fpr95 = doc.at("fpr95").get<double>();
  r.threshold_at_tpr95 = doc.at("threshold_at_tpr95").get<double>();
  r.n_id = doc.at("n_id").get<std::size_t>();
  r.n_ood = doc.at("n_ood").get<std::size_t>();
  r.bins = doc.at("bins").get<std::size_t>();
  r.bin_centers = doc.at("bin_centers").get<std::vector<double>>();
  r.id_density = doc.at("id_density").get<std::vector<double>>();
  r.ood_density = doc.at("ood_density").get<std::vector<double>>();
  return r;
}

void save_density_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write density csv: " + path);
  out << "bin_center,id_density,ood_density\n";
  char buf[120];
  for (std::size_t b = 0; b < report.bins; ++b) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", report.bin_centers[b],
                  report.id_density[b], report.ood_density[b]);
    out << buf;
  }
}

}  // namespace lgplug
