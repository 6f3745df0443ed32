#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgplug/exposure.hpp"
#include "lgplug/matrix.hpp"
#include "lgplug/tag_data.hpp"

namespace lgplug {

// Per-node OOD scores; larger means more OOD-like throughout.
using ScoreVector = std::vector<double>;

// s_i = −max_c softmax(logits_i)_c
ScoreVector msp_score(const Matrix& logits);

// s_i = −T·log Σ_c exp(logits_ic / T)
ScoreVector energy_score(const Matrix& logits, double temperature = 1.0);

// k rounds of s ← α·s + (1−α)·P·s with P the row-normalized adjacency with
// self-loops. Output stays inside [min(s), max(s)].
ScoreVector propagate_scores(const ScoreVector& scores, const TextAttributedGraph& g,
                             double self_weight, std::size_t hops);

// Margin penalty: mean over ID scores of relu(s−Δ_id)² plus mean over
// exposure scores of relu(Δ_ood−s)². An empty exposure side contributes the
// ID term only (callers treat that as a diagnostic situation).
double regularization_loss(std::span<const double> id_scores,
                           std::span<const double> exposure_scores, double margin_id,
                           double margin_ood);

// true = OOD (s > threshold).
std::vector<bool> detect_ood(std::span<const double> scores, double threshold);

// Decision per test node (test_id then test_ood order); scores must cover the
// whole test partition.
std::vector<std::pair<NodeId, bool>> detect_ood(
    const std::unordered_map<NodeId, double>& scores, const SplitSpec& split, double threshold);

struct DetectorConfig {
  std::string scorer = "energy";  // "msp" | "energy"
  double energy_temperature = 1.0;
  bool propagate = true;
  double self_weight = 0.5;  // α
  std::size_t hops = 2;      // k
  double margin_id = -5.0;   // Δ1
  double margin_ood = -1.0;  // Δ2
  double reg_weight = 1.0;   // β
  // Scores feeding the regularizer are pre-propagation by default;
  // propagation is an evaluation-time transform.
  bool regularize_propagated = false;
  bool use_aligned_embeddings = false;
  std::size_t hidden_dim = 64;
  double leaky_slope = 0.01;
  double learning_rate = 1e-2;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 300;
  // The margin term dominates the first tens of epochs when reg_weight > 0;
  // patience must outlast that plateau or early stopping freezes an
  // untrained classifier.
  std::size_t patience = 100;
  double convergence_tol = 1e-5;
  std::uint64_t seed = 5;

  void validate() const;
};

struct DetectorEpochStats {
  std::size_t epoch = 0;
  double supervised_loss = 0.0;
  double reg_loss = 0.0;
  double total_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct DetectorResult {
  Matrix logits;       // final logits for every node
  ScoreVector scores;  // final scores (post-propagation when configured)
  ScoreVector raw_scores;  // pre-propagation
  std::vector<std::string> class_order;  // column order of the logits
  std::vector<DetectorEpochStats> log;
  std::size_t best_epoch = 0;
  std::vector<std::pair<std::string, Matrix>> classifier_state;
};

// Evaluation-time score post-processing hook. When supplied it replaces the
// built-in propagation step, so external detector variants can plug their
// own topology transforms in without touching the training path.
using ScoreTransform =
    std::function<ScoreVector(const ScoreVector&, const TextAttributedGraph&)>;

// Two-layer message-passing classifier over the ID classes, trained with
// cross-entropy on the train split plus reg_weight times the margin penalty
// between train-ID scores and exposure scores. reg_weight = 0 reproduces the
// unregularized baseline bit for bit.
DetectorResult train_detector(const TextAttributedGraph& g, const Matrix& features,
                              const SplitSpec& split, const ExposureSet& exposure,
                              const DetectorConfig& config,
                              const ScoreTransform& score_transform = {});

void save_detector_log(const std::vector<DetectorEpochStats>& log, const std::string& path);
void save_scores(const TextAttributedGraph& g, const ScoreVector& scores,
                 const std::string& path);
ScoreVector load_scores(const TextAttributedGraph& g, const std::string& path);

}  // namespace lgplug
