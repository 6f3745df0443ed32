#pragma once

#include <cstdint>
#include <vector>

#include "lgplug/embedding.hpp"
#include "lgplug/matrix.hpp"
#include "lgplug/tag_data.hpp"

namespace lgplug {

struct AlignmentConfig {
  double edge_loss_weight = 1.0;  // trade-off between node- and edge-level terms
  std::size_t batch_size = 64;
  double learning_rate = 2e-5;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 100;
  double convergence_tol = 1e-4;
  std::size_t patience = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 3;
  double initial_temperature = 14.3;
  double max_temperature = 100.0;
  GraphEncoderConfig graph_encoder;
  TextEncoderConfig text_encoder;

  void validate() const;
};

// Λ1 = (Z̃ H̃ᵀ)·exp(log_temperature); rows L2-normalized first, all-zero rows
// normalize to zero.
Matrix node_similarity(const Matrix& z, const Matrix& h, double log_temperature);

// Symmetric contrastive loss over a square similarity matrix with the
// diagonal as targets: ½·CE(Λ, diag) + ½·CE(Λᵀ, diag).
double node_alignment_loss(const Matrix& lambda1);

// Mean over edges of the squared gap between endpoint cosine similarity in
// Z-space and in H-space. Empty edge set contributes 0.
double edge_alignment_loss(const Matrix& z, const Matrix& h,
                           const std::vector<std::pair<std::size_t, std::size_t>>& edges);

struct AlignmentEpochStats {
  std::size_t epoch = 0;
  double node_loss = 0.0;
  double edge_loss = 0.0;
  double total_loss = 0.0;
  double val_loss = 0.0;
};

struct AlignmentResult {
  EncoderParams params;
  std::vector<AlignmentEpochStats> log;
  std::size_t best_epoch = 0;
};

// Joint encoder training by mini-batch Adam. The in-batch edge term only
// sees edges with both endpoints sampled into the batch; the parameter state
// returned is the one with the best validation loss.
AlignmentResult train_alignment(const TextAttributedGraph& g, const Matrix& features,
                                const AlignmentConfig& config);

void save_alignment_log(const std::vector<AlignmentEpochStats>& log, const std::string& path);

}  // namespace lgplug
