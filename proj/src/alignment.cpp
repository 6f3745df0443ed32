#include "lgplug/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "lgplug/autograd.hpp"
#include "lgplug/kernels.hpp"
#include "lgplug/rng.hpp"

namespace lgplug {

void AlignmentConfig::validate() const {
  if (edge_loss_weight < 0.0) throw ConfigError("alignment: edge_loss_weight must be >= 0");
  if (batch_size < 2) throw ConfigError("alignment: batch_size must be >= 2");
  if (learning_rate <= 0.0) throw ConfigError("alignment: learning_rate must be > 0");
  if (max_epochs < 1) throw ConfigError("alignment: max_epochs must be >= 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("alignment: val_fraction must lie in [0,1)");
}

Matrix node_similarity(const Matrix& z, const Matrix& h, double log_temperature) {
  if (z.rows() != h.rows() || z.cols() != h.cols())
    throw ShapeError("node_similarity: Z and H must have equal shapes");
  Matrix sim = matmul_nt(row_l2_normalized(z), row_l2_normalized(h));
  scale_inplace(sim, std::exp(log_temperature));
  return sim;
}

double node_alignment_loss(const Matrix& lambda1) {
  if (lambda1.rows() != lambda1.cols() || lambda1.rows() == 0)
    throw ShapeError("node_alignment_loss: square non-empty matrix required");
  const std::size_t n = lambda1.rows();
  auto ce_diag = [n](const Matrix& m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* r = m.row(i);
      const double mx = kern::max(r, n);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += std::exp(r[j] - mx);
      total += std::log(z) - (r[i] - mx);
    }
    return total / static_cast<double>(n);
  };
  return 0.5 * (ce_diag(lambda1) + ce_diag(transpose(lambda1)));
}

double edge_alignment_loss(const Matrix& z, const Matrix& h,
                           const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (z.rows() != h.rows()) throw ShapeError("edge_alignment_loss: row count mismatch");
  if (edges.empty()) return 0.0;
  const Matrix zn = row_l2_normalized(z);
  const Matrix hn = row_l2_normalized(h);
  double total = 0.0;
  for (const auto& [a, b] : edges) {
    if (a >= zn.rows() || b >= zn.rows())
      throw ShapeError("edge_alignment_loss: edge endpoint out of range");
    const double sz = kern::dot(zn.row(a), zn.row(b), zn.cols());
    const double sh = kern::dot(hn.row(a), hn.row(b), hn.cols());
    const double d = sz - sh;
    total += d * d;
  }
  return total / static_cast<double>(edges.size());
}

namespace {

struct BatchLoss {
  ad::Var total;
  double node_value = 0.0;
  double edge_value = 0.0;
};

// Builds the training objective for one batch of node indices. Text rows
// are encoded per node and stacked; the edge term uses only in-batch edges.
BatchLoss batch_objective(const EncoderParams& params, const SparseMatrix& a_norm,
                          const ad::Var& features, const TextAttributedGraph& g,
                          const std::vector<std::size_t>& batch, double edge_loss_weight) {
  ad::Var z_full = params.graph_encoder.forward(a_norm, features);
  ad::Var z_batch = ad::rows_gather(z_full, batch);

  std::vector<ad::Var> text_rows;
  text_rows.reserve(batch.size());
  for (std::size_t node : batch) {
    const std::vector<int> ids =
        params.tokenizer.encode(g.text_of(node), params.text_cfg.max_len);
    text_rows.push_back(params.text_encoder.forward(ids));
  }
  ad::Var h_batch = ad::concat_rows(text_rows);

  ad::Var zn = ad::row_l2_normalize(z_batch);
  ad::Var hn = ad::row_l2_normalize(h_batch);

  ad::Var sim = ad::scale_by(ad::matmul_nt(zn, hn), ad::exp_elem(params.log_temperature));
  ad::Var node_loss = ad::scale(
      ad::add(ad::cross_entropy_identity(sim), ad::cross_entropy_identity(ad::transpose(sim))),
      0.5);

  BatchLoss out;
  out.node_value = node_loss.value()(0, 0);

  if (edge_loss_weight > 0.0) {
    std::unordered_map<std::size_t, std::size_t> local;
    for (std::size_t i = 0; i < batch.size(); ++i) local[batch[i]] = i;
    std::vector<std::size_t> src, dst;
    for (const auto& [a, b] : g.edges) {
      auto ia = local.find(a), ib = local.find(b);
      if (ia != local.end() && ib != local.end()) {
        src.push_back(ia->second);
        dst.push_back(ib->second);
      }
    }
    if (!src.empty()) {
      ad::Var sz = ad::row_dot(ad::rows_gather(zn, src), ad::rows_gather(zn, dst));
      ad::Var sh = ad::row_dot(ad::rows_gather(hn, src), ad::rows_gather(hn, dst));
      ad::Var edge_loss = ad::mean_all(ad::square(ad::sub(sz, sh)));
      out.edge_value = edge_loss.value()(0, 0);
      out.total = ad::add(node_loss, ad::scale(edge_loss, edge_loss_weight));
      return out;
    }
  }
  out.total = node_loss;
  return out;
}

}  // namespace

AlignmentResult train_alignment(const TextAttributedGraph& g, const Matrix& features,
                                const AlignmentConfig& config) {
  config.validate();
  if (g.num_nodes() < 2) throw ConfigError("alignment: graph must have at least 2 nodes");
  if (features.rows() != g.num_nodes())
    throw ShapeError("alignment: one feature row per node required");

  AlignmentResult result;
  result.params = EncoderParams::init(config.graph_encoder, config.text_encoder, features.cols(),
                                      g.texts, config.seed, config.initial_temperature);
  EncoderParams& params = result.params;

  const SparseMatrix a_norm = normalized_adjacency(g);
  const ad::Var x_const = ad::constant(features);

  // Alignment is self-supervised over all nodes; a seeded slice is held out
  // to drive convergence tracking and best-state selection.
  Rng rng(mix_seed(config.seed, 0xA11));
  std::vector<std::size_t> pool(g.num_nodes());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  rng.shuffle(pool);
  std::size_t n_val = static_cast<std::size_t>(config.val_fraction * g.num_nodes());
  if (g.num_nodes() - n_val < 2) n_val = 0;
  std::vector<std::size_t> val_nodes(pool.begin(), pool.begin() + n_val);
  std::vector<std::size_t> train_nodes(pool.begin() + n_val, pool.end());
  std::sort(val_nodes.begin(), val_nodes.end());
  std::sort(train_nodes.begin(), train_nodes.end());

  ad::Adam opt({.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  const double max_log_temp = std::log(config.max_temperature);

  auto eval_val = [&]() {
    const auto& probe = val_nodes.size() >= 2 ? val_nodes : train_nodes;
    BatchLoss l =
        batch_objective(params, a_norm, x_const, g, probe, config.edge_loss_weight);
    return l.total.value()(0, 0);
  };

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_state;
  std::size_t stale_epochs = 0;

  auto snapshot = [&]() {
    best_state.clear();
    for (const auto& [name, v] : params.store.items()) best_state.push_back(v.value());
  };
  snapshot();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(train_nodes);
    double epoch_node = 0.0, epoch_edge = 0.0, epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_nodes.size(); start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, train_nodes.size());
      if (stop - start < 2) break;  // node loss is degenerate below 2 nodes
      std::vector<std::size_t> batch(train_nodes.begin() + start, train_nodes.begin() + stop);

      params.store.zero_grads();
      BatchLoss loss =
          batch_objective(params, a_norm, x_const, g, batch, config.edge_loss_weight);
      const double lv = loss.total.value()(0, 0);
      if (!std::isfinite(lv))
        throw NumericError("alignment: non-finite loss at epoch " + std::to_string(epoch) +
                           " (node=" + std::to_string(loss.node_value) +
                           ", edge=" + std::to_string(loss.edge_value) + ")");
      ad::backward(loss.total);
      opt.step(params.store);
      // Contrastive-scale guard: cap exp(log_temperature).
      double& lt = params.log_temperature.value()(0, 0);
      lt = std::min(lt, max_log_temp);

      epoch_node += loss.node_value;
      epoch_edge += loss.edge_value;
      epoch_total += lv;
      ++batches;
    }
    if (batches == 0) throw ConfigError("alignment: batch_size leaves no usable batch");

    AlignmentEpochStats stats;
    stats.epoch = epoch;
    stats.node_loss = epoch_node / static_cast<double>(batches);
    stats.edge_loss = epoch_edge / static_cast<double>(batches);
    stats.total_loss = epoch_total / static_cast<double>(batches);
    stats.val_loss = eval_val();
    result.log.push_back(stats);

    if (stats.val_loss < best_val - config.convergence_tol) {
      best_val = stats.val_loss;
      result.best_epoch = epoch;
      stale_epochs = 0;
      snapshot();
    } else if (++stale_epochs >= config.patience) {
      break;
    }
  }

  // Restore the best-validation state.
  std::size_t k = 0;
  for (auto& [name, v] : params.store.items()) v.value() = best_state[k++];
  return result;
}

void save_alignment_log(const std::vector<AlignmentEpochStats>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write alignment log: " + path);
  out << "epoch,node_loss,edge_loss,total_loss,val_loss\n";
  char buf[160];
  for (const auto& s : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", s.epoch, s.node_loss,
                  s.edge_loss, s.total_loss, s.val_loss);
    out << buf;
  }
}

}  // namespace lgplug
