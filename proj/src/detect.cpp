#include "lgplug/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "lgplug/autograd.hpp"
#include "lgplug/embedding.hpp"
#include "lgplug/kernels.hpp"
#include "lgplug/rng.hpp"

namespace lgplug {

ScoreVector msp_score(const Matrix& logits) {
  if (logits.cols() < 1) throw ShapeError("msp_score: at least one class required");
  ScoreVector s(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* r = logits.row(i);
    const double mx = kern::max(r, logits.cols());
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(r[j] - mx);
    s[i] = -1.0 / z;  // max softmax prob = exp(mx-mx)/z
  }
  return s;
}

ScoreVector energy_score(const Matrix& logits, double temperature) {
  if (temperature <= 0.0) throw ConfigError("energy_score: temperature must be > 0");
  ScoreVector s(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* r = logits.row(i);
    double mx = r[0] / temperature;
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, r[j] / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(r[j] / temperature - mx);
    s[i] = -temperature * (std::log(z) + mx);
  }
  return s;
}

ScoreVector propagate_scores(const ScoreVector& scores, const TextAttributedGraph& g,
                             double self_weight, std::size_t hops) {
  if (scores.size() != g.num_nodes())
    throw ShapeError("propagate_scores: one score per node required");
  if (self_weight < 0.0 || self_weight > 1.0)
    throw ConfigError("propagate_scores: self_weight must lie in [0,1]");
  const auto adj = g.adjacency();
  ScoreVector cur = scores;
  ScoreVector next(cur.size());
  for (std::size_t round = 0; round < hops; ++round) {
    for (std::size_t i = 0; i < cur.size(); ++i) {
      // Row-normalized adjacency with a self-loop; isolated nodes only see
      // themselves and keep their score.
      double acc = cur[i];
      for (std::size_t j : adj[i]) acc += cur[j];
      acc /= static_cast<double>(adj[i].size() + 1);
      next[i] = self_weight * cur[i] + (1.0 - self_weight) * acc;
    }
    std::swap(cur, next);
  }
  return cur;
}

double regularization_loss(std::span<const double> id_scores,
                           std::span<const double> exposure_scores, double margin_id,
                           double margin_ood) {
  if (margin_id > margin_ood)
    throw ConfigError("regularization_loss: margin_id must not exceed margin_ood");
  if (id_scores.empty()) throw ConfigError("regularization_loss: empty ID score set");
  double id_term = 0.0;
  for (double s : id_scores) {
    const double r = std::max(0.0, s - margin_id);
    id_term += r * r;
  }
  id_term /= static_cast<double>(id_scores.size());
  if (exposure_scores.empty()) return id_term;
  double exp_term = 0.0;
  for (double s : exposure_scores) {
    const double r = std::max(0.0, margin_ood - s);
    exp_term += r * r;
  }
  exp_term /= static_cast<double>(exposure_scores.size());
  return id_term + exp_term;
}

std::vector<bool> detect_ood(std::span<const double> scores, double threshold) {
  std::vector<bool> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold;
  return out;
}

std::vector<std::pair<NodeId, bool>> detect_ood(
    const std::unordered_map<NodeId, double>& scores, const SplitSpec& split, double threshold) {
  std::vector<std::pair<NodeId, bool>> out;
  auto judge = [&](const std::vector<NodeId>& ids) {
    for (const auto& id : ids) {
      auto it = scores.find(id);
      if (it == scores.end()) throw IntegrityError("detect: missing score for test node " + id);
      out.emplace_back(id, it->second > threshold);
    }
  };
  judge(split.test_id);
  judge(split.test_ood);
  return out;
}

void DetectorConfig::validate() const {
  if (scorer != "msp" && scorer != "energy")
    throw ConfigError("detector: scorer must be 'msp' or 'energy'");
  if (energy_temperature <= 0.0) throw ConfigError("detector: energy_temperature must be > 0");
  if (self_weight < 0.0 || self_weight > 1.0)
    throw ConfigError("detector: self_weight must lie in [0,1]");
  if (margin_id > margin_ood) throw ConfigError("detector: margin_id must not exceed margin_ood");
  if (reg_weight < 0.0) throw ConfigError("detector: reg_weight must be >= 0");
  if (learning_rate <= 0.0) throw ConfigError("detector: learning_rate must be > 0");
  if (max_epochs < 1) throw ConfigError("detector: max_epochs must be >= 1");
}

namespace {

ad::Var score_var(const std::string& scorer, ad::Var logits, double temperature) {
  if (scorer == "energy") return ad::neg_logsumexp_rows(logits, temperature);
  return ad::negate(ad::row_max(ad::softmax_rows(logits)));
}

// One propagation round as a sparse operator: M = α·I + (1−α)·P with P the
// row-normalized adjacency including self-loops. Matches propagate_scores.
SparseMatrix propagation_operator(const TextAttributedGraph& g, double self_weight) {
  const auto adj = g.adjacency();
  SparseMatrix s;
  s.n = g.num_nodes();
  s.rowptr.resize(s.n + 1, 0);
  std::vector<std::vector<std::size_t>> rows(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    rows[i] = adj[i];
    rows[i].push_back(i);
    std::sort(rows[i].begin(), rows[i].end());
    s.rowptr[i + 1] = s.rowptr[i] + rows[i].size();
  }
  for (std::size_t i = 0; i < s.n; ++i) {
    const double share = (1.0 - self_weight) / static_cast<double>(rows[i].size());
    for (std::size_t j : rows[i]) {
      s.colidx.push_back(j);
      s.vals.push_back(share + (j == i ? self_weight : 0.0));
    }
  }
  return s;
}

}  // namespace

DetectorResult train_detector(const TextAttributedGraph& g, const Matrix& features,
                              const SplitSpec& split, const ExposureSet& exposure,
                              const DetectorConfig& config,
                              const ScoreTransform& score_transform) {
  config.validate();
  if (split.train.empty()) throw ConfigError("detector: train split is empty");
  if (config.reg_weight > 0.0 && exposure.node_ids.empty())
    throw ConfigError("detector: reg_weight > 0 requires a non-empty exposure set");
  if (features.rows() != g.num_nodes())
    throw ShapeError("detector: one feature row per node required");

  const std::size_t n_classes = split.id_classes.size();
  std::unordered_map<std::string, std::size_t> class_index;
  for (std::size_t c = 0; c < n_classes; ++c) class_index[split.id_classes[c]] = c;

  auto labeled_targets = [&](const std::vector<NodeId>& ids) {
    std::vector<std::size_t> rows, targets;
    rows.reserve(ids.size());
    targets.reserve(ids.size());
    for (const auto& id : ids) {
      const std::size_t row = g.index(id);
      auto it = g.labels.find(id);
      if (it == g.labels.end()) throw IntegrityError("detector: unlabeled node in split: " + id);
      auto ci = class_index.find(it->second);
      if (ci == class_index.end())
        throw IntegrityError("detector: node " + id + " labeled outside the ID classes");
      rows.push_back(row);
      targets.push_back(ci->second);
    }
    return std::make_pair(rows, targets);
  };
  const auto [train_rows, train_targets] = labeled_targets(split.train);
  const auto [val_rows, val_targets] = labeled_targets(split.val);

  std::vector<std::size_t> exposure_rows;
  for (const auto& id : exposure.node_ids) exposure_rows.push_back(g.index(id));

  const SparseMatrix a_norm = normalized_adjacency(g);
  ad::ParamStore store;
  GraphEncoderConfig cls_cfg;
  cls_cfg.layers = 2;
  cls_cfg.hidden_dim = config.hidden_dim;
  cls_cfg.out_dim = n_classes;
  cls_cfg.leaky_slope = config.leaky_slope;
  GraphEncoder classifier(cls_cfg, features.cols(), config.seed, store, "clf.");
  const ad::Var x_const = ad::constant(features);
  SparseMatrix prop_op;
  if (config.reg_weight > 0.0 && config.regularize_propagated)
    prop_op = propagation_operator(g, config.self_weight);

  ad::Adam opt({.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});

  DetectorResult result;
  result.class_order = split.id_classes;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_state;
  auto snapshot = [&]() {
    best_state.clear();
    for (const auto& [name, v] : store.items()) best_state.push_back(v.value());
  };
  snapshot();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    store.zero_grads();
    ad::Var logits = classifier.forward(a_norm, x_const, /*linear_output=*/true);
    ad::Var sup = ad::cross_entropy(ad::rows_gather(logits, train_rows), train_targets);

    DetectorEpochStats stats;
    stats.epoch = epoch;
    stats.supervised_loss = sup.value()(0, 0);

    ad::Var total = sup;
    if (config.reg_weight > 0.0) {
      // Margin penalty on the configured scorer's outputs for train-ID and
      // exposure nodes, recomputed every step from the live logits.
      ad::Var s_all = score_var(config.scorer, logits, config.energy_temperature);
      if (config.regularize_propagated) {
        for (std::size_t round = 0; round < config.hops; ++round)
          s_all = ad::spmm(prop_op, s_all);
      }
      ad::Var s_id = ad::rows_gather(s_all, train_rows);
      ad::Var s_exp = ad::rows_gather(s_all, exposure_rows);
      ad::Var id_term = ad::mean_all(ad::square(ad::relu(ad::add_scalar(s_id, -config.margin_id))));
      ad::Var exp_term =
          ad::mean_all(ad::square(ad::relu(ad::sub_from_scalar(config.margin_ood, s_exp))));
      ad::Var reg = ad::add(id_term, exp_term);
      stats.reg_loss = reg.value()(0, 0);
      total = ad::add(sup, ad::scale(reg, config.reg_weight));
    }
    stats.total_loss = total.value()(0, 0);
    if (!std::isfinite(stats.total_loss))
      throw NumericError("detector: non-finite loss at epoch " + std::to_string(epoch));

    ad::backward(total);
    opt.step(store);

    // Validation supervised loss and accuracy on frozen weights.
    {
      ad::Var vlogits = classifier.forward(a_norm, x_const, true);
      ad::Var vsel = ad::rows_gather(vlogits, val_rows);
      if (!val_rows.empty()) {
        stats.val_loss = ad::cross_entropy(vsel, val_targets).value()(0, 0);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < val_rows.size(); ++i) {
          const double* r = vsel.value().row(i);
          std::size_t arg = 0;
          for (std::size_t j = 1; j < n_classes; ++j)
            if (r[j] > r[arg]) arg = j;
          if (arg == val_targets[i]) ++correct;
        }
        stats.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_rows.size());
      } else {
        stats.val_loss = stats.supervised_loss;
      }
    }
    result.log.push_back(stats);

    if (stats.val_loss < best_val - config.convergence_tol) {
      best_val = stats.val_loss;
      result.best_epoch = epoch;
      stale = 0;
      snapshot();
    } else if (++stale >= config.patience) {
      break;
    }
  }

  std::size_t k = 0;
  for (auto& [name, v] : store.items()) v.value() = best_state[k++];

  result.logits = classifier.forward(a_norm, x_const, true).value();
  result.raw_scores = config.scorer == "energy"
                          ? energy_score(result.logits, config.energy_temperature)
                          : msp_score(result.logits);
  if (score_transform) {
    result.scores = score_transform(result.raw_scores, g);
  } else {
    result.scores = config.propagate
                        ? propagate_scores(result.raw_scores, g, config.self_weight, config.hops)
                        : result.raw_scores;
  }
  for (const auto& [name, v] : store.items())
    result.classifier_state.emplace_back(name, v.value());
  return result;
}

void save_detector_log(const std::vector<DetectorEpochStats>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write detector log: " + path);
  out << "epoch,supervised_loss,reg_loss,total_loss,val_loss,val_accuracy\n";
  char buf[200];
  for (const auto& s : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.epoch,
                  s.supervised_loss, s.reg_loss, s.total_loss, s.val_loss, s.val_accuracy);
    out << buf;
  }
}

void save_scores(const TextAttributedGraph& g, const ScoreVector& scores,
                 const std::string& path) {
  if (scores.size() != g.num_nodes())
    throw ShapeError("save_scores: one score per node required");
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write scores: " + path);
  char buf[64];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", scores[i]);
    out << g.node_ids[i] << '\t' << buf << "\n";
  }
}

ScoreVector load_scores(const TextAttributedGraph& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scores: " + path);
  ScoreVector scores(g.num_nodes(), std::numeric_limits<double>::quiet_NaN());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("scores " + path + ":" + std::to_string(lineno) +
                       ": expected 'id<TAB>score'");
    const NodeId id = line.substr(0, tab);
    scores[g.index(id)] = std::stod(line.substr(tab + 1));
  }
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::isnan(scores[i]))
      throw IntegrityError("scores file missing node " + g.node_ids[i]);
  return scores;
}

}  // namespace lgplug
