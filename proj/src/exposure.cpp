#include "lgplug/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <unordered_set>

#include "lgplug/kernels.hpp"
#include "lgplug/rng.hpp"

namespace lgplug {

using nlohmann::json;

namespace {

std::size_t nearest_centroid(const Matrix& points, std::size_t row, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = kern::l2sqr(points.row(row), centroids.row(c), points.cols());
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Matrix means_of(const Matrix& points, const std::vector<std::size_t>& labels,
                std::size_t num_clusters) {
  Matrix centroids(num_clusters, points.cols());
  std::vector<std::size_t> counts(num_clusters, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    kern::add(points.row(i), centroids.row(labels[i]), points.cols());
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < num_clusters; ++c) {
    if (counts[c] > 0)
      kern::scale(1.0 / static_cast<double>(counts[c]), centroids.row(c), points.cols());
  }
  return centroids;
}

}  // namespace

ClusterAssignment cluster_embeddings(const Matrix& points, std::size_t num_clusters,
                                     std::uint64_t seed, std::size_t max_iters) {
  if (num_clusters < 1) throw ConfigError("kmeans: cluster count must be >= 1");
  if (points.rows() < num_clusters)
    throw ConfigError("kmeans: fewer points (" + std::to_string(points.rows()) +
                      ") than clusters (" + std::to_string(num_clusters) + ")");
  const std::size_t n = points.rows();
  Rng rng(seed);

  // k-means++ seeding.
  Matrix centroids(num_clusters, points.cols());
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  {
    const std::size_t first = rng.below(n);
    std::copy_n(points.row(first), points.cols(), centroids.row(0));
    for (std::size_t c = 1; c < num_clusters; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = kern::l2sqr(points.row(i), centroids.row(c - 1), points.cols());
        min_d[i] = std::min(min_d[i], d);
        total += min_d[i];
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += min_d[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.below(n);  // all points coincide with chosen centroids
      }
      std::copy_n(points.row(pick), points.cols(), centroids.row(c));
    }
  }

  std::vector<std::size_t> labels(n, 0);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_centroid(points, i, centroids);
      if (c != labels[i]) {
        labels[i] = c;
        changed = true;
      }
    }

    // Empty-cluster repair: reseed from the point farthest from its centroid.
    std::vector<std::size_t> counts(num_clusters, 0);
    for (std::size_t l : labels) ++counts[l];
    for (std::size_t c = 0; c < num_clusters; ++c) {
      if (counts[c] > 0) continue;
      std::size_t farthest = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double d = kern::l2sqr(points.row(i), centroids.row(labels[i]), points.cols());
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      --counts[labels[farthest]];
      labels[farthest] = c;
      counts[c] = 1;
      changed = true;
    }

    centroids = means_of(points, labels, num_clusters);
    if (!changed && iter > 0) break;
  }

  ClusterAssignment out;
  out.clusters.assign(num_clusters, {});
  for (std::size_t i = 0; i < n; ++i) out.clusters[labels[i]].push_back(i);
  out.centroids = means_of(points, labels, num_clusters);
  out.objective = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    out.objective += kern::l2sqr(points.row(i), out.centroids.row(labels[i]), points.cols());
  return out;
}

std::vector<std::size_t> near_centroid(const std::vector<std::size_t>& members,
                                       const Matrix& points, const double* centroid,
                                       double ratio, const std::vector<NodeId>& ids) {
  if (members.empty()) throw ConfigError("near_centroid: empty cluster");
  if (ratio <= 0.0 || ratio > 1.0) throw ConfigError("near_centroid: ratio must lie in (0,1]");
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(members.size()) - 1e-12));
  std::vector<std::pair<double, std::size_t>> by_dist;
  by_dist.reserve(members.size());
  for (std::size_t m : members)
    by_dist.emplace_back(kern::l2sqr(points.row(m), centroid, points.cols()), m);
  std::sort(by_dist.begin(), by_dist.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids[a.second] < ids[b.second];
  });
  std::vector<std::size_t> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep && i < by_dist.size(); ++i) out.push_back(by_dist[i].second);
  return out;
}

Codebook::Codebook(const std::vector<std::string>& initial_categories) {
  for (const auto& c : initial_categories) entries_.emplace_back(c, 0);
}

void Codebook::update(const std::string& assigned) {
  if (assigned.empty()) throw ConfigError("codebook: empty category");
  const std::string norm = normalize_category(assigned);
  for (auto& [cat, count] : entries_) {
    if (normalize_category(cat) == norm) {
      ++count;
      return;
    }
  }
  entries_.emplace_back(assigned, 1);
}

std::vector<std::string> Codebook::top_k(std::size_t k) const {
  if (k < 1) throw ConfigError("codebook: top_k must be >= 1");
  // Only matched entries compete for the K slots. The zero-count entries the
  // codebook starts with are trackers, not selections; letting them pad the
  // top-K would veto every unanimous single-category cluster.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].second > 0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries_[a].second > entries_[b].second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < order.size() && i < k; ++i)
    out.push_back(entries_[order[i]].first);
  return out;
}

std::size_t Codebook::total_count() const {
  std::size_t total = 0;
  for (const auto& [cat, count] : entries_) total += count;
  return total;
}

std::vector<std::string> Codebook::categories() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [cat, count] : entries_) out.push_back(cat);
  return out;
}

void ExposureConfig::validate() const {
  if (num_clusters < 1) throw ConfigError("exposure: num_clusters must be >= 1");
  if (near_centroid_ratio <= 0.0 || near_centroid_ratio > 1.0)
    throw ConfigError("exposure: near_centroid_ratio must lie in (0,1]");
  if (query_batch < 1) throw ConfigError("exposure: query_batch must be >= 1");
  if (max_trials < 1) throw ConfigError("exposure: max_trials must be >= 1");
  if (top_k < 1) throw ConfigError("exposure: top_k must be >= 1");
}

void ExposureSet::save(const std::string& path) const {
  json doc;
  doc["node_ids"] = node_ids;
  json prov = json::object();
  for (const auto& [id, p] : provenance)
    prov[id] = {{"cluster", p.cluster}, {"category", p.category}};
  doc["provenance"] = prov;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write exposure set: " + path);
  out << doc.dump(2) << "\n";
}

ExposureSet ExposureSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open exposure set: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("malformed exposure set " + path + ": " + e.what());
  }
  ExposureSet s;
  s.node_ids = doc.at("node_ids").get<std::vector<NodeId>>();
  for (const auto& [id, p] : doc.at("provenance").items()) {
    s.provenance[id] = {p.at("cluster").get<std::size_t>(), p.at("category").get<std::string>()};
  }
  return s;
}

ExposureResult run_exposure(const TextAttributedGraph& g, const Matrix& embeddings,
                            const SplitSpec& split, const ExposureConfig& config,
                            LlmBackend& backend, QueryLedger& ledger,
                            const GatewayOptions& gateway) {
  config.validate();
  if (embeddings.rows() != g.num_nodes())
    throw ShapeError("run_exposure: one embedding row per node required");

  // Clustering pool: every node outside train/val. The test-time pool is
  // exactly the unlabeled set of the transductive task.
  const auto train = split.train_set();
  const auto val = split.val_set();
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const NodeId& id = g.node_ids[i];
    if (!train.count(id) && !val.count(id)) pool.push_back(i);
  }
  if (pool.size() < config.num_clusters)
    throw ConfigError("run_exposure: pool smaller than the cluster count");

  Matrix pool_points(pool.size(), embeddings.cols());
  std::vector<NodeId> pool_ids(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::copy_n(embeddings.row(pool[i]), embeddings.cols(), pool_points.row(i));
    pool_ids[i] = g.node_ids[pool[i]];
  }

  ExposureResult result;
  result.pool = pool;
  result.assignment = cluster_embeddings(pool_points, config.num_clusters,
                                         mix_seed(config.seed, 0xC1), config.kmeans_max_iters);

  std::unordered_set<std::string> id_norm;
  for (const auto& c : split.id_classes) id_norm.insert(normalize_category(c));

  Rng rng(mix_seed(config.seed, 0xE8));
  for (std::size_t m = 0; m < result.assignment.size(); ++m) {
    const auto& members = result.assignment.clusters[m];
    ClusterReport report;
    report.cluster = m;
    report.cluster_size = members.size();
    if (members.empty()) {
      result.clusters.push_back(std::move(report));
      continue;
    }

    std::vector<std::size_t> near = near_centroid(
        members, pool_points, result.assignment.centroids.row(m), config.near_centroid_ratio,
        pool_ids);
    report.near_centroid_size = near.size();

    Codebook book(split.id_classes);
    // Sampling without replacement across trials: one seeded shuffle, then
    // consecutive batches.
    rng.shuffle(near);
    std::vector<std::pair<std::size_t, std::string>> assignments;  // pool-local row, category
    bool failed = false;
    std::size_t cursor = 0;
    for (std::size_t trial = 0; trial < config.max_trials && cursor < near.size(); ++trial) {
      const std::size_t stop = std::min(cursor + config.query_batch, near.size());
      std::vector<std::string> batch_categories;
      for (; cursor < stop; ++cursor) {
        const std::size_t local = near[cursor];
        Prompt prompt =
            build_prompt(g.domain_hint, book.categories(), g.texts[pool[local]]);
        GatewayOptions opts = gateway;
        opts.cluster = static_cast<long>(m);
        opts.node = pool_ids[local];
        std::string category;
        try {
          category = query(backend, prompt, ledger, opts);
        } catch (const BackendError&) {
          failed = true;
          break;
        }
        book.update(category);
        assignments.emplace_back(local, category);
        batch_categories.push_back(normalize_category(category));
        ++report.queried;
      }
      if (failed) break;
      if (!batch_categories.empty() &&
          std::all_of(batch_categories.begin(), batch_categories.end(),
                      [&](const std::string& c) { return c == batch_categories.front(); })) {
        report.early_stopped = true;
        break;
      }
    }
    if (failed) {
      report.skipped_backend_failure = true;
      result.clusters.push_back(std::move(report));
      continue;
    }

    report.top_categories = book.top_k(config.top_k);
    bool disjoint = true;
    std::unordered_set<std::string> top_norm;
    for (const auto& c : report.top_categories) {
      const std::string n = normalize_category(c);
      top_norm.insert(n);
      if (id_norm.count(n)) disjoint = false;
    }
    report.accepted = disjoint && !assignments.empty();

    if (report.accepted) {
      bool unanimous = true;
      for (const auto& [local, cat] : assignments)
        unanimous = unanimous && normalize_category(cat) ==
                                     normalize_category(assignments.front().second);
      for (const auto& [local, cat] : assignments) {
        if (!top_norm.count(normalize_category(cat))) continue;
        const NodeId& id = pool_ids[local];
        if (!result.set.contains(id)) {
          result.set.node_ids.push_back(id);
          result.set.provenance[id] = {m, cat};
        }
      }
      if (config.expose_full_cluster_on_unanimous && unanimous) {
        const std::string& cat = assignments.front().second;
        for (std::size_t local : near) {
          const NodeId& id = pool_ids[local];
          if (!result.set.contains(id)) {
            result.set.node_ids.push_back(id);
            result.set.provenance[id] = {m, cat};
          }
        }
      }
    }
    result.clusters.push_back(std::move(report));
  }
  return result;
}

}  // namespace lgplug
