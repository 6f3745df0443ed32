#include "lgplug/tag_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "lgplug/rng.hpp"

namespace lgplug {

using nlohmann::json;

std::size_t TextAttributedGraph::index(const NodeId& id) const {
  auto it = index_of.find(id);
  if (it == index_of.end()) throw IntegrityError("unknown node id: " + id);
  return it->second;
}

std::vector<std::vector<std::size_t>> TextAttributedGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(num_nodes());
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

TextAttributedGraph GraphBuilder::build(std::vector<NodeId> ids, std::vector<std::string> texts,
                                        std::unordered_map<NodeId, std::string> labels,
                                        const std::vector<std::pair<NodeId, NodeId>>& raw_edges) {
  TextAttributedGraph g;
  g.node_ids = std::move(ids);
  g.texts = std::move(texts);
  g.labels = std::move(labels);
  if (g.texts.size() != g.node_ids.size())
    throw IntegrityError("graph builder: one text per node required");
  for (std::size_t i = 0; i < g.node_ids.size(); ++i) {
    if (!g.index_of.emplace(g.node_ids[i], i).second)
      throw IntegrityError("duplicate node id: " + g.node_ids[i]);
  }
  for (const auto& [label_id, label] : g.labels) {
    if (!g.index_of.count(label_id))
      throw IntegrityError("label references unknown node: " + label_id);
    if (label.empty()) throw IntegrityError("empty label on node: " + label_id);
  }

  std::set<std::pair<std::size_t, std::size_t>> dedup;
  for (const auto& [sa, sb] : raw_edges) {
    const std::size_t a = g.index(sa);
    const std::size_t b = g.index(sb);
    if (a == b) {
      ++self_loops_dropped;
      continue;
    }
    auto e = std::minmax(a, b);
    if (!dedup.emplace(e.first, e.second).second) ++duplicate_edges;
  }
  g.edges.assign(dedup.begin(), dedup.end());
  return g;
}

namespace {

std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

TextAttributedGraph load_graph(const std::string& nodes_path, const std::string& edges_path,
                               LoadStats* stats) {
  std::ifstream nodes_in(nodes_path);
  if (!nodes_in) throw ParseError("cannot open nodes file: " + nodes_path);

  std::vector<NodeId> ids;
  std::vector<std::string> texts;
  std::unordered_map<NodeId, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(nodes_in, line)) {
    ++lineno;
    if (blank(line)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("malformed node record at " + location(nodes_path, lineno) + ": " +
                       e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
      throw ParseError("node record missing string 'id' at " + location(nodes_path, lineno));
    ids.push_back(rec["id"].get<std::string>());
    std::string text;
    if (rec.contains("text")) {
      if (!rec["text"].is_string())
        throw ParseError("node 'text' must be a string at " + location(nodes_path, lineno));
      text = rec["text"].get<std::string>();
    }
    texts.push_back(std::move(text));
    if (rec.contains("label") && !rec["label"].is_null()) {
      if (!rec["label"].is_string())
        throw ParseError("node 'label' must be a string at " + location(nodes_path, lineno));
      labels[ids.back()] = rec["label"].get<std::string>();
    }
  }

  std::ifstream edges_in(edges_path);
  if (!edges_in) throw ParseError("cannot open edges file: " + edges_path);
  std::vector<std::pair<NodeId, NodeId>> raw_edges;
  lineno = 0;
  while (std::getline(edges_in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw ParseError("expected 'src<TAB>dst' at " + location(edges_path, lineno));
    raw_edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }

  GraphBuilder builder;
  TextAttributedGraph g;
  try {
    g = builder.build(std::move(ids), std::move(texts), std::move(labels), raw_edges);
  } catch (const IntegrityError& e) {
    throw IntegrityError(std::string(e.what()) + " (while loading " + edges_path + ")");
  }
  if (stats) {
    stats->duplicate_edges = builder.duplicate_edges;
    stats->self_loops_dropped = builder.self_loops_dropped;
  }
  return g;
}

void save_graph(const TextAttributedGraph& g, const std::string& nodes_path,
                const std::string& edges_path) {
  std::ofstream nodes_out(nodes_path);
  if (!nodes_out) throw ParseError("cannot write nodes file: " + nodes_path);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    json rec;
    rec["id"] = g.node_ids[i];
    rec["text"] = g.texts[i];
    if (const std::string* lbl = g.label_of(i)) rec["label"] = *lbl;
    nodes_out << rec.dump() << "\n";
  }
  std::ofstream edges_out(edges_path);
  if (!edges_out) throw ParseError("cannot write edges file: " + edges_path);
  for (const auto& [a, b] : g.edges) {
    edges_out << g.node_ids[a] << '\t' << g.node_ids[b] << "\n";
  }
}

bool SplitSpec::is_id_class(const std::string& label) const {
  return std::find(id_classes.begin(), id_classes.end(), label) != id_classes.end();
}

void SplitSpec::validate(const TextAttributedGraph& g) const {
  std::unordered_set<NodeId> seen;
  auto check_part = [&](const std::vector<NodeId>& part, const char* name, bool want_id) {
    for (const auto& id : part) {
      if (!g.index_of.count(id))
        throw IntegrityError(std::string("split ") + name + " references unknown node " + id);
      if (!seen.insert(id).second)
        throw IntegrityError("split partitions overlap on node " + id);
      auto it = g.labels.find(id);
      if (it == g.labels.end())
        throw IntegrityError(std::string("split ") + name + " node " + id + " has no label");
      if (is_id_class(it->second) != want_id)
        throw IntegrityError(std::string("split ") + name + " node " + id +
                             " violates the ID/OOD class partition");
    }
  };
  check_part(train, "train", true);
  check_part(val, "val", true);
  check_part(test_id, "test_id", true);
  check_part(test_ood, "test_ood", false);
}

void SplitSpec::save(const std::string& path) const {
  json doc;
  doc["train"] = train;
  doc["val"] = val;
  doc["test_id"] = test_id;
  doc["test_ood"] = test_ood;
  doc["id_classes"] = id_classes;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write split file: " + path);
  out << doc.dump(2) << "\n";
}

SplitSpec SplitSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("malformed split file " + path + ": " + e.what());
  }
  SplitSpec s;
  try {
    s.train = doc.at("train").get<std::vector<NodeId>>();
    s.val = doc.at("val").get<std::vector<NodeId>>();
    s.test_id = doc.at("test_id").get<std::vector<NodeId>>();
    s.test_ood = doc.at("test_ood").get<std::vector<NodeId>>();
    s.id_classes = doc.at("id_classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError("split file " + path + " missing fields: " + e.what());
  }
  return s;
}

SplitSpec make_ood_split(const TextAttributedGraph& g, const std::vector<std::string>& id_classes,
                         std::array<double, 3> ratios, std::uint64_t seed) {
  const double rsum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(rsum));
  for (double r : ratios)
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  if (id_classes.empty()) throw ConfigError("id_classes must be non-empty");

  std::unordered_set<std::string> id_set(id_classes.begin(), id_classes.end());
  if (id_set.size() != id_classes.size()) throw ConfigError("id_classes contains duplicates");

  std::unordered_map<std::string, std::size_t> class_counts;
  std::vector<NodeId> id_nodes;
  std::vector<NodeId> ood_nodes;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const std::string* lbl = g.label_of(i);
    if (!lbl) continue;
    if (id_set.count(*lbl)) {
      id_nodes.push_back(g.node_ids[i]);
      ++class_counts[*lbl];
    } else {
      ood_nodes.push_back(g.node_ids[i]);
    }
  }
  if (id_nodes.empty()) throw ConfigError("no ID-labeled nodes in graph");
  for (const auto& c : id_classes) {
    if (!class_counts.count(c))
      throw ConfigError("id class '" + c + "' has no labeled node in the graph");
  }

  Rng rng(seed);
  rng.shuffle(id_nodes);

  // Largest-remainder rounding so the three counts sum exactly to |id_nodes|.
  const std::size_t n = id_nodes.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double q = ratios[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(q));
    remainders[k] = q - std::floor(q);
    assigned += counts[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t leftover = n - assigned, k = 0; leftover > 0; --leftover, ++k)
    ++counts[order[k % 3]];

  SplitSpec s;
  s.id_classes = id_classes;
  auto it = id_nodes.begin();
  s.train.assign(it, it + counts[0]);
  it += counts[0];
  s.val.assign(it, it + counts[1]);
  it += counts[1];
  s.test_id.assign(it, it + counts[2]);
  s.test_ood = std::move(ood_nodes);
  return s;
}

void SynthConfig::validate() const {
  if (n_id_classes < 1 || n_ood_classes < 1 || nodes_per_class < 1)
    throw ConfigError("synth: class and node counts must be >= 1");
  if (intra_p < 0.0 || intra_p > 1.0 || inter_p < 0.0 || inter_p > 1.0)
    throw ConfigError("synth: edge probabilities must lie in [0,1]");
  if (!(intra_p > inter_p)) throw ConfigError("synth: intra_p must exceed inter_p");
  const auto& cls = classes.empty() ? default_synth_classes() : classes;
  if (cls.size() < n_id_classes + n_ood_classes)
    throw ConfigError("synth: need at least n_id_classes + n_ood_classes class templates");
  for (const auto& c : cls) {
    if (c.name.empty()) throw ConfigError("synth: class with empty name");
    if (c.keywords.empty()) throw ConfigError("synth: class '" + c.name + "' has no keywords");
  }
}

std::vector<SynthClass> default_synth_classes() {
  return {
      {"neural networks", {"neural", "backpropagation", "perceptron", "activation"}},
      {"databases", {"database", "relational", "query", "transaction"}},
      {"operating systems", {"kernel", "scheduler", "filesystem", "interrupt"}},
      {"genetic algorithms", {"genetic", "evolutionary", "crossover", "mutation"}},
      {"quantum cryptography", {"quantum", "qubit", "entanglement", "photon"}},
      {"compilers", {"compiler", "parser", "bytecode", "register"}},
      {"computer vision", {"vision", "image", "segmentation", "detection"}},
      {"robotics", {"robot", "actuator", "kinematics", "gripper"}},
  };
}

namespace {

const std::vector<std::string> kFillerWords = {
    "benchmark", "analysis",  "framework",  "experiments", "baseline",  "evaluation",
    "approach",  "setting",   "tasks",      "pipeline",    "study",     "technique",
    "practice",  "workloads", "deployment", "review",      "tradeoffs", "design",
};

const std::vector<std::string> kVerbs = {
    "study", "analyze", "propose", "evaluate", "survey", "revisit", "compare", "extend",
};

std::string synth_text(const SynthClass& cls, Rng& rng) {
  const auto& kws = cls.keywords;
  const std::string& kw1 = kws[rng.below(kws.size())];
  const std::string& kw2 = kws[rng.below(kws.size())];
  const std::string& kw3 = kws[rng.below(kws.size())];
  const std::string& verb = kVerbs[rng.below(kVerbs.size())];
  const std::string& f1 = kFillerWords[rng.below(kFillerWords.size())];
  const std::string& f2 = kFillerWords[rng.below(kFillerWords.size())];
  // Topic terms recur the way they do in real abstracts; the repeated
  // keywords carry the class signal past the shared filler vocabulary.
  switch (rng.below(4)) {
    case 0:
      return "we " + verb + " " + kw1 + " and " + kw2 + " methods for " + f1 + ": " + kw1 +
             " models improve " + f2 + ".";
    case 1:
      return "a " + f1 + " of " + kw1 + ", " + kw2 + ", and " + kw3 + " with a new " + kw1 +
             " " + f2 + ".";
    case 2:
      return "this work " + verb + "s " + kw1 + " " + f1 + " where " + kw2 + " and " + kw1 +
             " drive the " + f2 + ".";
    default:
      return "on " + kw1 + " based " + f1 + ": " + kw2 + " " + verb + " meets " + kw3 +
             " under a " + f2 + " setting.";
  }
}

}  // namespace

std::pair<TextAttributedGraph, SplitSpec> synth_tag(const SynthConfig& config) {
  config.validate();
  const auto cls = config.classes.empty() ? default_synth_classes() : config.classes;
  const std::size_t n_classes = config.n_id_classes + config.n_ood_classes;
  const std::size_t n = n_classes * config.nodes_per_class;

  std::vector<NodeId> ids(n);
  std::vector<std::string> texts(n);
  std::vector<std::size_t> class_of(n);
  std::unordered_map<NodeId, std::string> labels;

  Rng rng(config.seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / config.nodes_per_class;
    char buf[32];
    std::snprintf(buf, sizeof buf, "n%05zu", i);
    ids[i] = buf;
    class_of[i] = c;
    texts[i] = synth_text(cls[c], rng);
    labels[ids[i]] = cls[c].name;
  }

  std::vector<std::pair<NodeId, NodeId>> raw_edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = class_of[i] == class_of[j] ? config.intra_p : config.inter_p;
      if (rng.uniform() < p) raw_edges.emplace_back(ids[i], ids[j]);
    }
  }

  GraphBuilder builder;
  TextAttributedGraph g = builder.build(std::move(ids), std::move(texts), std::move(labels),
                                        raw_edges);
  g.domain_hint = config.domain_hint;

  std::vector<std::string> id_classes;
  for (std::size_t c = 0; c < config.n_id_classes; ++c) id_classes.push_back(cls[c].name);
  SplitSpec split = make_ood_split(g, id_classes, config.ratios, mix_seed(config.seed, 1));
  return {std::move(g), std::move(split)};
}

}  // namespace lgplug
