#include "lgplug/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lgplug/checkpoint.hpp"
#include "lgplug/embedding.hpp"
#include "lgplug/rng.hpp"

namespace lgplug {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config document

ConfigDoc ConfigDoc::parse_string(const std::string& text) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#' || line[first] == ';') continue;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      if (close == std::string::npos)
        throw ParseError("config line " + std::to_string(lineno) + ": unterminated section");
      section = line.substr(first + 1, close - first - 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    doc.data_[section][key] = trim(line.substr(eq + 1));
  }
  return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_string(body.str());
}

void ConfigDoc::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  data_[section][key] = value;
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  return s != data_.end() && s->second.count(key) > 0;
}

std::string ConfigDoc::get_str(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  auto s = data_.find(section);
  if (s == data_.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigDoc::get_num(const std::string& section, const std::string& key,
                          double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config " + section + "." + key + ": not a number: " + v);
  }
}

std::size_t ConfigDoc::get_count(const std::string& section, const std::string& key,
                                 std::size_t fallback) const {
  const double d = get_num(section, key, static_cast<double>(fallback));
  if (d < 0 || d != std::floor(d))
    throw ConfigError("config " + section + "." + key + ": not a non-negative integer");
  return static_cast<std::size_t>(d);
}

bool ConfigDoc::get_flag(const std::string& section, const std::string& key,
                         bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get_str(section, key, "");
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config " + section + "." + key + ": not a boolean: " + v);
}

std::uint64_t ConfigDoc::get_seed(const std::string& section, const std::string& key,
                                  std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_str(section, key, "");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config " + section + "." + key + ": not a seed: " + v);
  }
}

std::string ConfigDoc::canonical(const std::vector<std::string>& sections) const {
  std::ostringstream out;
  for (const auto& [sec, kv] : data_) {  // std::map keeps this sorted
    if (std::find(sections.begin(), sections.end(), sec) == sections.end()) continue;
    out << "[" << sec << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  }
  return out.str();
}

std::string ConfigDoc::canonical_all() const {
  std::vector<std::string> all;
  for (const auto& [sec, kv] : data_) all.push_back(sec);
  return canonical(all);
}

// ---------------------------------------------------------------------------
// Typed config

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_doc(ConfigDoc doc) {
  PipelineConfig c;
  c.doc = std::move(doc);
  const ConfigDoc& d = c.doc;

  c.output_dir = d.get_str("pipeline", "output_dir", c.output_dir);
  c.seed = d.get_seed("pipeline", "seed", c.seed);
  c.force = d.get_flag("pipeline", "force", c.force);

  if (d.has("data", "nodes")) {
    c.nodes_path = d.get_str("data", "nodes", "");
    c.edges_path = d.get_str("data", "edges", "");
    if (c.edges_path->empty()) throw ConfigError("data.edges required alongside data.nodes");
    for (const auto& p : {*c.nodes_path, *c.edges_path}) {
      if (!std::filesystem::exists(p))
        throw ConfigError("config references a missing file: " + p);
    }
    c.id_classes = split_list(d.get_str("data", "id_classes", ""), ',');
    if (c.id_classes.empty())
      throw ConfigError("data.id_classes required when ingesting from files");
  }
  c.ratios = {d.get_num("data", "train_ratio", 0.6), d.get_num("data", "val_ratio", 0.2),
              d.get_num("data", "test_ratio", 0.2)};
  c.domain_hint = d.get_str("data", "domain_hint", c.domain_hint);

  c.synth.n_id_classes = d.get_count("synth", "n_id_classes", 3);
  c.synth.n_ood_classes = d.get_count("synth", "n_ood_classes", 2);
  c.synth.nodes_per_class = d.get_count("synth", "nodes_per_class", 60);
  c.synth.intra_p = d.get_num("synth", "intra_p", 0.10);
  c.synth.inter_p = d.get_num("synth", "inter_p", 0.03);
  c.synth.ratios = c.ratios;
  c.synth.seed = d.get_seed("synth", "seed", mix_seed(c.seed, 101));
  c.synth.domain_hint = c.domain_hint;

  c.features.method = d.get_str("features", "method", "hashed-bag-of-words");
  c.features.dim = d.get_count("features", "dim", 256);
  c.features.seed = d.get_seed("features", "seed", mix_seed(c.seed, 102));

  AlignmentConfig& a = c.alignment;
  a.edge_loss_weight = d.get_num("alignment", "lambda", 1.0);
  a.batch_size = d.get_count("alignment", "batch_size", 64);
  a.learning_rate = d.get_num("alignment", "learning_rate", 5e-3);
  a.weight_decay = d.get_num("alignment", "weight_decay", 5e-4);
  a.max_epochs = d.get_count("alignment", "max_epochs", 15);
  a.patience = d.get_count("alignment", "patience", 10);
  a.convergence_tol = d.get_num("alignment", "convergence_tol", 1e-4);
  a.val_fraction = d.get_num("alignment", "val_fraction", 0.1);
  a.initial_temperature = d.get_num("alignment", "initial_temperature", 14.3);
  a.max_temperature = d.get_num("alignment", "max_temperature", 100.0);
  a.seed = d.get_seed("alignment", "seed", mix_seed(c.seed, 103));
  const std::size_t embed_dim = d.get_count("alignment", "embed_dim", 32);
  a.graph_encoder.layers = d.get_count("alignment", "graph_layers", 2);
  a.graph_encoder.hidden_dim = d.get_count("alignment", "graph_hidden_dim", 64);
  a.graph_encoder.out_dim = embed_dim;
  a.graph_encoder.leaky_slope = d.get_num("alignment", "leaky_slope", 0.01);
  a.text_encoder.layers = d.get_count("alignment", "text_layers", 1);
  a.text_encoder.model_dim = d.get_count("alignment", "text_model_dim", 32);
  a.text_encoder.heads = d.get_count("alignment", "text_heads", 2);
  a.text_encoder.ffn_dim = d.get_count("alignment", "text_ffn_dim", 64);
  a.text_encoder.max_len = d.get_count("alignment", "text_max_len", 24);
  a.text_encoder.vocab_size = d.get_count("alignment", "vocab_size", 512);
  a.text_encoder.out_dim = embed_dim;

  ExposureConfig& e = c.exposure;
  e.num_clusters = d.get_count("exposure", "clusters", 10);
  e.near_centroid_ratio = d.get_num("exposure", "rho", 0.5);
  e.query_batch = d.get_count("exposure", "batch", 3);
  e.max_trials = d.get_count("exposure", "trials", 3);
  e.top_k = d.get_count("exposure", "top_k", 2);
  e.expose_full_cluster_on_unanimous = d.get_flag("exposure", "expose_full_cluster", false);
  e.kmeans_max_iters = d.get_count("exposure", "kmeans_max_iters", 100);
  e.seed = d.get_seed("exposure", "seed", mix_seed(c.seed, 104));

  DetectorConfig& t = c.detector;
  t.scorer = d.get_str("detect", "scorer", "energy");
  t.energy_temperature = d.get_num("detect", "energy_temperature", 1.0);
  t.propagate = d.get_flag("detect", "propagate", true);
  t.self_weight = d.get_num("detect", "alpha", 0.5);
  t.hops = d.get_count("detect", "hops", 2);
  t.margin_id = d.get_num("detect", "delta1", -5.0);
  t.margin_ood = d.get_num("detect", "delta2", -1.0);
  t.reg_weight = d.get_num("detect", "beta", 1.0);
  t.regularize_propagated = d.get_flag("detect", "regularize_propagated", false);
  t.use_aligned_embeddings = d.get_flag("detect", "use_aligned_embeddings", false);
  t.hidden_dim = d.get_count("detect", "hidden_dim", 64);
  t.leaky_slope = d.get_num("detect", "leaky_slope", 0.01);
  t.learning_rate = d.get_num("detect", "learning_rate", 1e-2);
  t.weight_decay = d.get_num("detect", "weight_decay", 5e-4);
  t.max_epochs = d.get_count("detect", "max_epochs", 300);
  t.patience = d.get_count("detect", "patience", 100);
  t.convergence_tol = d.get_num("detect", "convergence_tol", 1e-5);
  t.seed = d.get_seed("detect", "seed", mix_seed(c.seed, 105));

  c.eval_bins = d.get_count("eval", "bins", 20);

  c.backend_kind = d.get_str("backend", "kind", "keyword-oracle");
  for (const auto& rule : split_list(d.get_str("backend", "rules", ""), ';')) {
    const auto colon = rule.find(':');
    if (colon == std::string::npos)
      throw ConfigError("backend.rules entries must look like keyword:Category");
    c.oracle_rules.emplace_back(rule.substr(0, colon), rule.substr(colon + 1));
  }
  c.oracle_fallback = d.get_str("backend", "fallback", "");
  c.remote.endpoint = d.get_str("backend", "endpoint", "");
  c.remote.path = d.get_str("backend", "path", "/v1/chat/completions");
  c.remote.model = d.get_str("backend", "model", "deepseek-chat");
  c.remote.timeout_seconds = static_cast<int>(d.get_count("backend", "timeout_seconds", 60));
  c.cache_dir = d.get_str("backend", "cache_dir", "");
  c.retry.max_attempts = static_cast<int>(d.get_count("backend", "retry_attempts", 3));
  c.retry.base_delay_ms = static_cast<int>(d.get_count("backend", "retry_base_ms", 1000));
  c.retry.factor = d.get_num("backend", "retry_factor", 2.0);

  // Environment overrides cover credentials only.
  if (const char* key = std::getenv("LGPLUG_API_KEY")) c.remote.api_key = key;
  if (const char* ep = std::getenv("LGPLUG_API_ENDPOINT"); ep && *ep) c.remote.endpoint = ep;
  if (const char* mdl = std::getenv("LGPLUG_API_MODEL"); mdl && *mdl) c.remote.model = mdl;
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  return from_doc(ConfigDoc::parse_file(path));
}

// ---------------------------------------------------------------------------
// Stages

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Align: return "align";
    case Stage::Expose: return "expose";
    case Stage::Train: return "train";
    case Stage::Eval: return "eval";
  }
  return "?";
}

std::vector<Stage> parse_stages(const std::string& spec) {
  if (spec == "all" || spec.empty())
    return {Stage::Ingest, Stage::Align, Stage::Expose, Stage::Train, Stage::Eval};
  std::vector<Stage> out;
  for (const auto& name : split_list(spec, ',')) {
    if (name == "ingest") out.push_back(Stage::Ingest);
    else if (name == "align") out.push_back(Stage::Align);
    else if (name == "expose") out.push_back(Stage::Expose);
    else if (name == "train") out.push_back(Stage::Train);
    else if (name == "eval") out.push_back(Stage::Eval);
    else throw ConfigError("unknown stage: " + name);
  }
  return out;
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("missing artifact file: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof buf)) break;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Per-run manifest: one entry per completed stage with its config hash, seed
// and artifact file hashes.
class Manifest {
 public:
  explicit Manifest(std::string dir) : dir_(std::move(dir)), doc_(json::object()) {
    doc_["stages"] = json::object();
    const std::string path = file_path();
    std::ifstream in(path);
    if (in) {
      try {
        in >> doc_;
      } catch (const json::exception& e) {
        throw IntegrityError("corrupt manifest " + path + ": " + e.what());
      }
      if (!doc_.contains("stages")) doc_["stages"] = json::object();
    }
  }

  bool stage_up_to_date(const std::string& stage, const std::string& config_hash) const {
    const auto& stages = doc_.at("stages");
    if (!stages.contains(stage)) return false;
    const auto& entry = stages.at(stage);
    if (entry.value("config_hash", "") != config_hash) return false;
    for (const auto& [file, want] : entry.at("files").items()) {
      const std::string full = dir_ + "/" + file;
      if (!fs::exists(full) || hex64(file_hash(full)) != want.get<std::string>()) return false;
    }
    return true;
  }

  void record_stage(const std::string& stage, const std::string& config_hash,
                    std::uint64_t seed, const std::vector<std::string>& files) {
    json entry;
    entry["config_hash"] = config_hash;
    entry["seed"] = seed;
    json fh = json::object();
    for (const auto& f : files) fh[f] = hex64(file_hash(dir_ + "/" + f));
    entry["files"] = fh;
    doc_["stages"][stage] = entry;
    std::ofstream out(file_path());
    if (!out) throw ParseError("cannot write manifest in " + dir_);
    out << doc_.dump(2) << "\n";
  }

  // Consuming a file another stage produced verifies its recorded hash.
  void verify_artifact(const std::string& producer_stage, const std::string& file) const {
    const auto& stages = doc_.at("stages");
    if (!stages.contains(producer_stage)) return;  // absence handled by require()
    const auto& files = stages.at(producer_stage).at("files");
    if (!files.contains(file)) return;
    const std::string full = dir_ + "/" + file;
    if (!fs::exists(full))
      throw DependencyError("artifact " + file + " from stage '" + producer_stage +
                            "' is missing; re-run that stage");
    if (hex64(file_hash(full)) != files.at(file).get<std::string>())
      throw IntegrityError("artifact " + file + " does not match the manifest hash (tampered "
                           "or stale); re-run stage '" + producer_stage + "'");
  }

 private:
  std::string file_path() const { return dir_ + "/manifest.json"; }
  std::string dir_;
  json doc_;
};

void require(const std::string& dir, const std::string& file, const char* producer) {
  if (!fs::exists(dir + "/" + file))
    throw DependencyError(std::string("missing artifact ") + file + "; run the '" + producer +
                          "' stage first");
}

std::vector<std::string> stage_hash_sections(Stage s) {
  switch (s) {
    case Stage::Ingest: return {"data", "synth"};
    case Stage::Align: return {"data", "synth", "features", "alignment"};
    case Stage::Expose:
      return {"data", "synth", "features", "alignment", "exposure", "backend"};
    case Stage::Train:
      return {"data", "synth", "features", "alignment", "exposure", "backend", "detect"};
    case Stage::Eval:
      return {"data", "synth", "features", "alignment", "exposure", "backend", "detect", "eval"};
  }
  return {};
}

std::uint64_t stage_seed_of(const PipelineConfig& c, Stage s) {
  switch (s) {
    case Stage::Ingest: return c.synth.seed;
    case Stage::Align: return c.alignment.seed;
    case Stage::Expose: return c.exposure.seed;
    case Stage::Train: return c.detector.seed;
    case Stage::Eval: return 0;
  }
  return 0;
}

std::unique_ptr<LlmBackend> build_backend(const PipelineConfig& cfg) {
  if (cfg.backend_kind == "keyword-oracle") {
    auto rules = cfg.oracle_rules;
    std::string fallback = cfg.oracle_fallback;
    if (rules.empty()) {
      // Zero-config default: rules derived from the synthetic class
      // templates so a fresh clone runs end to end.
      const auto classes = cfg.synth.classes.empty() ? default_synth_classes()
                                                     : cfg.synth.classes;
      const std::size_t used = cfg.synth.n_id_classes + cfg.synth.n_ood_classes;
      for (std::size_t c = 0; c < used && c < classes.size(); ++c)
        for (const auto& kw : classes[c].keywords) rules.emplace_back(kw, classes[c].name);
      if (fallback.empty() && !classes.empty()) fallback = classes[0].name;
    }
    if (fallback.empty()) throw ConfigError("backend.fallback required for the keyword oracle");
    return make_keyword_oracle(std::move(rules), std::move(fallback));
  }
  if (cfg.backend_kind == "remote-chat-service") return make_remote_backend(cfg.remote);
  if (cfg.backend_kind == "replay-cache") {
    if (cfg.cache_dir.empty())
      throw ConfigError("backend.cache_dir required for the replay-cache backend");
    return make_replay_backend(std::make_shared<ResponseCache>(cfg.cache_dir));
  }
  throw ConfigError("unknown backend kind: " + cfg.backend_kind);
}

void write_graph_meta(const std::string& dir, const TextAttributedGraph& g,
                      const LoadStats* stats) {
  json meta;
  meta["domain_hint"] = g.domain_hint;
  meta["n_nodes"] = g.num_nodes();
  meta["n_edges"] = g.num_edges();
  if (stats) {
    meta["duplicate_edges_dropped"] = stats->duplicate_edges;
    meta["self_loops_dropped"] = stats->self_loops_dropped;
  }
  std::ofstream out(dir + "/graph_meta.json");
  if (!out) throw ParseError("cannot write graph metadata in " + dir);
  out << meta.dump(2) << "\n";
}

}  // namespace

TextAttributedGraph load_stage_graph(const std::string& dir) {
  require(dir, "nodes.jsonl", "ingest");
  require(dir, "edges.tsv", "ingest");
  TextAttributedGraph g = load_graph(dir + "/nodes.jsonl", dir + "/edges.tsv");
  const std::string meta_path = dir + "/graph_meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    json meta;
    in >> meta;
    g.domain_hint = meta.value("domain_hint", g.domain_hint);
  }
  return g;
}

void save_embeddings(const TextAttributedGraph& g, const Matrix& z, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write embeddings: " + path);
  char buf[64];
  for (std::size_t i = 0; i < z.rows(); ++i) {
    out << g.node_ids[i];
    for (std::size_t j = 0; j < z.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", z(i, j));
      out << (j == 0 ? '\t' : ' ') << buf;
    }
    out << "\n";
  }
}

Matrix load_embeddings(const TextAttributedGraph& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embeddings: " + path);
  std::string line;
  std::vector<std::vector<double>> rows(g.num_nodes());
  std::size_t cols = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("embeddings " + path + ":" + std::to_string(lineno) + ": bad record");
    const std::size_t row = g.index(line.substr(0, tab));
    std::istringstream vals(line.substr(tab + 1));
    double v;
    while (vals >> v) rows[row].push_back(v);
    if (cols == 0) cols = rows[row].size();
    if (rows[row].size() != cols)
      throw ParseError("embeddings " + path + ": ragged rows");
  }
  Matrix z(g.num_nodes(), cols);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (rows[i].size() != cols)
      throw IntegrityError("embeddings file missing node " + g.node_ids[i]);
    std::copy(rows[i].begin(), rows[i].end(), z.row(i));
  }
  return z;
}

namespace {

StageOutcome run_ingest(const PipelineConfig& cfg, Manifest& manifest,
                        const std::string& hash) {
  const std::string& dir = cfg.output_dir;
  TextAttributedGraph g;
  SplitSpec split;
  LoadStats stats;
  if (cfg.nodes_path) {
    g = load_graph(*cfg.nodes_path, *cfg.edges_path, &stats);
    g.domain_hint = cfg.domain_hint;
    split = make_ood_split(g, cfg.id_classes, cfg.ratios,
                           cfg.doc.get_seed("data", "split_seed", mix_seed(cfg.seed, 106)));
  } else {
    SynthConfig sc = cfg.synth;
    auto [graph, sp] = synth_tag(sc);
    g = std::move(graph);
    split = std::move(sp);
  }
  split.validate(g);
  save_graph(g, dir + "/nodes.jsonl", dir + "/edges.tsv");
  split.save(dir + "/split.json");
  write_graph_meta(dir, g, cfg.nodes_path ? &stats : nullptr);

  StageOutcome out{Stage::Ingest};
  out.files = {"nodes.jsonl", "edges.tsv", "split.json", "graph_meta.json"};
  manifest.record_stage("ingest", hash, stage_seed_of(cfg, Stage::Ingest), out.files);
  return out;
}

StageOutcome run_align(const PipelineConfig& cfg, Manifest& manifest, const std::string& hash) {
  const std::string& dir = cfg.output_dir;
  manifest.verify_artifact("ingest", "nodes.jsonl");
  manifest.verify_artifact("ingest", "edges.tsv");
  TextAttributedGraph g = load_stage_graph(dir);

  const Matrix x = init_features(g, cfg.features);
  AlignmentResult trained = train_alignment(g, x, cfg.alignment);
  trained.params.save(dir + "/encoder.ckpt");
  const Matrix z = graph_encode(g, x, trained.params);
  save_embeddings(g, z, dir + "/embeddings.tsv");
  save_alignment_log(trained.log, dir + "/align_log.csv");

  StageOutcome out{Stage::Align};
  out.files = {"encoder.ckpt", "embeddings.tsv", "align_log.csv"};
  manifest.record_stage("align", hash, stage_seed_of(cfg, Stage::Align), out.files);
  return out;
}

StageOutcome run_expose(const PipelineConfig& cfg, Manifest& manifest, const std::string& hash) {
  const std::string& dir = cfg.output_dir;
  require(dir, "split.json", "ingest");
  require(dir, "embeddings.tsv", "align");
  manifest.verify_artifact("align", "embeddings.tsv");
  TextAttributedGraph g = load_stage_graph(dir);
  SplitSpec split = SplitSpec::load(dir + "/split.json");
  const Matrix z = load_embeddings(g, dir + "/embeddings.tsv");

  auto backend = build_backend(cfg);
  QueryLedger ledger;
  GatewayOptions gw;
  gw.retry = cfg.retry;
  if (!cfg.cache_dir.empty()) gw.cache = std::make_shared<ResponseCache>(cfg.cache_dir);
  ExposureResult result = run_exposure(g, z, split, cfg.exposure, *backend, ledger, gw);

  result.set.save(dir + "/exposure.json");
  ledger.save_jsonl(dir + "/ledger.jsonl");
  json summary;
  summary["query_count"] = ledger.query_count();
  summary["error_count"] = ledger.error_count();
  summary["cache_hits"] = ledger.cache_hit_count();
  summary["budget_ceiling"] = cfg.exposure.num_clusters * cfg.exposure.query_batch *
                              cfg.exposure.max_trials;
  summary["exposed_nodes"] = result.set.node_ids.size();
  json clusters = json::array();
  for (const auto& r : result.clusters) {
    clusters.push_back({{"cluster", r.cluster},
                        {"size", r.cluster_size},
                        {"near_centroid", r.near_centroid_size},
                        {"queried", r.queried},
                        {"early_stopped", r.early_stopped},
                        {"skipped_backend_failure", r.skipped_backend_failure},
                        {"accepted", r.accepted},
                        {"top_categories", r.top_categories}});
  }
  summary["clusters"] = clusters;
  {
    std::ofstream sout(dir + "/expose_summary.json");
    sout << summary.dump(2) << "\n";
  }  // closed before the manifest hashes it

  StageOutcome out{Stage::Expose};
  out.files = {"exposure.json", "ledger.jsonl", "expose_summary.json"};
  manifest.record_stage("expose", hash, stage_seed_of(cfg, Stage::Expose), out.files);
  return out;
}

StageOutcome run_train(const PipelineConfig& cfg, Manifest& manifest, const std::string& hash) {
  const std::string& dir = cfg.output_dir;
  require(dir, "split.json", "ingest");
  TextAttributedGraph g = load_stage_graph(dir);
  SplitSpec split = SplitSpec::load(dir + "/split.json");

  Matrix features;
  if (cfg.detector.use_aligned_embeddings) {
    require(dir, "embeddings.tsv", "align");
    manifest.verify_artifact("align", "embeddings.tsv");
    features = load_embeddings(g, dir + "/embeddings.tsv");
  } else {
    features = init_features(g, cfg.features);
  }

  ExposureSet exposure;
  if (cfg.detector.reg_weight > 0.0) {
    require(dir, "exposure.json", "expose");
    manifest.verify_artifact("expose", "exposure.json");
    exposure = ExposureSet::load(dir + "/exposure.json");
  }

  DetectorResult result = train_detector(g, features, split, exposure, cfg.detector);

  Checkpoint ck;
  ck.kind = "detector-classifier";
  ck.meta["scorer"] = cfg.detector.scorer;
  ck.meta["class_order"] = result.class_order;
  ck.meta["seed"] = cfg.detector.seed;
  ck.tensors = result.classifier_state;
  ck.save(dir + "/detector.ckpt");
  save_scores(g, result.scores, dir + "/scores.tsv");
  save_detector_log(result.log, dir + "/train_log.csv");

  StageOutcome out{Stage::Train};
  out.files = {"detector.ckpt", "scores.tsv", "train_log.csv"};
  manifest.record_stage("train", hash, stage_seed_of(cfg, Stage::Train), out.files);
  return out;
}

StageOutcome run_eval(const PipelineConfig& cfg, Manifest& manifest, const std::string& hash) {
  const std::string& dir = cfg.output_dir;
  require(dir, "scores.tsv", "train");
  require(dir, "split.json", "ingest");
  manifest.verify_artifact("train", "scores.tsv");
  TextAttributedGraph g = load_stage_graph(dir);
  SplitSpec split = SplitSpec::load(dir + "/split.json");
  const ScoreVector scores = load_scores(g, dir + "/scores.tsv");

  std::unordered_map<NodeId, double> by_id;
  for (std::size_t i = 0; i < scores.size(); ++i) by_id[g.node_ids[i]] = scores[i];
  EvalReport report = evaluate(by_id, split, cfg.eval_bins);
  report.save(dir + "/report.json");

  // Density artifact mirrors the negative-energy plotting convention, so the
  // energy scorer's densities are emitted on the -s axis.
  if (cfg.detector.scorer == "energy") {
    std::vector<double> id_neg, ood_neg;
    const auto tid = split.test_id_set();
    const auto tood = split.test_ood_set();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (tid.count(g.node_ids[i])) id_neg.push_back(-scores[i]);
      else if (tood.count(g.node_ids[i])) ood_neg.push_back(-scores[i]);
    }
    EvalReport density;
    build_histograms(id_neg, ood_neg, cfg.eval_bins, density.bin_centers, density.id_density,
                     density.ood_density);
    density.bins = density.bin_centers.size();
    save_density_csv(density, dir + "/density.csv");
  } else {
    save_density_csv(report, dir + "/density.csv");
  }

  StageOutcome out{Stage::Eval};
  out.files = {"report.json", "density.csv"};
  manifest.record_stage("eval", hash, 0, out.files);
  return out;
}

}  // namespace

std::vector<StageOutcome> run_pipeline(const PipelineConfig& config,
                                       const std::vector<Stage>& stages) {
  fs::create_directories(config.output_dir);
  Manifest manifest(config.output_dir);
  std::vector<StageOutcome> outcomes;
  for (Stage s : stages) {
    const std::string hash = hex64(fnv1a64(config.doc.canonical(stage_hash_sections(s))));
    if (!config.force && manifest.stage_up_to_date(stage_name(s), hash)) {
      StageOutcome out{s};
      out.skipped = true;
      outcomes.push_back(out);
      continue;
    }
    switch (s) {
      case Stage::Ingest: outcomes.push_back(run_ingest(config, manifest, hash)); break;
      case Stage::Align: outcomes.push_back(run_align(config, manifest, hash)); break;
      case Stage::Expose: outcomes.push_back(run_expose(config, manifest, hash)); break;
      case Stage::Train: outcomes.push_back(run_train(config, manifest, hash)); break;
      case Stage::Eval: outcomes.push_back(run_eval(config, manifest, hash)); break;
    }
  }
  return outcomes;
}

// ---------------------------------------------------------------------------
// Sweep

SweepGrid parse_sweep_axes(const std::vector<std::string>& axis_specs, std::size_t max_points) {
  SweepGrid grid;
  grid.max_points = max_points;
  for (const auto& spec : axis_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("sweep axis must look like section.key=v1,v2,...: " + spec);
    const std::string key = spec.substr(0, eq);
    if (key.find('.') == std::string::npos)
      throw ConfigError("sweep axis key must be section.key: " + key);
    const auto values = split_list(spec.substr(eq + 1), ',');
    if (values.empty()) throw ConfigError("sweep axis has no values: " + spec);
    grid.axes.emplace_back(key, values);
  }
  return grid;
}

std::vector<SweepPoint> run_sweep(const PipelineConfig& config, const SweepGrid& grid) {
  std::vector<SweepPoint> points;
  if (grid.axes.empty()) return points;

  std::size_t total = 1;
  for (const auto& [key, values] : grid.axes) total *= values.size();
  if (total > grid.max_points)
    throw ConfigError("sweep grid has " + std::to_string(total) + " points, cap is " +
                      std::to_string(grid.max_points));

  // Shared upstream artifacts live in the parent directory.
  run_pipeline(config, {Stage::Ingest, Stage::Align});

  for (std::size_t p = 0; p < total; ++p) {
    SweepPoint point;
    std::size_t rem = p;
    for (const auto& [key, values] : grid.axes) {
      point.overrides[key] = values[rem % values.size()];
      rem /= values.size();
    }
    char dirbuf[32];
    std::snprintf(dirbuf, sizeof dirbuf, "point_%03zu", p);
    point.directory = config.output_dir + "/sweep/" + dirbuf;

    try {
      fs::create_directories(point.directory);
      // Copy upstream artifacts into the point directory so stages find them.
      for (const char* f : {"nodes.jsonl", "edges.tsv", "split.json", "graph_meta.json",
                            "encoder.ckpt", "embeddings.tsv", "align_log.csv"}) {
        fs::copy_file(config.output_dir + "/" + std::string(f), point.directory + "/" + f,
                      fs::copy_options::overwrite_existing);
      }
      ConfigDoc doc = config.doc;
      for (const auto& [key, value] : point.overrides) {
        const auto dot = key.find('.');
        doc.set(key.substr(0, dot), key.substr(dot + 1), value);
      }
      doc.set("pipeline", "output_dir", point.directory);
      doc.set("pipeline", "force", "true");
      PipelineConfig sub = PipelineConfig::from_doc(std::move(doc));
      run_pipeline(sub, {Stage::Expose, Stage::Train, Stage::Eval});

      EvalReport report = EvalReport::load(point.directory + "/report.json");
      point.auroc = report.auroc;
      point.fpr95 = report.fpr95;
      std::ifstream sin(point.directory + "/expose_summary.json");
      json summary;
      sin >> summary;
      point.query_count = summary.value("query_count", 0);
      point.status = "ok";
    } catch (const std::exception& e) {
      point.status = std::string("error: ") + e.what();
    }
    points.push_back(std::move(point));
  }
  return points;
}

void save_sweep_csv(const std::vector<SweepPoint>& points, const SweepGrid& grid,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write sweep csv: " + path);
  out << "point";
  for (const auto& [key, values] : grid.axes) out << "," << key;
  out << ",auroc,fpr95,query_count,status\n";
  char buf[64];
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << i;
    for (const auto& [key, values] : grid.axes) out << "," << points[i].overrides.at(key);
    if (points[i].status == "ok") {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%zu,", points[i].auroc, points[i].fpr95,
                    points[i].query_count);
      out << buf << points[i].status << "\n";
    } else {
      std::string status = points[i].status;
      std::replace(status.begin(), status.end(), ',', ';');
      out << ",,,," << status << "\n";
    }
  }
}

}  // namespace lgplug
