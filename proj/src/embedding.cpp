#include "lgplug/embedding.hpp"

#include <cctype>
#include <cmath>

#include "lgplug/checkpoint.hpp"
#include "lgplug/rng.hpp"

namespace lgplug {

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

}  // namespace

Matrix init_features(const std::vector<std::string>& texts, const FeatureConfig& config) {
  if (config.dim < 1) throw ConfigError("features: dim must be >= 1");
  if (config.method == "hashed-bag-of-words") {
    Matrix x(texts.size(), config.dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (const auto& tok : word_tokens(texts[i])) {
        x(i, fnv1a64(tok) % config.dim) += 1.0;
      }
    }
    return x;
  }
  if (config.method == "frozen-text-encoder-pooling") {
    TextEncoderConfig tcfg;
    tcfg.out_dim = config.dim;
    tcfg.model_dim = 64;
    tcfg.layers = 1;
    tcfg.heads = 2;
    tcfg.ffn_dim = 128;
    BpeTokenizer tok = BpeTokenizer::train(texts, tcfg.vocab_size);
    ad::ParamStore store;
    TextEncoder enc(tcfg, tok.vocab_size(), config.seed, store, "frozen.");
    Matrix x(texts.size(), config.dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      ad::Var h = enc.forward(tok.encode(texts[i], tcfg.max_len));
      std::copy_n(h.value().row(0), config.dim, x.row(i));
    }
    return x;
  }
  throw ConfigError("features: unknown method '" + config.method + "'");
}

Matrix init_features(const TextAttributedGraph& g, const FeatureConfig& config) {
  return init_features(g.texts, config);
}

SparseMatrix normalized_adjacency(std::size_t n,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  // Self-loops added transiently; degrees counted with them.
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) nbrs[i].push_back(i);
  for (const auto& [a, b] : edges) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(nbrs[i].size()));

  SparseMatrix s;
  s.n = n;
  s.rowptr.resize(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(nbrs[i].begin(), nbrs[i].end());
    s.rowptr[i + 1] = s.rowptr[i] + nbrs[i].size();
  }
  s.colidx.reserve(s.rowptr[n]);
  s.vals.reserve(s.rowptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nbrs[i]) {
      s.colidx.push_back(j);
      s.vals.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
  }
  return s;
}

SparseMatrix normalized_adjacency(const TextAttributedGraph& g) {
  return normalized_adjacency(g.num_nodes(), g.edges);
}

GraphEncoder::GraphEncoder(GraphEncoderConfig cfg, std::size_t in_dim, std::uint64_t seed,
                           ad::ParamStore& store, const std::string& prefix)
    : cfg_(cfg) {
  if (cfg_.layers < 1) throw ConfigError("graph encoder: layers must be >= 1");
  Rng rng(mix_seed(seed, fnv1a64(prefix)));
  std::size_t d = in_dim;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t out = l + 1 == cfg_.layers ? cfg_.out_dim : cfg_.hidden_dim;
    weights_.push_back(store.create(prefix + "w" + std::to_string(l), glorot(d, out, rng)));
    biases_.push_back(store.create(prefix + "b" + std::to_string(l), Matrix(1, out)));
    d = out;
  }
}

ad::Var GraphEncoder::forward(const SparseMatrix& a_norm, ad::Var x, bool linear_output) const {
  ad::Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = ad::spmm(a_norm, h);
    h = ad::add_row_bias(ad::matmul(h, weights_[l]), biases_[l]);
    const bool last = l + 1 == weights_.size();
    if (!(last && linear_output)) h = ad::leaky_relu(h, cfg_.leaky_slope);
  }
  return h;
}

TextEncoder::TextEncoder(TextEncoderConfig cfg, std::size_t vocab, std::uint64_t seed,
                         ad::ParamStore& store, const std::string& prefix)
    : cfg_(cfg) {
  if (cfg_.model_dim % cfg_.heads != 0)
    throw ConfigError("text encoder: model_dim must be divisible by heads");
  Rng rng(mix_seed(seed, fnv1a64(prefix)));
  const std::size_t d = cfg_.model_dim;
  const std::size_t dk = d / cfg_.heads;
  tok_emb_ = store.create(prefix + "tok_emb", gaussian(vocab, d, 0.02, rng));
  pos_emb_ = store.create(prefix + "pos_emb", gaussian(cfg_.max_len, d, 0.02, rng));
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    Block blk;
    const std::string lp = prefix + "l" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string hp = lp + "h" + std::to_string(h) + ".";
      blk.wq.push_back(store.create(hp + "wq", glorot(d, dk, rng)));
      blk.wk.push_back(store.create(hp + "wk", glorot(d, dk, rng)));
      blk.wv.push_back(store.create(hp + "wv", glorot(d, dk, rng)));
    }
    blk.wo = store.create(lp + "wo", glorot(d, d, rng));
    blk.bo = store.create(lp + "bo", Matrix(1, d));
    blk.ln1_g = store.create(lp + "ln1_g", Matrix(1, d, 1.0));
    blk.ln1_b = store.create(lp + "ln1_b", Matrix(1, d));
    blk.ln2_g = store.create(lp + "ln2_g", Matrix(1, d, 1.0));
    blk.ln2_b = store.create(lp + "ln2_b", Matrix(1, d));
    blk.ffn_w1 = store.create(lp + "ffn_w1", glorot(d, cfg_.ffn_dim, rng));
    blk.ffn_b1 = store.create(lp + "ffn_b1", Matrix(1, cfg_.ffn_dim));
    blk.ffn_w2 = store.create(lp + "ffn_w2", glorot(cfg_.ffn_dim, d, rng));
    blk.ffn_b2 = store.create(lp + "ffn_b2", Matrix(1, d));
    blocks_.push_back(std::move(blk));
  }
  ln_f_g_ = store.create(prefix + "ln_f_g", Matrix(1, d, 1.0));
  ln_f_b_ = store.create(prefix + "ln_f_b", Matrix(1, d));
  proj_ = store.create(prefix + "proj", glorot(d, cfg_.out_dim, rng));
}

ad::Var TextEncoder::forward(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw ShapeError("text encoder: empty token sequence");
  const std::size_t len = std::min(token_ids.size(), cfg_.max_len);
  std::vector<std::size_t> tok_idx(len), pos_idx(len);
  for (std::size_t i = 0; i < len; ++i) {
    tok_idx[i] = static_cast<std::size_t>(token_ids[i]);
    pos_idx[i] = i;
  }
  ad::Var x = ad::add(ad::rows_gather(tok_emb_, tok_idx), ad::rows_gather(pos_emb_, pos_idx));

  const double inv_sqrt_dk =
      1.0 / std::sqrt(static_cast<double>(cfg_.model_dim / cfg_.heads));
  for (const Block& blk : blocks_) {
    ad::Var x1 = ad::layer_norm_rows(x, blk.ln1_g, blk.ln1_b);
    std::vector<ad::Var> head_outs;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      ad::Var q = ad::matmul(x1, blk.wq[h]);
      ad::Var k = ad::matmul(x1, blk.wk[h]);
      ad::Var v = ad::matmul(x1, blk.wv[h]);
      ad::Var p = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_dk));
      head_outs.push_back(ad::matmul(p, v));
    }
    ad::Var attn = ad::add_row_bias(ad::matmul(ad::concat_cols(head_outs), blk.wo), blk.bo);
    x = ad::add(x, attn);

    ad::Var x2 = ad::layer_norm_rows(x, blk.ln2_g, blk.ln2_b);
    ad::Var ff = ad::gelu(ad::add_row_bias(ad::matmul(x2, blk.ffn_w1), blk.ffn_b1));
    ff = ad::add_row_bias(ad::matmul(ff, blk.ffn_w2), blk.ffn_b2);
    x = ad::add(x, ff);
  }
  x = ad::layer_norm_rows(x, ln_f_g_, ln_f_b_);
  return ad::matmul(ad::mean_rows(x), proj_);
}

EncoderParams EncoderParams::init(const GraphEncoderConfig& gcfg, const TextEncoderConfig& tcfg,
                                  std::size_t feature_dim, const std::vector<std::string>& corpus,
                                  std::uint64_t seed, double initial_temperature) {
  if (gcfg.out_dim != tcfg.out_dim)
    throw ConfigError("encoders must share one output dimension (graph " +
                      std::to_string(gcfg.out_dim) + " vs text " +
                      std::to_string(tcfg.out_dim) + ")");
  if (!(initial_temperature > 0.0) || !std::isfinite(initial_temperature))
    throw ConfigError("initial similarity temperature must be finite and positive");
  EncoderParams p;
  p.graph_cfg = gcfg;
  p.text_cfg = tcfg;
  p.feature_dim = feature_dim;
  p.seed = seed;
  p.tokenizer = BpeTokenizer::train(corpus, tcfg.vocab_size);
  p.graph_encoder = GraphEncoder(gcfg, feature_dim, seed, p.store, "ge.");
  p.text_encoder = TextEncoder(tcfg, p.tokenizer.vocab_size(), seed, p.store, "te.");
  p.log_temperature =
      p.store.create("log_temperature", Matrix(1, 1, std::log(initial_temperature)));
  return p;
}

namespace {

nlohmann::json graph_cfg_json(const GraphEncoderConfig& c) {
  return {{"layers", c.layers},
          {"hidden_dim", c.hidden_dim},
          {"out_dim", c.out_dim},
          {"leaky_slope", c.leaky_slope}};
}

GraphEncoderConfig graph_cfg_from(const nlohmann::json& j) {
  GraphEncoderConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.out_dim = j.at("out_dim").get<std::size_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  return c;
}

nlohmann::json text_cfg_json(const TextEncoderConfig& c) {
  return {{"layers", c.layers},   {"model_dim", c.model_dim}, {"heads", c.heads},
          {"ffn_dim", c.ffn_dim}, {"max_len", c.max_len},     {"out_dim", c.out_dim},
          {"vocab_size", c.vocab_size}};
}

TextEncoderConfig text_cfg_from(const nlohmann::json& j) {
  TextEncoderConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.out_dim = j.at("out_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  return c;
}

}  // namespace

void EncoderParams::save(const std::string& path) const {
  Checkpoint ck;
  ck.kind = "alignment-encoders";
  ck.meta["graph_encoder"] = graph_cfg_json(graph_cfg);
  ck.meta["text_encoder"] = text_cfg_json(text_cfg);
  ck.meta["feature_dim"] = feature_dim;
  ck.meta["seed"] = seed;
  ck.meta["tokenizer"] = tokenizer.to_json();
  for (const auto& [name, v] : store.items()) ck.tensors.emplace_back(name, v.value());
  ck.save(path);
}

EncoderParams EncoderParams::load(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "alignment-encoders")
    throw ParseError("checkpoint " + path + " is not an encoder checkpoint");
  EncoderParams p;
  p.graph_cfg = graph_cfg_from(ck.meta.at("graph_encoder"));
  p.text_cfg = text_cfg_from(ck.meta.at("text_encoder"));
  p.feature_dim = ck.meta.at("feature_dim").get<std::size_t>();
  p.seed = ck.meta.at("seed").get<std::uint64_t>();
  p.tokenizer = BpeTokenizer::from_json(ck.meta.at("tokenizer"));
  p.graph_encoder = GraphEncoder(p.graph_cfg, p.feature_dim, p.seed, p.store, "ge.");
  p.text_encoder = TextEncoder(p.text_cfg, p.tokenizer.vocab_size(), p.seed, p.store, "te.");
  p.log_temperature = p.store.create("log_temperature", Matrix(1, 1));
  // Overwrite the fresh initialization with the stored tensors.
  for (auto& [name, v] : p.store.items()) {
    const Matrix& saved = ck.tensor(name);
    if (!saved.same_shape(v.value()))
      throw ParseError("checkpoint tensor shape mismatch for " + name + " in " + path);
    v.value() = saved;
  }
  return p;
}

Matrix graph_encode(const TextAttributedGraph& g, const Matrix& features,
                    const EncoderParams& params) {
  if (features.rows() != g.num_nodes())
    throw ShapeError("graph_encode: one feature row per node required");
  if (features.cols() != params.feature_dim)
    throw ShapeError("graph_encode: feature dimension differs from encoder input dimension");
  const SparseMatrix a_norm = normalized_adjacency(g);
  return params.graph_encoder.forward(a_norm, ad::constant(features)).value();
}

Matrix text_encode(const std::vector<std::string>& texts, const EncoderParams& params) {
  Matrix h(texts.size(), params.text_cfg.out_dim);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::vector<int> ids = params.tokenizer.encode(texts[i], params.text_cfg.max_len);
    ad::Var row = params.text_encoder.forward(ids);
    std::copy_n(row.value().row(0), h.cols(), h.row(i));
  }
  return h;
}

}  // namespace lgplug
