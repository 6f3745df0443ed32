#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgplug/autograd.hpp"
#include "lgplug/matrix.hpp"
#include "lgplug/tag_data.hpp"
#include "lgplug/tokenizer.hpp"

namespace lgplug {

// ---------------------------------------------------------------------------
// Initial node features

struct FeatureConfig {
  std::string method = "hashed-bag-of-words";  // or "frozen-text-encoder-pooling"
  std::size_t dim = 256;
  std::uint64_t seed = 1;
};

// One row per text. hashed-bag-of-words buckets lowercase alphanumeric
// tokens by FNV-1a hash mod dim and counts occurrences.
// frozen-text-encoder-pooling runs a seed-initialized frozen text encoder
// over the corpus and takes its embeddings.
Matrix init_features(const std::vector<std::string>& texts, const FeatureConfig& config);
Matrix init_features(const TextAttributedGraph& g, const FeatureConfig& config);

std::uint64_t fnv1a64(const std::string& s);

// ---------------------------------------------------------------------------
// Graph encoder: stacked symmetric-normalized aggregation rounds, each with
// a linear map and LeakyReLU.

struct GraphEncoderConfig {
  std::size_t layers = 2;
  std::size_t hidden_dim = 128;
  std::size_t out_dim = 128;
  double leaky_slope = 0.01;
};

// D̃^{-1/2}(A+I)D̃^{-1/2} in CSR form.
SparseMatrix normalized_adjacency(const TextAttributedGraph& g);
SparseMatrix normalized_adjacency(std::size_t n,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& edges);

class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(GraphEncoderConfig cfg, std::size_t in_dim, std::uint64_t seed,
               ad::ParamStore& store, const std::string& prefix = "ge.");

  // linear_output suppresses the activation on the last layer (classifier use).
  ad::Var forward(const SparseMatrix& a_norm, ad::Var x, bool linear_output = false) const;

  const GraphEncoderConfig& config() const { return cfg_; }

 private:
  GraphEncoderConfig cfg_;
  std::vector<ad::Var> weights_;
  std::vector<ad::Var> biases_;
};

// ---------------------------------------------------------------------------
// Text encoder: byte-BPE tokens, learned positional embeddings, pre-LN
// transformer blocks, mean pooling, linear projection to out_dim.

struct TextEncoderConfig {
  std::size_t layers = 2;
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_len = 128;
  std::size_t out_dim = 128;
  std::size_t vocab_size = 512;
};

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(TextEncoderConfig cfg, std::size_t vocab, std::uint64_t seed,
              ad::ParamStore& store, const std::string& prefix = "te.");

  ad::Var forward(const std::vector<int>& token_ids) const;  // 1×out_dim

  const TextEncoderConfig& config() const { return cfg_; }

 private:
  TextEncoderConfig cfg_;
  ad::Var tok_emb_, pos_emb_;
  struct Block {
    std::vector<ad::Var> wq, wk, wv;  // one per head
    ad::Var wo, bo;
    ad::Var ln1_g, ln1_b, ln2_g, ln2_b;
    ad::Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };
  std::vector<Block> blocks_;
  ad::Var ln_f_g_, ln_f_b_;
  ad::Var proj_;
};

// ---------------------------------------------------------------------------
// Joint encoder state: both encoders, the learnable log-temperature, the
// tokenizer and every tensor in one ParamStore (the checkpoint unit).

struct EncoderParams {
  GraphEncoderConfig graph_cfg;
  TextEncoderConfig text_cfg;
  std::size_t feature_dim = 0;
  std::uint64_t seed = 0;
  ad::ParamStore store;
  GraphEncoder graph_encoder;
  TextEncoder text_encoder;
  BpeTokenizer tokenizer;
  ad::Var log_temperature;  // 1×1; similarity scale is exp of this

  static EncoderParams init(const GraphEncoderConfig& gcfg, const TextEncoderConfig& tcfg,
                            std::size_t feature_dim, const std::vector<std::string>& corpus,
                            std::uint64_t seed, double initial_temperature = 14.3);

  void save(const std::string& path) const;
  static EncoderParams load(const std::string& path);
};

// Inference entry points (frozen parameters, plain matrices).
Matrix graph_encode(const TextAttributedGraph& g, const Matrix& features,
                    const EncoderParams& params);
Matrix text_encode(const std::vector<std::string>& texts, const EncoderParams& params);

}  // namespace lgplug
