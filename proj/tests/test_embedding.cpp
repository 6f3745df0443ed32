#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lgplug/embedding.hpp"
#include "lgplug/rng.hpp"

using namespace lgplug;

namespace {

TextAttributedGraph tiny_graph(const std::vector<std::string>& texts,
                               const std::vector<std::pair<NodeId, NodeId>>& edges) {
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < texts.size(); ++i) ids.push_back("n" + std::to_string(i));
  GraphBuilder b;
  return b.build(ids, texts, {}, edges);
}

}  // namespace

TEST_CASE("hashed bag of words features") {
  FeatureConfig cfg;
  cfg.dim = 64;

  Matrix x = init_features(std::vector<std::string>{"", "alpha beta", "alpha beta",
                                                    "genetic genetic"},
                           cfg);
  REQUIRE(x.rows() == 4);
  REQUIRE(x.cols() == 64);

  // empty text -> all-zero row
  for (std::size_t j = 0; j < 64; ++j) CHECK(x(0, j) == 0.0);
  // identical texts -> identical rows
  for (std::size_t j = 0; j < 64; ++j) CHECK(x(1, j) == x(2, j));
  // repeated token counts in its hash bucket
  const std::size_t bucket = fnv1a64("genetic") % 64;
  CHECK(x(3, bucket) == doctest::Approx(2.0));

  cfg.method = "no-such-method";
  CHECK_THROWS_AS(init_features(std::vector<std::string>{"t"}, cfg), ConfigError);
}

TEST_CASE("frozen text encoder pooling features are deterministic") {
  FeatureConfig cfg;
  cfg.method = "frozen-text-encoder-pooling";
  cfg.dim = 16;
  cfg.seed = 5;
  const std::vector<std::string> texts{"alpha beta gamma", "delta epsilon"};
  Matrix a = init_features(texts, cfg);
  Matrix b = init_features(texts, cfg);
  REQUIRE(a.cols() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("normalized adjacency of a 2-node path") {
  // A+I = ones(2,2); D = diag(2,2); entries all 1/2.
  SparseMatrix s = normalized_adjacency(2, {{0, 1}});
  REQUIRE(s.rowptr == std::vector<std::size_t>{0, 2, 4});
  for (double v : s.vals) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("graph encoder identity configurations") {
  // Single node, one layer, identity weights, slope 1 (linear): z == x.
  ad::ParamStore store;
  GraphEncoderConfig cfg;
  cfg.layers = 1;
  cfg.out_dim = 3;
  cfg.leaky_slope = 1.0;
  GraphEncoder enc(cfg, 3, 1, store, "ge.");
  store.get("ge.w0").value() = Matrix::identity(3);

  SparseMatrix self_only = normalized_adjacency(1, {});
  Matrix x(1, 3);
  x(0, 0) = -1.5;
  x(0, 1) = 0.25;
  x(0, 2) = 7.0;
  Matrix z = enc.forward(self_only, ad::constant(x)).value();
  for (std::size_t j = 0; j < 3; ++j) CHECK(z(0, j) == doctest::Approx(x(0, j)));
}

TEST_CASE("one aggregation round over a 2-node edge averages features") {
  ad::ParamStore store;
  GraphEncoderConfig cfg;
  cfg.layers = 1;
  cfg.out_dim = 1;
  cfg.leaky_slope = 1.0;
  GraphEncoder enc(cfg, 1, 1, store, "ge.");
  store.get("ge.w0").value() = Matrix::identity(1);

  SparseMatrix a_norm = normalized_adjacency(2, {{0, 1}});
  Matrix x(2, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 2.0;
  Matrix z = enc.forward(a_norm, ad::constant(x)).value();
  CHECK(z(0, 0) == doctest::Approx(1.0));
  CHECK(z(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("graph encoder is permutation equivariant") {
  Rng rng(3);
  const std::size_t n = 7, d = 5;
  std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {2, 3},
                                                         {3, 4}, {4, 5}, {5, 6}, {0, 6}};
  Matrix x(n, d);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

  ad::ParamStore store;
  GraphEncoderConfig cfg;
  cfg.layers = 2;
  cfg.hidden_dim = 4;
  cfg.out_dim = 3;
  GraphEncoder enc(cfg, d, 11, store, "ge.");
  SparseMatrix a_norm = normalized_adjacency(n, edges);
  Matrix z = enc.forward(a_norm, ad::constant(x)).value();

  // Apply a permutation to nodes, features and edges alike.
  std::vector<std::size_t> perm{3, 0, 6, 2, 5, 1, 4};
  Matrix xp(n, d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.row(i), d, xp.row(perm[i]));
  std::vector<std::pair<std::size_t, std::size_t>> ep;
  for (auto [a, b] : edges) ep.emplace_back(std::min(perm[a], perm[b]),
                                            std::max(perm[a], perm[b]));
  SparseMatrix a_perm = normalized_adjacency(n, ep);
  Matrix zp = enc.forward(a_perm, ad::constant(xp)).value();

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(zp(perm[i], j) == doctest::Approx(z(i, j)).epsilon(1e-10));
}

TEST_CASE("bpe tokenizer learns merges and normalizes") {
  const std::vector<std::string> corpus{"the neural network", "the neural net",
                                        "neural networks everywhere"};
  BpeTokenizer tok = BpeTokenizer::train(corpus, 64);
  CHECK(tok.vocab_size() > 2);

  CHECK(BpeTokenizer::normalize("  Hello   World  ") == "hello world");
  CHECK(BpeTokenizer::normalize("tabs\tand\nnewlines") == "tabs and newlines");

  const auto ids = tok.encode("the neural network", 32);
  CHECK(!ids.empty());
  CHECK(ids == tok.encode("  THE   Neural  Network  ", 32));  // case+space insensitive
  CHECK(tok.encode("", 32) == std::vector<int>{BpeTokenizer::kPadId});

  // round trip through json keeps the segmentation
  BpeTokenizer tok2 = BpeTokenizer::from_json(tok.to_json());
  CHECK(tok2.encode("neural networks everywhere", 32) ==
        tok.encode("neural networks everywhere", 32));
}

namespace {

EncoderParams small_params(const std::vector<std::string>& corpus, std::size_t feat_dim,
                           std::uint64_t seed) {
  GraphEncoderConfig gcfg;
  gcfg.layers = 2;
  gcfg.hidden_dim = 6;
  gcfg.out_dim = 4;
  TextEncoderConfig tcfg;
  tcfg.layers = 1;
  tcfg.model_dim = 8;
  tcfg.heads = 2;
  tcfg.ffn_dim = 16;
  tcfg.max_len = 12;
  tcfg.out_dim = 4;
  tcfg.vocab_size = 96;
  return EncoderParams::init(gcfg, tcfg, feat_dim, corpus, seed);
}

}  // namespace

TEST_CASE("text encoding shape, determinism, truncation, whitespace") {
  const std::vector<std::string> corpus{"alpha beta gamma delta", "alpha alpha beta",
                                        "gamma delta epsilon"};
  EncoderParams params = small_params(corpus, 4, 17);

  Matrix h1 = text_encode({"alpha beta", "alpha beta"}, params);
  REQUIRE(h1.rows() == 2);
  REQUIRE(h1.cols() == 4);
  for (std::size_t j = 0; j < 4; ++j) CHECK(h1(0, j) == h1(1, j));  // deterministic

  // Truncation: identical leading tokens dominate past max_len.
  std::string long_text, prefix;
  for (int i = 0; i < 40; ++i) long_text += "alpha ";
  for (int i = 0; i < 20; ++i) prefix += "alpha ";
  Matrix h2 = text_encode({long_text, prefix}, params);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(h2(0, j) == doctest::Approx(h2(1, j)).epsilon(1e-12));

  // Trailing whitespace is erased by normalization.
  Matrix h3 = text_encode({"alpha beta", "alpha beta   \n"}, params);
  for (std::size_t j = 0; j < 4; ++j) CHECK(h3(0, j) == h3(1, j));

  // Empty text maps to the padding-only encoding, same dim.
  Matrix h4 = text_encode({""}, params);
  REQUIRE(h4.cols() == 4);
  CHECK(h4.all_finite());
}

TEST_CASE("encoder checkpoint round trip preserves behaviour") {
  const std::vector<std::string> corpus{"alpha beta gamma", "delta epsilon zeta"};
  EncoderParams params = small_params(corpus, 4, 23);

  const std::string path = "/tmp/lgplug_encoder_test.ckpt";
  params.save(path);
  EncoderParams loaded = EncoderParams::load(path);

  CHECK(loaded.store.items().size() == params.store.items().size());
  for (std::size_t k = 0; k < params.store.items().size(); ++k) {
    const auto& [name, v] = params.store.items()[k];
    const auto& [name2, v2] = loaded.store.items()[k];
    CHECK(name == name2);
    REQUIRE(v.value().same_shape(v2.value()));
    for (std::size_t i = 0; i < v.value().size(); ++i)
      CHECK(v.value().data()[i] == v2.value().data()[i]);
  }

  Matrix h = text_encode({"alpha beta"}, params);
  Matrix h2 = text_encode({"alpha beta"}, loaded);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h.data()[i] == h2.data()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("both encoders are differentiable end to end") {
  const std::vector<std::string> corpus{"alpha beta", "gamma beta delta"};
  EncoderParams params = small_params(corpus, 3, 31);
  TextAttributedGraph g = tiny_graph({"alpha beta", "gamma beta delta"}, {{"n0", "n1"}});
  SparseMatrix a_norm = normalized_adjacency(g);
  Rng rng(4);
  Matrix x(2, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Matrix probe_z(2, 4), probe_h(1, 4);
  for (std::size_t i = 0; i < probe_z.size(); ++i) probe_z.data()[i] = rng.normal();
  for (std::size_t i = 0; i < probe_h.size(); ++i) probe_h.data()[i] = rng.normal();

  // Scalar probe of Z for the graph side, of H for the text side.
  auto z_probe = [&] {
    ad::Var z = params.graph_encoder.forward(a_norm, ad::constant(x));
    return ad::mean_all(ad::hadamard(z, ad::constant(probe_z)));
  };
  const auto ids = params.tokenizer.encode("gamma beta delta", params.text_cfg.max_len);
  auto h_probe = [&] {
    ad::Var h = params.text_encoder.forward(ids);
    return ad::mean_all(ad::hadamard(h, ad::constant(probe_h)));
  };

  for (auto probe : {+0, +1}) {
    auto forward = probe == 0 ? std::function<ad::Var()>(z_probe) : h_probe;
    params.store.zero_grads();
    ad::Var loss = forward();
    ad::backward(loss);
    // Check a representative sample of parameters with central differences.
    for (const auto& [name, v] : params.store.items()) {
      const bool graph_param = name.rfind("ge.", 0) == 0;
      if (probe == 0 && !graph_param) continue;
      if (probe == 1 && graph_param) continue;
      Matrix analytic = v.grad();
      if (analytic.size() == 0) continue;
      Matrix& w = const_cast<ad::Var&>(v).value();
      const std::size_t stride = std::max<std::size_t>(1, w.size() / 5);
      for (std::size_t i = 0; i < w.size(); i += stride) {
        const double keep = w.data()[i];
        const double h_step = 1e-6 * std::max(1.0, std::abs(keep));
        w.data()[i] = keep + h_step;
        const double up = forward().value()(0, 0);
        w.data()[i] = keep - h_step;
        const double down = forward().value()(0, 0);
        w.data()[i] = keep;
        const double fd = (up - down) / (2.0 * h_step);
        const double ga = analytic.data()[i];
        const double denom = std::max({1.0, std::abs(fd), std::abs(ga)});
        INFO(name, "[", i, "] analytic=", ga, " fd=", fd);
        CHECK(std::abs(fd - ga) / denom <= 1e-4);
      }
    }
  }
}

TEST_CASE("graph_encode validates shapes") {
  const std::vector<std::string> corpus{"a", "b"};
  EncoderParams params = small_params(corpus, 3, 7);
  TextAttributedGraph g = tiny_graph({"a", "b"}, {});
  Matrix wrong(2, 9);
  CHECK_THROWS_AS(graph_encode(g, wrong, params), ShapeError);
  Matrix wrong_rows(5, 3);
  CHECK_THROWS_AS(graph_encode(g, wrong_rows, params), ShapeError);
}
