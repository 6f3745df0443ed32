#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lgplug/autograd.hpp"
#include "lgplug/detect.hpp"
#include "lgplug/embedding.hpp"
#include "lgplug/rng.hpp"

using namespace lgplug;

namespace {

Matrix logits_of(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

TextAttributedGraph path_graph(std::size_t n) {
  std::vector<NodeId> ids;
  std::vector<std::string> texts(n, "t");
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(ids[i], ids[i + 1]);
  GraphBuilder b;
  return b.build(ids, texts, {}, edges);
}

}  // namespace

TEST_CASE("msp_score worked examples") {
  const auto s = msp_score(logits_of({{10, 0}, {0, 0}}));
  CHECK(s[0] == doctest::Approx(-0.9999546021312976).epsilon(1e-9));
  CHECK(s[1] == doctest::Approx(-0.5));

  const auto single = msp_score(logits_of({{3.2}, {-7.0}}));
  CHECK(single[0] == doctest::Approx(-1.0));
  CHECK(single[1] == doctest::Approx(-1.0));
}

TEST_CASE("energy_score worked examples") {
  const auto s = energy_score(logits_of({{0, 0}, {10, 0}}), 1.0);
  CHECK(s[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(-10.000045398899218).epsilon(1e-9));

  const auto single = energy_score(logits_of({{4.2}}), 1.0);
  CHECK(single[0] == doctest::Approx(-4.2));

  CHECK_THROWS_AS(energy_score(logits_of({{1.0}}), 0.0), ConfigError);

  // large logits stay finite through the max-subtraction guard
  const auto big = energy_score(logits_of({{800, 799}}), 1.0);
  CHECK(std::isfinite(big[0]));
}

TEST_CASE("shift behaviour: msp invariant, energy covariant") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix logits(3, 4);
    for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = 3.0 * rng.normal();
    const double c = rng.normal() * 5.0;
    Matrix shifted = logits;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += c;

    const auto m0 = msp_score(logits);
    const auto m1 = msp_score(shifted);
    const auto e0 = energy_score(logits, 1.0);
    const auto e1 = energy_score(shifted, 1.0);
    for (std::size_t i = 0; i < m0.size(); ++i) {
      CHECK(m1[i] == doctest::Approx(m0[i]).epsilon(1e-10));
      CHECK(e1[i] == doctest::Approx(e0[i] - c).epsilon(1e-9));
    }
  }
}

TEST_CASE("propagate_scores worked examples") {
  TextAttributedGraph g2 = path_graph(2);
  const ScoreVector base{0.0, 2.0};
  CHECK(propagate_scores(base, g2, 0.5, 0) == base);

  const auto one = propagate_scores(base, g2, 0.5, 1);
  CHECK(one[0] == doctest::Approx(0.5));
  CHECK(one[1] == doctest::Approx(1.5));

  const ScoreVector constant{3.3, 3.3};
  for (std::size_t k : {1, 2, 5}) {
    const auto out = propagate_scores(constant, g2, 0.25, k);
    CHECK(out[0] == doctest::Approx(3.3));
    CHECK(out[1] == doctest::Approx(3.3));
  }
}

TEST_CASE("propagation is a convex combination (bounds hold)") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<NodeId> ids;
    std::vector<std::string> texts(n, "t");
    for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.2) edges.emplace_back(ids[i], ids[j]);
    GraphBuilder b;
    TextAttributedGraph g = b.build(ids, texts, {}, edges);

    ScoreVector s(n);
    double lo = 1e300, hi = -1e300;
    for (auto& v : s) {
      v = rng.normal() * 4.0;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const auto out = propagate_scores(s, g, rng.uniform(), 1 + rng.below(4));
    for (double v : out) {
      CHECK(v >= lo - 1e-12);
      CHECK(v <= hi + 1e-12);
    }
  }
}

TEST_CASE("isolated nodes keep their score under propagation") {
  GraphBuilder b;
  TextAttributedGraph g = b.build({"a", "b", "c"}, {"", "", ""}, {}, {{"a", "b"}});
  const auto out = propagate_scores({1.0, 3.0, -2.0}, g, 0.5, 3);
  CHECK(out[2] == doctest::Approx(-2.0));
}

TEST_CASE("regularization_loss worked examples") {
  const double d1 = -5.0, d2 = -1.0;
  {
    const std::vector<double> id{-7.0, -6.0};
    const std::vector<double> exp{0.0, 1.0};
    CHECK(regularization_loss(id, exp, d1, d2) == doctest::Approx(0.0));
  }
  {
    const std::vector<double> id{d1 + 2.0};
    const std::vector<double> exp{d2 + 3.0};
    CHECK(regularization_loss(id, exp, d1, d2) == doctest::Approx(4.0));
  }
  {
    const std::vector<double> id{d1};
    const std::vector<double> exp{d2};
    CHECK(regularization_loss(id, exp, d1, d2) == doctest::Approx(0.0));
  }
  // empty exposure: ID term only
  const std::vector<double> id{d1 + 1.0};
  CHECK(regularization_loss(id, {}, d1, d2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(regularization_loss({}, id, d1, d2), ConfigError);
  CHECK_THROWS_AS(regularization_loss(id, id, -1.0, -5.0), ConfigError);
}

TEST_CASE("regularizer is monotone in each score") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> id{rng.normal() * 3.0, rng.normal() * 3.0};
    std::vector<double> exp{rng.normal() * 3.0};
    const double d1 = -2.0, d2 = 1.0;
    const double base = regularization_loss(id, exp, d1, d2);

    auto id_up = id;
    id_up[0] += 0.5;  // raising an ID score cannot lower the penalty
    CHECK(regularization_loss(id_up, exp, d1, d2) >= base - 1e-12);

    auto exp_up = exp;
    exp_up[0] += 0.5;  // raising an exposed score cannot raise it
    CHECK(regularization_loss(id, exp_up, d1, d2) <= base + 1e-12);
  }
}

TEST_CASE("regularizer gradients match finite differences away from kinks") {
  Rng rng(13);
  const double d1 = -1.0, d2 = 1.0;
  for (int trial = 0; trial < 10; ++trial) {
    // 4-node instance; resample anything within 1e-3 of a kink
    Matrix s0(4, 1);
    for (std::size_t i = 0; i < 4; ++i) {
      double v;
      do {
        v = rng.normal() * 2.0;
      } while (std::abs(v - d1) < 1e-3 || std::abs(v - d2) < 1e-3);
      s0(i, 0) = v;
    }
    auto reg_graph = [&](ad::Var s) {
      ad::Var s_id = ad::rows_gather(s, {0, 1});
      ad::Var s_exp = ad::rows_gather(s, {2, 3});
      return ad::add(ad::mean_all(ad::square(ad::relu(ad::add_scalar(s_id, -d1)))),
                     ad::mean_all(ad::square(ad::relu(ad::sub_from_scalar(d2, s_exp)))));
    };
    ad::Var s = ad::param(s0);
    ad::Var loss = reg_graph(s);
    ad::backward(loss);

    // the graph forward agrees with the plain evaluator
    const std::vector<double> id{s0(0, 0), s0(1, 0)};
    const std::vector<double> exp{s0(2, 0), s0(3, 0)};
    CHECK(loss.value()(0, 0) == doctest::Approx(regularization_loss(id, exp, d1, d2)));

    for (std::size_t i = 0; i < 4; ++i) {
      const double keep = s.value()(i, 0);
      const double h = 1e-6;
      s.value()(i, 0) = keep + h;
      const double up = reg_graph(ad::constant(s.value())).value()(0, 0);
      s.value()(i, 0) = keep - h;
      const double down = reg_graph(ad::constant(s.value())).value()(0, 0);
      s.value()(i, 0) = keep;
      const double fd = (up - down) / (2 * h);
      const double ga = s.grad()(i, 0);
      CHECK(std::abs(fd - ga) / std::max({1.0, std::abs(fd), std::abs(ga)}) <= 1e-4);
    }
  }
}

TEST_CASE("detect_ood thresholds") {
  const std::vector<double> s{-2.0, 0.0, 3.0};
  const auto low = detect_ood(s, -10.0);
  CHECK(low == std::vector<bool>{true, true, true});
  const auto high = detect_ood(s, 10.0);
  CHECK(high == std::vector<bool>{false, false, false});
  const auto mid = detect_ood(s, 1.0);
  CHECK(mid == std::vector<bool>{false, false, true});

  SplitSpec split;
  split.test_id = {"a", "b"};
  split.test_ood = {"c"};
  const std::unordered_map<NodeId, double> by_id{{"a", -2.0}, {"b", 0.0}, {"c", 3.0}};
  const auto decisions = detect_ood(by_id, split, 1.0);
  REQUIRE(decisions.size() == 3);
  CHECK_FALSE(decisions[0].second);
  CHECK_FALSE(decisions[1].second);
  CHECK(decisions[2].second);
  CHECK_THROWS_AS(detect_ood(std::unordered_map<NodeId, double>{}, split, 0.0), IntegrityError);
}

namespace {

struct DetectorFixture {
  TextAttributedGraph g;
  SplitSpec split;
  Matrix x;
  ExposureSet exposure;

  explicit DetectorFixture(std::uint64_t seed = 5) {
    SynthConfig sc;
    sc.n_id_classes = 3;
    sc.n_ood_classes = 2;
    sc.nodes_per_class = 12;
    sc.intra_p = 0.25;
    sc.inter_p = 0.02;
    sc.seed = seed;
    auto [graph, sp] = synth_tag(sc);
    g = std::move(graph);
    split = std::move(sp);
    FeatureConfig fc;
    fc.dim = 48;
    x = init_features(g, fc);
    // oracle-quality exposure: a slice of the true OOD test nodes
    for (std::size_t i = 0; i < split.test_ood.size(); i += 2) {
      exposure.node_ids.push_back(split.test_ood[i]);
      exposure.provenance[split.test_ood[i]] = {0, "planted"};
    }
  }
};

DetectorConfig tiny_detector_config() {
  DetectorConfig cfg;
  cfg.hidden_dim = 24;
  cfg.max_epochs = 60;
  cfg.patience = 60;
  cfg.learning_rate = 2e-2;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("beta=0 training is bitwise identical with or without exposure") {
  DetectorFixture fx;
  DetectorConfig cfg = tiny_detector_config();
  cfg.reg_weight = 0.0;

  DetectorResult with_exposure = train_detector(fx.g, fx.x, fx.split, fx.exposure, cfg);
  DetectorResult without = train_detector(fx.g, fx.x, fx.split, ExposureSet{}, cfg);

  REQUIRE(with_exposure.logits.same_shape(without.logits));
  for (std::size_t i = 0; i < with_exposure.logits.size(); ++i)
    CHECK(with_exposure.logits.data()[i] == without.logits.data()[i]);
  CHECK(with_exposure.scores == without.scores);
}

TEST_CASE("beta>0 with empty exposure is a configuration error") {
  DetectorFixture fx;
  DetectorConfig cfg = tiny_detector_config();
  cfg.reg_weight = 1.0;
  CHECK_THROWS_AS(train_detector(fx.g, fx.x, fx.split, ExposureSet{}, cfg), ConfigError);
}

TEST_CASE("regularized training separates exposure scores from train-ID scores") {
  DetectorFixture fx;
  DetectorConfig cfg = tiny_detector_config();
  cfg.reg_weight = 1.0;
  DetectorResult r = train_detector(fx.g, fx.x, fx.split, fx.exposure, cfg);

  double mean_exp = 0.0, mean_id = 0.0;
  for (const auto& id : fx.exposure.node_ids) mean_exp += r.raw_scores[fx.g.index(id)];
  mean_exp /= static_cast<double>(fx.exposure.node_ids.size());
  for (const auto& id : fx.split.train) mean_id += r.raw_scores[fx.g.index(id)];
  mean_id /= static_cast<double>(fx.split.train.size());
  CHECK(mean_exp > mean_id);

  // validation accuracy on the separable planted classes is high
  CHECK(r.log.back().val_accuracy >= 0.9);
}

TEST_CASE("detector works with the msp scorer and propagation off") {
  DetectorFixture fx;
  DetectorConfig cfg = tiny_detector_config();
  cfg.scorer = "msp";
  cfg.propagate = false;
  cfg.margin_id = -1.0;
  cfg.margin_ood = -0.2;
  cfg.reg_weight = 0.5;
  DetectorResult r = train_detector(fx.g, fx.x, fx.split, fx.exposure, cfg);
  CHECK(r.scores == r.raw_scores);
  for (double s : r.scores) {
    CHECK(s <= 0.0);
    CHECK(s >= -1.0);  // msp scores live in [-1, -1/C]
  }
}

TEST_CASE("regularize_propagated differentiates through the propagation rounds") {
  DetectorFixture fx;
  DetectorConfig cfg = tiny_detector_config();
  cfg.reg_weight = 1.0;
  cfg.regularize_propagated = true;
  cfg.max_epochs = 20;
  DetectorResult r = train_detector(fx.g, fx.x, fx.split, fx.exposure, cfg);
  CHECK(std::isfinite(r.log.back().total_loss));
  CHECK(r.log.back().reg_loss >= 0.0);
}

TEST_CASE("scores file round trip") {
  DetectorFixture fx;
  ScoreVector s(fx.g.num_nodes());
  Rng rng(3);
  for (auto& v : s) v = rng.normal();
  save_scores(fx.g, s, "/tmp/lgplug_scores_test.tsv");
  const ScoreVector loaded = load_scores(fx.g, "/tmp/lgplug_scores_test.tsv");
  REQUIRE(loaded.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(loaded[i] == s[i]);
}
