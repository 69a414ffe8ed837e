#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "core/model.hpp"
#include "doctest.h"
#include "oracle.hpp"

using namespace dman;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.vocab = 5;
  cfg.regions = 3;
  cfg.feature_dim = 4;
  cfg.lfc_hidden1 = 3;
  cfg.lfc_hidden2 = 2;
  cfg.dropout = 0.5;
  cfg.init_seed = 11;
  return cfg;
}

Tensor random_regions(const ModelConfig& cfg, Rng& rng) {
  std::vector<double> v(cfg.regions * cfg.feature_dim);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from({cfg.regions, cfg.feature_dim}, std::move(v));
}

void zero_params(DmanModel& model) {
  for (auto& p : model.parameters())
    for (double& v : p.tensor.mutable_values()) v = 0.0;
}

}  // namespace

TEST_CASE("attention scores vanish with zero parameters") {
  DmanModel model(tiny_config());
  zero_params(model);
  Rng rng(1);
  Tensor regions = random_regions(model.config(), rng);
  Tape t;
  Tensor z = model.attention_scores(t, regions);
  CHECK(z.shape() == Shape{5, 3});
  for (size_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == 0.0);
}

TEST_CASE("attention scores match a hand-computed tanh") {
  ModelConfig cfg;
  cfg.vocab = 1;
  cfg.regions = 2;
  cfg.feature_dim = 1;
  cfg.lfc_hidden1 = 1;
  cfg.lfc_hidden2 = 1;
  cfg.init_seed = 0;
  DmanModel model(cfg);
  model.param("attention.w").mutable_values()[0] = 1.0;
  model.param("attention.b").mutable_values()[0] = 0.0;
  Tensor regions = Tensor::from({2, 1}, {0.0, 0.5});
  Tape t;
  Tensor z = model.attention_scores(t, regions);
  CHECK(z.at(0, 0) == 0.0);
  CHECK(z.at(0, 1) == doctest::Approx(0.46211715726000974).epsilon(1e-15));
}

TEST_CASE("attention scores stay strictly inside (-1, 1)") {
  DmanModel model(tiny_config());
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    Tensor z = model.attention_scores(t, random_regions(model.config(), rng));
    for (size_t i = 0; i < z.size(); ++i) CHECK(std::fabs(z.at(i)) < 1.0);
  }
}

TEST_CASE("attention weights normalize each word row") {
  Tape t;
  Tensor z = Tensor::from({1, 2}, {0.0, std::log(3.0)});
  Tensor a = DmanModel::attention_weights(t, z);
  CHECK(a.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(a.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(3);
  Tensor z2 = Tensor::from({4, 6}, [&] {
    std::vector<double> v(24);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
  }());
  Tensor a2 = DmanModel::attention_weights(t, z2);
  for (size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (size_t c = 0; c < 6; ++c) {
      total += a2.at(r, c);
      CHECK(a2.at(r, c) >= 0.0);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("attend with a one-hot row returns that region") {
  Tape t;
  Tensor regions = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor weights = Tensor::from({2, 3}, {0, 1, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  Tensor u = DmanModel::attend(t, weights, regions);
  CHECK(u.at(0, 0) == 3.0);
  CHECK(u.at(0, 1) == 4.0);
  CHECK(u.at(1, 0) == doctest::Approx(3.0).epsilon(1e-15));  // column means
  CHECK(u.at(1, 1) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("attend equals the direct double loop") {
  Rng rng(4);
  const size_t L = 4, D = 3, M = 2;
  std::vector<double> av(L * D), rv(D * M);
  for (double& x : av) x = rng.uniform(0.0, 1.0);
  for (double& x : rv) x = rng.uniform(-2.0, 2.0);
  Tape t;
  Tensor u = DmanModel::attend(t, Tensor::from({L, D}, av), Tensor::from({D, M}, rv));
  for (size_t k = 0; k < L; ++k)
    for (size_t m = 0; m < M; ++m) {
      double want = 0;
      for (size_t j = 0; j < D; ++j) want += av[k * D + j] * rv[j * M + m];
      CHECK(u.at(k, m) == doctest::Approx(want).epsilon(1e-15));
    }
}

TEST_CASE("attended features lie in the componentwise convex hull of regions") {
  DmanModel model(tiny_config());
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor regions = random_regions(model.config(), rng);
    Tape t;
    auto f = model.forward(t, regions, false);
    Tensor u = DmanModel::attend(t, f.attention, regions);
    for (size_t k = 0; k < model.config().vocab; ++k)
      for (size_t m = 0; m < model.config().feature_dim; ++m) {
        double lo = 1e300, hi = -1e300;
        for (size_t j = 0; j < model.config().regions; ++j) {
          lo = std::min(lo, regions.at(j, m));
          hi = std::max(hi, regions.at(j, m));
        }
        CHECK(u.at(k, m) >= lo - 1e-12);
        CHECK(u.at(k, m) <= hi + 1e-12);
      }
  }
}

TEST_CASE("zeroed LFC stack outputs one half everywhere") {
  DmanModel model(tiny_config());
  zero_params(model);
  Rng rng(6);
  Tape t;
  auto f = model.forward(t, random_regions(model.config(), rng), false);
  for (size_t k = 0; k < 5; ++k) CHECK(f.confidences.at(k) == 0.5);
}

TEST_CASE("per-word parameters are disjoint: perturbing word 1 leaves other outputs unchanged") {
  DmanModel model(tiny_config());
  Rng rng(7);
  Tensor regions = random_regions(model.config(), rng);
  Tape t1;
  auto before = model.forward(t1, regions, false);
  std::vector<double> base(before.confidences.values().begin(), before.confidences.values().end());

  const size_t d1 = model.config().lfc_hidden1, m = model.config().feature_dim;
  auto w1 = model.param("lfc.w1").mutable_values();
  for (size_t i = 0; i < d1 * m; ++i) w1[1 * d1 * m + i] += 0.37;  // word 1's block
  model.param("lfc.b3").mutable_values()[1] -= 0.21;

  Tape t2;
  auto after = model.forward(t2, regions, false);
  for (size_t k = 0; k < 5; ++k) {
    if (k == 1) continue;
    CHECK(after.confidences.at(k) == base[k]);
  }
  CHECK(after.confidences.at(1) != base[1]);
}

TEST_CASE("LFC locality holds exactly in the backward pass") {
  DmanModel model(tiny_config());
  Rng rng(8);
  Tensor regions = random_regions(model.config(), rng);
  Tape t;
  auto f = model.forward(t, regions, false);
  Tensor pick = one_hot_text({0}, 5);
  t.backward(t.sum(t.mul(f.confidences, pick)));

  const size_t d1 = model.config().lfc_hidden1, m = model.config().feature_dim;
  auto g1 = model.param("lfc.w1").grad();
  for (size_t word = 1; word < 5; ++word)
    for (size_t i = 0; i < d1 * m; ++i) CHECK(g1[word * d1 * m + i] == 0.0);
  bool any_nonzero = false;
  for (size_t i = 0; i < d1 * m; ++i) any_nonzero = any_nonzero || g1[i] != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("tiny per-word stack matches a hand-rolled forward") {
  ModelConfig cfg;
  cfg.vocab = 2;
  cfg.regions = 2;
  cfg.feature_dim = 3;
  cfg.lfc_hidden1 = 2;
  cfg.lfc_hidden2 = 2;
  cfg.dropout = 0.0;
  cfg.init_seed = 9;
  DmanModel model(cfg);
  Rng rng(10);
  Tensor u = Tensor::from({2, 3}, [&] {
    std::vector<double> v(6);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  }());
  Tape t;
  Tensor y = model.lfc_forward(t, u, false, nullptr);

  auto w1 = model.param("lfc.w1").values(), b1 = model.param("lfc.b1").values();
  auto w2 = model.param("lfc.w2").values(), b2 = model.param("lfc.b2").values();
  auto w3 = model.param("lfc.w3").values(), b3 = model.param("lfc.b3").values();
  for (size_t k = 0; k < 2; ++k) {
    double h1[2], h2[2];
    for (size_t o = 0; o < 2; ++o) {
      double acc = b1[k * 2 + o];
      for (size_t i = 0; i < 3; ++i) acc += w1[(k * 2 + o) * 3 + i] * u.at(k * 3 + i);
      h1[o] = std::tanh(acc);
    }
    for (size_t o = 0; o < 2; ++o) {
      double acc = b2[k * 2 + o];
      for (size_t i = 0; i < 2; ++i) acc += w2[(k * 2 + o) * 2 + i] * h1[i];
      h2[o] = std::tanh(acc);
    }
    double logit = b3[k];
    for (size_t i = 0; i < 2; ++i) logit += w3[k * 2 + i] * h2[i];
    const double want = 1.0 / (1.0 + std::exp(-logit));
    CHECK(y.at(k) == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("forward equals composing the four stages") {
  DmanModel model(tiny_config());
  Rng rng(11);
  Tensor regions = random_regions(model.config(), rng);
  Tape t;
  auto f = model.forward(t, regions, false);
  Tape t2;
  Tensor z = model.attention_scores(t2, regions);
  Tensor a = DmanModel::attention_weights(t2, z);
  Tensor u = DmanModel::attend(t2, a, regions);
  Tensor y = model.lfc_forward(t2, u, false, nullptr);
  for (size_t i = 0; i < y.size(); ++i) CHECK(f.confidences.at(i) == y.at(i));
  for (size_t i = 0; i < a.size(); ++i) CHECK(f.attention.at(i) == a.at(i));
}

TEST_CASE("evaluation-mode forward is bit-deterministic") {
  DmanModel model(tiny_config());
  Rng rng(12);
  Tensor regions = random_regions(model.config(), rng);
  Tape t1, t2;
  auto a = model.forward(t1, regions, false);
  auto b = model.forward(t2, regions, false);
  for (size_t i = 0; i < a.confidences.size(); ++i) CHECK(a.confidences.at(i) == b.confidences.at(i));
}

TEST_CASE("confidences stay strictly inside (0, 1)") {
  DmanModel model(tiny_config());
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    auto f = model.forward(t, random_regions(model.config(), rng), false);
    for (size_t k = 0; k < f.confidences.size(); ++k) {
      CHECK(f.confidences.at(k) > 0.0);
      CHECK(f.confidences.at(k) < 1.0);
    }
  }
}

TEST_CASE("forward gradients match finite differences for attention and LFC parameters") {
  DmanModel model(tiny_config());
  Rng rng(14);
  Tensor regions = random_regions(model.config(), rng);
  Tensor coeff = Tensor::from({5}, [&] {
    std::vector<double> v(5);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  }());
  auto build = [&](Tape& t) { return t.sum(t.mul(model.forward(t, regions, false).confidences, coeff)); };
  for (auto& p : model.parameters()) {
    INFO(p.name);
    CHECK(oracle::check_gradient(p.tensor, build) < 1e-4);
  }
}

TEST_CASE("training-mode dropout is inverted and evaluation mode is the identity") {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.5;
  DmanModel model(cfg);
  Rng data_rng(15);
  Tensor u = Tensor::from({5, 4}, [&] {
    std::vector<double> v(20);
    for (double& x : v) x = data_rng.uniform(0.2, 1.0);
    return v;
  }());
  Tape t;
  Tensor eval1 = model.lfc_forward(t, u, false, nullptr);
  Tensor eval2 = model.lfc_forward(t, u, false, nullptr);
  for (size_t i = 0; i < eval1.size(); ++i) CHECK(eval1.at(i) == eval2.at(i));

  // Training forwards differ across rng states but reproduce under a reset.
  Rng d1(77), d2(77), d3(78);
  Tape tt;
  Tensor a = model.lfc_forward(tt, u, true, &d1);
  Tensor b = model.lfc_forward(tt, u, true, &d2);
  Tensor c = model.lfc_forward(tt, u, true, &d3);
  bool same_ab = true, same_ac = true;
  for (size_t i = 0; i < a.size(); ++i) {
    same_ab = same_ab && a.at(i) == b.at(i);
    same_ac = same_ac && a.at(i) == c.at(i);
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
}

TEST_CASE("uniform-attention ablation fixes weights at 1/regions") {
  ModelConfig cfg = tiny_config();
  cfg.uniform_attention = true;
  DmanModel model(cfg);
  Rng rng(16);
  Tape t;
  auto f = model.forward(t, random_regions(cfg, rng), false);
  for (size_t i = 0; i < f.attention.size(); ++i) CHECK(f.attention.at(i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("precomputed regions widen float32 exactly") {
  std::vector<float> feats = {1.5f, -2.25f, 0.125f, 3.0f, -0.5f, 7.0f};
  PrecomputedRegions provider(1, 3, 2, feats);
  Tensor r = provider.regions_for(0);
  CHECK(r.shape() == Shape{3, 2});
  for (size_t i = 0; i < 6; ++i) CHECK(r.at(i) == static_cast<double>(feats[i]));
  CHECK_THROWS_AS(provider.regions_for(1), InputError);
}

TEST_CASE("patch projector is a pure function of image and seed") {
  auto store = std::make_shared<RawImageStore>();
  store->channels = 3;
  store->height = 8;
  store->width = 8;
  Rng rng(17);
  store->data.resize(2 * store->pixels_per_image());
  for (auto& v : store->data) v = static_cast<float>(rng.uniform(0.0, 1.0));

  PatchProjector p1(store, 8, 16, 99);
  PatchProjector p2(store, 8, 16, 99);
  PatchProjector p3(store, 8, 16, 100);
  Tensor a = p1.regions_for(0), b = p2.regions_for(0), c = p3.regions_for(0);
  CHECK(a.shape() == Shape{8, 16});
  bool same_ab = true, same_ac = true;
  for (size_t i = 0; i < a.size(); ++i) {
    same_ab = same_ab && a.at(i) == b.at(i);
    same_ac = same_ac && a.at(i) == c.at(i);
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
  CHECK(a.all_finite());
}

TEST_CASE("one_hot_text validates indices") {
  Tensor t = one_hot_text({0, 2}, 4);
  CHECK(t.values()[0] == 1.0);
  CHECK(t.values()[1] == 0.0);
  CHECK(t.values()[2] == 1.0);
  CHECK_THROWS_AS(one_hot_text({4}, 4), InputError);
}

TEST_CASE("initialization is seeded and bounded") {
  ModelConfig cfg = tiny_config();
  DmanModel m1(cfg), m2(cfg);
  cfg.init_seed = 12;
  DmanModel m3(cfg);
  CHECK(m1.parameter_checksum() == m2.parameter_checksum());
  CHECK(m1.parameter_checksum() != m3.parameter_checksum());
  const double bound = std::sqrt(6.0 / (4.0 + 5.0));  // attention.w fan-in/out
  for (double v : m1.param("attention.w").values()) CHECK(std::fabs(v) <= bound);
  for (double v : m1.param("lfc.b1").values()) CHECK(v == 0.0);
}
