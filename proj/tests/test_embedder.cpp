#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hiermatch/embedder.hpp"
#include "hiermatch/optimizer.hpp"
#include "support/finite_diff.hpp"
#include "support/soft_reference.hpp"

using namespace hiermatch;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

ModelConfig small_config(std::size_t d = 8, std::size_t d_h = 4) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.d_h = d_h;
  return cfg;
}

Tensor random_regions(std::size_t n, std::size_t d_raw, Rng& rng) {
  return Tensor::from_values(n, d_raw, random_values(n * d_raw, rng));
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.values()[i] != b.values()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("projection is the affine map it claims to be") {
  Rng rng(3);
  const std::size_t n = 4, d_raw = 5, d = 6;
  ModelParams params = make_model_params(d_raw, small_config(d, 3), rng);
  const Tensor raw = random_regions(n, d_raw, rng);
  const FeatureSet fs = project_regions(raw, Branch::sketch, params.proj);

  REQUIRE(fs.count() == n);
  REQUIRE(fs.nodes.cols() == d);
  CHECK(fs.node_ids == std::vector<std::int64_t>{0, 1, 2, 3});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = params.proj.bias.value(0, j);
      for (std::size_t k = 0; k < d_raw; ++k)
        acc += raw.value(i, k) * params.proj.weight.value(k, j);
      CHECK(fs.nodes.value(i, j) == doctest::Approx(acc).epsilon(1e-13));
    }
}

TEST_CASE("single-region input projects to a 1xd set") {
  Rng rng(5);
  ModelParams params = make_model_params(4, small_config(), rng);
  const FeatureSet fs =
      project_regions(random_regions(1, 4, rng), Branch::photo, params.proj);
  CHECK(fs.count() == 1);
  CHECK(fs.nodes.rows() == 1);
  CHECK(fs.nodes.cols() == 8);
}

TEST_CASE("zero weights and bias give zero features") {
  Rng rng(7);
  ModelParams params = make_model_params(4, small_config(), rng);
  {
    auto w = params.proj.weight.mutable_values();
    std::fill(w.begin(), w.end(), 0.0);
  }
  const FeatureSet fs =
      project_regions(random_regions(3, 4, rng), Branch::photo, params.proj);
  for (const double v : fs.nodes.values()) CHECK(v == 0.0);
}

TEST_CASE("projection rejects an undefined region set") {
  Rng rng(9);
  ModelParams params = make_model_params(4, small_config(), rng);
  CHECK_THROWS_AS((void)project_regions(Tensor(), Branch::sketch, params.proj),
                  DataError);
}

TEST_CASE("single-node branches skip fusion but are still co-attended") {
  Rng rng(11);
  const std::size_t d_raw = 5;
  const ModelConfig cfg = small_config();
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(1, d_raw, rng);
  const Tensor p_raw = random_regions(1, d_raw, rng);

  const PairEmbedding emb = embed_pair(s_raw, p_raw, params, cfg,
                                       SelectionMode::greedy, nullptr);
  CHECK(emb.sketch_trace.entries.empty());
  CHECK(emb.photo_trace.entries.empty());
  CHECK(emb.loop_iterations == 1);

  const FeatureSet s = project_regions(s_raw, Branch::sketch, params.proj);
  const FeatureSet p = project_regions(p_raw, Branch::photo, params.proj);
  const auto [se, pe] = coattend(s, p, params.coattn);
  CHECK(same_values(emb.sketch_final, select_row(se.nodes, 0)));
  CHECK(same_values(emb.photo_final, select_row(pe.nodes, 0)));
}

TEST_CASE("unequal branches: one idles while the other keeps fusing") {
  Rng rng(13);
  const std::size_t d_raw = 5;
  const ModelConfig cfg = small_config();
  ModelParams params = make_model_params(d_raw, cfg, rng);
  Rng noise(17);
  const PairEmbedding emb =
      embed_pair(random_regions(3, d_raw, rng), random_regions(5, d_raw, rng),
                 params, cfg, SelectionMode::sample, &noise);
  CHECK(emb.sketch_trace.entries.size() == 2);
  CHECK(emb.photo_trace.entries.size() == 4);
  CHECK(emb.loop_iterations == 4);
  CHECK(emb.sketch_final.rows() == 1);
  CHECK(emb.sketch_final.cols() == cfg.d);
  CHECK(emb.photo_final.cols() == cfg.d);
}

TEST_CASE("fusion step counts hold for every size combination") {
  Rng rng(17);
  const std::size_t d_raw = 4;
  const ModelConfig cfg = small_config(6, 3);
  ModelParams params = make_model_params(d_raw, cfg, rng);
  for (std::size_t ns = 1; ns <= 4; ++ns)
    for (std::size_t np = 1; np <= 4; ++np) {
      Rng noise(100 * ns + np);
      const PairEmbedding emb =
          embed_pair(random_regions(ns, d_raw, rng),
                     random_regions(np, d_raw, rng), params, cfg,
                     SelectionMode::sample, &noise);
      CHECK(emb.sketch_trace.entries.size() == ns - 1);
      CHECK(emb.photo_trace.entries.size() == np - 1);
      if (ns == 1 && np == 1)
        CHECK(emb.loop_iterations == 1);
      else
        CHECK(emb.loop_iterations == std::max(ns, np) - 1);
    }
}

TEST_CASE("explicit replay reproduces recorded finals bit-exactly") {
  Rng rng(19);
  const std::size_t d_raw = 6;
  ModelConfig cfg = small_config();
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(4, d_raw, rng);
  const Tensor p_raw = random_regions(5, d_raw, rng);

  Rng noise(23);
  const PairEmbedding recorded = embed_pair(s_raw, p_raw, params, cfg,
                                            SelectionMode::sample, &noise);

  ModelConfig replay_cfg = cfg;
  replay_cfg.explicit_hierarchy = true;
  const PairEmbedding replayed =
      embed_pair(s_raw, p_raw, params, replay_cfg, SelectionMode::greedy,
                 nullptr, &recorded.sketch_trace, &recorded.photo_trace);
  CHECK(same_values(recorded.sketch_final, replayed.sketch_final));
  CHECK(same_values(recorded.photo_final, replayed.photo_final));
}

TEST_CASE("explicit mode validates its scripts") {
  Rng rng(29);
  const std::size_t d_raw = 4;
  ModelConfig cfg = small_config();
  cfg.explicit_hierarchy = true;
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(3, d_raw, rng);
  const Tensor p_raw = random_regions(3, d_raw, rng);

  SUBCASE("missing script") {
    CHECK_THROWS_AS((void)embed_pair(s_raw, p_raw, params, cfg,
                                     SelectionMode::greedy, nullptr),
                    ConfigError);
  }
  SUBCASE("wrong merge count") {
    HierarchyTrace bad;
    bad.entries.push_back({0, Branch::sketch, 0, 1, 0, 1, 3, {}});
    CHECK_THROWS_AS((void)embed_pair(s_raw, p_raw, params, cfg,
                                     SelectionMode::greedy, nullptr, &bad, &bad),
                    DataError);
  }
  SUBCASE("unknown node id") {
    HierarchyTrace bad;
    bad.entries.push_back({0, Branch::sketch, 0, 1, 0, 7, 3, {}});
    bad.entries.push_back({1, Branch::sketch, 0, 1, 3, 2, 4, {}});
    CHECK_THROWS_AS((void)embed_pair(s_raw, p_raw, params, cfg,
                                     SelectionMode::greedy, nullptr, &bad, &bad),
                    DataError);
  }
}

TEST_CASE("triplet loss boundary and interior arithmetic") {
  const auto make_pair = [](std::vector<double> s, std::vector<double> p) {
    PairEmbedding e;
    e.sketch_final = Tensor::row_vector(std::move(s));
    e.photo_final = Tensor::row_vector(std::move(p));
    return e;
  };
  const double margin = 0.5;
  // D+ = 0, D- = margin: exactly at the boundary, loss 0.
  const PairEmbedding pos0 = make_pair({1.0, 2.0}, {1.0, 2.0});
  const PairEmbedding neg0 = make_pair({0.0, 0.0}, {std::sqrt(margin), 0.0});
  CHECK(triplet_loss(pos0, neg0, margin).item() == 0.0);

  // D+ = 1, D- = 0.5, margin 0.5: loss exactly 1.0.
  const PairEmbedding pos1 = make_pair({0.0, 0.0}, {1.0, 0.0});
  const PairEmbedding neg1 = make_pair({0.0, 0.0}, {std::sqrt(0.5), 0.0});
  CHECK(triplet_loss(pos1, neg1, margin).item() == doctest::Approx(1.0));

  // Loss is nonnegative and zero when the negative is far enough.
  const PairEmbedding far_neg = make_pair({0.0, 0.0}, {5.0, 0.0});
  CHECK(triplet_loss(pos1, far_neg, margin).item() == 0.0);
}

TEST_CASE("inside the margin the loss pushes distances the right way") {
  // d(loss)/d(D+) = +1 and d(loss)/d(D-) = -1 translate into gradients
  // 2(s-p) on the positive pair and -2(s-p) on the negative pair.
  PairEmbedding pos, neg;
  pos.sketch_final = Tensor::row_vector({1.0, 0.5}, true);
  pos.photo_final = Tensor::row_vector({0.0, 0.0}, true);
  neg.sketch_final = Tensor::row_vector({0.2, 0.1}, true);
  neg.photo_final = Tensor::row_vector({0.0, 0.0}, true);

  const Tensor loss = triplet_loss(pos, neg, 0.5);
  REQUIRE(loss.item() > 0.0);
  backward(loss);
  CHECK(pos.sketch_final.grad()[0] == doctest::Approx(2.0 * 1.0));
  CHECK(pos.sketch_final.grad()[1] == doctest::Approx(2.0 * 0.5));
  CHECK(neg.sketch_final.grad()[0] == doctest::Approx(-2.0 * 0.2));
  CHECK(neg.sketch_final.grad()[1] == doctest::Approx(-2.0 * 0.1));
}

TEST_CASE("both ablation flags reduce the model to projection + mean pool") {
  Rng rng(31);
  const std::size_t d_raw = 5, n = 4;
  ModelConfig cfg = small_config();
  cfg.no_coattn = true;
  cfg.no_hierarchy = true;
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(n, d_raw, rng);
  const Tensor p_raw = random_regions(3, d_raw, rng);
  const PairEmbedding emb = embed_pair(s_raw, p_raw, params, cfg,
                                       SelectionMode::greedy, nullptr);

  // Mean-pool oracle over the projected rows.
  const FeatureSet s = project_regions(s_raw, Branch::sketch, params.proj);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += s.nodes.value(i, j);
    CHECK(emb.sketch_final.values()[j] == acc * (1.0 / static_cast<double>(n)));
  }
}

TEST_CASE("embed_single matches the sketch branch of a no-coattn pair") {
  Rng rng(37);
  const std::size_t d_raw = 5;
  ModelConfig cfg = small_config();
  cfg.no_coattn = true;
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(4, d_raw, rng);
  const Tensor p_raw = random_regions(3, d_raw, rng);

  const PairEmbedding pair = embed_pair(s_raw, p_raw, params, cfg,
                                        SelectionMode::greedy, nullptr);
  const SingleEmbedding single = embed_single(s_raw, params, cfg);
  CHECK(same_values(pair.sketch_final, single.final));

  const SingleEmbedding again = embed_single(s_raw, params, cfg);
  CHECK(same_values(single.final, again.final));
}

TEST_CASE("two projected nodes fuse into one through the fusion weight") {
  Rng rng(41);
  const std::size_t d_raw = 4;
  const ModelConfig cfg = small_config();
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor raw = random_regions(2, d_raw, rng);
  const SingleEmbedding emb = embed_single(raw, params, cfg);
  REQUIRE(emb.trace.entries.size() == 1);

  const FeatureSet projected = project_regions(raw, Branch::sketch, params.proj);
  const Tensor expected = fuse_vectors(select_row(projected.nodes, 0),
                                       select_row(projected.nodes, 1),
                                       params.hier);
  CHECK(same_values(emb.final, expected));
}

TEST_CASE("fifty Adam steps on a margin-violating triplet reduce the loss") {
  Rng rng(43);
  const std::size_t d_raw = 6;
  const ModelConfig cfg = small_config();
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(3, d_raw, rng);
  const Tensor p_pos = random_regions(3, d_raw, rng);
  const Tensor p_neg = random_regions(3, d_raw, rng);

  const auto loss_now = [&]() {
    const PairEmbedding pos = embed_pair(s_raw, p_pos, params, cfg,
                                         SelectionMode::greedy, nullptr);
    const PairEmbedding neg = embed_pair(s_raw, p_neg, params, cfg,
                                         SelectionMode::greedy, nullptr);
    return triplet_loss(pos, neg, cfg.margin);
  };

  const double initial = loss_now().item();
  REQUIRE(initial > 0.0);  // margin violated at init

  AdamOptimizer opt(params.store, {.lr = 1e-4});
  for (int step = 0; step < 50; ++step) {
    params.store.zero_grad();
    backward(loss_now());
    opt.step(params.store);
  }
  const double final_loss = loss_now().item();
  CHECK(final_loss < initial - 1e-8);
}

TEST_CASE("full-model gradients pass finite differences on the soft path") {
  Rng rng(47);
  const std::size_t d_raw = 4;
  const ModelConfig cfg = small_config(6, 3);
  ModelParams params = make_model_params(d_raw, cfg, rng);
  const Tensor s_raw = random_regions(3, d_raw, rng);
  const Tensor p_pos = random_regions(4, d_raw, rng);
  const Tensor p_neg = random_regions(3, d_raw, rng);

  testsupport::StepScript recorder(91);
  (void)testsupport::scripted_triplet_loss(s_raw, p_pos, p_neg, params, cfg,
                                           recorder, false);
  const auto loss_fn = [&]() {
    testsupport::StepScript replay(recorder, true);
    return testsupport::scripted_triplet_loss(s_raw, p_pos, p_neg, params, cfg,
                                              replay, false);
  };
  CHECK(testsupport::check_store_gradients(params.store, loss_fn) < 1e-4);
}
