#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "sparsedet/assign.hpp"
#include "sparsedet/rng.hpp"
#include "support/oracles.hpp"

using namespace sparsedet;

namespace {

std::vector<PixelCandidate> random_instance(Rng& rng, int& H, int& W, int& C) {
  H = rng.uniform_int(2, 16);
  W = rng.uniform_int(2, 16);
  C = rng.uniform_int(1, 5);
  Grid3<double> scores(H, W, C);
  for (double& v : scores.data) v = rng.uniform(0.001, 0.999);
  return make_candidates(scores);
}

std::optional<std::set<int>> random_prompt(Rng& rng, int C) {
  const int kind = rng.uniform_int(0, 3);
  if (kind == 0) return std::nullopt;          // no-prompt mode
  if (kind == 1) return std::set<int>{};       // "none"
  std::set<int> classes;
  const int n = rng.uniform_int(1, C);
  while (static_cast<int>(classes.size()) < n) classes.insert(rng.uniform_int(0, C - 1));
  return classes;
}

}  // namespace

TEST_CASE("selection set is ordered, deduplicated and merges tags") {
  SelectionSet s;
  s.insert({2, 3, 1, 0.5, kTagConf});
  s.insert({1, 0, 0, 0.9, kTagFg});
  s.insert({2, 3, 1, 0.7, kTagPerClass});  // duplicate triple, higher score
  REQUIRE(s.size() == 2);
  CHECK(s.entries()[0].y == 1);  // (y, x, class) order
  CHECK(s.entries()[1].tags == (kTagConf | kTagPerClass));
  CHECK(s.entries()[1].score == 0.7);
  CHECK(s.contains(2, 3, 1));
  CHECK_FALSE(s.contains(2, 3, 0));
}

TEST_CASE("select_fg basics and fixture") {
  // Hand fixture: two cells, three classes each.
  const std::vector<PixelCandidate> cands{
      {0, 0, 0, 0.9}, {0, 0, 1, 0.3}, {0, 0, 2, 0.8},
      {0, 1, 0, 0.2}, {0, 1, 1, 0.95}, {0, 1, 2, 0.4},
  };

  SUBCASE("empty prompt selects nothing") {
    CHECK(select_fg(cands, std::set<int>{}, 0.5).empty());
  }
  SUBCASE("no-prompt mode skips the stage") {
    CHECK(select_fg(cands, std::nullopt, 0.0).empty());
  }
  SUBCASE("threshold at the maximum selects nothing") {
    CHECK(select_fg(cands, std::set<int>{0, 1, 2}, 0.95).empty());
  }
  SUBCASE("prompt {0, 2} at thr 0.5 matches the exhaustive filter") {
    const auto got = select_fg(cands, std::set<int>{0, 2}, 0.5);
    // cell (0,0): argmax class 0 at 0.9 > 0.5 and 0 in prompt -> selected
    // cell (0,1): argmax class 1 not in prompt -> dropped
    CHECK(oracles::selection_triples(got) ==
          oracles::naive_select_fg(cands, {0, 2}, 0.5));
    REQUIRE(got.size() == 1);
    CHECK(got.entries()[0].class_id == 0);
    CHECK(got.entries()[0].tags == kTagFg);
  }
  SUBCASE("strict inequality at the threshold") {
    CHECK(select_fg(cands, std::set<int>{1}, 0.95).empty());  // 0.95 > 0.95 is false
  }
}

TEST_CASE("select_topk matches the full-sort oracle") {
  Rng rng(17);
  SUBCASE("k >= n returns everything") {
    int H, W, C;
    const auto cands = random_instance(rng, H, W, C);
    CHECK(select_topk(cands, static_cast<int>(cands.size()) + 5).size() == cands.size());
  }
  SUBCASE("k = 1 returns the global maximum") {
    int H, W, C;
    const auto cands = random_instance(rng, H, W, C);
    const auto got = select_topk(cands, 1);
    REQUIRE(got.size() == 1);
    const auto best = *std::max_element(cands.begin(), cands.end(),
                                        [](const auto& a, const auto& b) {
                                          return a.score < b.score;
                                        });
    CHECK(got.entries()[0].score == best.score);
  }
  SUBCASE("random instances match sort-then-prefix") {
    for (int rep = 0; rep < 50; ++rep) {
      int H, W, C;
      const auto cands = random_instance(rng, H, W, C);
      const int k = rng.uniform_int(1, 30);
      CHECK(oracles::selection_triples(select_topk(cands, k)) ==
            oracles::naive_select_topk(cands, k));
    }
  }
}

TEST_CASE("select_per_class floors and oracle") {
  Rng rng(19);
  SUBCASE("single class, k_j = 1 takes that class's maximum") {
    const std::vector<PixelCandidate> cands{
        {0, 0, 0, 0.2}, {1, 1, 0, 0.8}, {2, 2, 0, 0.5}};
    const auto got = select_per_class(cands, std::set<int>{0}, 1);
    REQUIRE(got.size() == 1);
    CHECK(got.entries()[0].score == 0.8);
  }
  SUBCASE("classes absent from the candidates contribute nothing") {
    const std::vector<PixelCandidate> cands{{0, 0, 0, 0.2}};
    CHECK(select_per_class(cands, std::set<int>{3}, 4).empty());
  }
  SUBCASE("random instances match the per-class sort oracle") {
    for (int rep = 0; rep < 50; ++rep) {
      int H, W, C;
      const auto cands = random_instance(rng, H, W, C);
      const auto prompt = random_prompt(rng, C);
      const int k_j = rng.uniform_int(1, 12);
      std::set<int> classes;
      if (prompt.has_value() && !prompt->empty()) {
        classes = *prompt;
      } else {
        for (const auto& c : cands) classes.insert(c.class_id);
      }
      CHECK(oracles::selection_triples(select_per_class(cands, prompt, k_j)) ==
            oracles::naive_select_per_class(cands, classes, k_j));
    }
  }
}

TEST_CASE("assign_unlabeled equals the naive set construction") {
  Rng rng(23);
  for (int rep = 0; rep < 200; ++rep) {
    int H, W, C;
    const auto cands = random_instance(rng, H, W, C);
    ClaConfig cfg;
    cfg.thr = rng.uniform(0.1, 0.95);
    cfg.k = rng.uniform_int(1, 20);
    cfg.k_j = rng.uniform_int(1, 8);
    const auto prompt = random_prompt(rng, C);

    const auto got = assign_unlabeled(cands, prompt, cfg, cands.size());
    const auto expected = oracles::naive_assign_unlabeled(
        cands, {prompt, cfg.thr, cfg.k, cfg.k_j});
    CHECK(oracles::selection_triples(got) == expected);
  }
}

TEST_CASE("assign_unlabeled dedups and provenance tags accumulate") {
  // One candidate that wins every stage.
  const std::vector<PixelCandidate> cands{{0, 0, 0, 0.99}, {0, 1, 0, 0.1}};
  ClaConfig cfg{.thr = 0.5, .k = 1, .k_j = 1};
  const auto got = assign_unlabeled(cands, std::set<int>{0}, cfg, cands.size());
  REQUIRE(got.size() == 1);
  CHECK(got.entries()[0].tags == (kTagFg | kTagConf | kTagPerClass));
}

TEST_CASE("assign_sparse union with ground-truth pixels") {
  Rng rng(29);

  SUBCASE("no gt pixels reduces to assign_unlabeled") {
    int H, W, C;
    const auto cands = random_instance(rng, H, W, C);
    ClaConfig cfg{.thr = 0.6, .k = 5, .k_j = 2};
    const auto prompt = random_prompt(rng, C);
    CHECK(assign_sparse(cands, prompt, cfg, cands.size(), SelectionSet{}) ==
          assign_unlabeled(cands, prompt, cfg, cands.size()));
  }
  SUBCASE("superset of both inputs, duplicate-free") {
    for (int rep = 0; rep < 100; ++rep) {
      int H, W, C;
      const auto cands = random_instance(rng, H, W, C);
      ClaConfig cfg;
      cfg.thr = rng.uniform(0.3, 0.9);
      cfg.k = rng.uniform_int(1, 15);
      cfg.k_j = rng.uniform_int(1, 5);
      const auto prompt = random_prompt(rng, C);

      SelectionSet gt;
      for (int i = rng.uniform_int(0, 10); i > 0; --i) {
        gt.insert({rng.uniform_int(0, H - 1), rng.uniform_int(0, W - 1),
                   rng.uniform_int(0, C - 1), 1.0, kTagGt});
      }
      const auto unlab = assign_unlabeled(cands, prompt, cfg, cands.size());
      const auto sparse = assign_sparse(cands, prompt, cfg, cands.size(), gt);

      for (const auto& e : unlab.entries()) CHECK(sparse.contains(e.y, e.x, e.class_id));
      for (const auto& e : gt.entries()) CHECK(sparse.contains(e.y, e.x, e.class_id));

      // brute-force union-dedup oracle
      auto expected = oracles::naive_assign_unlabeled(
          cands, {prompt, cfg.thr, cfg.k, cfg.k_j});
      for (const auto& e : gt.entries()) expected.insert({e.y, e.x, e.class_id});
      CHECK(oracles::selection_triples(sparse) == expected);
    }
  }
}

TEST_CASE("per-class floor: every prompt class with candidates contributes") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    int H, W, C;
    const auto cands = random_instance(rng, H, W, C);
    ClaConfig cfg;
    cfg.thr = 0.99;  // fg stage nearly empty, floors must still hold
    cfg.k = 1;
    cfg.k_j = rng.uniform_int(1, 6);
    std::set<int> prompt;
    prompt.insert(rng.uniform_int(0, C - 1));
    prompt.insert(rng.uniform_int(0, C - 1));

    const auto got = assign_unlabeled(cands, prompt, cfg, cands.size());
    for (int cls : prompt) {
      size_t available = 0;
      for (const auto& c : cands) available += (c.class_id == cls);
      size_t selected_of_class = 0;
      for (const auto& e : got.entries()) selected_of_class += (e.class_id == cls);
      CHECK(selected_of_class >= std::min<size_t>(cfg.k_j, available));
    }
  }
}

TEST_CASE("selection is invariant under candidate permutation and rescaling") {
  Rng rng(37);
  for (int rep = 0; rep < 60; ++rep) {
    int H, W, C;
    auto cands = random_instance(rng, H, W, C);
    ClaConfig cfg;
    cfg.thr = rng.uniform(0.2, 0.8);
    cfg.k = rng.uniform_int(1, 10);
    cfg.k_j = rng.uniform_int(1, 4);
    const auto prompt = random_prompt(rng, C);
    const auto base = assign_unlabeled(cands, prompt, cfg, cands.size());

    // permutation
    for (size_t i = cands.size() - 1; i > 0; --i) {
      std::swap(cands[i], cands[rng.uniform_int(0, static_cast<int>(i))]);
    }
    CHECK(assign_unlabeled(cands, prompt, cfg, cands.size()) == base);

    // uniform positive rescaling of scores; rescale thr consistently so the
    // fg stage keeps its decision boundary
    const double scale = rng.uniform(0.1, 0.9);
    auto scaled = cands;
    for (auto& c : scaled) c.score *= scale;
    ClaConfig scaled_cfg = cfg;
    scaled_cfg.thr = cfg.thr * scale;
    CHECK(assign_unlabeled(scaled, prompt, scaled_cfg, scaled.size()) == base);
  }
}

TEST_CASE("raising thr never enlarges select_fg") {
  Rng rng(41);
  for (int rep = 0; rep < 60; ++rep) {
    int H, W, C;
    const auto cands = random_instance(rng, H, W, C);
    std::set<int> prompt;
    for (int c = 0; c < C; ++c) prompt.insert(c);
    const double t1 = rng.uniform(0.1, 0.9);
    const double t2 = rng.uniform(t1, 0.99);
    const auto low = select_fg(cands, prompt, t1);
    const auto high = select_fg(cands, prompt, t2);
    CHECK(high.size() <= low.size());
    for (const auto& e : high.entries()) CHECK(low.contains(e.y, e.x, e.class_id));
  }
}

TEST_CASE("effective_k resolves the one-percent default") {
  CHECK(effective_k(ClaConfig{.k = 0}, 2000) == 20);
  CHECK(effective_k(ClaConfig{.k = 0}, 50) == 1);  // floor at 1
  CHECK(effective_k(ClaConfig{.k = 7}, 2000) == 7);
}

TEST_CASE("gt_selection lifts mask cells with the gt tag") {
  Grid3<uint8_t> mask(3, 3, 2, 0);
  mask.at(1, 2, 0) = 1;
  mask.at(0, 0, 1) = 1;
  const auto sel = gt_selection(mask);
  REQUIRE(sel.size() == 2);
  CHECK(sel.contains(1, 2, 0));
  CHECK(sel.contains(0, 0, 1));
  for (const auto& e : sel.entries()) {
    CHECK(e.tags == kTagGt);
    CHECK(e.score == 1.0);
  }
}

TEST_CASE("assign_global_topk is exactly select_topk") {
  Rng rng(43);
  int H, W, C;
  const auto cands = random_instance(rng, H, W, C);
  for (int k : {1, 5, 50}) {
    CHECK(assign_global_topk(cands, k) == select_topk(cands, k));
  }
}
