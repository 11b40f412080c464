#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "hop3d/common.hpp"
#include "hop3d/data.hpp"
#include "hop3d/model.hpp"
#include "oracles.hpp"

using namespace hop3d;

namespace {

SplitSpec small_split() {
  SplitSpec s = make_split(3, 2, 900);
  s.n_points = 400;
  s.min_points = 16;
  return s;
}

// Nearest-signature classifier over the feature block, distance to each class
// signature (background = zero vector).
int nearest_signature(const SplitSpec& spec, const Scene& scene, std::size_t row) {
  int best = -1;
  double best_d = 0.0;
  for (int c = 0; c <= static_cast<int>(spec.k_total()); ++c) {
    Vec sig = class_signature(spec, c);
    double d = 0.0;
    for (std::size_t k = 0; k < spec.sig_channels; ++k) {
      const double diff = scene.feats.at(row, 3 + k) - sig[k];
      d += diff * diff;
    }
    if (best < 0 || d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("make_split lays out contiguous class ids and derives distinct seeds") {
  SplitSpec s = make_split(4, 3, 17);
  REQUIRE(s.k_base() == 4);
  REQUIRE(s.k_novel() == 3);
  CHECK(s.base_classes == std::vector<int>{1, 2, 3, 4});
  CHECK(s.novel_classes == std::vector<int>{5, 6, 7});
  std::set<std::uint64_t> seeds{s.train_seed, s.support_seed, s.test_seed, s.signature_seed};
  CHECK(seeds.size() == 4);
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("validate rejects broken specs") {
  SplitSpec s = small_split();
  SplitSpec bad = s;
  bad.base_classes = {2, 3};
  CHECK_THROWS_AS(bad.validate(), std::exception);
  bad = s;
  bad.novel_classes = {9, 10};
  CHECK_THROWS_AS(bad.validate(), std::exception);
  bad = s;
  bad.n_points = 40;  // cannot give min_points per class
  CHECK_THROWS_AS(bad.validate(), std::exception);
  bad = s;
  bad.bg_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::exception);
}

TEST_CASE("class signatures are unit norm, deterministic, and distinct") {
  SplitSpec s = small_split();
  CHECK(norm(class_signature(s, 0)) == 0.0);
  for (int c = 1; c <= static_cast<int>(s.k_total()); ++c) {
    Vec sig = class_signature(s, c);
    CHECK(norm(sig) == doctest::Approx(1.0).epsilon(1e-12));
    Vec again = class_signature(s, c);
    for (std::size_t k = 0; k < sig.size(); ++k) CHECK(sig[k] == again[k]);
  }
  Vec a = class_signature(s, 1);
  Vec b = class_signature(s, 2);
  double diff = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) diff += std::fabs(a[k] - b[k]);
  CHECK(diff > 0.1);
}

TEST_CASE("generate_scene is a pure function of (seed, spec, phase)") {
  SplitSpec s = small_split();
  Scene a = generate_scene(1234, s, Phase::Novel);
  Scene b = generate_scene(1234, s, Phase::Novel);
  CHECK(a.coords.data == b.coords.data);
  CHECK(a.feats.data == b.feats.data);
  CHECK(a.labels == b.labels);
  Scene c = generate_scene(1235, s, Phase::Novel);
  CHECK(a.coords.data != c.coords.data);
}

TEST_CASE("scenes have the advertised shape, ranges, and class counts") {
  SplitSpec s = small_split();
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    Scene scene = generate_scene(seed, s, Phase::Novel);
    REQUIRE(scene.size() == s.n_points);
    REQUIRE(scene.coords.rows == s.n_points);
    REQUIRE(scene.feats.cols == s.f_in());
    std::size_t n_bg = 0;
    std::vector<std::size_t> per_class(s.k_total() + 1, 0);
    for (std::size_t i = 0; i < scene.size(); ++i) {
      const int lab = scene.labels[i];
      REQUIRE(lab >= 0);
      REQUIRE(lab <= static_cast<int>(s.k_total()));
      per_class[static_cast<std::size_t>(lab)]++;
      if (lab == 0) ++n_bg;
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(scene.coords.at(i, k) >= 0.0);
        CHECK(scene.coords.at(i, k) <= 1.0);
        // The first three feature channels repeat the coordinates.
        CHECK(scene.feats.at(i, k) == scene.coords.at(i, k));
      }
    }
    // Background includes at least the dedicated uniform block.
    CHECK(n_bg >= static_cast<std::size_t>(std::llround(s.bg_fraction * s.n_points)));
    // Every present foreground class meets the per-class floor.
    for (std::size_t c = 1; c <= s.k_total(); ++c)
      if (per_class[c] > 0) CHECK(per_class[c] >= s.min_points);
  }
}

TEST_CASE("base phase relabels novel points without touching geometry") {
  SplitSpec s = small_split();
  const std::uint64_t seed = 4242;
  Scene novel = generate_scene(seed, s, Phase::Novel);
  Scene base = generate_scene(seed, s, Phase::Base);
  CHECK(novel.coords.data == base.coords.data);
  CHECK(novel.feats.data == base.feats.data);
  bool saw_novel = false;
  for (std::size_t i = 0; i < novel.size(); ++i) {
    CHECK(base.labels[i] <= static_cast<int>(s.k_base()));
    if (novel.labels[i] > static_cast<int>(s.k_base())) {
      saw_novel = true;
      CHECK(base.labels[i] == 0);
    } else {
      CHECK(base.labels[i] == novel.labels[i]);
    }
  }
  CHECK(saw_novel);  // seed chosen so at least one novel class is present
}

TEST_CASE("signature features carry the class identity through the noise") {
  SplitSpec s = small_split();
  SUBCASE("clean features recover labels exactly") {
    SplitSpec clean = s;
    clean.noise_sigma = 0.0;
    Scene scene = generate_scene(11, clean, Phase::Novel);
    for (std::size_t i = 0; i < scene.size(); ++i)
      CHECK(nearest_signature(clean, scene, i) == scene.labels[i]);
  }
  SUBCASE("default noise still leaves most points recoverable") {
    Scene scene = generate_scene(11, s, Phase::Novel);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < scene.size(); ++i)
      if (nearest_signature(s, scene, i) == scene.labels[i]) ++hit;
    CHECK(static_cast<double>(hit) / static_cast<double>(scene.size()) > 0.8);
  }
}

TEST_CASE("foreground blobs are spatially tight") {
  SplitSpec s = small_split();
  Scene scene = generate_scene(21, s, Phase::Novel);
  for (std::size_t c = 1; c <= s.k_total(); ++c) {
    Vec mean(3, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < scene.size(); ++i)
      if (scene.labels[i] == static_cast<int>(c)) {
        for (std::size_t k = 0; k < 3; ++k) mean[k] += scene.coords.at(i, k);
        ++n;
      }
    if (n == 0) continue;
    for (double& v : mean) v /= static_cast<double>(n);
    double spread = 0.0;
    for (std::size_t i = 0; i < scene.size(); ++i)
      if (scene.labels[i] == static_cast<int>(c))
        for (std::size_t k = 0; k < 3; ++k) {
          const double d = scene.coords.at(i, k) - mean[k];
          spread += d * d;
        }
    spread = std::sqrt(spread / static_cast<double>(3 * n));
    CHECK(spread < 4.0 * s.blob_sigma);  // clamping can only shrink the blob
  }
}

TEST_CASE("sample_support picks K deterministic scenes per novel class") {
  SplitSpec s = small_split();
  s.shots = 2;
  std::vector<Scene> pool;
  for (std::uint64_t i = 0; i < 8; ++i)
    pool.push_back(generate_scene(mix_seed(s.support_seed, 1000 + i), s, Phase::Novel));
  SupportSelection a = sample_support(s, pool);
  SupportSelection b = sample_support(s, pool);
  REQUIRE(a.classes.size() == s.k_novel());
  CHECK(a.classes == std::vector<int>{4, 5});
  for (std::size_t k = 0; k < a.classes.size(); ++k) {
    REQUIRE(a.indices[k].size() == 2);
    CHECK(a.indices[k] == b.indices[k]);
    CHECK(std::is_sorted(a.indices[k].begin(), a.indices[k].end()));
    for (std::size_t idx : a.indices[k]) {
      REQUIRE(idx < pool.size());
      const auto& labels = pool[idx].labels;
      CHECK(std::find(labels.begin(), labels.end(), a.classes[k]) != labels.end());
    }
  }
  CHECK(std::is_sorted(a.scene_union.begin(), a.scene_union.end()));
  CHECK(std::adjacent_find(a.scene_union.begin(), a.scene_union.end()) == a.scene_union.end());
}

TEST_CASE("sample_support reports an undersized pool") {
  SplitSpec s = small_split();
  s.shots = 3;
  std::vector<Scene> pool;  // empty: no scene contains any novel class
  CHECK_THROWS_AS(sample_support(s, pool), std::runtime_error);
}

TEST_CASE("pseudo_label_stub ground-truth mode copies labels; threshold mode filters") {
  SplitSpec s = small_split();
  Scene scene = generate_scene(33, s, Phase::Novel);
  ModelConfig mc;
  mc.f_in = s.f_in();
  mc.k_base = s.k_base();
  mc.k_novel = s.k_novel();
  mc.feat_dim = 8;
  mc.hidden_backbone = 8;
  mc.hidden_head = 8;
  Model model = make_model(mc, 5);
  model.phase = 2;

  std::vector<int> gt = pseudo_label_stub(model, scene, PseudoMode::GroundTruth, 0.9);
  CHECK(gt == scene.labels);

  std::vector<int> any = pseudo_label_stub(model, scene, PseudoMode::Threshold, 0.0);
  for (int lab : any) {
    CHECK(lab != kIgnoreLabel);  // zero threshold accepts every argmax
    CHECK(lab >= 0);
    CHECK(lab <= static_cast<int>(s.k_total()));
  }
  std::vector<int> none = pseudo_label_stub(model, scene, PseudoMode::Threshold, 1.1);
  for (int lab : none) CHECK(lab == kIgnoreLabel);  // impossible threshold rejects all
}

TEST_CASE("pseudo_label_stub with a phase-1 model never emits novel labels") {
  SplitSpec s = small_split();
  Scene scene = generate_scene(34, s, Phase::Novel);
  ModelConfig mc;
  mc.f_in = s.f_in();
  mc.k_base = s.k_base();
  mc.k_novel = s.k_novel();
  mc.feat_dim = 8;
  mc.hidden_backbone = 8;
  mc.hidden_head = 8;
  Model model = make_model(mc, 5);
  REQUIRE(model.phase == 1);

  std::vector<int> any = pseudo_label_stub(model, scene, PseudoMode::Threshold, 0.0);
  Mat probs = softmax_rows(phase1_logits(model, scene.feats));
  for (std::size_t i = 0; i < any.size(); ++i) {
    CHECK(any[i] >= 0);
    CHECK(any[i] <= static_cast<int>(s.k_base()));  // base or background only
    CHECK(any[i] == argmax_label(probs, i, mc.k_base, mc.k_novel, 1));
  }

  // A threshold between the top probability of two chosen rows labels one
  // row and ignores the other.
  std::vector<double> top(any.size(), 0.0);
  for (std::size_t i = 0; i < any.size(); ++i)
    for (std::size_t c = 0; c < probs.cols; ++c) top[i] = std::max(top[i], probs.at(i, c));
  auto [lo, hi] = std::minmax_element(top.begin(), top.end());
  if (*lo < *hi) {
    const double mid = 0.5 * (*lo + *hi);
    std::vector<int> some = pseudo_label_stub(model, scene, PseudoMode::Threshold, mid);
    CHECK(some[static_cast<std::size_t>(lo - top.begin())] == kIgnoreLabel);
    CHECK(some[static_cast<std::size_t>(hi - top.begin())] != kIgnoreLabel);
  }
}

}  // TEST_SUITE
