#include "hop3d/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hop3d/common.hpp"
#include "hop3d/model.hpp"
#include "hop3d/net.hpp"

namespace hop3d {

void SplitSpec::validate() const {
  require(!base_classes.empty(), "split: need at least one base class");
  require(!novel_classes.empty(), "split: need at least one novel class");
  for (std::size_t i = 0; i < base_classes.size(); ++i)
    require(base_classes[i] == static_cast<int>(i) + 1, "split: base classes must be 1..k_base");
  for (std::size_t i = 0; i < novel_classes.size(); ++i)
    require(novel_classes[i] == static_cast<int>(k_base() + i) + 1,
            "split: novel classes must follow base classes contiguously");
  require(shots >= 1, "split: shots must be >= 1");
  require(sig_channels >= 1, "split: sig_channels must be >= 1");
  require(noise_sigma >= 0.0 && blob_sigma > 0.0, "split: bad sigma");
  require(bg_fraction > 0.0 && bg_fraction < 1.0, "split: bg_fraction must be in (0,1)");
  require(presence_prob > 0.0 && presence_prob <= 1.0, "split: presence_prob must be in (0,1]");
  // Worst case: every foreground class present in one scene.
  std::size_t fg = n_points - static_cast<std::size_t>(std::llround(bg_fraction * n_points));
  require(fg / k_total() >= min_points, "split: n_points too small for min_points per class");
}

SplitSpec make_split(std::size_t k_base, std::size_t k_novel, std::uint64_t master_seed) {
  SplitSpec s;
  for (std::size_t i = 0; i < k_base; ++i) s.base_classes.push_back(static_cast<int>(i) + 1);
  for (std::size_t i = 0; i < k_novel; ++i)
    s.novel_classes.push_back(static_cast<int>(k_base + i) + 1);
  s.train_seed = mix_seed(master_seed, 101);
  s.support_seed = mix_seed(master_seed, 202);
  s.test_seed = mix_seed(master_seed, 303);
  s.signature_seed = mix_seed(master_seed, 404);
  return s;
}

Vec class_signature(const SplitSpec& spec, int class_id) {
  require(class_id >= 0 && class_id <= static_cast<int>(spec.k_total()),
          "class_signature: class out of range");
  Vec sig(spec.sig_channels, 0.0);
  if (class_id == 0) return sig;  // background carries no signature
  Rng rng(mix_seed(spec.signature_seed, static_cast<std::uint64_t>(class_id)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& v : sig) v = gauss(rng);
  return l2_normalize(sig);
}

Scene generate_scene(std::uint64_t seed, const SplitSpec& spec, Phase phase) {
  spec.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<int> present;
  for (int c = 1; c <= static_cast<int>(spec.k_total()); ++c)
    if (unit(rng) < spec.presence_prob) present.push_back(c);
  if (present.empty())
    present.push_back(1 + static_cast<int>(rng() % spec.k_total()));

  std::size_t n_bg = static_cast<std::size_t>(std::llround(spec.bg_fraction * spec.n_points));
  std::size_t n_fg = spec.n_points - n_bg;
  std::vector<std::size_t> counts(present.size(), n_fg / present.size());
  for (std::size_t i = 0; i < n_fg % present.size(); ++i) counts[i]++;

  Scene scene;
  scene.coords = Mat(spec.n_points, 3);
  scene.feats = Mat(spec.n_points, spec.f_in());
  scene.labels.assign(spec.n_points, 0);

  std::size_t row = 0;
  auto emit = [&](const double* xyz, const Vec& sig, int label) {
    for (std::size_t k = 0; k < 3; ++k) {
      double v = std::clamp(xyz[k], 0.0, 1.0);
      scene.coords.at(row, k) = v;
      scene.feats.at(row, k) = v;
    }
    for (std::size_t k = 0; k < spec.sig_channels; ++k) {
      double v = sig[k];
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * gauss(rng);
      scene.feats.at(row, 3 + k) = v;
    }
    scene.labels[row] = label;
    ++row;
  };

  for (std::size_t pi = 0; pi < present.size(); ++pi) {
    int c = present[pi];
    Vec sig = class_signature(spec, c);
    double center[3];
    for (double& v : center) v = 0.2 + 0.6 * unit(rng);
    bool is_novel = c > static_cast<int>(spec.k_base());
    int label = (phase == Phase::Base && is_novel) ? 0 : c;
    for (std::size_t p = 0; p < counts[pi]; ++p) {
      double xyz[3];
      for (std::size_t k = 0; k < 3; ++k) xyz[k] = center[k] + spec.blob_sigma * gauss(rng);
      emit(xyz, sig, label);
    }
  }
  Vec bg_sig(spec.sig_channels, 0.0);
  for (std::size_t p = 0; p < n_bg; ++p) {
    double xyz[3];
    for (double& v : xyz) v = unit(rng);
    emit(xyz, bg_sig, 0);
  }
  return scene;
}

SupportSelection sample_support(const SplitSpec& spec, const std::vector<Scene>& pool) {
  spec.validate();
  SupportSelection sel;
  for (int c : spec.novel_classes) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& labels = pool[i].labels;
      if (std::find(labels.begin(), labels.end(), c) != labels.end()) candidates.push_back(i);
    }
    if (candidates.size() < static_cast<std::size_t>(spec.shots))
      throw std::runtime_error("sample_support: pool has only " +
                               std::to_string(candidates.size()) + " scenes with class " +
                               std::to_string(c) + ", need " + std::to_string(spec.shots));
    Rng rng(mix_seed(spec.support_seed, static_cast<std::uint64_t>(c)));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(static_cast<std::size_t>(spec.shots));
    std::sort(candidates.begin(), candidates.end());
    sel.classes.push_back(c);
    sel.indices.push_back(candidates);
    sel.scene_union.insert(sel.scene_union.end(), candidates.begin(), candidates.end());
  }
  std::sort(sel.scene_union.begin(), sel.scene_union.end());
  sel.scene_union.erase(std::unique(sel.scene_union.begin(), sel.scene_union.end()),
                        sel.scene_union.end());
  return sel;
}

std::vector<int> pseudo_label_stub(const Model& model, const Scene& scene,
                                   PseudoMode mode, double thresh) {
  if (mode == PseudoMode::GroundTruth) return scene.labels;
  // The stub labels with whatever model it is given; a phase-1 model scores
  // base and background only, so its labels never land in the novel range.
  Mat logits = model.phase == 1 ? phase1_logits(model, scene.feats)
                                : phase2_logits(model, scene.feats);
  Mat probs = softmax_rows(logits);
  std::vector<int> out(scene.size(), kIgnoreLabel);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    int label = argmax_label(probs, i, model.cfg.k_base, model.cfg.k_novel, model.phase);
    std::size_t col = static_cast<std::size_t>(
        label_to_column(label, model.cfg.k_base, model.cfg.k_novel, model.phase));
    if (probs.at(i, col) >= thresh) out[i] = label;
  }
  return out;
}

}  // namespace hop3d
