#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hop3d/linalg.hpp"

namespace hop3d {

struct Model;  // defined in model.hpp

// Labels: 0 = background, 1..K_b base classes, K_b+1..K_b+K_n novel classes.
struct Scene {
  Mat coords;               // [N x 3], unit-cube meters
  Mat feats;                // [N x (3 + sig_channels)]: coords then signature block
  std::vector<int> labels;  // N class labels

  std::size_t size() const { return labels.size(); }
};

enum class Phase { Base = 1, Novel = 2 };

// Class split plus the synthetic-scene generation knobs. Scenes are a pure
// function of (seed, spec, phase).
struct SplitSpec {
  std::vector<int> base_classes;   // 1..k_base
  std::vector<int> novel_classes;  // k_base+1..k_base+k_novel
  int shots = 1;
  std::uint64_t train_seed = 1;
  std::uint64_t support_seed = 2;
  std::uint64_t test_seed = 3;
  std::uint64_t signature_seed = 4;

  std::size_t n_points = 2048;
  std::size_t sig_channels = 8;
  double noise_sigma = 0.3;
  double blob_sigma = 0.05;
  double bg_fraction = 0.35;
  double presence_prob = 0.8;
  std::size_t min_points = 32;

  std::size_t k_base() const { return base_classes.size(); }
  std::size_t k_novel() const { return novel_classes.size(); }
  std::size_t k_total() const { return k_base() + k_novel(); }
  std::size_t f_in() const { return 3 + sig_channels; }
  void validate() const;
};

// Contiguous class layout for k_base base and k_novel novel classes.
SplitSpec make_split(std::size_t k_base, std::size_t k_novel, std::uint64_t master_seed);

// Unit-norm signature vector of one class (class 0 maps to the zero vector).
Vec class_signature(const SplitSpec& spec, int class_id);

// Seeded synthetic scene: one Gaussian blob per present foreground class,
// uniform background, signature features with additive noise. Phase::Base
// relabels novel-class points as background (the points remain).
Scene generate_scene(std::uint64_t seed, const SplitSpec& spec, Phase phase);

// K selected scene indices per novel class (ascending class order), seeded.
// Throws if the pool holds fewer than K scenes containing some novel class.
struct SupportSelection {
  std::vector<int> classes;                       // novel classes, ascending
  std::vector<std::vector<std::size_t>> indices;  // K pool indices per class
  std::vector<std::size_t> scene_union;           // deduplicated, ascending
};

SupportSelection sample_support(const SplitSpec& spec, const std::vector<Scene>& pool);

enum class PseudoMode { GroundTruth, Threshold };

// Stand-in for an external pseudo-labeling pipeline: GroundTruth copies the
// scene labels; Threshold keeps the model's argmax where max prob >= thresh
// and emits kIgnoreLabel elsewhere. Scoring follows model.phase, so a phase-1
// model labels base and background classes only.
std::vector<int> pseudo_label_stub(const Model& model, const Scene& scene,
                                   PseudoMode mode, double thresh = 0.9);

}  // namespace hop3d
