#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hop3d/trainer.hpp"

namespace hop3d {

// Flat dotted-key run configuration. Sources merge in precedence order
// defaults < config file < command-line (--seed, then --set pairs).
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";  // --out only, not a config-file key

  // data
  std::size_t k_base = 6, k_novel = 4;
  int shots = 5;
  std::size_t n_points = 1024;
  std::size_t sig_channels = 8;
  double noise_sigma = 0.3;
  double blob_sigma = 0.05;
  double bg_fraction = 0.35;
  double presence_prob = 0.8;
  std::size_t min_points = 32;
  std::size_t train_scenes = 32;
  std::size_t support_pool_scenes = 16;
  std::size_t test_scenes = 12;

  // model
  std::size_t feat_dim = 16;
  std::size_t hidden_backbone = 32;
  std::size_t hidden_head = 32;

  // training
  std::size_t phase1_iters = 400;
  double adaptation_ratio = 0.1;
  std::size_t batch_scenes = 4;
  double lr_phase1 = 1e-2, lr_phase2 = 2e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double lambda_orth_p1 = 0.1, lambda_orth_p2 = 0.1;
  std::size_t grad_bank_t = 64;
  double gs_rel_tol = 1e-10;
  ProjectScope project_scope = ProjectScope::Full;
  EntropyConfig entropy;
  Flags flags;
  PseudoMode pseudo_mode = PseudoMode::GroundTruth;
  double pseudo_thresh = 0.9;

  // ablation / reporting
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3, 4, 5};
  std::string ablate_sections = "mechanisms,lambda,ratio";
  std::vector<double> lambda_sweep = {0.0, 0.01, 0.1, 1.0};
  std::vector<double> ratio_sweep = {0.00625, 0.025, 0.1};
  std::size_t ablate_threads = 0;  // 0: take HOP_THREADS, else 1

  // evaluation
  std::string eval_checkpoint;  // empty: prefer phase2, fall back to phase1
  std::string eval_split = "test";

  TrainConfig to_train_config() const;
};

struct KeyDoc {
  std::string key, value, doc;
};

// Every known key with its current value and one-line description.
std::vector<KeyDoc> config_items(const RunConfig& cfg);

// Set one dotted key; throws std::invalid_argument on unknown keys or
// unparsable values.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// "key = value" lines, '#' comments, blank lines ignored.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Round-trippable dump of the full configuration.
std::string config_to_string(const RunConfig& cfg);

}  // namespace hop3d
