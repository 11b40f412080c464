#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hop3d/data.hpp"
#include "hop3d/hop_grad.hpp"
#include "hop3d/model.hpp"

namespace hop3d {

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied after the moment update
};

struct OptimState {
  Vec m, v;
  std::int64_t step = 0;

  OptimState() = default;
  explicit OptimState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
};

// One AdamW update in place. Throws on shape mismatch or non-finite grads.
void adam_step(Vec& params, const Vec& grads, OptimState& state, const AdamConfig& cfg);

// ---- run configuration -----------------------------------------------------

enum class ProjectScope { Full, NovelTermOnly };

struct Flags {
  bool hop_grad = true;      // project adapted-parameter gradients
  bool hop_rep_orth = true;  // prototype orthogonality regularizer
  bool hop_ent = true;       // dual entropy terms
};

struct TrainConfig {
  ModelConfig model;
  SplitSpec split;
  std::uint64_t seed = 0;

  std::size_t train_scenes = 32;
  std::size_t support_pool_scenes = 16;
  std::size_t test_scenes = 12;

  std::size_t phase1_iters = 400;
  double adaptation_ratio = 0.1;  // phase-2 iterations as a share of phase 1
  std::size_t batch_scenes = 4;

  double lr_phase1 = 1e-2;
  double lr_phase2 = 2e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  double lambda_orth_p1 = 0.1;
  double lambda_orth_p2 = 0.1;
  EntropyConfig entropy;

  std::size_t grad_bank_t = 64;
  double gs_rel_tol = 1e-10;
  ProjectScope project_scope = ProjectScope::Full;

  PseudoMode pseudo_mode = PseudoMode::GroundTruth;
  double pseudo_thresh = 0.9;

  std::size_t phase2_iters() const;  // max(1, round(ratio * phase1_iters))
};

// ---- data bundle -----------------------------------------------------------

struct Dataset {
  SplitSpec split;
  std::vector<Scene> train;         // base-phase labels (novel as background)
  std::vector<Scene> support_pool;  // full labels
  std::vector<Scene> test;          // full labels
};

Dataset build_dataset(const SplitSpec& split, std::size_t n_train, std::size_t n_pool,
                      std::size_t n_test);
Dataset build_dataset(const TrainConfig& cfg);

// ---- evaluation ------------------------------------------------------------

struct MetricsReport {
  std::size_t k_base = 0, k_novel = 0;
  std::vector<std::int64_t> confusion;  // (k_total+1)^2, truth-major, label order
  std::vector<double> per_class_iou;    // percent; -1 for classes absent everywhere
  double miou_base = 0, miou_novel = 0, miou_all = 0, hm = 0;  // percent
  double mean_confidence = 0;           // mean max-probability, 0..1
  double novel_freq_cv = 0;             // coefficient of variation of novel pred shares
  std::vector<double> pred_frequency;   // share of points per predicted label
  std::vector<std::int64_t> confidence_hist;  // 20 bins over [0,1]
  std::int64_t points = 0;
};

// Uses model.phase to pick the pipeline; phase 1 folds novel truth into
// background and scores base classes only.
MetricsReport evaluate(const Model& model, const std::vector<Scene>& scenes);

double harmonic_mean(double b, double n);

// ---- training phases -------------------------------------------------------

struct Phase1Result {
  Model model;
  OrthoBasis basis;
  MetricsReport report;  // base-only test evaluation
  std::vector<double> loss_curve;
};

// Base training over all parameters, then gradient collection and the basis.
// Throws if the loss turns non-finite.
Phase1Result phase1_train(const TrainConfig& cfg, const Dataset& data);

struct Phase2Result {
  Model model;
  MetricsReport report;  // generalized evaluation over base + novel
  std::vector<double> loss_curve;
  std::size_t iters = 0;
  std::size_t basis_rank = 0;
  std::size_t support_scenes = 0;
};

// Few-shot adaptation of the adapted parameters only (backbone frozen):
// support selection, prototype/head warm start, pseudo labels fixed at entry,
// then projected AdamW steps.
Phase2Result phase2_train(const TrainConfig& cfg, const Model& phase1_model,
                          const OrthoBasis& basis, const Dataset& data, const Flags& flags);

// ---- ablation --------------------------------------------------------------

struct AblationCell {
  std::string id;
  Flags flags;
  bool marg_only = false;    // keep entropy but zero the conditional weight
  double lambda_orth = 0.1;  // both phases when the regularizer is on
  double adaptation_ratio = 0.1;
};

struct AblationRun {
  std::string cell_id;
  std::uint64_t seed = 0;
  Flags flags;
  double lambda_orth = 0, adaptation_ratio = 0;
  MetricsReport phase1_report, phase2_report;
  double base_drop = 0;  // phase-1 base mIoU minus phase-2 base mIoU
  double proto_offdiag = 0;  // mean |cos| over the joint prototype set
  std::size_t basis_rank = 0;
};

std::vector<AblationCell> mechanism_cells(const TrainConfig& cfg);
std::vector<AblationCell> lambda_cells(const TrainConfig& cfg, const std::vector<double>& lams);
std::vector<AblationCell> ratio_cells(const TrainConfig& cfg, const std::vector<double>& ratios);

// Runs every (cell, seed) pair; phase-1 runs are cached per (seed, lambda).
// threads > 1 fans seeds out across std::thread workers; results are
// deterministic and ordered by (cell, seed) regardless.
std::vector<AblationRun> ablation_suite(const TrainConfig& base_cfg,
                                        const std::vector<AblationCell>& cells,
                                        const std::vector<std::uint64_t>& seeds,
                                        std::size_t threads = 1);

}  // namespace hop3d
