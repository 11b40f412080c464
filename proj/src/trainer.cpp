#include "hop3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "hop3d/common.hpp"

namespace hop3d {

void adam_step(Vec& params, const Vec& grads, OptimState& state, const AdamConfig& cfg) {
  require(params.size() == grads.size(), "adam_step: param/grad length mismatch");
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          "adam_step: state sized for a different parameter count");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("adam_step: non-finite gradient at component " +
                               std::to_string(i) + " (value " + std::to_string(grads[i]) + ")");
  state.step++;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

std::size_t TrainConfig::phase2_iters() const {
  auto n = static_cast<std::size_t>(
      std::llround(adaptation_ratio * static_cast<double>(phase1_iters)));
  return std::max<std::size_t>(1, n);
}

Dataset build_dataset(const SplitSpec& split, std::size_t n_train, std::size_t n_pool,
                      std::size_t n_test) {
  split.validate();
  Dataset d;
  d.split = split;
  for (std::size_t i = 0; i < n_train; ++i)
    d.train.push_back(generate_scene(mix_seed(split.train_seed, 0x5ce0 + i), split, Phase::Base));
  for (std::size_t i = 0; i < n_pool; ++i)
    d.support_pool.push_back(
        generate_scene(mix_seed(split.support_seed, 0x5ce0 + i), split, Phase::Novel));
  for (std::size_t i = 0; i < n_test; ++i)
    d.test.push_back(generate_scene(mix_seed(split.test_seed, 0x5ce0 + i), split, Phase::Novel));
  return d;
}

Dataset build_dataset(const TrainConfig& cfg) {
  return build_dataset(cfg.split, cfg.train_scenes, cfg.support_pool_scenes, cfg.test_scenes);
}

// ---- evaluation ------------------------------------------------------------

double harmonic_mean(double b, double n) {
  require(b >= 0.0 && n >= 0.0, "harmonic_mean: negative input");
  const double s = b + n;
  return s > 0.0 ? 2.0 * b * n / s : 0.0;
}

MetricsReport evaluate(const Model& model, const std::vector<Scene>& scenes) {
  const std::size_t kb = model.cfg.k_base, kn = model.cfg.k_novel;
  const std::size_t k1 = kb + kn + 1;
  MetricsReport r;
  r.k_base = kb;
  r.k_novel = kn;
  r.confusion.assign(k1 * k1, 0);
  r.confidence_hist.assign(20, 0);
  r.pred_frequency.assign(k1, 0.0);
  r.per_class_iou.assign(k1, -1.0);

  double sum_conf = 0.0;
  for (const Scene& s : scenes) {
    Mat logits = model.phase == 1 ? phase1_logits(model, s.feats) : phase2_logits(model, s.feats);
    Mat probs = softmax_rows(logits);
    for (std::size_t i = 0; i < probs.rows; ++i) {
      int truth = s.labels[i];
      if (truth == kIgnoreLabel) continue;
      if (model.phase == 1 && truth > static_cast<int>(kb)) truth = 0;
      int pred = argmax_label(probs, i, kb, kn, model.phase);
      r.confusion[static_cast<std::size_t>(truth) * k1 + static_cast<std::size_t>(pred)]++;
      double mp = probs.at(i, label_to_column(pred, kb, kn, model.phase));
      sum_conf += mp;
      r.confidence_hist[std::min<std::size_t>(19, static_cast<std::size_t>(mp * 20.0))]++;
      r.points++;
    }
  }

  std::vector<std::int64_t> rowsum(k1, 0), colsum(k1, 0);
  for (std::size_t t = 0; t < k1; ++t)
    for (std::size_t p = 0; p < k1; ++p) {
      rowsum[t] += r.confusion[t * k1 + p];
      colsum[p] += r.confusion[t * k1 + p];
    }
  for (std::size_t c = 0; c < k1; ++c) {
    const std::int64_t tp = r.confusion[c * k1 + c];
    const std::int64_t denom = rowsum[c] + colsum[c] - tp;
    if (denom > 0)
      r.per_class_iou[c] = 100.0 * static_cast<double>(tp) / static_cast<double>(denom);
    if (r.points > 0)
      r.pred_frequency[c] = static_cast<double>(colsum[c]) / static_cast<double>(r.points);
  }

  auto group_mean = [&](std::size_t lo, std::size_t hi) {  // labels [lo, hi], defined only
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t c = lo; c <= hi; ++c)
      if (r.per_class_iou[c] >= 0.0) {
        acc += r.per_class_iou[c];
        n++;
      }
    return n ? acc / static_cast<double>(n) : 0.0;
  };
  r.miou_base = group_mean(1, kb);
  r.miou_novel = kn ? group_mean(kb + 1, kb + kn) : 0.0;
  r.miou_all = group_mean(1, kb + kn);
  r.hm = harmonic_mean(r.miou_base, r.miou_novel);
  r.mean_confidence = r.points ? sum_conf / static_cast<double>(r.points) : 0.0;

  if (kn > 0) {
    double mean = 0.0;
    for (std::size_t c = kb + 1; c <= kb + kn; ++c) mean += r.pred_frequency[c];
    mean /= static_cast<double>(kn);
    double var = 0.0;
    for (std::size_t c = kb + 1; c <= kb + kn; ++c) {
      const double d = r.pred_frequency[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(kn);
    r.novel_freq_cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
  }
  return r;
}

// ---- phase loops -----------------------------------------------------------

namespace {

// Uniform-with-replacement scene batch, concatenated point-wise.
void assemble_batch(const std::vector<Scene>& pool, Rng& rng, std::size_t batch_scenes,
                    const std::vector<std::vector<int>>* label_override, Mat& feats,
                    std::vector<int>& labels) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  feats = Mat();
  labels.clear();
  for (std::size_t b = 0; b < batch_scenes; ++b) {
    const std::size_t si = pick(rng);
    feats = vconcat(feats, pool[si].feats);
    const std::vector<int>& src = label_override ? (*label_override)[si] : pool[si].labels;
    labels.insert(labels.end(), src.begin(), src.end());
  }
}

void check_dims(const TrainConfig& cfg) {
  require(cfg.model.k_base == cfg.split.k_base() && cfg.model.k_novel == cfg.split.k_novel(),
          "train config: model class counts disagree with the split");
  require(cfg.model.f_in == cfg.split.f_in(),
          "train config: model f_in disagrees with the data feature width");
  require(cfg.batch_scenes >= 1 && cfg.phase1_iters >= 1, "train config: empty schedule");
}

}  // namespace

Phase1Result phase1_train(const TrainConfig& cfg, const Dataset& data) {
  check_dims(cfg);
  require(!data.train.empty(), "phase1_train: no training scenes");

  Model model = make_model(cfg.model, mix_seed(cfg.seed, 0x30de1));
  model.phase = 1;
  ParamIndex idx = param_index(model, ParamScope::All);
  Vec theta = flatten_params(model, ParamScope::All);
  OptimState st(theta.size());
  AdamConfig adam{cfg.lr_phase1, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  Rng rng(mix_seed(cfg.seed, 0xba7c1));

  Phase1Result out;
  Mat feats;
  std::vector<int> labels;
  for (std::size_t t = 0; t < cfg.phase1_iters; ++t) {
    assemble_batch(data.train, rng, cfg.batch_scenes, nullptr, feats, labels);
    ModelGrads g = zero_model_grads(model);
    LossBreakdown lb = phase1_loss(model, feats, labels, cfg.lambda_orth_p1, &g);
    if (!std::isfinite(lb.total))
      throw std::runtime_error("phase1_train: non-finite loss at iteration " + std::to_string(t));
    out.loss_curve.push_back(lb.total);
    adam_step(theta, flatten_grads(model, g, ParamScope::All), st, adam);
    scatter_params(model, theta, idx, ParamScope::All);
  }

  CollectParams cp{cfg.grad_bank_t, cfg.batch_scenes, cfg.lambda_orth_p1};
  GradientBank bank = collect_base_gradients(model, data.train, mix_seed(cfg.seed, 0xba40), cp);
  out.basis = build_basis(bank, cfg.gs_rel_tol);
  out.report = evaluate(model, data.test);
  out.model = std::move(model);
  return out;
}

Phase2Result phase2_train(const TrainConfig& cfg, const Model& phase1_model,
                          const OrthoBasis& basis, const Dataset& data, const Flags& flags) {
  check_dims(cfg);
  require(!data.support_pool.empty(), "phase2_train: empty support pool");

  Model model = phase1_model;
  model.phase = 2;
  const std::size_t kb = model.cfg.k_base, kn = model.cfg.k_novel;

  SupportSelection sel = sample_support(data.split, data.support_pool);
  std::vector<Scene> support;
  for (std::size_t si : sel.scene_union) support.push_back(data.support_pool[si]);

  // Novel prototypes start at the support-set mean of the base-residual
  // features, the component the base prototypes leave unexplained.
  Mat means(kn, model.cfg.feat_dim);
  std::vector<std::size_t> counts(kn, 0);
  for (const Scene& s : support) {
    Mat f = mlp_forward(model.backbone, s.feats);
    Decomposed dec0 = decompose_base(f, model.base_protos);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int lbl = s.labels[i];
      if (lbl <= static_cast<int>(kb)) continue;
      const std::size_t k = static_cast<std::size_t>(lbl) - kb - 1;
      for (std::size_t j = 0; j < means.cols; ++j) means.at(k, j) += dec0.residual.at(i, j);
      counts[k]++;
    }
  }
  for (std::size_t k = 0; k < kn; ++k)
    if (counts[k])
      for (std::size_t j = 0; j < means.cols; ++j)
        means.at(k, j) /= static_cast<double>(counts[k]);
  init_novel_prototypes(model, means);
  init_head_b_from_shared(model);

  // Supervision is frozen at entry: ground-truth novel labels always win, the
  // stub fills base and background regions from the pre-adaptation model (the
  // stand-in for an external labeler), leaving low-confidence points ignored.
  std::vector<std::vector<int>> labels(support.size());
  for (std::size_t si = 0; si < support.size(); ++si) {
    std::vector<int> stub =
        pseudo_label_stub(phase1_model, support[si], cfg.pseudo_mode, cfg.pseudo_thresh);
    labels[si].resize(support[si].size());
    for (std::size_t i = 0; i < stub.size(); ++i) {
      const int gt = support[si].labels[i];
      labels[si][i] = gt > static_cast<int>(kb) ? gt : stub[i];
    }
  }

  ParamIndex idx = param_index(model, ParamScope::Phi);
  Vec phi = flatten_params(model, ParamScope::Phi);
  const bool project = flags.hop_grad && basis.rank() > 0;
  if (project)
    require(basis.dim == phi.size(), "phase2_train: basis dimension does not match the "
                                     "adapted parameter vector");
  OptimState st(phi.size());
  AdamConfig adam{cfg.lr_phase2, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  Phase2Opts opts{flags.hop_rep_orth ? cfg.lambda_orth_p2 : 0.0, flags.hop_rep_orth,
                  flags.hop_ent, cfg.entropy};
  const bool split_scope = project && cfg.project_scope == ProjectScope::NovelTermOnly;
  Rng rng(mix_seed(cfg.seed, 0xba7c2));

  Phase2Result out;
  out.iters = cfg.phase2_iters();
  out.basis_rank = basis.rank();
  out.support_scenes = support.size();

  Mat feats;
  std::vector<int> batch_labels;
  for (std::size_t t = 0; t < out.iters; ++t) {
    // Resolve batch scene picks against the support list, with label override.
    assemble_batch(support, rng, cfg.batch_scenes, &labels, feats, batch_labels);
    ModelGrads g = zero_model_grads(model);
    ModelGrads g_novel;
    if (split_scope) g_novel = zero_model_grads(model);
    LossBreakdown lb = phase2_loss(model, feats, batch_labels, opts, &g,
                                   split_scope ? &g_novel : nullptr);
    if (!std::isfinite(lb.total))
      throw std::runtime_error("phase2_train: non-finite loss at iteration " + std::to_string(t));
    out.loss_curve.push_back(lb.total);

    Vec grad = flatten_grads(model, g, ParamScope::Phi);
    if (project) {
      if (cfg.project_scope == ProjectScope::Full) {
        grad = project_phase2_gradient(grad, basis);
      } else {
        Vec gn = flatten_grads(model, g_novel, ParamScope::Phi);
        Vec gn_proj = project_phase2_gradient(gn, basis);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gn_proj[i] - gn[i];
      }
    }
    adam_step(phi, grad, st, adam);
    scatter_params(model, phi, idx, ParamScope::Phi);
  }

  out.report = evaluate(model, data.test);
  out.model = std::move(model);
  return out;
}

// ---- ablation --------------------------------------------------------------

namespace {

std::string trim_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<AblationCell> mechanism_cells(const TrainConfig& cfg) {
  const double lam = cfg.lambda_orth_p2;
  const double ar = cfg.adaptation_ratio;
  return {
      {"none", {false, false, false}, false, lam, ar},
      {"rep", {false, true, false}, false, lam, ar},
      {"grad", {true, false, false}, false, lam, ar},
      {"rep_grad", {true, true, false}, false, lam, ar},
      {"rep_grad_marg", {true, true, true}, true, lam, ar},
      {"full", {true, true, true}, false, lam, ar},
  };
}

std::vector<AblationCell> lambda_cells(const TrainConfig& cfg, const std::vector<double>& lams) {
  std::vector<AblationCell> cells;
  for (double v : lams)
    cells.push_back({"lambda_" + trim_num(v), {true, true, true}, false, v, cfg.adaptation_ratio});
  return cells;
}

std::vector<AblationCell> ratio_cells(const TrainConfig& cfg, const std::vector<double>& ratios) {
  std::vector<AblationCell> cells;
  for (double v : ratios)
    cells.push_back({"ar_" + trim_num(v), {true, true, true}, false, cfg.lambda_orth_p2, v});
  return cells;
}

std::vector<AblationRun> ablation_suite(const TrainConfig& base_cfg,
                                        const std::vector<AblationCell>& cells,
                                        const std::vector<std::uint64_t>& seeds,
                                        std::size_t threads) {
  require(!cells.empty() && !seeds.empty(), "ablation_suite: nothing to run");
  std::vector<AblationRun> out(cells.size() * seeds.size());

  auto run_seed = [&](std::size_t si) {
    TrainConfig cfg = base_cfg;
    cfg.seed = seeds[si];
    SplitSpec fresh = make_split(base_cfg.split.k_base(), base_cfg.split.k_novel(), seeds[si]);
    fresh.shots = base_cfg.split.shots;
    fresh.n_points = base_cfg.split.n_points;
    fresh.sig_channels = base_cfg.split.sig_channels;
    fresh.noise_sigma = base_cfg.split.noise_sigma;
    fresh.blob_sigma = base_cfg.split.blob_sigma;
    fresh.bg_fraction = base_cfg.split.bg_fraction;
    fresh.presence_prob = base_cfg.split.presence_prob;
    fresh.min_points = base_cfg.split.min_points;
    cfg.split = fresh;
    Dataset data = build_dataset(cfg);

    std::map<double, Phase1Result> phase1_cache;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      const AblationCell& cell = cells[ci];
      TrainConfig c2 = cfg;
      c2.adaptation_ratio = cell.adaptation_ratio;
      const double lam1 = cell.flags.hop_rep_orth ? cell.lambda_orth : 0.0;
      c2.lambda_orth_p1 = lam1;
      c2.lambda_orth_p2 = cell.lambda_orth;
      if (cell.marg_only) c2.entropy.lambda_cond = 0.0;

      auto it = phase1_cache.find(lam1);
      if (it == phase1_cache.end())
        it = phase1_cache.emplace(lam1, phase1_train(c2, data)).first;
      const Phase1Result& p1 = it->second;
      Phase2Result p2 = phase2_train(c2, p1.model, p1.basis, data, cell.flags);

      AblationRun run;
      run.cell_id = cell.id;
      run.seed = seeds[si];
      run.flags = cell.flags;
      run.lambda_orth = cell.lambda_orth;
      run.adaptation_ratio = cell.adaptation_ratio;
      run.phase1_report = p1.report;
      run.phase2_report = p2.report;
      run.base_drop = p1.report.miou_base - p2.report.miou_base;
      run.proto_offdiag = mean_offdiag_abs_cosine(
          vconcat(p2.model.base_protos.raw, p2.model.novel_protos.raw));
      run.basis_rank = p2.basis_rank;
      out[ci * seeds.size() + si] = std::move(run);
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, seeds.size()));
  if (threads == 1) {
    for (std::size_t si = 0; si < seeds.size(); ++si) run_seed(si);
    return out;
  }

  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t si = w; si < seeds.size(); si += threads) {
        try {
          run_seed(si);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace hop3d
