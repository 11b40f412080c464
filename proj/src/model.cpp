#include "hop3d/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "hop3d/common.hpp"

namespace hop3d {

void Model::touch() {
  backbone.touch();
  shared_head.touch();
  head_b.touch();
  head_n.touch();
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  require(cfg.f_in > 3 && cfg.feat_dim > 0 && cfg.k_base > 0 && cfg.k_novel > 0,
          "make_model: bad dimensions");
  Model m;
  m.cfg = cfg;
  m.backbone = make_mlp({cfg.f_in, cfg.hidden_backbone, cfg.feat_dim}, mix_seed(seed, 1));
  m.shared_head = make_mlp({2 * cfg.feat_dim, cfg.hidden_head, cfg.k_base + 1}, mix_seed(seed, 2));
  m.head_b = make_mlp({cfg.feat_dim, cfg.hidden_head, cfg.k_base}, mix_seed(seed, 3));
  m.head_n = make_mlp({2 * cfg.feat_dim, cfg.hidden_head, cfg.k_novel + 1}, mix_seed(seed, 4));

  auto sphere_rows = [](std::size_t k, std::size_t c, std::uint64_t s) {
    Mat rows(k, c);
    Rng rng(s);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < k; ++i) {
      Vec v(c);
      for (double& x : v) x = gauss(rng);
      v = l2_normalize(v);
      for (std::size_t j = 0; j < c; ++j) rows.at(i, j) = v[j];
    }
    return rows;
  };
  m.base_protos = {sphere_rows(cfg.k_base, cfg.feat_dim, mix_seed(seed, 5)), ProtoRole::Base};
  m.novel_protos = {sphere_rows(cfg.k_novel, cfg.feat_dim, mix_seed(seed, 6)), ProtoRole::Novel};
  return m;
}

void init_head_b_from_shared(Model& model) {
  const Mlp& sh = model.shared_head;
  Mlp& hb = model.head_b;
  require(sh.layers.size() == 2 && hb.layers.size() == 2,
          "init_head_b_from_shared: expects single-hidden-layer heads");
  const std::size_t c = model.cfg.feat_dim;
  // Hidden layer: keep only the input columns that see the aligned component.
  for (std::size_t r = 0; r < hb.layers[0].w.rows; ++r)
    for (std::size_t j = 0; j < c; ++j) hb.layers[0].w.at(r, j) = sh.layers[0].w.at(r, j);
  hb.layers[0].b = sh.layers[0].b;
  // Output layer: the base-class rows (the shared head's extra row is background).
  for (std::size_t r = 0; r < model.cfg.k_base; ++r) {
    for (std::size_t j = 0; j < hb.layers[1].w.cols; ++j)
      hb.layers[1].w.at(r, j) = sh.layers[1].w.at(r, j);
    hb.layers[1].b[r] = sh.layers[1].b[r];
  }
  hb.touch();
}

void init_novel_prototypes(Model& model, const Mat& class_means) {
  require(class_means.rows == model.cfg.k_novel && class_means.cols == model.cfg.feat_dim,
          "init_novel_prototypes: shape mismatch");
  for (std::size_t k = 0; k < class_means.rows; ++k) {
    double n = 0.0;
    for (std::size_t j = 0; j < class_means.cols; ++j)
      n += class_means.at(k, j) * class_means.at(k, j);
    n = std::sqrt(n);
    if (n == 0.0) continue;  // keep the seeded row for a degenerate mean
    for (std::size_t j = 0; j < class_means.cols; ++j)
      model.novel_protos.raw.at(k, j) = class_means.at(k, j) / n;
  }
}

// ---- flattening ------------------------------------------------------------

namespace {

// Canonical parameter order. With a grads struct the tensors point at the
// gradient storage instead, in the identical order.
std::vector<NamedTensor> tensor_spans(Model& model, ModelGrads* grads, ParamScope scope) {
  std::vector<NamedTensor> out;
  auto add_mlp = [&](const std::string& prefix, Mlp& net, MlpGrads* ng) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      Mat& w = ng ? ng->dw[i] : net.layers[i].w;
      Vec& b = ng ? ng->db[i] : net.layers[i].b;
      std::string li = prefix + ".l" + std::to_string(i);
      out.push_back({li + ".w", w.data.data(), w.rows, w.cols});
      out.push_back({li + ".b", b.data(), 1, b.size()});
    }
  };
  if (scope == ParamScope::All)
    add_mlp("backbone", model.backbone, grads ? &grads->backbone : nullptr);
  Mat& bp = grads ? grads->d_base_protos : model.base_protos.raw;
  Mat& np = grads ? grads->d_novel_protos : model.novel_protos.raw;
  out.push_back({"protos.base", bp.data.data(), bp.rows, bp.cols});
  out.push_back({"protos.novel", np.data.data(), np.rows, np.cols});
  add_mlp("head.shared", model.shared_head, grads ? &grads->shared_head : nullptr);
  add_mlp("head.base", model.head_b, grads ? &grads->head_b : nullptr);
  add_mlp("head.novel", model.head_n, grads ? &grads->head_n : nullptr);
  return out;
}

ParamIndex index_from(const std::vector<NamedTensor>& spans) {
  ParamIndex idx;
  for (const NamedTensor& s : spans) {
    idx.entries.push_back({s.name, idx.total, s.size()});
    idx.total += s.size();
  }
  return idx;
}

}  // namespace

std::vector<NamedTensor> named_tensors(Model& model, ParamScope scope) {
  return tensor_spans(model, nullptr, scope);
}

ParamIndex param_index(const Model& model, ParamScope scope) {
  return index_from(tensor_spans(const_cast<Model&>(model), nullptr, scope));
}

Vec flatten_params(const Model& model, ParamScope scope) {
  auto spans = tensor_spans(const_cast<Model&>(model), nullptr, scope);
  Vec flat;
  for (const NamedTensor& s : spans) flat.insert(flat.end(), s.data, s.data + s.size());
  return flat;
}

void scatter_params(Model& model, const Vec& flat, const ParamIndex& index, ParamScope scope) {
  auto spans = tensor_spans(model, nullptr, scope);
  ParamIndex fresh = index_from(spans);
  require(fresh.total == index.total && fresh.entries.size() == index.entries.size(),
          "scatter_params: index does not match model topology");
  for (std::size_t i = 0; i < fresh.entries.size(); ++i) {
    const auto& a = fresh.entries[i];
    const auto& b = index.entries[i];
    require(a.name == b.name && a.offset == b.offset && a.length == b.length,
            "scatter_params: index entry mismatch at " + a.name);
  }
  require(flat.size() == fresh.total, "scatter_params: vector length mismatch");
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const double* src = flat.data() + fresh.entries[i].offset;
    for (std::size_t j = 0; j < spans[i].size(); ++j) spans[i].data[j] = src[j];
  }
  model.touch();
}

ModelGrads zero_model_grads(const Model& model) {
  ModelGrads g;
  g.backbone = zero_grads(model.backbone);
  g.shared_head = zero_grads(model.shared_head);
  g.head_b = zero_grads(model.head_b);
  g.head_n = zero_grads(model.head_n);
  g.d_base_protos = Mat(model.base_protos.raw.rows, model.base_protos.raw.cols);
  g.d_novel_protos = Mat(model.novel_protos.raw.rows, model.novel_protos.raw.cols);
  return g;
}

Vec flatten_grads(const Model& model, const ModelGrads& grads, ParamScope scope) {
  auto spans = tensor_spans(const_cast<Model&>(model), const_cast<ModelGrads*>(&grads), scope);
  Vec flat;
  for (const NamedTensor& s : spans) flat.insert(flat.end(), s.data, s.data + s.size());
  return flat;
}

// ---- label layout ----------------------------------------------------------

int label_to_column(int label, std::size_t k_base, std::size_t k_novel, int phase) {
  if (label == kIgnoreLabel) return kIgnoreLabel;
  const int k_fg = static_cast<int>(phase == 1 ? k_base : k_base + k_novel);
  if (label == 0) return k_fg;  // background sits in the last column
  require(label >= 1 && label <= k_fg, "label_to_column: label out of range for phase");
  return label - 1;
}

int column_to_label(std::size_t column, std::size_t k_base, std::size_t k_novel) {
  require(column <= k_base + k_novel, "column_to_label: column out of range");
  if (column == k_base + k_novel) return 0;
  return static_cast<int>(column) + 1;
}

int argmax_label(const Mat& scores, std::size_t row, std::size_t k_base, std::size_t k_novel,
                 int phase) {
  const int k_fg = static_cast<int>(phase == 1 ? k_base : k_base + k_novel);
  int best = 0;
  double best_score = scores.at(row, label_to_column(0, k_base, k_novel, phase));
  for (int label = 1; label <= k_fg; ++label) {
    double s = scores.at(row, label_to_column(label, k_base, k_novel, phase));
    if (s > best_score) {
      best_score = s;
      best = label;
    }
  }
  return best;
}

std::vector<std::size_t> novel_columns(std::size_t k_base, std::size_t k_novel) {
  std::vector<std::size_t> cols(k_novel);
  for (std::size_t i = 0; i < k_novel; ++i) cols[i] = k_base + i;
  return cols;
}

// ---- forward pipelines -----------------------------------------------------

Mat phase1_logits(const Model& model, const Mat& feats) {
  Mat f = mlp_forward(model.backbone, feats);
  Decomposed dec = decompose_base(f, model.base_protos);
  return mlp_forward(model.shared_head, hconcat(dec.projected, dec.residual));
}

Mat phase2_logits(const Model& model, const Mat& feats) {
  Mat f = mlp_forward(model.backbone, feats);
  Decomposed dec0 = decompose_base(f, model.base_protos);
  Decomposed dec1 = decompose_novel(dec0.residual, model.novel_protos);
  Mat zb = mlp_forward(model.head_b, dec0.projected);
  Mat zn = mlp_forward(model.head_n, hconcat(dec1.projected, dec1.residual));
  return hconcat(zb, zn);
}

// ---- losses ----------------------------------------------------------------

namespace {

void split_cols(const Mat& joint, Mat& left, Mat& right) {
  for (std::size_t i = 0; i < joint.rows; ++i) {
    for (std::size_t j = 0; j < left.cols; ++j) left.at(i, j) = joint.at(i, j);
    for (std::size_t j = 0; j < right.cols; ++j) right.at(i, j) = joint.at(i, left.cols + j);
  }
}

void add_scaled(Mat& into, const Mat& from, double scale) {
  require(into.same_shape(from), "add_scaled: shape mismatch");
  for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += scale * from.data[i];
}

}  // namespace

LossBreakdown phase1_loss(const Model& model, const Mat& feats, const std::vector<int>& labels,
                          double lambda_orth, ModelGrads* grads) {
  require(feats.rows == labels.size(), "phase1_loss: feats/labels length mismatch");
  const std::size_t c = model.cfg.feat_dim;

  ForwardTape tape_bb, tape_head;
  Mat f = mlp_forward(model.backbone, feats, &tape_bb);
  Mat normed_base = normalized_rows(model.base_protos.raw);
  Decomposed dec = decompose_rows(f, normed_base);
  Mat logits =
      mlp_forward(model.shared_head, hconcat(dec.projected, dec.residual), &tape_head);

  std::vector<int> cols(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    cols[i] = label_to_column(labels[i], model.cfg.k_base, model.cfg.k_novel, 1);
  LossAndGrad seg = softmax_cross_entropy(logits, cols);
  OrthLoss orth = orthogonality_loss({&model.base_protos.raw});

  LossBreakdown out;
  out.seg = seg.loss;
  out.orth = orth.loss;
  out.total = seg.loss + lambda_orth * orth.loss;

  if (grads) {
    Mat dcat = mlp_backward(tape_head, seg.dlogits, grads->shared_head);
    Mat up_proj(dcat.rows, c), up_res(dcat.rows, c);
    split_cols(dcat, up_proj, up_res);
    Mat d_normed(normed_base.rows, normed_base.cols);
    Mat df = decompose_backward(f, normed_base, up_proj, up_res, d_normed);
    normalize_rows_backward(model.base_protos.raw, d_normed, grads->d_base_protos);
    add_scaled(grads->d_base_protos, orth.d_raw[0], lambda_orth);
    mlp_backward(tape_bb, df, grads->backbone);
  }
  return out;
}

namespace {

// Shared context of one phase-2 forward pass, reused to backpropagate several
// upstream logit gradients (full objective vs. novel-induced share).
struct Phase2Forward {
  ForwardTape tape_bb, tape_b, tape_n;
  Mat f, normed_base, normed_novel;
  Decomposed dec0, dec1;
  Mat logits;
};

Phase2Forward phase2_forward(const Model& model, const Mat& feats) {
  Phase2Forward fw;
  fw.f = mlp_forward(model.backbone, feats, &fw.tape_bb);
  fw.normed_base = normalized_rows(model.base_protos.raw);
  fw.normed_novel = normalized_rows(model.novel_protos.raw);
  fw.dec0 = decompose_rows(fw.f, fw.normed_base);
  fw.dec1 = decompose_rows(fw.dec0.residual, fw.normed_novel);
  Mat zb = mlp_forward(model.head_b, fw.dec0.projected, &fw.tape_b);
  Mat zn = mlp_forward(model.head_n, hconcat(fw.dec1.projected, fw.dec1.residual), &fw.tape_n);
  fw.logits = hconcat(zb, zn);
  return fw;
}

// Backpropagates dL/dlogits through heads, both decompositions and the
// backbone, accumulating into grads.
void phase2_backward(const Model& model, const Phase2Forward& fw, const Mat& dlogits,
                     ModelGrads& grads) {
  const std::size_t c = model.cfg.feat_dim;
  Mat dzb(dlogits.rows, model.cfg.k_base), dzn(dlogits.rows, model.cfg.k_novel + 1);
  split_cols(dlogits, dzb, dzn);

  Mat d_fb = mlp_backward(fw.tape_b, dzb, grads.head_b);
  Mat dcat_n = mlp_backward(fw.tape_n, dzn, grads.head_n);
  Mat d_fn(dcat_n.rows, c), d_r1(dcat_n.rows, c);
  split_cols(dcat_n, d_fn, d_r1);

  Mat d_normed_novel(fw.normed_novel.rows, fw.normed_novel.cols);
  Mat d_r0 = decompose_backward(fw.dec0.residual, fw.normed_novel, d_fn, d_r1, d_normed_novel);
  normalize_rows_backward(model.novel_protos.raw, d_normed_novel, grads.d_novel_protos);

  Mat d_normed_base(fw.normed_base.rows, fw.normed_base.cols);
  Mat df = decompose_backward(fw.f, fw.normed_base, d_fb, d_r0, d_normed_base);
  normalize_rows_backward(model.base_protos.raw, d_normed_base, grads.d_base_protos);

  mlp_backward(fw.tape_bb, df, grads.backbone);
}

}  // namespace

LossBreakdown phase2_loss(const Model& model, const Mat& feats, const std::vector<int>& labels,
                          const Phase2Opts& opts, ModelGrads* grads,
                          ModelGrads* grads_novel_term) {
  require(feats.rows == labels.size(), "phase2_loss: feats/labels length mismatch");
  const std::size_t kb = model.cfg.k_base, kn = model.cfg.k_novel;

  Phase2Forward fw = phase2_forward(model, feats);

  std::vector<int> cols(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    cols[i] = label_to_column(labels[i], kb, kn, 2);
  LossAndGrad seg = softmax_cross_entropy(fw.logits, cols);

  LossBreakdown out;
  out.seg = seg.loss;
  out.total = seg.loss;

  Mat d_ent;  // combined entropy-term gradient w.r.t. logits
  if (opts.use_ent) {
    Mat probs = softmax_rows(fw.logits);
    std::vector<std::size_t> ncols = novel_columns(kb, kn);
    std::vector<std::size_t> sel = select_confident(probs, ncols, opts.entropy.tau);
    EntropyTerm cond = conditional_entropy(probs, sel, ncols, opts.entropy.renormalize);
    EntropyTerm marg = marginal_entropy(probs, ncols, opts.entropy.renormalize);
    out.cond = cond.loss;
    out.marg = marg.loss;
    out.selected = sel.size();
    out.ent = entropy_loss(cond.loss, marg.loss, opts.entropy);
    out.total += out.ent;
    d_ent = Mat(fw.logits.rows, fw.logits.cols);
    add_scaled(d_ent, cond.dlogits, opts.entropy.lambda_cond);
    add_scaled(d_ent, marg.dlogits, -opts.entropy.lambda_marg);
  }

  OrthLoss orth;
  if (opts.use_orth) {
    orth = orthogonality_loss({&model.base_protos.raw, &model.novel_protos.raw});
    out.orth = orth.loss;
    out.total += opts.lambda_orth * orth.loss;
  }

  if (grads) {
    Mat dlogits = seg.dlogits;
    if (opts.use_ent) add_scaled(dlogits, d_ent, 1.0);
    phase2_backward(model, fw, dlogits, *grads);
    if (opts.use_orth) {
      add_scaled(grads->d_base_protos, orth.d_raw[0], opts.lambda_orth);
      add_scaled(grads->d_novel_protos, orth.d_raw[1], opts.lambda_orth);
    }
  }
  if (grads_novel_term) {
    // Cross-entropy share of the novel-labeled points plus the entropy terms.
    // Row scaling matches seg.dlogits, so the two shares sum to the full
    // segmentation gradient.
    Mat d_novel(fw.logits.rows, fw.logits.cols);
    for (std::size_t i = 0; i < fw.logits.rows; ++i) {
      if (labels[i] <= static_cast<int>(kb)) continue;  // bg, base or ignored
      for (std::size_t j = 0; j < fw.logits.cols; ++j)
        d_novel.at(i, j) = seg.dlogits.at(i, j);
    }
    if (opts.use_ent) add_scaled(d_novel, d_ent, 1.0);
    phase2_backward(model, fw, d_novel, *grads_novel_term);
  }
  return out;
}

}  // namespace hop3d
