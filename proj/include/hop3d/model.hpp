#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hop3d/hop_ent.hpp"
#include "hop3d/hop_rep.hpp"
#include "hop3d/linalg.hpp"
#include "hop3d/net.hpp"

namespace hop3d {

struct ModelConfig {
  std::size_t f_in = 11;  // 3 coords + signature channels
  std::size_t feat_dim = 16;
  std::size_t hidden_backbone = 32;
  std::size_t hidden_head = 32;
  std::size_t k_base = 6;
  std::size_t k_novel = 4;
};

// Every tensor the two phases touch exists from construction, so the adapted
// parameter vector keeps one fixed dimension across the whole run. Phase 1
// simply leaves zero gradients on the tensors it does not use.
struct Model {
  ModelConfig cfg;
  Mlp backbone;               // f_in -> hidden -> feat_dim
  PrototypeSet base_protos;   // [k_base x feat_dim]
  PrototypeSet novel_protos;  // [k_novel x feat_dim]
  Mlp shared_head;            // 2*feat_dim -> hidden -> k_base + 1
  Mlp head_b;                 // feat_dim   -> hidden -> k_base
  Mlp head_n;                 // 2*feat_dim -> hidden -> k_novel + 1
  int phase = 1;

  void touch();  // bump all forward-tape versions after a parameter write
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

// Warm start for the split heads: head_b copies the shared head's hidden
// layer (first feat_dim input columns) and the k_base rows of its output
// layer; head_n copies nothing (fresh init) but its prototypes come from
// support means via init_novel_prototypes.
void init_head_b_from_shared(Model& model);
void init_novel_prototypes(Model& model, const Mat& class_means);  // [k_novel x feat_dim]

// ---- parameter flattening ------------------------------------------------

enum class ParamScope { Phi, All };  // Phi = prototypes + heads (no backbone)

struct ParamIndex {
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;
};

// Canonical tensor walk (biases appear as 1-row matrices). The name/order
// contract is shared by flattening, checkpoints and diagnostics.
struct NamedTensor {
  std::string name;
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

std::vector<NamedTensor> named_tensors(Model& model, ParamScope scope);

ParamIndex param_index(const Model& model, ParamScope scope);
Vec flatten_params(const Model& model, ParamScope scope);
// Writes back a vector produced by flatten_params; checks the index matches
// the model topology, then bumps version stamps.
void scatter_params(Model& model, const Vec& flat, const ParamIndex& index, ParamScope scope);

struct ModelGrads {
  MlpGrads backbone, shared_head, head_b, head_n;
  Mat d_base_protos, d_novel_protos;
};

ModelGrads zero_model_grads(const Model& model);
Vec flatten_grads(const Model& model, const ModelGrads& grads, ParamScope scope);

// ---- label/column layout ---------------------------------------------------
// Logit columns, phase 1: [base 1..k_b | background]   (k_b + 1 columns)
// Logit columns, phase 2: [base 1..k_b | novel | background] (k_b+k_n+1 cols)
// Class labels: 0 = background, 1..k_b base, k_b+1..k_b+k_n novel.

int label_to_column(int label, std::size_t k_base, std::size_t k_novel, int phase);
int column_to_label(std::size_t column, std::size_t k_base, std::size_t k_novel);
// Ties resolve to the lowest class label (background first).
int argmax_label(const Mat& scores, std::size_t row, std::size_t k_base, std::size_t k_novel,
                 int phase);
std::vector<std::size_t> novel_columns(std::size_t k_base, std::size_t k_novel);

// ---- forward/loss pipelines ------------------------------------------------

Mat phase1_logits(const Model& model, const Mat& feats);
Mat phase2_logits(const Model& model, const Mat& feats);

struct LossBreakdown {
  double total = 0, seg = 0, orth = 0, cond = 0, marg = 0, ent = 0;
  std::size_t selected = 0;  // confident points feeding the conditional term
};

// Phase 1: backbone -> base decomposition -> shared head over [f_b ; r].
LossBreakdown phase1_loss(const Model& model, const Mat& feats, const std::vector<int>& labels,
                          double lambda_orth, ModelGrads* grads);

struct Phase2Opts {
  double lambda_orth = 0.1;  // joint base+novel prototype regularizer
  bool use_orth = true;
  bool use_ent = true;
  EntropyConfig entropy;
};

// Phase 2: hierarchical decomposition, split heads, entropy + orthogonality
// terms. When grads_novel_term is non-null it receives the gradient of the
// novel-induced share only (cross-entropy restricted to novel-labeled points
// plus both entropy terms); grads still holds the full-objective gradient.
LossBreakdown phase2_loss(const Model& model, const Mat& feats, const std::vector<int>& labels,
                          const Phase2Opts& opts, ModelGrads* grads,
                          ModelGrads* grads_novel_term = nullptr);

}  // namespace hop3d
