#pragma once

#include <utility>
#include <vector>

#include "hop3d/linalg.hpp"

namespace hop3d {

enum class ProtoRole { Base, Novel };

// Trainable prototype parameters, one per row. Every equation consumes the
// row-normalized view, never the raw rows.
struct PrototypeSet {
  Mat raw;  // [K x C]
  ProtoRole role = ProtoRole::Base;

  std::size_t count() const { return raw.rows; }
  std::size_t feat_dim() const { return raw.cols; }
};

// Row-wise l2 normalization of raw prototypes.
Mat normalized_rows(const Mat& raw);

// Per-point split of features into the prototype-aligned component and the
// residual: projected[i] = sum_k <f[i], s_k> s_k (literal sum of rank-1
// projections), residual = features - projected. Exact only for orthonormal
// prototypes; the orthogonality loss drives toward that regime.
struct Decomposed {
  Mat projected;
  Mat residual;
};

Decomposed decompose_base(const Mat& features, const PrototypeSet& base);
Decomposed decompose_novel(const Mat& r0, const PrototypeSet& novel);
// Same split against an already-normalized prototype matrix (rows unit-norm),
// for callers that reuse one normalization across forward and backward.
Decomposed decompose_rows(const Mat& features, const Mat& normed);

// Backward of the decomposition. up_proj/up_res are dL/d(projected) and
// dL/d(residual); returns dL/d(input) and accumulates dL/d(normalized rows)
// into d_normed (shape [K x C]).
Mat decompose_backward(const Mat& input, const Mat& normed_protos,
                       const Mat& up_proj, const Mat& up_res, Mat& d_normed);

// Chain a gradient w.r.t. normalized rows back to the raw rows.
void normalize_rows_backward(const Mat& raw, const Mat& d_normed, Mat& d_raw);

// L_orth = sum_{i<j} |s_i . s_j| over l2-normalized rows of the joint set,
// with gradient flowing through the normalization into the raw parameters.
// Fewer than two prototypes gives loss 0.
struct OrthLoss {
  double loss = 0.0;
  std::vector<Mat> d_raw;  // one gradient block per input set
};

OrthLoss orthogonality_loss(const std::vector<const Mat*>& raw_sets);

// Pairwise cosine similarities of the normalized prototypes; symmetric with
// unit diagonal.
Mat cosine_similarity_matrix(const Mat& raw);

// Mean absolute off-diagonal cosine similarity (0 when K < 2).
double mean_offdiag_abs_cosine(const Mat& raw);

// Columns of a are followed by columns of b, row by row.
Mat hconcat(const Mat& a, const Mat& b);

// Rows of a followed by rows of b. An empty a passes b through.
Mat vconcat(const Mat& a, const Mat& b);

}  // namespace hop3d
