#include "hop3d/hop_rep.hpp"

#include <algorithm>
#include <cmath>

#include "hop3d/common.hpp"

namespace hop3d {

Mat normalized_rows(const Mat& raw) {
  Mat out(raw.rows, raw.cols);
  for (std::size_t k = 0; k < raw.rows; ++k) {
    const double* s = raw.row(k);
    double n = 0.0;
    for (std::size_t c = 0; c < raw.cols; ++c) n += s[c] * s[c];
    n = std::sqrt(n);
    require(n > 0.0, "normalized_rows: zero prototype row");
    double* o = out.row(k);
    for (std::size_t c = 0; c < raw.cols; ++c) o[c] = s[c] / n;
  }
  return out;
}

// projected[i] = sum_k <f[i], s_k> s_k, accumulated prototype by prototype.
Decomposed decompose_rows(const Mat& features, const Mat& normed) {
  require(features.cols == normed.cols, "decompose: feature dim mismatch");
  Decomposed d{Mat(features.rows, features.cols), Mat(features.rows, features.cols)};
  for (std::size_t i = 0; i < features.rows; ++i) {
    const double* f = features.row(i);
    double* p = d.projected.row(i);
    for (std::size_t k = 0; k < normed.rows; ++k) {
      const double* s = normed.row(k);
      double c = 0.0;
      for (std::size_t j = 0; j < features.cols; ++j) c += f[j] * s[j];
      for (std::size_t j = 0; j < features.cols; ++j) p[j] += c * s[j];
    }
    double* r = d.residual.row(i);
    for (std::size_t j = 0; j < features.cols; ++j) r[j] = f[j] - p[j];
  }
  return d;
}

Decomposed decompose_base(const Mat& features, const PrototypeSet& base) {
  require(base.role == ProtoRole::Base, "decompose_base: wrong prototype role");
  require(base.count() >= 1, "decompose_base: empty prototype set");
  return decompose_rows(features, normalized_rows(base.raw));
}

Decomposed decompose_novel(const Mat& r0, const PrototypeSet& novel) {
  require(novel.role == ProtoRole::Novel, "decompose_novel: wrong prototype role");
  require(novel.count() >= 1, "decompose_novel: empty prototype set");
  return decompose_rows(r0, normalized_rows(novel.raw));
}

Mat decompose_backward(const Mat& input, const Mat& normed_protos,
                       const Mat& up_proj, const Mat& up_res, Mat& d_normed) {
  const std::size_t n = input.rows, c = input.cols, k = normed_protos.rows;
  if (d_normed.rows != k || d_normed.cols != c) d_normed = Mat(k, c);
  // With P(x) = sum_k <x,s_k> s_k and r = x - P(x):
  //   dL/dx   = up_res + P(up_proj - up_res)
  //   dL/ds_k = sum_i <u_i, s_k> x_i + <x_i, s_k> u_i,  u = up_proj - up_res
  Mat dx = up_res;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = input.row(i);
    double* dxi = dx.row(i);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* s = normed_protos.row(kk);
      double cu = 0.0, cx = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double u = up_proj.row(i)[j] - up_res.row(i)[j];
        cu += u * s[j];
        cx += x[j] * s[j];
      }
      double* ds = d_normed.row(kk);
      for (std::size_t j = 0; j < c; ++j) {
        const double u = up_proj.row(i)[j] - up_res.row(i)[j];
        dxi[j] += cu * s[j];
        ds[j] += cu * x[j] + cx * u;
      }
    }
  }
  return dx;
}

void normalize_rows_backward(const Mat& raw, const Mat& d_normed, Mat& d_raw) {
  if (d_raw.rows != raw.rows || d_raw.cols != raw.cols) d_raw = Mat(raw.rows, raw.cols);
  for (std::size_t k = 0; k < raw.rows; ++k) {
    const double* s = raw.row(k);
    const double* g = d_normed.row(k);
    double n2 = 0.0;
    for (std::size_t j = 0; j < raw.cols; ++j) n2 += s[j] * s[j];
    const double n = std::sqrt(n2);
    double gs = 0.0;  // <g, s_hat>
    for (std::size_t j = 0; j < raw.cols; ++j) gs += g[j] * s[j] / n;
    double* d = d_raw.row(k);
    for (std::size_t j = 0; j < raw.cols; ++j)
      d[j] += (g[j] - gs * s[j] / n) / n;
  }
}

OrthLoss orthogonality_loss(const std::vector<const Mat*>& raw_sets) {
  OrthLoss out;
  std::vector<Mat> normed;
  std::vector<std::pair<std::size_t, std::size_t>> where;  // (set, row) per joint index
  for (std::size_t s = 0; s < raw_sets.size(); ++s) {
    require(raw_sets[s] != nullptr, "orthogonality_loss: null set");
    require(raw_sets[s]->cols == raw_sets[0]->cols,
            "orthogonality_loss: feature dim mismatch across sets");
    out.d_raw.emplace_back(raw_sets[s]->rows, raw_sets[s]->cols);
    normed.push_back(normalized_rows(*raw_sets[s]));
    for (std::size_t r = 0; r < raw_sets[s]->rows; ++r) where.emplace_back(s, r);
  }
  const std::size_t total = where.size();
  if (total < 2) return out;

  std::vector<Mat> d_normed;
  for (const Mat* m : raw_sets) d_normed.emplace_back(m->rows, m->cols);

  for (std::size_t a = 0; a < total; ++a) {
    for (std::size_t b = a + 1; b < total; ++b) {
      const auto [sa, ra] = where[a];
      const auto [sb, rb] = where[b];
      const double* u = normed[sa].row(ra);
      const double* v = normed[sb].row(rb);
      const std::size_t c = normed[sa].cols;
      double d = 0.0;
      for (std::size_t j = 0; j < c; ++j) d += u[j] * v[j];
      out.loss += std::fabs(d);
      const double sg = (d > 0.0) - (d < 0.0);
      double* du = d_normed[sa].row(ra);
      double* dv = d_normed[sb].row(rb);
      for (std::size_t j = 0; j < c; ++j) {
        du[j] += sg * v[j];
        dv[j] += sg * u[j];
      }
    }
  }
  for (std::size_t s = 0; s < raw_sets.size(); ++s)
    normalize_rows_backward(*raw_sets[s], d_normed[s], out.d_raw[s]);
  return out;
}

Mat cosine_similarity_matrix(const Mat& raw) {
  require(raw.rows >= 1, "cosine_similarity_matrix: empty prototype set");
  const Mat normed = normalized_rows(raw);
  Mat sim(raw.rows, raw.rows);
  for (std::size_t i = 0; i < raw.rows; ++i) {
    sim.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < raw.rows; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < raw.cols; ++c) d += normed.at(i, c) * normed.at(j, c);
      sim.at(i, j) = d;
      sim.at(j, i) = d;
    }
  }
  return sim;
}

double mean_offdiag_abs_cosine(const Mat& raw) {
  if (raw.rows < 2) return 0.0;
  const Mat sim = cosine_similarity_matrix(raw);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sim.rows; ++i)
    for (std::size_t j = i + 1; j < sim.cols; ++j) {
      acc += std::fabs(sim.at(i, j));
      ++n;
    }
  return acc / static_cast<double>(n);
}

Mat hconcat(const Mat& a, const Mat& b) {
  require(a.rows == b.rows, "hconcat: row count mismatch");
  Mat out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* ar = a.row(i);
    const double* br = b.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) o[j] = ar[j];
    for (std::size_t j = 0; j < b.cols; ++j) o[a.cols + j] = br[j];
  }
  return out;
}

Mat vconcat(const Mat& a, const Mat& b) {
  if (a.rows == 0) return b;
  require(a.cols == b.cols, "vconcat: column count mismatch");
  Mat out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

}  // namespace hop3d
