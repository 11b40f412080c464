#pragma once

#include <cstddef>
#include <vector>

namespace hop3d {

using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Orthonormal basis of r columns in R^dim. rank()==0 means empty basis;
// project_out() is the identity then.
struct OrthoBasis {
  std::size_t dim = 0;
  std::vector<Vec> columns;  // each of length dim

  std::size_t rank() const { return columns.size(); }
};

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
Vec l2_normalize(const Vec& a);

// Modified Gram-Schmidt (sequential re-projection) with relative rank
// truncation: an input whose residual norm after projection drops below
// rel_tol times its original norm is dropped. Vectors are processed in
// collection order, so the result is reproducible.
OrthoBasis modified_gram_schmidt(const std::vector<Vec>& vectors,
                                 double rel_tol = 1e-10);

// g - B (B^T g): removes from g every component inside span(basis).
Vec project_out(const Vec& g, const OrthoBasis& basis);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace hop3d
