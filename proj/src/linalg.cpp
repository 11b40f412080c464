#include "hop3d/linalg.hpp"

#include <cmath>

#include "hop3d/common.hpp"

namespace hop3d {

double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

Vec l2_normalize(const Vec& a) {
  const double n = norm(a);
  require(n > 0.0, "l2_normalize: zero vector");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
  return out;
}

OrthoBasis modified_gram_schmidt(const std::vector<Vec>& vectors,
                                 double rel_tol) {
  require(rel_tol > 0.0, "modified_gram_schmidt: rel_tol must be positive");
  OrthoBasis basis;
  if (vectors.empty()) return basis;

  basis.dim = vectors.front().size();
  require(basis.dim >= 1, "modified_gram_schmidt: zero-dimensional input");
  for (const Vec& v : vectors)
    require(v.size() == basis.dim, "modified_gram_schmidt: dimension mismatch");

  for (const Vec& v : vectors) {
    const double orig = norm(v);
    if (orig == 0.0) continue;
    Vec w = v;
    for (const Vec& q : basis.columns) {
      const double c = dot(q, w);
      for (std::size_t i = 0; i < basis.dim; ++i) w[i] -= c * q[i];
    }
    // One re-orthogonalization pass when the first sweep cancelled most of
    // the vector; keeps B^T B = I tight for ill-conditioned inputs.
    if (norm(w) < 0.5 * orig) {
      for (const Vec& q : basis.columns) {
        const double c = dot(q, w);
        for (std::size_t i = 0; i < basis.dim; ++i) w[i] -= c * q[i];
      }
    }
    const double res = norm(w);
    if (res <= rel_tol * orig) continue;  // dependent direction: dropped
    for (std::size_t i = 0; i < basis.dim; ++i) w[i] /= res;
    basis.columns.push_back(std::move(w));
  }
  return basis;
}

Vec project_out(const Vec& g, const OrthoBasis& basis) {
  if (basis.rank() == 0) return g;
  require(g.size() == basis.dim, "project_out: dimension mismatch");
  // Literal g - B (B^T g): coefficients taken against the input vector.
  Vec coef(basis.rank());
  for (std::size_t j = 0; j < basis.rank(); ++j) coef[j] = dot(basis.columns[j], g);
  Vec out = g;
  for (std::size_t j = 0; j < basis.rank(); ++j) {
    const Vec& q = basis.columns[j];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= coef[j] * q[i];
  }
  return out;
}

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Mat& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace hop3d
