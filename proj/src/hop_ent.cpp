#include "hop3d/hop_ent.hpp"

#include <cmath>

#include "hop3d/common.hpp"

namespace hop3d {

namespace {

inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

// Chain dL/dp through a softmax row: dL/dz_j = p_j (g_j - sum_c g_c p_c).
void softmax_chain_row(const double* p, const double* g, std::size_t k, double scale,
                       double* dz) {
  double mean = 0.0;
  for (std::size_t c = 0; c < k; ++c) mean += g[c] * p[c];
  for (std::size_t c = 0; c < k; ++c) dz[c] += scale * p[c] * (g[c] - mean);
}

}  // namespace

std::vector<std::size_t> select_confident(const Mat& probs,
                                          const std::vector<std::size_t>& novel_cols,
                                          double tau) {
  std::vector<bool> is_novel(probs.cols, false);
  for (std::size_t c : novel_cols) {
    require(c < probs.cols, "select_confident: novel column out of range");
    is_novel[c] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < probs.cols; ++c)
      if (p[c] > p[arg]) arg = c;
    if (is_novel[arg] && p[arg] >= tau) out.push_back(i);
  }
  return out;
}

EntropyTerm conditional_entropy(const Mat& probs,
                                const std::vector<std::size_t>& selected,
                                const std::vector<std::size_t>& novel_cols,
                                bool renormalize) {
  EntropyTerm out;
  out.dlogits = Mat(probs.rows, probs.cols);
  if (selected.empty() || novel_cols.empty()) return out;
  const double inv = 1.0 / static_cast<double>(selected.size());

  Vec g(probs.cols);
  for (std::size_t i : selected) {
    require(i < probs.rows, "conditional_entropy: selected row out of range");
    const double* p = probs.row(i);
    std::fill(g.begin(), g.end(), 0.0);
    if (!renormalize) {
      // H = -sum_{c in novel} p_c log p_c; dH/dp_c = -(log p_c + 1)
      for (std::size_t c : novel_cols) {
        out.loss -= xlogx(p[c]);
        g[c] = p[c] > 0.0 ? -(std::log(p[c]) + 1.0) : 0.0;
      }
    } else {
      double mass = 0.0;
      for (std::size_t c : novel_cols) mass += p[c];
      if (mass <= 0.0) continue;
      double h = 0.0;
      for (std::size_t c : novel_cols) h -= xlogx(p[c] / mass);
      out.loss += h;
      // dH/dp_c = -(log q_c + H)/mass with q = p/mass
      for (std::size_t c : novel_cols)
        g[c] = p[c] > 0.0 ? -(std::log(p[c] / mass) + h) / mass : -(std::log(1e-300) + h) / mass;
    }
    softmax_chain_row(p, g.data(), probs.cols, inv, out.dlogits.row(i));
  }
  out.loss *= inv;
  return out;
}

EntropyTerm marginal_entropy(const Mat& probs,
                             const std::vector<std::size_t>& novel_cols,
                             bool renormalize) {
  require(probs.rows >= 1, "marginal_entropy: empty batch");
  EntropyTerm out;
  out.dlogits = Mat(probs.rows, probs.cols);
  if (novel_cols.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(probs.rows);

  Vec pbar(probs.cols, 0.0);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    for (std::size_t c : novel_cols) pbar[c] += p[c] * inv_n;
  }

  Vec g(probs.cols, 0.0);  // dL/dpbar_c
  if (!renormalize) {
    for (std::size_t c : novel_cols) {
      out.loss -= xlogx(pbar[c]);
      g[c] = pbar[c] > 0.0 ? -(std::log(pbar[c]) + 1.0) : 0.0;
    }
  } else {
    double mass = 0.0;
    for (std::size_t c : novel_cols) mass += pbar[c];
    if (mass <= 0.0) return out;
    double h = 0.0;
    for (std::size_t c : novel_cols) h -= xlogx(pbar[c] / mass);
    out.loss = h;
    for (std::size_t c : novel_cols)
      g[c] = pbar[c] > 0.0 ? -(std::log(pbar[c] / mass) + h) / mass : -(std::log(1e-300) + h) / mass;
  }

  // dpbar_c/dp_{i,c} = 1/N, then through each row's softmax.
  Vec grow(probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    for (std::size_t c = 0; c < probs.cols; ++c) grow[c] = g[c] * inv_n;
    softmax_chain_row(probs.row(i), grow.data(), probs.cols, 1.0, out.dlogits.row(i));
  }
  return out;
}

double entropy_loss(double cond, double marg, const EntropyConfig& cfg) {
  return cfg.lambda_cond * cond - cfg.lambda_marg * marg;
}

}  // namespace hop3d
