#pragma once

#include <cstddef>
#include <vector>

#include "hop3d/linalg.hpp"

namespace hop3d {

struct EntropyConfig {
  double lambda_cond = 0.1;
  double lambda_marg = 0.1;
  double tau = 0.7;           // confidence threshold for the selected set
  bool renormalize = false;   // restrict-and-renormalize over novel classes
};

// Points whose argmax over ALL classes is a novel column and whose max
// probability reaches tau. May be empty.
std::vector<std::size_t> select_confident(const Mat& probs,
                                          const std::vector<std::size_t>& novel_cols,
                                          double tau);

struct EntropyTerm {
  double loss = 0.0;
  Mat dlogits;  // gradient w.r.t. the logits that produced probs
};

// Mean per-point entropy over the novel columns, over the selected rows.
// Without renormalization this is the literal sub-distribution entropy
// -sum_{c in novel} p_c log p_c with 0 log 0 := 0. Empty selection gives 0.
EntropyTerm conditional_entropy(const Mat& probs,
                                const std::vector<std::size_t>& selected,
                                const std::vector<std::size_t>& novel_cols,
                                bool renormalize);

// Entropy of the batch-mean novel-class mass, averaged over ALL rows.
EntropyTerm marginal_entropy(const Mat& probs,
                             const std::vector<std::size_t>& novel_cols,
                             bool renormalize);

// L_ent = lambda_cond * cond - lambda_marg * marg. The minus sign makes
// minimizing L_ent maximize the marginal entropy.
double entropy_loss(double cond, double marg, const EntropyConfig& cfg);

}  // namespace hop3d
