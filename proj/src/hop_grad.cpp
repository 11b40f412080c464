#include "hop3d/hop_grad.hpp"

#include <random>
#include <stdexcept>

#include "hop3d/common.hpp"

namespace hop3d {

GradientBank collect_base_gradients(const Model& model, const std::vector<Scene>& base_scenes,
                                    std::uint64_t seed, const CollectParams& params) {
  if (base_scenes.empty())
    throw std::runtime_error("collect_base_gradients: no base scenes to sample from");
  require(params.batch_scenes >= 1, "collect_base_gradients: batch_scenes must be >= 1");

  GradientBank bank;
  bank.dim = param_index(model, ParamScope::Phi).total;
  Rng rng(mix_seed(seed, 0xb45e));
  std::uniform_int_distribution<std::size_t> pick(0, base_scenes.size() - 1);

  for (std::size_t t = 0; t < params.iterations; ++t) {
    Mat feats;
    std::vector<int> labels;
    for (std::size_t b = 0; b < params.batch_scenes; ++b) {
      const Scene& s = base_scenes[pick(rng)];
      feats = vconcat(feats, s.feats);
      labels.insert(labels.end(), s.labels.begin(), s.labels.end());
    }
    ModelGrads grads = zero_model_grads(model);
    phase1_loss(model, feats, labels, params.lambda_orth, &grads);
    bank.grads.push_back(flatten_grads(model, grads, ParamScope::Phi));
  }
  return bank;
}

OrthoBasis build_basis(const GradientBank& bank, double rel_tol) {
  OrthoBasis basis = modified_gram_schmidt(bank.grads, rel_tol);
  basis.dim = bank.dim;  // empty banks still know the ambient dimension
  return basis;
}

Vec project_phase2_gradient(const Vec& g_phi, const OrthoBasis& basis) {
  return project_out(g_phi, basis);
}

}  // namespace hop3d
