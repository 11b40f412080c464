#pragma once

#include <cstdint>
#include <vector>

#include "hop3d/data.hpp"
#include "hop3d/linalg.hpp"
#include "hop3d/model.hpp"

namespace hop3d {

// Flattened adapted-parameter gradients of the phase-1 objective, one per
// sampled batch, collected with the model frozen.
struct GradientBank {
  std::size_t dim = 0;
  std::vector<Vec> grads;

  std::size_t count() const { return grads.size(); }
};

struct CollectParams {
  std::size_t iterations = 64;   // T
  std::size_t batch_scenes = 4;
  double lambda_orth = 0.1;      // phase-1 objective weight
};

// Replays T seeded phase-1 batches against fixed parameters and records the
// adapted-parameter gradient of each. T == 0 yields an empty bank (dim still
// set). Throws on an empty scene list.
GradientBank collect_base_gradients(const Model& model, const std::vector<Scene>& base_scenes,
                                    std::uint64_t seed, const CollectParams& params);

// Orthonormal basis of the bank's span (rank <= count).
OrthoBasis build_basis(const GradientBank& bank, double rel_tol = 1e-10);

// g - B (B^T g) over the adapted parameter vector.
Vec project_phase2_gradient(const Vec& g_phi, const OrthoBasis& basis);

}  // namespace hop3d
