#pragma once

#include <string>

#include "hop3d/linalg.hpp"
#include "hop3d/model.hpp"

namespace hop3d {

struct Checkpoint {
  Model model;
  OrthoBasis basis;
  bool has_basis = false;
};

// Text checkpoint: model dims, every named tensor at full double precision,
// and optionally the protected-subspace basis ("basis <dim> <rank>" block).
void save_checkpoint(const Model& model, const OrthoBasis* basis, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hop3d
