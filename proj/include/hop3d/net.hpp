#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hop3d/linalg.hpp"

namespace hop3d {

// One dense layer, w is [out x in].
struct Layer {
  Mat w;
  Vec b;
};

// Point-wise MLP: tanh on hidden layers, identity on the output layer.
struct Mlp {
  std::vector<Layer> layers;
  std::uint64_t version = 0;  // bumped by any parameter mutation

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
  void touch() { ++version; }
};

// Activations recorded by a forward pass, enough to replay backward.
// Invalid once the owning Mlp's parameters change.
struct ForwardTape {
  const Mlp* mlp = nullptr;
  std::uint64_t version = 0;
  Mat input;
  std::vector<Mat> hidden;  // post-tanh output of each hidden layer
};

struct MlpGrads {
  std::vector<Mat> dw;
  std::vector<Vec> db;
};

MlpGrads zero_grads(const Mlp& mlp);
void accumulate(MlpGrads& into, const MlpGrads& from);

// dims = {in, h1, ..., out}; weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
Mlp make_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed);

// Row i of the result is the network applied to row i of inputs.
// Pass a tape to enable a later backward().
Mat mlp_forward(const Mlp& mlp, const Mat& inputs, ForwardTape* tape = nullptr);

// Exact reverse-mode gradients; returns d(loss)/d(inputs) and fills grads.
// Throws if the tape's Mlp was mutated after the forward pass.
Mat mlp_backward(const ForwardTape& tape, const Mat& upstream, MlpGrads& grads);

struct LossAndGrad {
  double loss = 0.0;
  Mat dlogits;
};

Mat softmax_rows(const Mat& logits);

// Mean negative log-softmax over rows whose label != kIgnoreLabel.
// labels hold logit-column indices. All-ignored input gives loss 0, zero grad.
LossAndGrad softmax_cross_entropy(const Mat& logits, const std::vector<int>& labels);

}  // namespace hop3d
