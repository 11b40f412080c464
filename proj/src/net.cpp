#include "hop3d/net.hpp"

#include <cmath>
#include <stdexcept>

#include "hop3d/common.hpp"

namespace hop3d {

MlpGrads zero_grads(const Mlp& mlp) {
  MlpGrads g;
  for (const Layer& l : mlp.layers) {
    g.dw.emplace_back(l.w.rows, l.w.cols);
    g.db.emplace_back(l.b.size(), 0.0);
  }
  return g;
}

void accumulate(MlpGrads& into, const MlpGrads& from) {
  for (std::size_t l = 0; l < into.dw.size(); ++l) {
    for (std::size_t i = 0; i < into.dw[l].data.size(); ++i)
      into.dw[l].data[i] += from.dw[l].data[i];
    for (std::size_t i = 0; i < into.db[l].size(); ++i)
      into.db[l][i] += from.db[l][i];
  }
}

Mlp make_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  require(dims.size() >= 2, "make_mlp: need at least input and output dims");
  Mlp mlp;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{Mat(dims[l + 1], dims[l]), Vec(dims[l + 1], 0.0)};
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> u(-s, s);
    for (double& w : layer.w.data) w = u(rng);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

namespace {

// out[n,:] = tanh_or_id(w * in[n,:] + b)
void layer_forward(const Layer& l, const Mat& in, bool with_tanh, Mat& out) {
  out = Mat(in.rows, l.w.rows);
  for (std::size_t n = 0; n < in.rows; ++n) {
    const double* x = in.row(n);
    double* y = out.row(n);
    for (std::size_t o = 0; o < l.w.rows; ++o) {
      const double* wr = l.w.row(o);
      double acc = l.b[o];
      for (std::size_t i = 0; i < l.w.cols; ++i) acc += wr[i] * x[i];
      y[o] = with_tanh ? std::tanh(acc) : acc;
    }
  }
}

}  // namespace

Mat mlp_forward(const Mlp& mlp, const Mat& inputs, ForwardTape* tape) {
  require(!mlp.layers.empty(), "mlp_forward: empty network");
  require(inputs.cols == mlp.in_dim(), "mlp_forward: input dimension mismatch");
  require(inputs.rows >= 1, "mlp_forward: empty batch");
  if (tape) {
    tape->mlp = &mlp;
    tape->version = mlp.version;
    tape->input = inputs;
    tape->hidden.clear();
  }
  Mat cur = inputs;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const bool hidden = l + 1 < mlp.layers.size();
    Mat next;
    layer_forward(mlp.layers[l], cur, hidden, next);
    if (hidden && tape) tape->hidden.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

Mat mlp_backward(const ForwardTape& tape, const Mat& upstream, MlpGrads& grads) {
  require(tape.mlp != nullptr, "mlp_backward: tape not recorded");
  if (tape.mlp->version != tape.version)
    throw std::runtime_error("mlp_backward: parameters changed since forward; tape is stale");
  const Mlp& mlp = *tape.mlp;
  require(upstream.rows == tape.input.rows && upstream.cols == mlp.out_dim(),
          "mlp_backward: upstream shape mismatch");
  if (grads.dw.empty()) grads = zero_grads(mlp);

  // dZ for the output layer is the upstream itself (identity activation).
  Mat dz = upstream;
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const Layer& l = mlp.layers[li];
    const Mat& in = (li == 0) ? tape.input : tape.hidden[li - 1];
    Mat& dw = grads.dw[li];
    Vec& db = grads.db[li];
    for (std::size_t n = 0; n < in.rows; ++n) {
      const double* x = in.row(n);
      const double* d = dz.row(n);
      for (std::size_t o = 0; o < l.w.rows; ++o) {
        db[o] += d[o];
        double* dwr = dw.row(o);
        for (std::size_t i = 0; i < l.w.cols; ++i) dwr[i] += d[o] * x[i];
      }
    }
    // Input gradient: dX = dZ * W, then through tanh' on hidden activations.
    Mat dx(in.rows, l.w.cols);
    for (std::size_t n = 0; n < in.rows; ++n) {
      const double* d = dz.row(n);
      double* dxr = dx.row(n);
      for (std::size_t o = 0; o < l.w.rows; ++o) {
        const double* wr = l.w.row(o);
        for (std::size_t i = 0; i < l.w.cols; ++i) dxr[i] += d[o] * wr[i];
      }
    }
    if (li > 0) {
      const Mat& act = tape.hidden[li - 1];  // tanh outputs
      for (std::size_t i = 0; i < dx.data.size(); ++i)
        dx.data[i] *= 1.0 - act.data[i] * act.data[i];
    }
    dz = std::move(dx);
  }
  return dz;
}

Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows, logits.cols);
  for (std::size_t n = 0; n < logits.rows; ++n) {
    const double* z = logits.row(n);
    double* pr = p.row(n);
    double zmax = z[0];
    for (std::size_t c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      pr[c] = std::exp(z[c] - zmax);
      sum += pr[c];
    }
    for (std::size_t c = 0; c < logits.cols; ++c) pr[c] /= sum;
  }
  return p;
}

LossAndGrad softmax_cross_entropy(const Mat& logits, const std::vector<int>& labels) {
  require(labels.size() == logits.rows, "softmax_cross_entropy: label count mismatch");
  const int k = static_cast<int>(logits.cols);
  std::size_t count = 0;
  for (int y : labels) {
    if (y == kIgnoreLabel) continue;
    require(y >= 0 && y < k, "softmax_cross_entropy: label out of range");
    ++count;
  }
  LossAndGrad out;
  out.dlogits = Mat(logits.rows, logits.cols);
  if (count == 0) return out;

  double loss = 0.0;
  for (std::size_t n = 0; n < logits.rows; ++n) {
    if (labels[n] == kIgnoreLabel) continue;
    const double* z = logits.row(n);
    double* d = out.dlogits.row(n);
    double zmax = z[0];
    for (std::size_t c = 1; c < logits.cols; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(z[c] - zmax);
    const double logsum = std::log(sum) + zmax;
    loss += logsum - z[labels[n]];
    for (std::size_t c = 0; c < logits.cols; ++c)
      d[c] = std::exp(z[c] - logsum) / static_cast<double>(count);
    d[labels[n]] -= 1.0 / static_cast<double>(count);
  }
  out.loss = loss / static_cast<double>(count);
  return out;
}

}  // namespace hop3d
