#include "hop3d/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "hop3d/common.hpp"

namespace hop3d {

namespace {

constexpr const char* kMagic = "hop3d-checkpoint";
constexpr int kVersion = 1;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const Model& model, const OrthoBasis* basis, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write '" + path + "'");
  const ModelConfig& c = model.cfg;
  out << kMagic << " " << kVersion << "\n";
  out << "phase " << model.phase << "\n";
  out << "dims " << c.f_in << " " << c.feat_dim << " " << c.hidden_backbone << " "
      << c.hidden_head << " " << c.k_base << " " << c.k_novel << "\n";

  auto tensors = named_tensors(const_cast<Model&>(model), ParamScope::All);
  out << "tensors " << tensors.size() << "\n";
  for (const NamedTensor& t : tensors) {
    out << "tensor " << t.name << " " << t.rows << " " << t.cols << "\n";
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t col = 0; col < t.cols; ++col) {
        if (col) out << " ";
        out << num(t.data[r * t.cols + col]);
      }
      out << "\n";
    }
  }
  if (basis) {
    out << "basis " << basis->dim << " " << basis->rank() << "\n";
    for (const Vec& q : basis->columns) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        if (i) out << " ";
        out << num(q[i]);
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_checkpoint: cannot open '" + path +
                             "'; run the training command that produces it first");
  std::string magic, word;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic)
    throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint file");
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));

  int phase = 0;
  ModelConfig cfg;
  if (!(in >> word >> phase) || word != "phase")
    throw std::runtime_error("load_checkpoint: missing phase line");
  if (!(in >> word >> cfg.f_in >> cfg.feat_dim >> cfg.hidden_backbone >> cfg.hidden_head >>
        cfg.k_base >> cfg.k_novel) ||
      word != "dims")
    throw std::runtime_error("load_checkpoint: missing dims line");

  Checkpoint ckpt;
  ckpt.model = make_model(cfg, 0);
  ckpt.model.phase = phase;

  std::size_t count = 0;
  if (!(in >> word >> count) || word != "tensors")
    throw std::runtime_error("load_checkpoint: missing tensors line");
  auto tensors = named_tensors(ckpt.model, ParamScope::All);
  if (count != tensors.size())
    throw std::runtime_error("load_checkpoint: expected " + std::to_string(tensors.size()) +
                             " tensors, file has " + std::to_string(count));
  for (NamedTensor& t : tensors) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> word >> name >> rows >> cols) || word != "tensor")
      throw std::runtime_error("load_checkpoint: malformed tensor header near '" + t.name + "'");
    if (name != t.name || rows != t.rows || cols != t.cols)
      throw std::runtime_error("load_checkpoint: tensor '" + name +
                               "' does not match the expected '" + t.name + "' [" +
                               std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]");
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!(in >> t.data[i]))
        throw std::runtime_error("load_checkpoint: truncated values in tensor '" + name + "'");
  }
  ckpt.model.touch();

  if (!(in >> word)) throw std::runtime_error("load_checkpoint: missing end marker");
  if (word == "basis") {
    std::size_t dim = 0, rank = 0;
    if (!(in >> dim >> rank)) throw std::runtime_error("load_checkpoint: malformed basis header");
    ckpt.basis.dim = dim;
    ckpt.basis.columns.assign(rank, Vec(dim, 0.0));
    for (Vec& q : ckpt.basis.columns)
      for (double& v : q)
        if (!(in >> v)) throw std::runtime_error("load_checkpoint: truncated basis");
    ckpt.has_basis = true;
    if (!(in >> word)) throw std::runtime_error("load_checkpoint: missing end marker");
  }
  if (word != "end") throw std::runtime_error("load_checkpoint: missing end marker");
  return ckpt;
}

}  // namespace hop3d
