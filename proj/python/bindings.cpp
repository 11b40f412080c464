#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hop3d/data.hpp"
#include "hop3d/hop_ent.hpp"
#include "hop3d/hop_rep.hpp"
#include "hop3d/linalg.hpp"
#include "hop3d/model.hpp"
#include "hop3d/trainer.hpp"

namespace py = pybind11;
using namespace hop3d;

namespace {

Mat mat_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Mat m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
  return m;
}

py::array_t<double> mat_to(const Mat& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

Vec vec_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return Vec(a.data(), a.data() + a.shape(0));
}

py::array_t<double> vec_to(const Vec& v) {
  py::array_t<double> a(v.size());
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

OrthoBasis basis_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Mat rows = mat_from(a);
  OrthoBasis b;
  b.dim = rows.cols;
  for (std::size_t r = 0; r < rows.rows; ++r)
    b.columns.emplace_back(rows.row(r), rows.row(r) + rows.cols);
  return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "hierarchical orthogonal prototypes: core numerics";

  m.def(
      "gram_schmidt",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& vectors,
         double rel_tol) {
        Mat rows = mat_from(vectors);
        std::vector<Vec> vs;
        for (std::size_t r = 0; r < rows.rows; ++r)
          vs.emplace_back(rows.row(r), rows.row(r) + rows.cols);
        OrthoBasis b = modified_gram_schmidt(vs, rel_tol);
        Mat out(b.rank(), b.dim);
        for (std::size_t r = 0; r < b.rank(); ++r)
          std::copy(b.columns[r].begin(), b.columns[r].end(), out.row(r));
        return mat_to(out);
      },
      py::arg("vectors"), py::arg("rel_tol") = 1e-10,
      "Orthonormal basis rows spanning the input rows (rank-truncated).");

  m.def(
      "project_out",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& g,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& basis_rows) {
        return vec_to(project_out(vec_from(g), basis_from(basis_rows)));
      },
      py::arg("g"), py::arg("basis_rows"),
      "g minus its component inside the span of the given orthonormal rows.");

  m.def(
      "decompose",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& prototypes) {
        Decomposed d = decompose_rows(mat_from(features), normalized_rows(mat_from(prototypes)));
        return py::make_tuple(mat_to(d.projected), mat_to(d.residual));
      },
      py::arg("features"), py::arg("prototypes"),
      "Split features into the prototype-aligned part and the residual.");

  m.def(
      "orthogonality_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& prototypes) {
        Mat raw = mat_from(prototypes);
        return orthogonality_loss({&raw}).loss;
      },
      py::arg("prototypes"), "Sum of absolute pairwise cosines of the normalized rows.");

  m.def(
      "entropy_terms",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
         std::size_t k_base, std::size_t k_novel, double tau, bool renormalize) {
        Mat p = mat_from(probs);
        auto ncols = novel_columns(k_base, k_novel);
        auto sel = select_confident(p, ncols, tau);
        return py::make_tuple(conditional_entropy(p, sel, ncols, renormalize).loss,
                              marginal_entropy(p, ncols, renormalize).loss, sel.size());
      },
      py::arg("probs"), py::arg("k_base"), py::arg("k_novel"), py::arg("tau") = 0.7,
      py::arg("renormalize") = false,
      "Conditional and marginal novel-class entropies plus the selected count.");

  m.def("harmonic_mean", &harmonic_mean, py::arg("base"), py::arg("novel"));

  m.def(
      "generate_scene",
      [](std::uint64_t seed, std::size_t k_base, std::size_t k_novel, std::size_t n_points,
         bool base_phase, std::size_t min_points) {
        SplitSpec spec = make_split(k_base, k_novel, seed);
        spec.n_points = n_points;
        spec.min_points = min_points;
        Scene s = generate_scene(seed, spec, base_phase ? Phase::Base : Phase::Novel);
        return py::make_tuple(mat_to(s.coords), mat_to(s.feats), s.labels);
      },
      py::arg("seed"), py::arg("k_base") = 6, py::arg("k_novel") = 4,
      py::arg("n_points") = 1024, py::arg("base_phase") = false, py::arg("min_points") = 8,
      "Seeded synthetic scene: (coords, feats, labels).");
}
