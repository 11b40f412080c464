// Acceptance gate: one line per criterion, exit code = number of failures.
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hop3d/config.hpp"
#include "hop3d/hop_ent.hpp"
#include "hop3d/hop_grad.hpp"
#include "hop3d/model.hpp"
#include "hop3d/report.hpp"
#include "hop3d/trainer.hpp"
#include "oracles.hpp"

using namespace hop3d;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    ok = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

// ---- 1: harmonic-mean arithmetic -------------------------------------------

Criterion check_hm_arithmetic() {
  Criterion c;
  // (base, novel, harmonic mean) triples from published segmentation results.
  const double triples[][3] = {
      {67.36, 34.38, 45.52}, {68.45, 31.80, 43.42}, {68.70, 39.32, 50.02},
      {67.57, 31.67, 43.12}, {68.48, 29.18, 40.92}, {37.13, 4.99, 8.79},
      {47.03, 4.03, 7.42},   {65.45, 37.24, 47.47}, {53.16, 3.55, 6.66},
      {61.72, 19.23, 29.32}};
  int hits = 0;
  for (const auto& t : triples) {
    const double got = harmonic_mean(t[0], t[1]);
    if (std::fabs(got - t[2]) <= 0.01)
      ++hits;
    else
      c.fail("(" + fmt(t[0]) + "," + fmt(t[1]) + ") -> " + fmt(got) + " != " + fmt(t[2]));
  }
  if (hits < 6) c.fail("only " + std::to_string(hits) + "/10 triples matched");
  c.detail = std::to_string(hits) + "/10 triples within 0.01" +
             (c.detail.empty() ? "" : "; " + c.detail);
  return c;
}

// ---- 2: projection invariants -----------------------------------------------

Criterion check_projection_invariants() {
  Criterion c;
  std::mt19937_64 rng(20240101);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 4 + rng() % 61;  // 4..64
    const std::size_t k = 1 + rng() % std::min<std::size_t>(d, 8);
    OrthoBasis basis = modified_gram_schmidt(oracles::random_vectors(k, d, rng()));
    Vec g(d);
    for (double& v : g) v = gauss(rng);
    Vec p = project_out(g, basis);

    for (const Vec& q : basis.columns)
      if (std::fabs(dot(p, q)) > 1e-8) {
        c.fail("orthogonality violated at trial " + std::to_string(trial));
        return c;
      }
    Vec pp = project_out(p, basis);
    for (std::size_t i = 0; i < d; ++i)
      if (std::fabs(pp[i] - p[i]) > 1e-8) {
        c.fail("idempotence violated at trial " + std::to_string(trial));
        return c;
      }
    Vec rem(d);
    for (std::size_t i = 0; i < d; ++i) rem[i] = g[i] - p[i];
    const double lhs = norm(g) * norm(g);
    const double rhs = norm(p) * norm(p) + norm(rem) * norm(rem);
    if (std::fabs(lhs - rhs) > 1e-8 * std::max(1.0, lhs)) {
      c.fail("norm identity violated at trial " + std::to_string(trial));
      return c;
    }
  }
  c.detail = "1000 (g, B) pairs, dims 4..64";
  return c;
}

// ---- 3: Gram-Schmidt rank vs row reduction -----------------------------------

Criterion check_gs_rank_oracle() {
  Criterion c;
  std::mt19937_64 rng(20240102);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 3 + rng() % 30;
    std::vector<Vec> bank;
    if (trial % 2 == 0) {
      bank = oracles::random_vectors(1 + rng() % 10, d, rng());
    } else {
      // Deliberately rank-deficient: mix few generators into many vectors.
      const std::size_t r = 1 + rng() % std::min<std::size_t>(d, 5);
      auto gen = oracles::random_vectors(r, d, rng());
      const std::size_t n = r + 1 + rng() % 6;
      for (std::size_t i = 0; i < n; ++i) {
        Vec v(d, 0.0);
        for (const Vec& s : gen) {
          const double coef = gauss(rng);
          for (std::size_t j = 0; j < d; ++j) v[j] += coef * s[j];
        }
        bank.push_back(v);
      }
    }
    const std::size_t got = modified_gram_schmidt(bank).rank();
    const std::size_t want = oracles::row_reduction_rank(bank);
    if (got != want) {
      c.fail("trial " + std::to_string(trial) + ": rank " + std::to_string(got) + " != oracle " +
             std::to_string(want));
      return c;
    }
  }
  c.detail = "200 banks incl. rank-deficient";
  return c;
}

// ---- 4: gradients vs central finite differences -------------------------------

template <typename F>
bool fd_matches(Model& model, ParamScope scope, const Vec& analytic, F&& scalar,
                double* worst) {
  std::size_t offset = 0;
  bool ok = true;
  for (NamedTensor& t : named_tensors(model, scope)) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double want = oracles::central_diff(scalar, &t.data[i]);
      const double got = analytic[offset + i];
      if (std::fabs(want) < 1e-9 && std::fabs(got) < 1e-9) continue;
      const double err = oracles::rel_err(got, want);
      if (worst) *worst = std::max(*worst, err);
      if (err > 1e-5) ok = false;
    }
    offset += t.size();
  }
  return ok;
}

Criterion check_gradient_correctness() {
  Criterion c;
  std::mt19937_64 rng(20240103);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0.0;
  int configs = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig mc;
    mc.f_in = 4 + rng() % 3;
    mc.feat_dim = 3 + rng() % 3;
    mc.hidden_backbone = 4 + rng() % 3;
    mc.hidden_head = 4 + rng() % 3;
    mc.k_base = 2 + rng() % 2;
    mc.k_novel = 1 + rng() % 2;
    Model model = make_model(mc, rng());
    const std::size_t rows = 5 + rng() % 3;
    Mat feats(rows, mc.f_in);
    for (double& v : feats.data) v = gauss(rng);
    const int k_fg = static_cast<int>(mc.k_base + mc.k_novel);

    if (trial % 2 == 0) {
      // Phase 1 objective: backbone + shared head + L_seg + L_orth.
      std::vector<int> labels(rows);
      for (std::size_t i = 0; i < rows; ++i)
        labels[i] = static_cast<int>(rng() % (mc.k_base + 1));  // 0..k_base
      const double lambda = 0.05 + 0.5 * std::fabs(gauss(rng));
      ModelGrads grads = zero_model_grads(model);
      phase1_loss(model, feats, labels, lambda, &grads);
      Vec flat = flatten_grads(model, grads, ParamScope::All);
      auto scalar = [&]() { return phase1_loss(model, feats, labels, lambda, nullptr).total; };
      if (!fd_matches(model, ParamScope::All, flat, scalar, &worst))
        c.fail("phase-1 config " + std::to_string(trial));
    } else {
      // Full phase-2 objective: split heads + L_seg + L_orth + L_cond + L_marg.
      model.phase = 2;
      std::vector<int> labels(rows);
      for (std::size_t i = 0; i < rows; ++i)
        labels[i] = static_cast<int>(rng() % (static_cast<std::size_t>(k_fg) + 1));
      Phase2Opts opts;
      opts.lambda_orth = 0.05 + 0.5 * std::fabs(gauss(rng));
      opts.entropy.lambda_cond = 0.2 + 0.3 * std::fabs(gauss(rng));
      opts.entropy.lambda_marg = 0.2 + 0.3 * std::fabs(gauss(rng));
      opts.entropy.tau = 0.05;  // stable non-empty selection
      opts.entropy.renormalize = (trial % 4 == 1);
      ModelGrads grads = zero_model_grads(model);
      phase2_loss(model, feats, labels, opts, &grads);
      Vec flat = flatten_grads(model, grads, ParamScope::Phi);
      auto scalar = [&]() { return phase2_loss(model, feats, labels, opts, nullptr).total; };
      if (!fd_matches(model, ParamScope::Phi, flat, scalar, &worst))
        c.fail("phase-2 config " + std::to_string(trial));
    }
    ++configs;
  }
  c.detail = std::to_string(configs) + " configs, worst rel err " + fmt(worst);
  return c;
}

// ---- 5: decomposition exactness ------------------------------------------------

Criterion check_decomposition() {
  Criterion c;
  std::mt19937_64 rng(20240104);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ModelConfig mc;
    mc.f_in = 6;
    mc.feat_dim = 8;
    mc.hidden_backbone = 10;
    mc.hidden_head = 6;
    mc.k_base = 3;
    mc.k_novel = 2;
    Model model = make_model(mc, rng());
    Mat inputs(7, mc.f_in);
    for (double& v : inputs.data) v = gauss(rng);
    Mat f = mlp_forward(model.backbone, inputs);

    Decomposed d0 = decompose_base(f, model.base_protos);
    Decomposed d1 = decompose_novel(d0.residual, model.novel_protos);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
      const double scale = std::max(1.0, std::fabs(f.data[i]));
      if (std::fabs(d0.projected.data[i] + d0.residual.data[i] - f.data[i]) > 1e-12 * scale)
        c.fail("base reconstruction, trial " + std::to_string(trial));
      const double r0 = d0.residual.data[i];
      if (std::fabs(d1.projected.data[i] + d1.residual.data[i] - r0) >
          1e-12 * std::max(1.0, std::fabs(r0)))
        c.fail("novel reconstruction, trial " + std::to_string(trial));
    }
    if (!c.ok) return c;

    // Conditional orthogonality under orthonormal prototypes, both levels.
    OrthoBasis ob = modified_gram_schmidt(oracles::random_vectors(mc.k_base + mc.k_novel,
                                                                  mc.feat_dim, rng()));
    for (std::size_t k = 0; k < mc.k_base; ++k)
      for (std::size_t j = 0; j < mc.feat_dim; ++j)
        model.base_protos.raw.at(k, j) = ob.columns[k][j];
    for (std::size_t k = 0; k < mc.k_novel; ++k)
      for (std::size_t j = 0; j < mc.feat_dim; ++j)
        model.novel_protos.raw.at(k, j) = ob.columns[mc.k_base + k][j];
    model.touch();
    Decomposed e0 = decompose_base(f, model.base_protos);
    Decomposed e1 = decompose_novel(e0.residual, model.novel_protos);
    for (std::size_t i = 0; i < f.rows; ++i) {
      for (std::size_t k = 0; k < mc.k_base; ++k) {
        double ip = 0.0;
        for (std::size_t j = 0; j < mc.feat_dim; ++j)
          ip += e0.residual.at(i, j) * model.base_protos.raw.at(k, j);
        if (std::fabs(ip) > 1e-10) c.fail("base residual not orthogonal");
      }
      for (std::size_t k = 0; k < mc.k_novel; ++k) {
        double ip = 0.0;
        for (std::size_t j = 0; j < mc.feat_dim; ++j)
          ip += e1.residual.at(i, j) * model.novel_protos.raw.at(k, j);
        if (std::fabs(ip) > 1e-10) c.fail("novel residual not orthogonal");
      }
    }
    if (!c.ok) return c;
  }
  c.detail = "50 random models, both hierarchy levels";
  return c;
}

// ---- 6: entropy edge cases -----------------------------------------------------

Criterion check_entropy_edges() {
  Criterion c;
  const std::vector<std::size_t> novel{2, 3};  // K_n = 2
  const double ln_kn = std::log(2.0);

  Mat onehot(2, 5);  // all novel mass on one class
  onehot.row(0)[2] = 0.7;
  onehot.row(0)[0] = 0.3;
  onehot.row(1)[3] = 0.9;
  onehot.row(1)[4] = 0.1;
  EntropyTerm cond0 = conditional_entropy(onehot, {0, 1}, novel, true);
  if (std::fabs(cond0.loss) > 1e-12) c.fail("one-hot conditional != 0");

  Mat uniform(2, 5);  // novel mass evenly split within each row
  uniform.row(0)[2] = uniform.row(0)[3] = 0.25;
  uniform.row(0)[0] = 0.5;
  uniform.row(1)[2] = uniform.row(1)[3] = 0.45;
  uniform.row(1)[1] = 0.1;
  EntropyTerm cond1 = conditional_entropy(uniform, {0, 1}, novel, true);
  if (std::fabs(cond1.loss - ln_kn) > 1e-12) c.fail("uniform conditional != ln K_n");

  // Marginal: rows concentrated on the SAME novel class -> zero entropy.
  Mat same(3, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    same.row(i)[2] = 0.8;
    same.row(i)[0] = 0.2;
  }
  EntropyTerm marg0 = marginal_entropy(same, novel, true);
  if (std::fabs(marg0.loss) > 1e-12) c.fail("concentrated marginal != 0");

  // Rows split evenly across the novel classes -> ln K_n.
  Mat spread(2, 5);
  spread.row(0)[2] = 0.6;
  spread.row(0)[0] = 0.4;
  spread.row(1)[3] = 0.6;
  spread.row(1)[1] = 0.4;
  EntropyTerm marg1 = marginal_entropy(spread, novel, true);
  if (std::fabs(marg1.loss - ln_kn) > 1e-12) c.fail("balanced marginal != ln K_n");

  c.detail = "one-hot/uniform extremes exact at 1e-12";
  return c;
}

// ---- 7-9: directional desk-scale suite ------------------------------------------

struct SuiteOutcome {
  std::vector<AblationRun> runs;
  bool ran = false;
  std::string error;
};

std::vector<double> collect(const SuiteOutcome& suite, const std::string& cell,
                            double (*pick)(const AblationRun&)) {
  std::vector<double> out;
  for (const auto& r : suite.runs)
    if (r.cell_id == cell) out.push_back(pick(r));
  return out;
}

SuiteOutcome run_directional_suite() {
  SuiteOutcome suite;
  try {
    // Default synthetic split, evaluated under the sparse-supervision
    // protocol the mechanisms target: base/background labels come from the
    // phase-1 model through the confidence-thresholded stub (novel ground
    // truth always wins), adaptation runs half again as long as the pipeline
    // default, and the entropy weights are set so the conditional term
    // engages at desk-scale confidence levels.
    RunConfig rc;
    rc.pseudo_mode = PseudoMode::Threshold;
    rc.pseudo_thresh = 0.6;
    rc.adaptation_ratio = 0.15;
    rc.entropy.tau = 0.4;
    rc.entropy.lambda_cond = 0.4;
    rc.entropy.lambda_marg = 0.06;
    TrainConfig cfg = rc.to_train_config();

    std::vector<AblationCell> cells;
    AblationCell full;
    full.id = "full";
    full.adaptation_ratio = rc.adaptation_ratio;
    cells.push_back(full);
    AblationCell no_grad = full;
    no_grad.id = "no_grad";
    no_grad.flags.hop_grad = false;
    cells.push_back(no_grad);
    AblationCell no_ent = full;
    no_ent.id = "no_ent";
    no_ent.flags.hop_ent = false;
    cells.push_back(no_ent);
    AblationCell none = full;
    none.id = "none";
    none.flags.hop_grad = none.flags.hop_rep_orth = none.flags.hop_ent = false;
    cells.push_back(none);
    AblationCell lam0 = full;
    lam0.id = "lam0";
    lam0.lambda_orth = 0.0;
    cells.push_back(lam0);

    suite.runs = ablation_suite(cfg, cells, {1, 2, 3, 4, 5}, 1);
    suite.ran = true;
  } catch (const std::exception& e) {
    suite.error = e.what();
  }
  return suite;
}

Criterion check_forgetting(const SuiteOutcome& suite) {
  Criterion c;
  if (!suite.ran) {
    c.fail("suite failed: " + suite.error);
    return c;
  }
  auto drop = [](const AblationRun& r) { return r.base_drop; };
  auto hm = [](const AblationRun& r) { return r.phase2_report.hm; };
  const double drop_on = median(collect(suite, "full", drop));
  const double drop_off = median(collect(suite, "no_grad", drop));
  const double hm_full = median(collect(suite, "full", hm));
  const double hm_none = median(collect(suite, "none", hm));
  if (!(drop_on <= drop_off))
    c.fail("median base drop with projection " + fmt(drop_on) + " > without " + fmt(drop_off));
  if (!(hm_full >= hm_none))
    c.fail("median HM full " + fmt(hm_full) + " < none " + fmt(hm_none));
  c.detail = "base drop " + fmt(drop_on) + " (on) vs " + fmt(drop_off) + " (off); HM " +
             fmt(hm_full) + " (full) vs " + fmt(hm_none) + " (none)";
  return c;
}

Criterion check_orthogonality_effect(const SuiteOutcome& suite) {
  Criterion c;
  if (!suite.ran) {
    c.fail("suite failed: " + suite.error);
    return c;
  }
  auto off = [](const AblationRun& r) { return r.proto_offdiag; };
  const double with = median(collect(suite, "full", off));
  const double without = median(collect(suite, "lam0", off));
  if (!(with < without))
    c.fail("median off-diag |cos| " + fmt(with) + " (lambda 0.1) !< " + fmt(without) +
           " (lambda 0)");
  c.detail = "off-diag |cos| " + fmt(with) + " (lambda 0.1) vs " + fmt(without) + " (lambda 0)";
  return c;
}

Criterion check_entropy_effect(const SuiteOutcome& suite) {
  Criterion c;
  if (!suite.ran) {
    c.fail("suite failed: " + suite.error);
    return c;
  }
  auto conf = [](const AblationRun& r) { return r.phase2_report.mean_confidence; };
  auto cv = [](const AblationRun& r) { return r.phase2_report.novel_freq_cv; };
  const double conf_on = median(collect(suite, "full", conf));
  const double conf_off = median(collect(suite, "no_ent", conf));
  const double cv_on = median(collect(suite, "full", cv));
  const double cv_off = median(collect(suite, "no_ent", cv));
  if (!(conf_on > conf_off))
    c.fail("median confidence " + fmt(conf_on) + " (on) !> " + fmt(conf_off) + " (off)");
  if (!(cv_on < cv_off))
    c.fail("median novel CV " + fmt(cv_on) + " (on) !< " + fmt(cv_off) + " (off)");
  c.detail = "confidence " + fmt(conf_on) + " vs " + fmt(conf_off) + "; novel CV " + fmt(cv_on) +
             " vs " + fmt(cv_off);
  return c;
}

// ---- 10: end-to-end determinism ---------------------------------------------------

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Criterion check_determinism() {
  Criterion c;
  const char* bin = std::getenv("HOP3D_BIN");
  if (!bin) {
    c.fail("HOP3D_BIN not set");
    return c;
  }
  fs::path root = fs::temp_directory_path() / ("hop3d_accept_" + std::to_string(::getpid()));
  fs::create_directories(root);
  const fs::path conf = root / "run.conf";
  {
    std::ofstream f(conf);
    f << "seed = 5\n"
         "data.k_base = 3\n"
         "data.k_novel = 2\n"
         "data.shots = 2\n"
         "data.n_points = 256\n"
         "data.min_points = 8\n"
         "data.presence_prob = 0.95\n"
         "data.train_scenes = 8\n"
         "data.support_pool_scenes = 6\n"
         "data.test_scenes = 4\n"
         "model.feat_dim = 8\n"
         "model.hidden_backbone = 16\n"
         "model.hidden_head = 16\n"
         "train.phase1_iters = 60\n"
         "train.batch_scenes = 2\n"
         "train.grad_bank_t = 8\n";
  }
  for (const char* arm : {"a", "b"}) {
    const std::string out = (root / arm).string();
    for (const char* sub : {"gen", "phase1", "phase2", "eval"}) {
      const std::string cmd = std::string(bin) + " " + sub + " --config " + conf.string() +
                              " --out " + out + " > /dev/null 2> " +
                              (root / "stderr.txt").string();
      if (shell(cmd) != 0) {
        c.fail(std::string(sub) + " failed on arm " + arm + ": " +
               slurp(root / "stderr.txt"));
        fs::remove_all(root);
        return c;
      }
    }
  }
  int compared = 0;
  for (const char* name : {"phase1_metrics.jsonl", "phase2_metrics.jsonl",
                           "eval_test_metrics.json", "phase1_loss.csv", "phase2_loss.csv"}) {
    const std::string a = slurp(root / "a" / name);
    const std::string b = slurp(root / "b" / name);
    if (a.empty())
      c.fail(std::string(name) + " missing");
    else if (a != b)
      c.fail(std::string(name) + " differs between runs");
    else
      ++compared;
  }
  fs::remove_all(root);
  if (c.ok) c.detail = std::to_string(compared) + " metrics files byte-identical";
  return c;
}

void report(int number, const std::string& title, const Criterion& c, int& failures) {
  std::cout << (c.ok ? "[PASS] " : "[FAIL] ") << number << ". " << title;
  if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
  std::cout << std::endl;
  if (!c.ok) ++failures;
}

}  // namespace

int main() {
  int failures = 0;
  report(1, "harmonic-mean arithmetic", check_hm_arithmetic(), failures);
  report(2, "projection invariants", check_projection_invariants(), failures);
  report(3, "Gram-Schmidt rank vs row-reduction oracle", check_gs_rank_oracle(), failures);
  report(4, "analytic gradients vs finite differences", check_gradient_correctness(), failures);
  report(5, "decomposition exactness", check_decomposition(), failures);
  report(6, "entropy edge cases", check_entropy_edges(), failures);

  SuiteOutcome suite = run_directional_suite();
  report(7, "forgetting mitigation (projection on vs off)", check_forgetting(suite), failures);
  report(8, "prototype orthogonality effect (lambda 0.1 vs 0)",
         check_orthogonality_effect(suite), failures);
  report(9, "entropy regularization effect (on vs off)", check_entropy_effect(suite), failures);
  report(10, "end-to-end determinism", check_determinism(), failures);

  std::cout << (failures == 0 ? "all criteria passed" :
                                std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures;
}
