#include "hop3d/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "hop3d/common.hpp"

namespace hop3d {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + s + "'");
  }
  if (pos != s.size())
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a non-negative integer, got '" +
                                s + "'");
  }
  if (pos != s.size())
    throw std::invalid_argument("config: key '" + key + "' expects a non-negative integer, got '" +
                                s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw std::invalid_argument("config: key '" + key + "' expects a boolean, got '" + s + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& s, Parse parse) {
  std::vector<T> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(key, item));
  }
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' expects a comma-separated list");
  return out;
}

template <typename T, typename Fmt>
std::string fmt_list(const std::vector<T>& v, Fmt fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt(v[i]);
  }
  return s;
}

struct Entry {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<Entry> registry() {
  std::vector<Entry> e;
  auto u64 = [&](const char* key, std::uint64_t RunConfig::* f, const char* doc) {
    e.push_back({key, doc, [f](const RunConfig& c) { return std::to_string(c.*f); },
                 [f, key](RunConfig& c, const std::string& s) { c.*f = parse_u64(key, s); }});
  };
  auto sz = [&](const char* key, std::size_t RunConfig::* f, const char* doc) {
    e.push_back({key, doc, [f](const RunConfig& c) { return std::to_string(c.*f); },
                 [f, key](RunConfig& c, const std::string& s) {
                   c.*f = static_cast<std::size_t>(parse_u64(key, s));
                 }});
  };
  auto dbl = [&](const char* key, double RunConfig::* f, const char* doc) {
    e.push_back({key, doc, [f](const RunConfig& c) { return fmt_double(c.*f); },
                 [f, key](RunConfig& c, const std::string& s) { c.*f = parse_double(key, s); }});
  };
  auto str = [&](const char* key, std::string RunConfig::* f, const char* doc) {
    e.push_back({key, doc, [f](const RunConfig& c) { return c.*f; },
                 [f](RunConfig& c, const std::string& s) { c.*f = s; }});
  };

  u64("seed", &RunConfig::seed, "master seed; every stream derives from it");

  sz("data.k_base", &RunConfig::k_base, "number of base classes");
  sz("data.k_novel", &RunConfig::k_novel, "number of novel classes");
  e.push_back({"data.shots", "support scenes per novel class",
               [](const RunConfig& c) { return std::to_string(c.shots); },
               [](RunConfig& c, const std::string& s) {
                 c.shots = static_cast<int>(parse_u64("data.shots", s));
               }});
  sz("data.n_points", &RunConfig::n_points, "points per scene");
  sz("data.sig_channels", &RunConfig::sig_channels, "signature feature channels");
  dbl("data.noise_sigma", &RunConfig::noise_sigma, "feature noise std dev");
  dbl("data.blob_sigma", &RunConfig::blob_sigma, "object blob std dev (meters)");
  dbl("data.bg_fraction", &RunConfig::bg_fraction, "share of background points");
  dbl("data.presence_prob", &RunConfig::presence_prob, "per-class presence probability");
  sz("data.min_points", &RunConfig::min_points, "minimum points per present class");
  sz("data.train_scenes", &RunConfig::train_scenes, "base-phase training scenes");
  sz("data.support_pool_scenes", &RunConfig::support_pool_scenes, "support pool size");
  sz("data.test_scenes", &RunConfig::test_scenes, "held-out evaluation scenes");

  sz("model.feat_dim", &RunConfig::feat_dim, "backbone feature width");
  sz("model.hidden_backbone", &RunConfig::hidden_backbone, "backbone hidden width");
  sz("model.hidden_head", &RunConfig::hidden_head, "head hidden width");

  sz("train.phase1_iters", &RunConfig::phase1_iters, "base-training iterations");
  dbl("train.adaptation_ratio", &RunConfig::adaptation_ratio,
      "phase-2 iterations as a fraction of phase 1");
  sz("train.batch_scenes", &RunConfig::batch_scenes, "scenes per batch");
  dbl("train.lr_phase1", &RunConfig::lr_phase1, "phase-1 learning rate");
  dbl("train.lr_phase2", &RunConfig::lr_phase2, "phase-2 learning rate");
  dbl("train.weight_decay", &RunConfig::weight_decay, "decoupled weight decay");
  dbl("train.beta1", &RunConfig::beta1, "Adam beta1");
  dbl("train.beta2", &RunConfig::beta2, "Adam beta2");
  dbl("train.eps", &RunConfig::eps, "Adam epsilon");
  dbl("train.lambda_orth_p1", &RunConfig::lambda_orth_p1, "phase-1 orthogonality weight");
  dbl("train.lambda_orth_p2", &RunConfig::lambda_orth_p2, "phase-2 orthogonality weight");
  sz("train.grad_bank_t", &RunConfig::grad_bank_t, "recorded base gradients T");
  dbl("train.gs_rel_tol", &RunConfig::gs_rel_tol, "Gram-Schmidt rank tolerance");
  e.push_back({"train.project_scope", "gradient projection scope: full | novel_term_only",
               [](const RunConfig& c) {
                 return c.project_scope == ProjectScope::Full ? "full" : "novel_term_only";
               },
               [](RunConfig& c, const std::string& s) {
                 if (s == "full") c.project_scope = ProjectScope::Full;
                 else if (s == "novel_term_only") c.project_scope = ProjectScope::NovelTermOnly;
                 else
                   throw std::invalid_argument(
                       "config: train.project_scope must be 'full' or 'novel_term_only'");
               }});

  e.push_back({"ent.lambda_cond", "conditional entropy weight",
               [](const RunConfig& c) { return fmt_double(c.entropy.lambda_cond); },
               [](RunConfig& c, const std::string& s) {
                 c.entropy.lambda_cond = parse_double("ent.lambda_cond", s);
               }});
  e.push_back({"ent.lambda_marg", "marginal entropy weight (maximized)",
               [](const RunConfig& c) { return fmt_double(c.entropy.lambda_marg); },
               [](RunConfig& c, const std::string& s) {
                 c.entropy.lambda_marg = parse_double("ent.lambda_marg", s);
               }});
  e.push_back({"ent.tau", "confidence threshold for the selected set",
               [](const RunConfig& c) { return fmt_double(c.entropy.tau); },
               [](RunConfig& c, const std::string& s) {
                 c.entropy.tau = parse_double("ent.tau", s);
               }});
  e.push_back({"ent.renormalize", "restrict-and-renormalize entropies over novel classes",
               [](const RunConfig& c) { return c.entropy.renormalize ? "true" : "false"; },
               [](RunConfig& c, const std::string& s) {
                 c.entropy.renormalize = parse_bool("ent.renormalize", s);
               }});

  auto flag = [&](const char* key, bool Flags::* f, const char* doc) {
    e.push_back({key, doc,
                 [f](const RunConfig& c) { return c.flags.*f ? "true" : "false"; },
                 [f, key](RunConfig& c, const std::string& s) {
                   c.flags.*f = parse_bool(key, s);
                 }});
  };
  flag("flags.hop_grad", &Flags::hop_grad, "project phase-2 gradients");
  flag("flags.hop_rep_orth", &Flags::hop_rep_orth, "prototype orthogonality regularizer");
  flag("flags.hop_ent", &Flags::hop_ent, "dual entropy terms");

  e.push_back({"pseudo.mode", "phase-2 supervision stub: gt | thresh",
               [](const RunConfig& c) {
                 return c.pseudo_mode == PseudoMode::GroundTruth ? "gt" : "thresh";
               },
               [](RunConfig& c, const std::string& s) {
                 if (s == "gt") c.pseudo_mode = PseudoMode::GroundTruth;
                 else if (s == "thresh") c.pseudo_mode = PseudoMode::Threshold;
                 else throw std::invalid_argument("config: pseudo.mode must be 'gt' or 'thresh'");
               }});
  dbl("pseudo.thresh", &RunConfig::pseudo_thresh, "confidence cut for thresh mode");

  e.push_back({"ablate.seeds", "comma-separated run seeds",
               [](const RunConfig& c) {
                 return fmt_list(c.ablate_seeds,
                                 [](std::uint64_t v) { return std::to_string(v); });
               },
               [](RunConfig& c, const std::string& s) {
                 c.ablate_seeds = parse_list<std::uint64_t>("ablate.seeds", s, parse_u64);
               }});
  str("ablate.sections", &RunConfig::ablate_sections,
      "grid sections: any of mechanisms,lambda,ratio");
  e.push_back({"ablate.lambda_sweep", "orthogonality weights to sweep",
               [](const RunConfig& c) { return fmt_list(c.lambda_sweep, fmt_double); },
               [](RunConfig& c, const std::string& s) {
                 c.lambda_sweep = parse_list<double>("ablate.lambda_sweep", s, parse_double);
               }});
  e.push_back({"ablate.ratio_sweep", "adaptation ratios to sweep",
               [](const RunConfig& c) { return fmt_list(c.ratio_sweep, fmt_double); },
               [](RunConfig& c, const std::string& s) {
                 c.ratio_sweep = parse_list<double>("ablate.ratio_sweep", s, parse_double);
               }});
  sz("ablate.threads", &RunConfig::ablate_threads,
     "worker threads (0: use HOP_THREADS, default 1)");

  str("eval.checkpoint", &RunConfig::eval_checkpoint,
      "checkpoint path (default: phase2 else phase1 under --out)");
  str("eval.split", &RunConfig::eval_split, "scene group to score: train | support | test");
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = registry();
  return table;
}

}  // namespace

std::vector<KeyDoc> config_items(const RunConfig& cfg) {
  std::vector<KeyDoc> out;
  for (const Entry& e : entries()) out.push_back({e.key, e.get(cfg), e.doc});
  return out;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Entry& e : entries()) {
    if (e.key == key) {
      e.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "' (see `hop3d gen --help`)");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    s.erase(0, s.find_first_not_of(ws));
    auto end = s.find_last_not_of(ws);
    s.erase(end == std::string::npos ? 0 : end + 1);
    return s;
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string config_to_string(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

TrainConfig RunConfig::to_train_config() const {
  SplitSpec split = make_split(k_base, k_novel, seed);
  split.shots = shots;
  split.n_points = n_points;
  split.sig_channels = sig_channels;
  split.noise_sigma = noise_sigma;
  split.blob_sigma = blob_sigma;
  split.bg_fraction = bg_fraction;
  split.presence_prob = presence_prob;
  split.min_points = min_points;

  TrainConfig t;
  t.model.f_in = split.f_in();
  t.model.feat_dim = feat_dim;
  t.model.hidden_backbone = hidden_backbone;
  t.model.hidden_head = hidden_head;
  t.model.k_base = k_base;
  t.model.k_novel = k_novel;
  t.split = split;
  t.seed = seed;
  t.train_scenes = train_scenes;
  t.support_pool_scenes = support_pool_scenes;
  t.test_scenes = test_scenes;
  t.phase1_iters = phase1_iters;
  t.adaptation_ratio = adaptation_ratio;
  t.batch_scenes = batch_scenes;
  t.lr_phase1 = lr_phase1;
  t.lr_phase2 = lr_phase2;
  t.weight_decay = weight_decay;
  t.beta1 = beta1;
  t.beta2 = beta2;
  t.eps = eps;
  t.lambda_orth_p1 = lambda_orth_p1;
  t.lambda_orth_p2 = lambda_orth_p2;
  t.entropy = entropy;
  t.grad_bank_t = grad_bank_t;
  t.gs_rel_tol = gs_rel_tol;
  t.project_scope = project_scope;
  t.pseudo_mode = pseudo_mode;
  t.pseudo_thresh = pseudo_thresh;
  return t;
}

}  // namespace hop3d
