#include "hop3d/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hop3d/checkpoint.hpp"
#include "hop3d/common.hpp"
#include "hop3d/report.hpp"
#include "hop3d/scene_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hop3d {

RunConfig resolve_config(const CliOptions& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) apply_config_file(cfg, opts.config_path);
  if (opts.seed_given) cfg.seed = opts.seed;
  for (const std::string& s : opts.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    apply_kv(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.out_dir = opts.out_dir;
  return cfg;
}

namespace {

std::string data_dir(const RunConfig& cfg) { return (fs::path(cfg.out_dir) / "data").string(); }
std::string phase1_ckpt(const RunConfig& cfg) {
  return (fs::path(cfg.out_dir) / "phase1_checkpoint.txt").string();
}
std::string phase2_ckpt(const RunConfig& cfg) {
  return (fs::path(cfg.out_dir) / "phase2_checkpoint.txt").string();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::ostringstream out;
  out << "iter,loss\n";
  char buf[40];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", curve[i]);
    out << i << "," << buf << "\n";
  }
  write_text(path, out.str());
}

// Training commands rebuild the run setup from the stored dataset: the
// manifest owns the split, the config owns network sizes and schedules.
TrainConfig train_config_for(const RunConfig& cfg, const Dataset& data) {
  TrainConfig t = cfg.to_train_config();
  t.split = data.split;
  t.model.f_in = data.split.f_in();
  t.model.k_base = data.split.k_base();
  t.model.k_novel = data.split.k_novel();
  return t;
}

std::size_t env_threads() {
  const char* v = std::getenv("HOP_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (!end || *end != '\0' || n == 0)
    throw std::invalid_argument("HOP_THREADS must be a positive integer, got '" +
                                std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace

int cmd_gen(const RunConfig& cfg) {
  TrainConfig t = cfg.to_train_config();
  Dataset data = build_dataset(t);
  save_dataset(data, data_dir(cfg));
  write_text((fs::path(cfg.out_dir) / "gen_config.txt").string(), config_to_string(cfg));
  std::cout << "gen: wrote " << data.train.size() << " train / " << data.support_pool.size()
            << " support / " << data.test.size() << " test scenes to " << data_dir(cfg) << "\n";
  return 0;
}

int cmd_phase1(const RunConfig& cfg) {
  Dataset data = load_dataset(data_dir(cfg));
  TrainConfig t = train_config_for(cfg, data);
  Phase1Result res = phase1_train(t, data);
  save_checkpoint(res.model, &res.basis, phase1_ckpt(cfg));
  write_loss_csv((fs::path(cfg.out_dir) / "phase1_loss.csv").string(), res.loss_curve);

  json line{{"event", "phase1"},
            {"seed", cfg.seed},
            {"iters", t.phase1_iters},
            {"final_loss", res.loss_curve.back()},
            {"basis_rank", res.basis.rank()},
            {"report", report_to_json(res.report)}};
  write_text((fs::path(cfg.out_dir) / "phase1_metrics.jsonl").string(), line.dump() + "\n");
  std::cout << "phase1: base mIoU " << res.report.miou_base << " after " << t.phase1_iters
            << " iters, basis rank " << res.basis.rank() << " -> " << phase1_ckpt(cfg) << "\n";
  return 0;
}

int cmd_phase2(const RunConfig& cfg) {
  Dataset data = load_dataset(data_dir(cfg));
  Checkpoint ckpt = load_checkpoint(phase1_ckpt(cfg));
  if (cfg.flags.hop_grad && !ckpt.has_basis)
    throw std::runtime_error("phase-1 checkpoint carries no gradient basis; re-run `hop3d "
                             "phase1` or disable flags.hop_grad");
  TrainConfig t = train_config_for(cfg, data);
  require(ckpt.model.cfg.k_base == t.model.k_base && ckpt.model.cfg.k_novel == t.model.k_novel &&
              ckpt.model.cfg.f_in == t.model.f_in,
          "checkpoint and dataset disagree on class counts or feature width");
  t.model = ckpt.model.cfg;  // network sizes come from the trained model

  Phase2Result res = phase2_train(t, ckpt.model, ckpt.basis, data, cfg.flags);
  save_checkpoint(res.model, nullptr, phase2_ckpt(cfg));
  write_loss_csv((fs::path(cfg.out_dir) / "phase2_loss.csv").string(), res.loss_curve);

  json line{{"event", "phase2"},
            {"seed", cfg.seed},
            {"iters", res.iters},
            {"basis_rank", res.basis_rank},
            {"support_scenes", res.support_scenes},
            {"hop_grad", cfg.flags.hop_grad},
            {"hop_rep_orth", cfg.flags.hop_rep_orth},
            {"hop_ent", cfg.flags.hop_ent},
            {"final_loss", res.loss_curve.back()},
            {"report", report_to_json(res.report)}};
  write_text((fs::path(cfg.out_dir) / "phase2_metrics.jsonl").string(), line.dump() + "\n");
  std::cout << "phase2: HM " << res.report.hm << " (base " << res.report.miou_base << ", novel "
            << res.report.miou_novel << ") after " << res.iters << " iters -> "
            << phase2_ckpt(cfg) << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  Dataset data = load_dataset(data_dir(cfg));
  std::string path = cfg.eval_checkpoint;
  if (path.empty()) {
    if (fs::exists(phase2_ckpt(cfg))) path = phase2_ckpt(cfg);
    else if (fs::exists(phase1_ckpt(cfg))) path = phase1_ckpt(cfg);
    else
      throw std::runtime_error("no checkpoint under '" + cfg.out_dir +
                               "'; run `hop3d phase1` (and `hop3d phase2`) first");
  }
  Checkpoint ckpt = load_checkpoint(path);

  const std::vector<Scene>* scenes = nullptr;
  if (cfg.eval_split == "test") scenes = &data.test;
  else if (cfg.eval_split == "support") scenes = &data.support_pool;
  else if (cfg.eval_split == "train") scenes = &data.train;
  else
    throw std::invalid_argument("eval.split must be train, support or test, got '" +
                                cfg.eval_split + "'");

  MetricsReport r = evaluate(ckpt.model, *scenes);
  // Basename only: metrics files must be byte-identical across output dirs.
  json doc{{"event", "eval"},
           {"split", cfg.eval_split},
           {"checkpoint", fs::path(path).filename().string()},
           {"phase", ckpt.model.phase},
           {"report", report_to_json(r)}};
  const std::string stem = "eval_" + cfg.eval_split;
  write_text((fs::path(cfg.out_dir) / (stem + "_metrics.json")).string(), doc.dump(2) + "\n");

  // Confusion matrix as labeled CSV, truth rows by prediction columns.
  std::ostringstream conf;
  const std::size_t k1 = r.k_base + r.k_novel + 1;
  conf << "truth\\pred";
  for (std::size_t p = 0; p < k1; ++p) conf << "," << p;
  conf << "\n";
  for (std::size_t tr = 0; tr < k1; ++tr) {
    conf << tr;
    for (std::size_t p = 0; p < k1; ++p) conf << "," << r.confusion[tr * k1 + p];
    conf << "\n";
  }
  write_text((fs::path(cfg.out_dir) / (stem + "_confusion.csv")).string(), conf.str());

  std::cout << "eval[" << cfg.eval_split << "]: mIoU base " << r.miou_base << ", novel "
            << r.miou_novel << ", all " << r.miou_all << ", HM " << r.hm << " over " << r.points
            << " points\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  TrainConfig t = cfg.to_train_config();
  std::vector<AblationCell> cells;
  std::stringstream ss(cfg.ablate_sections);
  std::string section;
  while (std::getline(ss, section, ',')) {
    if (section.empty()) continue;
    std::vector<AblationCell> add;
    if (section == "mechanisms") add = mechanism_cells(t);
    else if (section == "lambda") add = lambda_cells(t, cfg.lambda_sweep);
    else if (section == "ratio") add = ratio_cells(t, cfg.ratio_sweep);
    else
      throw std::invalid_argument("ablate.sections: unknown section '" + section +
                                  "' (expected mechanisms, lambda, ratio)");
    cells.insert(cells.end(), add.begin(), add.end());
  }
  require(!cells.empty(), "ablate: no cells selected");

  const std::size_t threads = cfg.ablate_threads ? cfg.ablate_threads : env_threads();
  std::vector<AblationRun> runs = ablation_suite(t, cells, cfg.ablate_seeds, threads);

  const fs::path dir = fs::path(cfg.out_dir) / "ablate";
  fs::create_directories(dir);
  write_runs_jsonl(runs, (dir / "runs.jsonl").string());
  write_report_csvs(runs, dir.string());
  std::cout << "ablate: " << cells.size() << " cells x " << cfg.ablate_seeds.size()
            << " seeds (threads " << threads << ") -> " << (dir / "runs.jsonl").string() << "\n";
  return 0;
}

int cmd_report(const RunConfig& cfg) {
  const fs::path runs_path = fs::path(cfg.out_dir) / "ablate" / "runs.jsonl";
  std::vector<AblationRun> runs = read_runs_jsonl(runs_path.string());
  const fs::path dir = fs::path(cfg.out_dir) / "report";
  write_report_csvs(runs, dir.string());
  std::cout << "report: " << runs.size() << " runs -> " << (dir / "summary.csv").string() << "\n";
  return 0;
}

}  // namespace hop3d
