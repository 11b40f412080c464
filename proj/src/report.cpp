#include "hop3d/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "hop3d/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hop3d {

double median(std::vector<double> values) {
  require(!values.empty(), "median: empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::pair<double, double> bootstrap_ci_median(const std::vector<double>& values,
                                              std::uint64_t seed, int resamples) {
  require(!values.empty(), "bootstrap_ci_median: empty sample");
  require(resamples >= 1, "bootstrap_ci_median: need at least one resample");
  Rng rng(mix_seed(seed, 0xc1));
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> medians(static_cast<std::size_t>(resamples));
  std::vector<double> sample(values.size());
  for (double& m : medians) {
    for (double& s : sample) s = values[pick(rng)];
    m = median(sample);
  }
  std::sort(medians.begin(), medians.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(medians.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, medians.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return medians[lo] * (1.0 - frac) + medians[hi] * frac;
  };
  return {at(0.025), at(0.975)};
}

// ---- JSON round-trip ---------------------------------------------------------

json report_to_json(const MetricsReport& r) {
  return json{{"k_base", r.k_base},
              {"k_novel", r.k_novel},
              {"confusion", r.confusion},
              {"per_class_iou", r.per_class_iou},
              {"miou_base", r.miou_base},
              {"miou_novel", r.miou_novel},
              {"miou_all", r.miou_all},
              {"hm", r.hm},
              {"mean_confidence", r.mean_confidence},
              {"novel_freq_cv", r.novel_freq_cv},
              {"pred_frequency", r.pred_frequency},
              {"confidence_hist", r.confidence_hist},
              {"points", r.points}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  j.at("k_base").get_to(r.k_base);
  j.at("k_novel").get_to(r.k_novel);
  j.at("confusion").get_to(r.confusion);
  j.at("per_class_iou").get_to(r.per_class_iou);
  j.at("miou_base").get_to(r.miou_base);
  j.at("miou_novel").get_to(r.miou_novel);
  j.at("miou_all").get_to(r.miou_all);
  j.at("hm").get_to(r.hm);
  j.at("mean_confidence").get_to(r.mean_confidence);
  j.at("novel_freq_cv").get_to(r.novel_freq_cv);
  j.at("pred_frequency").get_to(r.pred_frequency);
  j.at("confidence_hist").get_to(r.confidence_hist);
  j.at("points").get_to(r.points);
  return r;
}

namespace {

json run_to_json(const AblationRun& r) {
  return json{{"record", "hop3d-ablation-run"},
              {"cell", r.cell_id},
              {"seed", r.seed},
              {"hop_grad", r.flags.hop_grad},
              {"hop_rep_orth", r.flags.hop_rep_orth},
              {"hop_ent", r.flags.hop_ent},
              {"lambda_orth", r.lambda_orth},
              {"adaptation_ratio", r.adaptation_ratio},
              {"phase1", report_to_json(r.phase1_report)},
              {"phase2", report_to_json(r.phase2_report)},
              {"base_drop", r.base_drop},
              {"proto_offdiag", r.proto_offdiag},
              {"basis_rank", r.basis_rank}};
}

AblationRun run_from_json(const json& j) {
  AblationRun r;
  if (j.value("record", "") != "hop3d-ablation-run")
    throw std::runtime_error("read_runs_jsonl: line is not an ablation record");
  j.at("cell").get_to(r.cell_id);
  j.at("seed").get_to(r.seed);
  j.at("hop_grad").get_to(r.flags.hop_grad);
  j.at("hop_rep_orth").get_to(r.flags.hop_rep_orth);
  j.at("hop_ent").get_to(r.flags.hop_ent);
  j.at("lambda_orth").get_to(r.lambda_orth);
  j.at("adaptation_ratio").get_to(r.adaptation_ratio);
  r.phase1_report = report_from_json(j.at("phase1"));
  r.phase2_report = report_from_json(j.at("phase2"));
  j.at("base_drop").get_to(r.base_drop);
  j.at("proto_offdiag").get_to(r.proto_offdiag);
  j.at("basis_rank").get_to(r.basis_rank);
  return r;
}

}  // namespace

void write_runs_jsonl(const std::vector<AblationRun>& runs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_runs_jsonl: cannot write '" + path + "'");
  for (const AblationRun& r : runs) out << run_to_json(r).dump() << "\n";
  if (!out) throw std::runtime_error("write_runs_jsonl: write failed for '" + path + "'");
}

std::vector<AblationRun> read_runs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("read_runs_jsonl: cannot open '" + path +
                             "'; run `hop3d ablate` first");
  std::vector<AblationRun> runs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      runs.push_back(run_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error("read_runs_jsonl: " + path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  if (runs.empty()) throw std::runtime_error("read_runs_jsonl: '" + path + "' holds no runs");
  return runs;
}

// ---- CSV summaries -----------------------------------------------------------

namespace {

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Group {
  std::vector<const AblationRun*> runs;  // insertion order of cells preserved
};

}  // namespace

void write_report_csvs(const std::vector<AblationRun>& runs, const std::string& dir) {
  require(!runs.empty(), "write_report_csvs: no runs");
  fs::create_directories(dir);

  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  for (const AblationRun& r : runs) {
    if (!groups.count(r.cell_id)) order.push_back(r.cell_id);
    groups[r.cell_id].runs.push_back(&r);
  }

  {
    std::ofstream out(fs::path(dir) / "summary.csv");
    if (!out) throw std::runtime_error("write_report_csvs: cannot write summary.csv");
    out << "cell,runs,hop_grad,hop_rep_orth,hop_ent,lambda_orth,adaptation_ratio,"
           "hm_median,hm_lo,hm_hi,miou_base_median,miou_novel_median,miou_all_median,"
           "base_drop_median,base_drop_lo,base_drop_hi,proto_offdiag_median,"
           "mean_confidence_median,novel_freq_cv_median,basis_rank_median\n";
    for (const std::string& id : order) {
      const Group& g = groups[id];
      auto pull = [&](auto&& fn) {
        std::vector<double> v;
        for (const AblationRun* r : g.runs) v.push_back(fn(*r));
        return v;
      };
      const auto hm = pull([](const AblationRun& r) { return r.phase2_report.hm; });
      const auto drop = pull([](const AblationRun& r) { return r.base_drop; });
      const auto [hm_lo, hm_hi] = bootstrap_ci_median(hm, g.runs.front()->seed);
      const auto [dr_lo, dr_hi] = bootstrap_ci_median(drop, g.runs.front()->seed);
      const AblationRun& first = *g.runs.front();
      out << id << "," << g.runs.size() << "," << (first.flags.hop_grad ? 1 : 0) << ","
          << (first.flags.hop_rep_orth ? 1 : 0) << "," << (first.flags.hop_ent ? 1 : 0) << ","
          << csv_num(first.lambda_orth) << "," << csv_num(first.adaptation_ratio) << ","
          << csv_num(median(hm)) << "," << csv_num(hm_lo) << "," << csv_num(hm_hi) << ","
          << csv_num(median(pull([](const AblationRun& r) { return r.phase2_report.miou_base; })))
          << ","
          << csv_num(median(pull([](const AblationRun& r) { return r.phase2_report.miou_novel; })))
          << ","
          << csv_num(median(pull([](const AblationRun& r) { return r.phase2_report.miou_all; })))
          << "," << csv_num(median(drop)) << "," << csv_num(dr_lo) << "," << csv_num(dr_hi) << ","
          << csv_num(median(pull([](const AblationRun& r) { return r.proto_offdiag; }))) << ","
          << csv_num(
                 median(pull([](const AblationRun& r) { return r.phase2_report.mean_confidence; })))
          << ","
          << csv_num(
                 median(pull([](const AblationRun& r) { return r.phase2_report.novel_freq_cv; })))
          << ","
          << csv_num(median(
                 pull([](const AblationRun& r) { return static_cast<double>(r.basis_rank); })))
          << "\n";
    }
  }

  {
    std::ofstream out(fs::path(dir) / "confidence_hist.csv");
    if (!out) throw std::runtime_error("write_report_csvs: cannot write confidence_hist.csv");
    out << "cell,seed";
    for (int b = 0; b < 20; ++b) out << ",bin" << b;
    out << "\n";
    for (const AblationRun& r : runs) {
      out << r.cell_id << "," << r.seed;
      for (std::int64_t c : r.phase2_report.confidence_hist) out << "," << c;
      out << "\n";
    }
  }

  {
    std::ofstream out(fs::path(dir) / "class_frequency.csv");
    if (!out) throw std::runtime_error("write_report_csvs: cannot write class_frequency.csv");
    out << "cell,seed,label,share\n";
    for (const AblationRun& r : runs)
      for (std::size_t c = 0; c < r.phase2_report.pred_frequency.size(); ++c)
        out << r.cell_id << "," << r.seed << "," << c << ","
            << csv_num(r.phase2_report.pred_frequency[c]) << "\n";
  }
}

}  // namespace hop3d
