#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hop3d/config.hpp"

namespace hop3d {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  bool seed_given = false;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;  // raw "key=value" pairs
};

// defaults < config file < --seed < --set, left to right.
RunConfig resolve_config(const CliOptions& opts);

int cmd_gen(const RunConfig& cfg);
int cmd_phase1(const RunConfig& cfg);
int cmd_phase2(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

}  // namespace hop3d
