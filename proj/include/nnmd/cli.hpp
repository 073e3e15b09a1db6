#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nnmd::cli {

/// Flag overrides applied on top of the config file (flags win).
struct Overrides {
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool has_workers = false;
  int workers = 0;
  bool has_out = false;
  std::string out;
  bool has_scheme = false;
  std::string scheme;
  bool has_ranks = false;
  std::vector<int> ranks;
};

int cmd_train(const std::string& config_path, const Overrides& ov);
int cmd_run(const std::string& config_path, const Overrides& ov);
int cmd_validate_dd(const std::string& config_path, const Overrides& ov);
int cmd_sweep(const std::string& config_path, const Overrides& ov);
int cmd_fit_scaling(const std::string& points_csv, const std::string& config_path,
                    const Overrides& ov);
int cmd_gyrate(const std::string& trajectory, const std::string& config_path,
               const Overrides& ov);

}  // namespace nnmd::cli
