#pragma once

#include <cstdint>
#include <string>

namespace netbooster {

struct CliOptions {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool resume = false;
};

int cmd_expand(const CliOptions&);
int cmd_train(const CliOptions&);
int cmd_plt(const CliOptions&);
int cmd_contract(const CliOptions&);
int cmd_pipeline(const CliOptions&);
int cmd_verify(const CliOptions&);
int cmd_flops(const CliOptions&);
int cmd_sweep(const CliOptions&);

}  // namespace netbooster
