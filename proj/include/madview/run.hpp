#pragma once

#include <iosfwd>
#include <string>

#include "madview/eval.hpp"
#include "madview/rundir.hpp"

namespace madview {

struct TrainResult {
  std::string run_dir;
  EvalReport final_matrix;
};

EnvOptions env_options_from_config(const RunConfig& cfg);

// Executes the full training procedure for one config: environment
// interaction with scheduled gradient updates, a robustness-matrix
// evaluation plus checkpoint (and resume snapshot) every eval_every steps,
// and metric persistence into `run_dir`. Set `resume` to continue from the
// run's saved state; `log` (optional) receives progress lines.
TrainResult train_run(const RunConfig& cfg, const std::string& run_dir,
                      bool resume = false, std::ostream* log = nullptr);

}  // namespace madview
