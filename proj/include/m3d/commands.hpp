#pragma once

#include <exception>
#include <iosfwd>

#include "m3d/checkpoint.hpp"
#include "m3d/evaluation.hpp"
#include "m3d/image_export.hpp"
#include "m3d/run_config.hpp"

namespace m3d {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_io = 3, exit_numeric = 4 };

int exit_code_for(const std::exception& e);

struct Datasets {
  LabeledDataset train;  // normalized with its own stats
  LabeledDataset test;   // normalized with the training stats
};

// mnist / fashion: <root>/<name>/{train,t10k}-{images-idx3,labels-idx1}-ubyte
// cifar10: <root>/cifar10/{data_batch_1..5,test_batch}.bin
// mixture: generated from the toy spec.
Datasets load_datasets(const RunConfig& config);

// Writes <out_dir>/config.txt.
void echo_config(const RunConfig& config);

// Each command echoes the config first and reports progress to `log`.
SyntheticSet cmd_condense(const RunConfig& config, std::ostream& log);
EvalReport cmd_eval(const RunConfig& config, std::ostream& log);
MomentReport cmd_moments(const RunConfig& config, std::ostream& log);
void cmd_ablate(const RunConfig& config, std::ostream& log);
std::vector<std::filesystem::path> cmd_export_images(const RunConfig& config,
                                                     std::ostream& log);

}  // namespace m3d
