#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "m3d/condenser.hpp"
#include "m3d/evaluation.hpp"

namespace m3d {

// Flat key=value run description. Every key has a default; files and flags
// may only set known keys. Lines starting with '#' are comments.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;
  std::vector<std::string> keys() const;

  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  // Fully resolved config, one "key=value" line per key in declaration
  // order; from_text(to_text()) reproduces the config.
  std::string to_text() const;

  // Dataset root: the data_root key, else $M3D_DATA_ROOT, else "data".
  std::filesystem::path data_root() const;
  std::filesystem::path out_dir() const;
  std::filesystem::path checkpoint_path() const;

  KernelSpec kernel_spec() const;
  EncoderArch condense_arch(const LabeledDataset& data) const;
  EncoderArch eval_arch(const LabeledDataset& data) const;
  CondenseConfig condense_config(const LabeledDataset& data) const;
  TrainConfig train_config() const;
  MomentDiagnostics moment_options() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace m3d
