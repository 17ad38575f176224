#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "expreg/datamodel.hpp"
#include "expreg/training.hpp"

#include "json.hpp"

namespace expreg::harness {

/// Everything a command needs. Field names match the JSON keys and the CLI flags.
struct ExperimentConfig {
  // Hyperparameters.
  int n = 8;
  int d = 8;
  int m = 1000;
  double sigma = 1.0;
  double c = 11.0;
  double delta = 0.05;
  double epsilon = 0.01;
  double radius = 0.005;
  std::optional<double> eta;
  std::int64_t steps = 1000;
  BSource b_source = BSource::empirical;
  EtaSource eta_source = EtaSource::paper_formula;

  // Dataset: generated from (kind, seed) unless a file is given.
  DatasetKind dataset_kind = DatasetKind::normalized_gaussian;
  std::uint64_t dataset_seed = 0;
  std::optional<std::filesystem::path> dataset_file;
  std::optional<std::filesystem::path> labels_file;

  InitMode init_mode = InitMode::paired;
  std::vector<std::uint64_t> seeds{0};
  bool early_stop = true;
  int record_kernel_every = 0;

  // Command-specific.
  std::vector<int> m_grid{100, 400, 1600};
  std::vector<double> sigma_grid;
  int trials = 50;
  std::int64_t mc_samples = 100000;
  /// verify: concentration widths above this are not simulated (and fail).
  std::int64_t max_concentration_m = 2000000;

  std::filesystem::path out;

  /// Keys not listed above are rejected. Throws ParameterDomainError.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  [[nodiscard]] nlohmann::json to_json() const;
  /// Seeds non-empty, m even and positive, grids valid, out set.
  void validate() const;

  [[nodiscard]] RunSettings run_settings(int width, double sigma_value) const;
  [[nodiscard]] RunSettings run_settings() const { return run_settings(m, sigma); }
};

/// Generated or loaded dataset for the config.
Dataset make_dataset(const ExperimentConfig& cfg);

/// Merges `--<field> <value>` overrides into a JSON document. Values parse as JSON
/// when possible (numbers, booleans, arrays) and fall back to strings.
nlohmann::json apply_overrides(nlohmann::json doc,
                               const std::vector<std::pair<std::string, std::string>>& overrides);

/// Runs fn(0..count-1) on up to EXPREG_THREADS threads (default: hardware concurrency).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);
unsigned thread_limit();

/// Creates the directory if needed and proves it is writable.
void prepare_output_dir(const std::filesystem::path& dir);

/// Each command returns the process exit status (0 on success).
int cmd_train(const ExperimentConfig& cfg);
int cmd_ntk(const ExperimentConfig& cfg);
int cmd_verify(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);

/// Full CLI: `expreg train|ntk|verify|sweep --config <path> [--<field> <value>...] --out <dir>`.
int run_cli(int argc, char** argv);

}  // namespace expreg::harness
