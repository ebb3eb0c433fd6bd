#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tpap/attacks.hpp"
#include "tpap/data.hpp"
#include "tpap/eval.hpp"
#include "tpap/nn.hpp"
#include "tpap/purify.hpp"
#include "tpap/training.hpp"

namespace tpap {

struct DataConfig {
  std::string name = "blobs";  // blobs | mnist | cifar10
  std::string path;            // directory for mnist / cifar10
  std::size_t train_subset = 0;  // 0 = whole split
  std::size_t test_subset = 0;
  // blobs only
  std::size_t blob_classes = 3;
  std::size_t blob_train_per_class = 200;
  std::size_t blob_test_per_class = 100;
  std::size_t blob_dims = 8;
  double blob_separation = 10.0;
};

struct ModelConfig {
  std::string arch = "small_cnn";  // small_cnn | mlp | linear
  std::vector<std::size_t> hidden{256, 256};
  bool normalize = true;
};

struct EvalConfig {
  std::size_t max_examples = 2000;
  std::size_t batch_size = 256;
  std::vector<NamedAttack> attacks = {{"clean", std::nullopt},
                                      {"FGSM", AttackSpec::fgsm(8.0f / 255.0f)},
                                      {"PGD-20", AttackSpec::pgd(8.0f / 255.0f, 20)}};
};

struct AblateConfig {
  std::vector<float> epsilons{8.0f / 255.0f, 16.0f / 255.0f};
  std::vector<std::size_t> batch_sizes{64, 128};
};

/// Everything a run needs. `train.attack` mirrors the top-level `attack`
/// section; `train.seed` and `train.threads` mirror `seed` and `threads`.
struct Config {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::size_t threads = 1;
  DataConfig data;
  ModelConfig model;
  TrainSpec train;
  EvalConfig eval;
  PurifierSpec purifier;
  OverfitThresholds thresholds;
  AblateConfig ablate;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Parses YAML text. Numbers may be written as fractions ("8/255").
/// `overrides` are "dotted.key=value" strings applied on top of the file
/// before interpretation; values are parsed as YAML. Unknown keys are
/// rejected. Syntax errors throw FormatError with line and column; semantic
/// errors throw ValidationError naming the field.
Config parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {},
                    const std::string& origin = "<config>");

/// Reads `path` (empty path: defaults only) and calls parse_config.
Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Fully explicit YAML that parse_config maps back to the same Config.
std::string config_to_yaml(const Config& cfg);

/// Writes config_to_yaml into `dir`/config.yaml, creating `dir`.
std::filesystem::path echo_config(const Config& cfg, const std::filesystem::path& dir);

struct DataSplits {
  Dataset train;
  Dataset test;
};

DataSplits load_data(const DataConfig& data, std::uint64_t seed);
Architecture build_architecture(const ModelConfig& model, const Shape& input_shape, std::size_t num_classes,
                                const std::string& dataset_name);

/// Parses "0.5", "8/255", "-1e-3" (fractions allowed). Throws ValidationError.
double parse_number(const std::string& text, const std::string& field);

}  // namespace tpap
