#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tpap/attacks.hpp"
#include "tpap/data.hpp"
#include "tpap/nn.hpp"
#include "tpap/purify.hpp"
#include "tpap/training.hpp"

namespace tpap {

struct NamedAttack {
  std::string name;
  std::optional<AttackSpec> attack;  // nullopt = clean inputs
};

struct EvalSpec {
  std::vector<NamedAttack> attacks;
  /// When set, every attack gets a purified row in addition to (or, with
  /// include_plain off, instead of) the plain row.
  std::optional<PurifierSpec> purifier;
  bool include_plain = true;
  std::size_t max_examples = 2000;  // 0 = whole dataset
  std::size_t batch_size = 256;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  /// Throws ValidationError (field "eval.<name>").
  void validate() const;
};

struct ReportRow {
  std::string attack;
  bool purified = false;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy_pct = 0.0;
  double mean_linf = 0.0;         // mean per-image L-inf size of the attack
  double mean_purify_linf = 0.0;  // mean per-image L-inf size of the purification step
  double wall_seconds = 0.0;
};

struct RunReport {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::string model_id;
  std::string dataset;
  std::vector<ReportRow> rows;

  /// nullptr when absent.
  const ReportRow* find(const std::string& attack, bool purified) const;
};

/// White-box evaluation: adversarial examples are crafted against `model`
/// with ground-truth labels, then classified plainly and/or through
/// tpap_predict. Batches run on up to spec.threads workers; every batch has
/// its own random stream, so rows do not depend on the thread count.
/// Throws ValidationError on an empty dataset.
RunReport evaluate(const Model& model, const Dataset& dataset, const EvalSpec& spec);

/// Accuracy of one row; a convenience wrapper over evaluate().
double accuracy_pct(const Model& model, const Dataset& dataset, const std::optional<AttackSpec>& attack,
                    const std::optional<PurifierSpec>& purifier, const EvalSpec& base = {});

struct TimingReport {
  std::size_t n = 0;
  double attack_seconds = 0.0;
  double purify_seconds = 0.0;   // pre-prediction + gradient step
  double forward_seconds = 0.0;  // plain classification of the same inputs
  double tpap_seconds = 0.0;     // purification + classification of purified inputs
};

/// Single-threaded wall-clock split of one evaluation pass. Uses the first
/// attack in spec.attacks that is not clean (none: attack time is 0).
TimingReport timing_report(const Model& model, const Dataset& dataset, const EvalSpec& spec);

struct AblationCell {
  float epsilon = 0.0f;
  std::size_t batch_size = 0;
  TrainHistory history;
  OverfitVerdict verdict;
  double clean_test_acc = 0.0;
  double fgsm_test_acc = 0.0;
  double pgd_test_acc = 0.0;
};

/// Trains one model per (epsilon, batch size) cell via `train_fn` and scores
/// the final model with robust_overfit_check (trained attack: FGSM at the
/// cell's epsilon; other attack: `other_attack` at the same epsilon).
using CellTrainFn = std::function<TrainResult(float epsilon, std::size_t batch_size)>;
std::vector<AblationCell> ablation_grid(const CellTrainFn& train_fn, const Dataset& train, const Dataset& test,
                                        const std::vector<float>& epsilons, const std::vector<std::size_t>& batch_sizes,
                                        const AttackSpec& other_attack, const OverfitThresholds& thresholds = {},
                                        const CheckOptions& options = {});

}  // namespace tpap
