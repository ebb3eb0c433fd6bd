#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tpap/attacks.hpp"
#include "tpap/autodiff.hpp"
#include "tpap/data.hpp"
#include "tpap/error.hpp"
#include "tpap/nn.hpp"

namespace tpap {

struct LrDrop {
  int epoch = 0;
  float divisor = 10.0f;
  bool operator==(const LrDrop&) const = default;
};

/// Drops at 75/90/140 of a 150-epoch schedule, rescaled to `epochs`.
std::vector<LrDrop> scaled_lr_drops(int epochs);

struct TrainSpec {
  int epochs = 150;
  std::size_t batch_size = 128;
  float lr0 = 0.1f;
  std::vector<LrDrop> lr_drops{{75, 10.0f}, {90, 10.0f}, {140, 10.0f}};
  float momentum = 0.9f;
  float weight_decay = 1e-3f;
  /// nullopt trains on clean batches.
  std::optional<AttackSpec> attack = AttackSpec::fgsm(8.0f / 255.0f);
  /// Second half of every batch is attacked at `second_epsilon` instead.
  bool dual_epsilon = false;
  float second_epsilon = 16.0f / 255.0f;
  AugmentSpec augment{};
  std::uint64_t seed = 0;
  int eval_every = 1;

  // Curve evaluation, done on frozen snapshots after an epoch.
  AttackSpec eval_fgsm = AttackSpec::fgsm(8.0f / 255.0f);
  AttackSpec eval_pgd = AttackSpec::pgd(8.0f / 255.0f, 20);
  std::size_t eval_train_examples = 2000;  // 0 = whole split
  std::size_t eval_test_examples = 2000;
  std::size_t eval_batch_size = 256;
  std::size_t threads = 1;

  /// Throws ValidationError (field "train.<name>").
  void validate() const;
};

/// lr0 divided by the product of the divisors whose epoch is <= `epoch`.
float lr_at(int epoch, const TrainSpec& spec);

struct SgdState {
  ParamMap velocity;
};

/// v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v.
/// Weight decay is coupled, i.e. added to the gradient before momentum.
void sgd_step(ParamMap& params, const GradMap& grads, SgdState& state, float lr, float momentum, float weight_decay);

/// Accuracies are percentages; they are absent on epochs that were not
/// evaluated.
struct EpochRecord {
  int epoch = 0;
  float lr = 0.0f;
  double mean_loss = 0.0;
  std::optional<double> clean_train_acc;
  std::optional<double> adv_train_acc;  // trained attack, train split
  std::optional<double> clean_test_acc;
  std::optional<double> trained_test_acc;  // trained attack, test split
  std::optional<double> fgsm_test_acc;
  std::optional<double> pgd_test_acc;
  double wall_seconds = 0.0;

  bool evaluated() const noexcept { return clean_test_acc.has_value(); }
};

using TrainHistory = std::vector<EpochRecord>;

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  Model final_model;
  Model best_model;
  int best_epoch = 0;
  TrainHistory history;
};

struct TrainHooks {
  /// Called after every epoch with the record and the current parameters.
  std::function<void(const EpochRecord&, const Model&)> on_epoch;
};

/// Trains `model` in place of a copy. Each batch is attacked with the current
/// parameters using ground-truth labels, then one SGD step is taken on the
/// attacked batch. The best snapshot maximizes (clean_test + trained_test)/2
/// over evaluated epochs; the last epoch is always evaluated.
/// Throws TrainingError on a non-finite loss.
TrainResult adversarial_train(Model model, const Dataset& train, const Dataset& test, const TrainSpec& spec,
                              const TrainHooks& hooks = {});

struct OverfitThresholds {
  double trained_train_min = 90.0;  // strictly above
  double other_train_max = 10.0;    // strictly below
  double clean_test_min = 70.0;
  double trained_test_min = 60.0;
};

struct OverfitVerdict {
  bool is_robust_overfit = false;
  double trained_attack_train_acc = 0.0;
  double other_attack_train_acc = 0.0;
  double clean_test_acc = 0.0;
  double trained_attack_test_acc = 0.0;
};

OverfitVerdict make_verdict(double trained_train, double other_train, double clean_test, double trained_test,
                            const OverfitThresholds& t);

struct CheckOptions {
  std::size_t max_examples = 2000;  // per split; 0 = all
  std::size_t batch_size = 256;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

OverfitVerdict robust_overfit_check(const Model& model, const Dataset& train, const Dataset& test,
                                    const AttackSpec& trained_attack, const AttackSpec& other_attack,
                                    const OverfitThresholds& thresholds = {}, const CheckOptions& options = {});

}  // namespace tpap
