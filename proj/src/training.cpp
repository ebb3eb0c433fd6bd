#include "tpap/training.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "tpap/eval.hpp"

namespace tpap {

std::vector<LrDrop> scaled_lr_drops(int epochs) {
  if (epochs < 1) throw ValidationError("train.epochs", "must be at least 1");
  std::vector<LrDrop> drops;
  for (int at : {75, 90, 140}) {
    const int e = static_cast<int>(std::lround(static_cast<double>(at) * epochs / 150.0));
    drops.push_back({std::max(e, 1), 10.0f});
  }
  return drops;
}

void TrainSpec::validate() const {
  if (epochs < 1) throw ValidationError("train.epochs", "must be at least 1");
  if (batch_size < 1) throw ValidationError("train.batch_size", "must be at least 1");
  if (!(lr0 > 0.0f) || !std::isfinite(lr0)) throw ValidationError("train.lr0", "must be positive");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ValidationError("train.momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0f) || !std::isfinite(weight_decay))
    throw ValidationError("train.weight_decay", "must be non-negative");
  for (const LrDrop& d : lr_drops) {
    if (d.epoch < 1) throw ValidationError("train.lr_drops", "drop epochs must be >= 1");
    if (!(d.divisor > 0.0f)) throw ValidationError("train.lr_drops", "divisors must be positive");
  }
  if (eval_every < 1) throw ValidationError("train.eval_every", "must be at least 1");
  if (eval_batch_size < 1) throw ValidationError("train.eval_batch_size", "must be at least 1");
  if (attack) attack->validate();
  if (dual_epsilon) {
    if (!attack) throw ValidationError("train.dual_epsilon", "requires an attack");
    if (attack->kind != AttackSpec::Kind::fgsm) throw ValidationError("train.dual_epsilon", "requires an fgsm attack");
    if (!(second_epsilon > 0.0f && second_epsilon <= 1.0f))
      throw ValidationError("train.second_epsilon", "must be in (0, 1]");
  }
  eval_fgsm.validate();
  eval_pgd.validate();
}

float lr_at(int epoch, const TrainSpec& spec) {
  double lr = spec.lr0;
  for (const LrDrop& d : spec.lr_drops)
    if (d.epoch <= epoch) lr /= d.divisor;
  return static_cast<float>(lr);
}

void sgd_step(ParamMap& params, const GradMap& grads, SgdState& state, float lr, float momentum, float weight_decay) {
  for (auto& [name, theta] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw ShapeError("sgd_step: no gradient for " + name);
    if (g->second.shape() != theta.shape())
      throw ShapeError("sgd_step: " + name + " " + shape_str(theta.shape()) + " vs grad " +
                       shape_str(g->second.shape()));
    auto [it, fresh] = state.velocity.try_emplace(name, theta.shape());
    Tensor& v = it->second;
    if (v.shape() != theta.shape()) throw ShapeError("sgd_step: velocity for " + name + " has the wrong shape");
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      v[i] = momentum * v[i] + (g->second[i] + weight_decay * theta[i]);
      theta[i] = theta[i] - lr * v[i];
    }
  }
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

EvalSpec curve_spec(const TrainSpec& spec, std::size_t max_examples) {
  EvalSpec e;
  e.max_examples = max_examples;
  e.batch_size = spec.eval_batch_size;
  e.threads = spec.threads;
  e.seed = spec.seed;
  return e;
}

void evaluate_epoch(const Model& model, const Dataset& train, const Dataset& test, const TrainSpec& spec,
                    EpochRecord& rec) {
  // A trained attack identical to the FGSM curve attack is evaluated once.
  const bool trained_is_fgsm = spec.attack && *spec.attack == spec.eval_fgsm;

  EvalSpec on_train = curve_spec(spec, spec.eval_train_examples);
  on_train.attacks.push_back({"clean", std::nullopt});
  if (spec.attack) on_train.attacks.push_back({"trained", spec.attack});
  const RunReport tr = evaluate(model, train, on_train);
  rec.clean_train_acc = tr.find("clean", false)->accuracy_pct;
  rec.adv_train_acc = spec.attack ? tr.find("trained", false)->accuracy_pct : *rec.clean_train_acc;

  EvalSpec on_test = curve_spec(spec, spec.eval_test_examples);
  on_test.attacks.push_back({"clean", std::nullopt});
  on_test.attacks.push_back({"fgsm", spec.eval_fgsm});
  on_test.attacks.push_back({"pgd", spec.eval_pgd});
  if (spec.attack && !trained_is_fgsm) on_test.attacks.push_back({"trained", spec.attack});
  const RunReport te = evaluate(model, test, on_test);
  rec.clean_test_acc = te.find("clean", false)->accuracy_pct;
  rec.fgsm_test_acc = te.find("fgsm", false)->accuracy_pct;
  rec.pgd_test_acc = te.find("pgd", false)->accuracy_pct;
  if (!spec.attack)
    rec.trained_test_acc = rec.clean_test_acc;
  else if (trained_is_fgsm)
    rec.trained_test_acc = rec.fgsm_test_acc;
  else
    rec.trained_test_acc = te.find("trained", false)->accuracy_pct;
}

Tensor attack_batch(const Model& model, const Batch& b, const TrainSpec& spec, Rng& rng) {
  if (!spec.attack) return b.images;
  if (!spec.dual_epsilon || b.labels.size() < 2) return run_attack(model, b.images, b.labels, *spec.attack, rng);

  const std::size_t n = b.labels.size();
  const std::size_t half = (n + 1) / 2;
  AttackSpec second = *spec.attack;
  second.epsilon = second.alpha = spec.second_epsilon;
  const Labels y(b.labels.begin(), b.labels.end());
  const Tensor parts[2] = {
      run_attack(model, slice_rows(b.images, 0, half), std::span<const Label>(y).first(half), *spec.attack, rng),
      run_attack(model, slice_rows(b.images, half, n), std::span<const Label>(y).subspan(half), second, rng)};
  return concat_rows(parts);
}

}  // namespace

TrainResult adversarial_train(Model model, const Dataset& train, const Dataset& test, const TrainSpec& spec,
                              const TrainHooks& hooks) {
  spec.validate();
  train.validate();
  test.validate();
  if (train.size() == 0) throw ValidationError("data.train", "training set is empty");
  if (test.size() == 0) throw ValidationError("data.test", "test set is empty");
  if (train.num_classes != model.num_classes() || test.num_classes != model.num_classes())
    throw ValidationError("model.classes", "datasets have " + std::to_string(train.num_classes) + "/" +
                                               std::to_string(test.num_classes) + " classes, model has " +
                                               std::to_string(model.num_classes()));
  check_batch_shape(model, slice_rows(train.images, 0, 1), "adversarial_train");
  check_batch_shape(model, slice_rows(test.images, 0, 1), "adversarial_train");
  if (spec.augment.pad_crop >= std::min(train.images.dim(2), train.images.dim(3)))
    throw ValidationError("train.augment.pad_crop", "must be smaller than the image side");

  const Rng attack_root(mix64(spec.seed ^ 0x61747461636bULL));
  const Rng augment_root(mix64(spec.seed ^ 0x6175676d656eULL));
  const bool augmenting = spec.augment.pad_crop > 0 || spec.augment.hflip;

  SgdState state;
  TrainHistory history;
  std::optional<Model> best;
  int best_epoch = 0;
  double best_score = -1.0;

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    const auto t0 = clock_type::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch, spec);

    Rng augment_rng = augment_root.split(static_cast<std::uint64_t>(epoch));
    const auto batches = epoch_batches(train.size(), spec.batch_size, spec.seed, static_cast<std::size_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Batch batch = gather(train, batches[b]);
      if (augmenting) batch.images = augment(batch.images, spec.augment, augment_rng);
      Rng attack_rng = attack_root.split((static_cast<std::uint64_t>(epoch) << 32) | b);
      const Tensor x = attack_batch(model, batch, spec, attack_rng);

      LossAndGrads lg = parameter_gradients(model, x, batch.labels);
      if (!std::isfinite(lg.loss))
        throw TrainingError("non-finite loss " + std::to_string(lg.loss) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b) + " (lr " + std::to_string(rec.lr) + ")");
      sgd_step(model.mutable_params(), lg.grads, state, rec.lr, spec.momentum, spec.weight_decay);
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(batch.labels.size());
    }
    rec.mean_loss = loss_sum / static_cast<double>(train.size());

    if (epoch % spec.eval_every == 0 || epoch == spec.epochs) {
      evaluate_epoch(model, train, test, spec, rec);
      const double score = (*rec.clean_test_acc + *rec.trained_test_acc) / 2.0;
      if (score > best_score) {
        best_score = score;
        best_epoch = epoch;
        best = model;
      }
    }
    rec.wall_seconds = seconds_since(t0);
    history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec, model);
  }

  return TrainResult{model, *best, best_epoch, std::move(history)};
}

OverfitVerdict make_verdict(double trained_train, double other_train, double clean_test, double trained_test,
                            const OverfitThresholds& t) {
  OverfitVerdict v;
  v.trained_attack_train_acc = trained_train;
  v.other_attack_train_acc = other_train;
  v.clean_test_acc = clean_test;
  v.trained_attack_test_acc = trained_test;
  v.is_robust_overfit = trained_train > t.trained_train_min && other_train < t.other_train_max &&
                        clean_test >= t.clean_test_min && trained_test >= t.trained_test_min;
  return v;
}

OverfitVerdict robust_overfit_check(const Model& model, const Dataset& train, const Dataset& test,
                                    const AttackSpec& trained_attack, const AttackSpec& other_attack,
                                    const OverfitThresholds& thresholds, const CheckOptions& options) {
  EvalSpec e;
  e.max_examples = options.max_examples;
  e.batch_size = options.batch_size;
  e.threads = options.threads;
  e.seed = options.seed;

  EvalSpec on_train = e;
  on_train.attacks = {{"trained", trained_attack}, {"other", other_attack}};
  const RunReport tr = evaluate(model, train, on_train);

  EvalSpec on_test = e;
  on_test.attacks = {{"clean", std::nullopt}, {"trained", trained_attack}};
  const RunReport te = evaluate(model, test, on_test);

  return make_verdict(tr.find("trained", false)->accuracy_pct, tr.find("other", false)->accuracy_pct,
                      te.find("clean", false)->accuracy_pct, te.find("trained", false)->accuracy_pct, thresholds);
}

}  // namespace tpap
