#include "tpap/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "tpap/error.hpp"

namespace tpap {

void EvalSpec::validate() const {
  if (attacks.empty()) throw ValidationError("eval.attacks", "at least one row is required");
  std::set<std::string> seen;
  for (const NamedAttack& a : attacks) {
    if (a.name.empty()) throw ValidationError("eval.attacks", "attack names must be non-empty");
    if (!seen.insert(a.name).second) throw ValidationError("eval.attacks", "duplicate attack name '" + a.name + "'");
    if (a.attack) a.attack->validate();
  }
  if (purifier) purifier->validate();
  if (!include_plain && !purifier) throw ValidationError("eval.include_plain", "no rows left without a purifier");
  if (batch_size < 1) throw ValidationError("eval.batch_size", "must be at least 1");
}

const ReportRow* RunReport::find(const std::string& attack, bool purified) const {
  for (const ReportRow& r : rows)
    if (r.attack == attack && r.purified == purified) return &r;
  return nullptr;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first
// failure after all workers have stopped.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Attack streams are keyed by row name so a row's result does not depend on
// its position in the list.
std::uint64_t name_stream(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  return mix64(seed ^ h);
}

std::size_t count_correct(std::span<const Label> predicted, std::span<const Label> truth) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) c += predicted[i] == truth[i];
  return c;
}

struct BatchResult {
  std::size_t n = 0;
  std::size_t plain_correct = 0;
  std::size_t purified_correct = 0;
  double linf_sum = 0.0;
  double purify_linf_sum = 0.0;
  double attack_seconds = 0.0;
  double plain_seconds = 0.0;
  double purified_seconds = 0.0;
};

double pct(std::size_t correct, std::size_t n) { return 100.0 * static_cast<double>(correct) / static_cast<double>(n); }

}  // namespace

RunReport evaluate(const Model& model, const Dataset& dataset, const EvalSpec& spec) {
  spec.validate();
  if (dataset.size() == 0) throw ValidationError("eval.dataset", "dataset '" + dataset.name + "' is empty");
  if (dataset.num_classes != model.num_classes())
    throw ValidationError("eval.dataset", "dataset has " + std::to_string(dataset.num_classes) +
                                              " classes, model has " + std::to_string(model.num_classes()));

  const std::size_t n = spec.max_examples ? std::min(spec.max_examples, dataset.size()) : dataset.size();
  const std::size_t num_batches = (n + spec.batch_size - 1) / spec.batch_size;

  RunReport report;
  report.model_id = model.arch().name;
  report.dataset = dataset.name;

  for (const NamedAttack& row : spec.attacks) {
    const Rng root(name_stream(spec.seed, row.name));
    std::vector<BatchResult> results(num_batches);
    parallel_for(num_batches, spec.threads, [&](std::size_t b) {
      const std::size_t begin = b * spec.batch_size;
      const Batch batch = slice(dataset, begin, std::min(n, begin + spec.batch_size));
      BatchResult& r = results[b];
      r.n = batch.labels.size();

      auto t0 = clock_type::now();
      Tensor x = batch.images;
      if (row.attack) {
        Rng rng = root.split(b);
        x = run_attack(model, batch.images, batch.labels, *row.attack, rng);
        for (float d : linf_per_image(x, batch.images)) r.linf_sum += d;
      }
      r.attack_seconds = seconds_since(t0);

      if (spec.include_plain) {
        t0 = clock_type::now();
        r.plain_correct = count_correct(predict_labels(forward_logits(model, x)), batch.labels);
        r.plain_seconds = seconds_since(t0);
      }
      if (spec.purifier) {
        t0 = clock_type::now();
        const TpapPrediction p = tpap_predict(model, x, *spec.purifier);
        r.purified_correct = count_correct(p.labels, batch.labels);
        for (float d : p.trace.linf_delta) r.purify_linf_sum += d;
        r.purified_seconds = seconds_since(t0);
      }
    });

    BatchResult total;
    for (const BatchResult& r : results) {
      total.n += r.n;
      total.plain_correct += r.plain_correct;
      total.purified_correct += r.purified_correct;
      total.linf_sum += r.linf_sum;
      total.purify_linf_sum += r.purify_linf_sum;
      total.attack_seconds += r.attack_seconds;
      total.plain_seconds += r.plain_seconds;
      total.purified_seconds += r.purified_seconds;
    }
    const double mean_linf = total.linf_sum / static_cast<double>(total.n);
    if (spec.include_plain) {
      report.rows.push_back({row.name, false, total.n, total.plain_correct, pct(total.plain_correct, total.n),
                             mean_linf, 0.0, total.attack_seconds + total.plain_seconds});
    }
    if (spec.purifier) {
      report.rows.push_back({row.name, true, total.n, total.purified_correct, pct(total.purified_correct, total.n),
                             mean_linf, total.purify_linf_sum / static_cast<double>(total.n),
                             total.attack_seconds + total.purified_seconds});
    }
  }
  return report;
}

double accuracy_pct(const Model& model, const Dataset& dataset, const std::optional<AttackSpec>& attack,
                    const std::optional<PurifierSpec>& purifier, const EvalSpec& base) {
  EvalSpec spec = base;
  spec.attacks = {{"row", attack}};
  spec.purifier = purifier;
  spec.include_plain = !purifier;
  return evaluate(model, dataset, spec).rows.at(0).accuracy_pct;
}

TimingReport timing_report(const Model& model, const Dataset& dataset, const EvalSpec& spec) {
  spec.validate();
  if (dataset.size() == 0) throw ValidationError("eval.dataset", "dataset '" + dataset.name + "' is empty");
  const NamedAttack* attack = nullptr;
  for (const NamedAttack& a : spec.attacks)
    if (a.attack) {
      attack = &a;
      break;
    }

  const std::size_t n = spec.max_examples ? std::min(spec.max_examples, dataset.size()) : dataset.size();
  const Rng root(name_stream(spec.seed, attack ? attack->name : std::string("clean")));
  TimingReport t;
  t.n = n;
  for (std::size_t begin = 0, b = 0; begin < n; begin += spec.batch_size, ++b) {
    const Batch batch = slice(dataset, begin, std::min(n, begin + spec.batch_size));
    auto t0 = clock_type::now();
    Tensor x = batch.images;
    if (attack) {
      Rng rng = root.split(b);
      x = run_attack(model, batch.images, batch.labels, *attack->attack, rng);
    }
    t.attack_seconds += seconds_since(t0);

    t0 = clock_type::now();
    (void)predict_labels(forward_logits(model, x));
    t.forward_seconds += seconds_since(t0);

    if (spec.purifier) {
      t0 = clock_type::now();
      const PurifyTrace trace = purify_batch(model, x, *spec.purifier);
      t.purify_seconds += seconds_since(t0);
      (void)predict_labels(forward_logits(model, trace.purified));
      t.tpap_seconds += seconds_since(t0);
    }
  }
  return t;
}

std::vector<AblationCell> ablation_grid(const CellTrainFn& train_fn, const Dataset& train, const Dataset& test,
                                        const std::vector<float>& epsilons, const std::vector<std::size_t>& batch_sizes,
                                        const AttackSpec& other_attack, const OverfitThresholds& thresholds,
                                        const CheckOptions& options) {
  if (epsilons.empty()) throw ValidationError("ablate.epsilons", "must be non-empty");
  if (batch_sizes.empty()) throw ValidationError("ablate.batch_sizes", "must be non-empty");

  std::vector<AblationCell> cells;
  for (float eps : epsilons) {
    for (std::size_t bs : batch_sizes) {
      TrainResult r = train_fn(eps, bs);
      AblationCell cell;
      cell.epsilon = eps;
      cell.batch_size = bs;
      AttackSpec other = other_attack;
      other.epsilon = eps;
      if (other.kind == AttackSpec::Kind::fgsm) other.alpha = eps;
      cell.verdict = robust_overfit_check(r.final_model, train, test, AttackSpec::fgsm(eps), other, thresholds, options);
      for (auto it = r.history.rbegin(); it != r.history.rend(); ++it) {
        if (!it->evaluated()) continue;
        cell.clean_test_acc = *it->clean_test_acc;
        cell.fgsm_test_acc = *it->fgsm_test_acc;
        cell.pgd_test_acc = *it->pgd_test_acc;
        break;
      }
      cell.history = std::move(r.history);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace tpap
