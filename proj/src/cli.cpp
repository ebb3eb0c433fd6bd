#include "tpap/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "tpap/checkpoint.hpp"
#include "tpap/config.hpp"
#include "tpap/error.hpp"
#include "tpap/eval.hpp"
#include "tpap/purify.hpp"
#include "tpap/report.hpp"
#include "tpap/training.hpp"

namespace fs = std::filesystem;

namespace tpap {

namespace {

// Flags shared by the config-driven subcommands; each maps onto a config key.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> output, data, data_path, arch;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, batch_size, max_examples, train_subset, test_subset;
  std::optional<int> epochs;
  std::optional<std::string> epsilon, xi, lr;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "YAML config file (defaults when omitted)");
    app->add_option("--set", sets, "Override any config key: dotted.key=value (repeatable)");
    app->add_option("-o,--output", output, "Output directory (output_dir)");
    app->add_option("--seed", seed, "Seed (seed)");
    app->add_option("--threads", threads, "Worker threads for evaluation (threads)");
    app->add_option("--data", data, "Dataset: blobs, mnist or cifar10 (data.name)");
    app->add_option("--data-path", data_path, "Dataset directory (data.path)");
    app->add_option("--train-subset", train_subset, "Use the first N training examples (data.train_subset)");
    app->add_option("--test-subset", test_subset, "Use the first N test examples (data.test_subset)");
    app->add_option("--arch", arch, "small_cnn, mlp or linear (model.arch)");
    app->add_option("--epochs", epochs, "Training epochs (train.epochs)");
    app->add_option("--batch-size", batch_size, "Training batch size (train.batch_size)");
    app->add_option("--lr", lr, "Initial learning rate (train.lr0)");
    app->add_option("--epsilon", epsilon, "Training attack budget, e.g. 8/255 (attack.epsilon)");
    app->add_option("--xi", xi, "Purification radius, e.g. 8/255 (purifier.xi)");
    app->add_option("--max-examples", max_examples, "Evaluation cap, 0 = all (eval.max_examples)");
  }

  std::vector<std::string> overrides() const {
    std::vector<std::string> o = sets;
    auto add = [&o](const char* key, const auto& v) {
      if (!v) return;
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>)
        o.push_back(std::string(key) + "=" + *v);
      else
        o.push_back(std::string(key) + "=" + std::to_string(*v));
    };
    add("output_dir", output);
    add("seed", seed);
    add("threads", threads);
    add("data.name", data);
    add("data.path", data_path);
    add("data.train_subset", train_subset);
    add("data.test_subset", test_subset);
    add("model.arch", arch);
    add("train.epochs", epochs);
    add("train.batch_size", batch_size);
    add("train.lr0", lr);
    add("attack.epsilon", epsilon);
    add("purifier.xi", xi);
    add("eval.max_examples", max_examples);
    return o;
  }

  Config load() const { return load_config(config, overrides()); }
};

// Recipe description stored in checkpoints: the effective config minus
// settings that cannot change the weights.
std::string recipe_text(Config cfg) {
  cfg.output_dir = "-";
  cfg.threads = 1;
  cfg.train.threads = 1;
  return config_to_yaml(cfg);
}

Model fresh_model(const Config& cfg, const Dataset& train) {
  return Model(build_architecture(cfg.model, train.example_shape(), train.num_classes, train.name),
               mix64(cfg.seed ^ 0x6d6f64656cULL));
}

EvalSpec eval_spec(const Config& cfg) {
  EvalSpec e;
  e.attacks = cfg.eval.attacks;
  e.max_examples = cfg.eval.max_examples;
  e.batch_size = cfg.eval.batch_size;
  e.threads = cfg.threads;
  e.seed = cfg.seed;
  return e;
}

// The "other" attack of the robust-overfitting check: the first PGD row of
// the evaluation list, else PGD-20 at the training budget.
AttackSpec other_attack(const Config& cfg) {
  for (const auto& a : cfg.eval.attacks)
    if (a.attack && a.attack->kind == AttackSpec::Kind::pgd) return *a.attack;
  return AttackSpec::pgd(cfg.train.attack ? cfg.train.attack->epsilon : 8.0f / 255.0f, 20);
}

CheckOptions check_options(const Config& cfg) {
  CheckOptions o;
  o.max_examples = cfg.eval.max_examples;
  o.batch_size = cfg.eval.batch_size;
  o.threads = cfg.threads;
  o.seed = cfg.seed;
  return o;
}

std::string progress_line(const EpochRecord& r) {
  char buf[256];
  if (r.evaluated()) {
    std::snprintf(buf, sizeof buf,
                  "epoch %3d  lr %.5g  loss %.4f  train clean %.2f adv %.2f  test clean %.2f fgsm %.2f pgd %.2f  "
                  "(%.1fs)",
                  r.epoch, static_cast<double>(r.lr), r.mean_loss, *r.clean_train_acc, *r.adv_train_acc,
                  *r.clean_test_acc, *r.fgsm_test_acc, *r.pgd_test_acc, r.wall_seconds);
  } else {
    std::snprintf(buf, sizeof buf, "epoch %3d  lr %.5g  loss %.4f  (%.1fs)", r.epoch, static_cast<double>(r.lr),
                  r.mean_loss, r.wall_seconds);
  }
  return buf;
}

int cmd_train(const CommonFlags& flags, bool skip_verdict, std::ostream& out) {
  const Config cfg = flags.load();
  const fs::path dir = cfg.output_dir;
  echo_config(cfg, dir);
  const DataSplits data = load_data(cfg.data, cfg.seed);
  out << "train: " << data.train.name << " (" << data.train.size() << ") / " << data.test.name << " ("
      << data.test.size() << "), " << cfg.model.arch << ", "
      << (cfg.train.attack ? cfg.train.attack->describe() : std::string("clean")) << "\n";

  const fs::path history_path = dir / "history.csv";
  fs::remove(history_path);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const Model&) {
    append_history(history_path, r);
    out << progress_line(r) << "\n" << std::flush;
  };
  TrainResult result = adversarial_train(fresh_model(cfg, data.train), data.train, data.test, cfg.train, hooks);

  CheckpointMeta meta;
  meta.dataset = data.train.name;
  meta.seed = cfg.seed;
  meta.train_spec = recipe_text(cfg);
  meta.epoch = cfg.train.epochs;
  meta.tag = "final";
  save_checkpoint(result.final_model, meta, dir / "final.ckpt");
  meta.epoch = result.best_epoch;
  meta.tag = "best";
  save_checkpoint(result.best_model, meta, dir / "best.ckpt");
  out << "checkpoints: " << (dir / "final.ckpt").string() << ", " << (dir / "best.ckpt").string() << " (best epoch "
      << result.best_epoch << ")\n";

  if (!skip_verdict) {
    const AttackSpec trained = cfg.train.attack.value_or(AttackSpec::fgsm(8.0f / 255.0f));
    const OverfitVerdict v = robust_overfit_check(result.final_model, data.train, data.test, trained,
                                                  other_attack(cfg), cfg.thresholds, check_options(cfg));
    write_text(dir / "verdict.json", verdict_to_json(v));
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "robust overfit: %s (trained-attack train %.2f, other-attack train %.2f, clean test %.2f, "
                  "trained-attack test %.2f)\n",
                  v.is_robust_overfit ? "yes" : "no", v.trained_attack_train_acc, v.other_attack_train_acc,
                  v.clean_test_acc, v.trained_attack_test_acc);
    out << buf;
  }
  return kExitOk;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint, bool no_purify, bool timing,
                 std::ostream& out) {
  const Config cfg = flags.load();
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const fs::path dir = cfg.output_dir;
  echo_config(cfg, dir);
  const DataSplits data = load_data(cfg.data, cfg.seed);

  EvalSpec spec = eval_spec(cfg);
  if (!no_purify) spec.purifier = cfg.purifier;
  RunReport report = evaluate(ck.model, data.test, spec);
  report.model_id = fs::path(checkpoint).filename().string() + ":" + ck.model.arch().name;
  write_report(dir / "report.json", dir / "report.csv", report);
  out << render_report_table(report);

  if (timing) {
    EvalSpec tspec = spec;
    tspec.purifier = cfg.purifier;
    const TimingReport t = timing_report(ck.model, data.test, tspec);
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\n  \"n\": %zu,\n  \"attack_seconds\": %.6f,\n  \"purify_seconds\": %.6f,\n"
                  "  \"forward_seconds\": %.6f,\n  \"tpap_seconds\": %.6f\n}\n",
                  t.n, t.attack_seconds, t.purify_seconds, t.forward_seconds, t.tpap_seconds);
    write_text(dir / "timing.json", buf);
    out << "timing (" << t.n << " examples): attack " << t.attack_seconds << "s, forward " << t.forward_seconds
        << "s, purify " << t.purify_seconds << "s, tpap total " << t.tpap_seconds << "s\n";
  }
  return kExitOk;
}

int cmd_purify(const CommonFlags& flags, const std::string& checkpoint, const std::string& batch_file,
               std::size_t offset, std::size_t count, const std::string& trace_path, const std::string& save_purified,
               std::ostream& out) {
  const Config cfg = flags.load();
  LoadedCheckpoint ck = load_checkpoint(checkpoint);

  Tensor images;
  std::optional<Labels> truth;
  if (!batch_file.empty()) {
    TensorBundle b = load_tensors(batch_file);
    auto it = b.find("images");
    if (it == b.end()) throw ValidationError("batch", "'" + batch_file + "' has no 'images' tensor");
    images = it->second;
    if (auto l = b.find("labels"); l != b.end()) {
      truth.emplace();
      for (float v : l->second.data()) truth->push_back(static_cast<Label>(v));
    }
  } else {
    const DataSplits data = load_data(cfg.data, cfg.seed);
    if (offset >= data.test.size()) throw ValidationError("offset", "beyond the end of the test split");
    const Batch b = slice(data.test, offset, std::min(data.test.size(), offset + count));
    images = b.images;
    truth = b.labels;
  }
  for (float v : images.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("batch", "pixels must lie in [0, 1]");

  const TpapPrediction p = tpap_predict(ck.model, images, cfg.purifier);
  const fs::path dir = cfg.output_dir;
  echo_config(cfg, dir);
  const fs::path trace = trace_path.empty() ? dir / "purify_trace.csv" : fs::path(trace_path);
  write_text(trace, purify_trace_csv(p.trace, truth ? &*truth : nullptr));
  if (!save_purified.empty()) save_tensors({{"images", p.trace.purified}}, save_purified);

  std::size_t changed = 0;
  for (std::size_t i = 0; i < p.labels.size(); ++i) changed += p.labels[i] != p.trace.pre_labels[i];
  out << "purified " << p.labels.size() << " images (xi " << cfg.purifier.xi * 255.0f << "/255); " << changed
      << " predictions changed; trace: " << trace.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const CommonFlags& flags, std::ostream& out) {
  const Config cfg = flags.load();
  const fs::path dir = cfg.output_dir;
  echo_config(cfg, dir);
  const DataSplits data = load_data(cfg.data, cfg.seed);

  const CellTrainFn train_fn = [&](float eps, std::size_t bs) {
    TrainSpec spec = cfg.train;
    spec.attack = AttackSpec::fgsm(eps);
    spec.batch_size = bs;
    spec.eval_fgsm = AttackSpec::fgsm(eps);
    spec.eval_pgd.epsilon = eps;
    out << "cell eps " << eps * 255.0f << "/255, batch " << bs << "\n" << std::flush;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r, const Model&) { out << "  " << progress_line(r) << "\n" << std::flush; };
    return adversarial_train(fresh_model(cfg, data.train), data.train, data.test, spec, hooks);
  };
  const auto cells = ablation_grid(train_fn, data.train, data.test, cfg.ablate.epsilons, cfg.ablate.batch_sizes,
                                   other_attack(cfg), cfg.thresholds, check_options(cfg));
  const std::string cells_csv = ablation_cells_csv(cells);
  write_text(dir / "ablation_cells.csv", cells_csv);
  write_text(dir / "ablation_curves.csv", ablation_curves_csv(cells));
  std::string verdicts = "[\n";
  for (std::size_t i = 0; i < cells.size(); ++i) verdicts += verdict_to_json(cells[i].verdict) + (i + 1 < cells.size() ? ",\n" : "");
  write_text(dir / "verdicts.json", verdicts + "]\n");
  out << render_csv_table(cells_csv);
  return kExitOk;
}

int cmd_report(const std::string& input, std::ostream& out) {
  if (!fs::exists(input)) throw ValidationError("input", "'" + input + "' does not exist");
  if (fs::path(input).extension() == ".json") {
    out << render_report_table(read_report(input));
    return kExitOk;
  }
  const std::string text = read_text(input);
  if (text.rfind(history_csv_header(), 0) == 0)
    out << render_history_table(read_history(input));
  else
    out << render_csv_table(text);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial training, test-time purification and robustness evaluation", "tpap"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, purify_flags, ablate_flags;
  bool skip_verdict = false, no_purify = false, timing = false;
  std::string checkpoint, batch_file, trace_path, save_purified, report_input;
  std::size_t offset = 0, count = 256;

  CLI::App* train = app.add_subcommand("train", "Adversarially train a model; writes checkpoints and history");
  train_flags.attach(train);
  train->add_flag("--no-verdict", skip_verdict, "Skip the robust-overfitting check after training");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint with and without purification");
  eval_flags.attach(evaluate_cmd);
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate_cmd->add_flag("--no-purify", no_purify, "Only plain rows");
  evaluate_cmd->add_flag("--timing", timing, "Also measure per-phase wall-clock time");

  CLI::App* purify = app.add_subcommand("purify", "Purify a stored batch and dump the trace");
  purify_flags.attach(purify);
  purify->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  purify->add_option("--batch", batch_file, "Tensor bundle with 'images' (and optionally 'labels')");
  purify->add_option("--offset", offset, "First test example when no --batch is given");
  purify->add_option("--count", count, "Number of test examples when no --batch is given");
  purify->add_option("--trace", trace_path, "Trace CSV path (default: <output>/purify_trace.csv)");
  purify->add_option("--save-purified", save_purified, "Write the purified images as a tensor bundle");

  CLI::App* ablate = app.add_subcommand("ablate", "Train an epsilon x batch-size grid and score each cell");
  ablate_flags.attach(ablate);

  CLI::App* report = app.add_subcommand("report", "Render a stored report JSON or CSV as a table");
  report->add_option("input", report_input, "report.json, history.csv or any CSV")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_flags, skip_verdict, out);
    if (*evaluate_cmd) return cmd_evaluate(eval_flags, checkpoint, no_purify, timing, out);
    if (*purify)
      return cmd_purify(purify_flags, checkpoint, batch_file, offset, count, trace_path, save_purified, out);
    if (*ablate) return cmd_ablate(ablate_flags, out);
    return cmd_report(report_input, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace tpap
