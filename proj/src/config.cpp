#include "tpap/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "tpap/error.hpp"

namespace tpap {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <class T>
bool parse_plain(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

// Fractions are evaluated in the target precision so that "8/255" yields the
// same float as the expression 8.0f / 255.0f.
template <class T>
T parse_real(const std::string& raw, const std::string& field) {
  const std::string text = trim(raw);
  const auto slash = text.find('/');
  T value{};
  if (slash == std::string::npos) {
    if (!parse_plain(text, value)) throw ValidationError(field, "expected a number, got '" + raw + "'");
  } else {
    T num{}, den{};
    if (!parse_plain(trim(text.substr(0, slash)), num) || !parse_plain(trim(text.substr(slash + 1)), den))
      throw ValidationError(field, "expected a number or fraction, got '" + raw + "'");
    if (den == T(0)) throw ValidationError(field, "division by zero in '" + raw + "'");
    value = num / den;
  }
  if (!std::isfinite(value)) throw ValidationError(field, "must be finite");
  return value;
}

std::string scalar(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) throw ValidationError(field, "expected a scalar value");
  return n.Scalar();
}

float as_float(const YAML::Node& n, const std::string& field) { return parse_real<float>(scalar(n, field), field); }
double as_double(const YAML::Node& n, const std::string& field) { return parse_real<double>(scalar(n, field), field); }

std::int64_t as_int(const YAML::Node& n, const std::string& field) {
  std::int64_t v = 0;
  if (!parse_plain(trim(scalar(n, field)), v)) throw ValidationError(field, "expected an integer");
  return v;
}

std::size_t as_count(const YAML::Node& n, const std::string& field) {
  const std::int64_t v = as_int(n, field);
  if (v < 0) throw ValidationError(field, "must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t as_u64(const YAML::Node& n, const std::string& field) {
  std::uint64_t v = 0;
  if (!parse_plain(trim(scalar(n, field)), v)) throw ValidationError(field, "expected a non-negative integer");
  return v;
}

bool as_bool(const YAML::Node& n, const std::string& field) {
  const std::string s = scalar(n, field);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ValidationError(field, "expected true or false, got '" + s + "'");
}

std::string as_string(const YAML::Node& n, const std::string& field) { return scalar(n, field); }

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

// Visits each key of a mapping, rejecting keys outside `allowed`.
template <class Fn>
void each_key(const YAML::Node& node, const std::string& prefix, const std::set<std::string>& allowed, Fn&& fn) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap()) throw ValidationError(prefix, "expected a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.Scalar();
    if (!allowed.count(key)) throw ValidationError(join(prefix, key), "unknown key");
    fn(key, kv.second, join(prefix, key));
  }
}

AttackSpec parse_attack(const YAML::Node& node, const std::string& prefix, std::optional<AttackSpec> base,
                        bool& is_none, std::string* name) {
  std::string kind = base ? (base->kind == AttackSpec::Kind::fgsm ? "fgsm" : "pgd") : "none";
  std::optional<float> eps, alpha;
  std::optional<int> steps;
  std::optional<bool> rand_init;
  each_key(node, prefix, {"name", "kind", "epsilon", "alpha", "steps", "random_init"},
           [&](const std::string& k, const YAML::Node& v, const std::string& f) {
             if (k == "name") {
               if (!name) throw ValidationError(f, "unknown key");
               *name = as_string(v, f);
             } else if (k == "kind") {
               kind = as_string(v, f);
             } else if (k == "epsilon") {
               eps = as_float(v, f);
             } else if (k == "alpha") {
               alpha = as_float(v, f);
             } else if (k == "steps") {
               steps = static_cast<int>(as_int(v, f));
             } else {
               rand_init = as_bool(v, f);
             }
           });
  is_none = kind == "none" || kind == "clean";
  if (is_none) return base.value_or(AttackSpec{});
  const float epsilon = eps.value_or(base ? base->epsilon : 8.0f / 255.0f);
  AttackSpec spec;
  if (kind == "fgsm") {
    spec = AttackSpec::fgsm(epsilon, rand_init.value_or(base && base->kind == AttackSpec::Kind::fgsm && base->random_init));
    spec.alpha = alpha.value_or(epsilon);
    if (steps) spec.steps = *steps;
  } else if (kind == "pgd") {
    const bool same = base && base->kind == AttackSpec::Kind::pgd;
    spec = AttackSpec::pgd(epsilon, steps.value_or(same ? base->steps : 10), alpha.value_or(same ? base->alpha : 2.0f / 255.0f),
                           rand_init.value_or(same ? base->random_init : true));
  } else {
    throw ValidationError(join(prefix, "kind"), "expected fgsm, pgd or none, got '" + kind + "'");
  }
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    // AttackSpec reports "attack.<field>"; rebase onto this section.
    const std::string f = e.field();
    const std::string leaf = f.rfind("attack.", 0) == 0 ? f.substr(7) : f;
    throw ValidationError(join(prefix, leaf), std::string(e.what()).substr(f.size() + 2));
  }
  return spec;
}

void set_path(YAML::Node node, const std::vector<std::string>& keys, std::size_t i, const YAML::Node& value) {
  if (i + 1 == keys.size()) {
    node[keys[i]] = value;
    return;
  }
  if (!node[keys[i]] || !node[keys[i]].IsMap()) node[keys[i]] = YAML::Node(YAML::NodeType::Map);
  set_path(node[keys[i]], keys, i + 1, value);
}

void apply_override(YAML::Node& root, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError(item, "override must look like key=value");
  const std::string key = trim(item.substr(0, eq));
  std::vector<std::string> keys;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ValidationError(key, "empty path component in override");
    keys.push_back(part);
  }
  YAML::Node value;
  try {
    value = YAML::Load(item.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ValidationError(key, std::string("cannot parse override value: ") + e.what());
  }
  if (!value || value.IsNull()) value = YAML::Node(std::string());
  set_path(root, keys, 0, value);
}

std::string fmtf(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double parse_number(const std::string& text, const std::string& field) { return parse_real<double>(text, field); }

void Config::validate() const {
  if (threads < 1) throw ValidationError("threads", "must be at least 1");
  if (output_dir.empty()) throw ValidationError("output_dir", "must be non-empty");

  if (data.name == "mnist" || data.name == "cifar10") {
    if (data.path.empty()) throw ValidationError("data.path", "required for dataset '" + data.name + "'");
    if (!std::filesystem::is_directory(data.path))
      throw ValidationError("data.path", "'" + data.path + "' is not a directory");
  } else if (data.name == "blobs") {
    if (data.blob_classes < 2) throw ValidationError("data.blobs.classes", "must be at least 2");
    if (data.blob_dims < 2) throw ValidationError("data.blobs.dims", "must be at least 2");
    if (data.blob_train_per_class < 1) throw ValidationError("data.blobs.train_per_class", "must be at least 1");
    if (data.blob_test_per_class < 1) throw ValidationError("data.blobs.test_per_class", "must be at least 1");
    if (!(data.blob_separation > 0.0)) throw ValidationError("data.blobs.separation", "must be positive");
  } else {
    throw ValidationError("data.name", "expected blobs, mnist or cifar10, got '" + data.name + "'");
  }

  if (model.arch != "small_cnn" && model.arch != "mlp" && model.arch != "linear")
    throw ValidationError("model.arch", "expected small_cnn, mlp or linear, got '" + model.arch + "'");
  for (std::size_t h : model.hidden)
    if (h == 0) throw ValidationError("model.hidden", "layer widths must be positive");

  if (train.attack) train.attack->validate();  // fields are named attack.<name>
  train.validate();

  if (eval.batch_size < 1) throw ValidationError("eval.batch_size", "must be at least 1");
  std::set<std::string> names;
  for (std::size_t i = 0; i < eval.attacks.size(); ++i) {
    const auto& a = eval.attacks[i];
    if (a.name.empty()) throw ValidationError("eval.attacks[" + std::to_string(i) + "].name", "must be non-empty");
    if (!names.insert(a.name).second)
      throw ValidationError("eval.attacks[" + std::to_string(i) + "].name", "duplicate name '" + a.name + "'");
  }
  if (eval.attacks.empty()) throw ValidationError("eval.attacks", "at least one row is required");

  purifier.validate();

  if (ablate.epsilons.empty()) throw ValidationError("ablate.epsilons", "must be non-empty");
  for (float e : ablate.epsilons)
    if (!(e > 0.0f && e <= 1.0f)) throw ValidationError("ablate.epsilons", "values must be in (0, 1]");
  if (ablate.batch_sizes.empty()) throw ValidationError("ablate.batch_sizes", "must be non-empty");
  for (std::size_t b : ablate.batch_sizes)
    if (b < 1) throw ValidationError("ablate.batch_sizes", "values must be positive");
}

Config parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw FormatError(origin + ": line " + std::to_string(e.mark.line + 1) + ", column " +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw FormatError(origin + ": top level must be a mapping");
  for (const auto& o : overrides) apply_override(root, o);

  Config c;
  bool attack_none = false;
  std::optional<AttackSpec> attack = c.train.attack;
  bool scaled_drops = false;

  each_key(root, "",
           {"seed", "output_dir", "threads", "data", "model", "train", "attack", "eval", "purifier", "thresholds",
            "ablate"},
           [&](const std::string& k, const YAML::Node& v, const std::string& f) {
             if (k == "seed") {
               c.seed = as_u64(v, f);
             } else if (k == "output_dir") {
               c.output_dir = as_string(v, f);
             } else if (k == "threads") {
               c.threads = as_count(v, f);
             } else if (k == "data") {
               each_key(v, f, {"name", "path", "train_subset", "test_subset", "blobs"},
                        [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                          if (k2 == "name") c.data.name = as_string(v2, f2);
                          else if (k2 == "path") c.data.path = as_string(v2, f2);
                          else if (k2 == "train_subset") c.data.train_subset = as_count(v2, f2);
                          else if (k2 == "test_subset") c.data.test_subset = as_count(v2, f2);
                          else
                            each_key(v2, f2, {"classes", "train_per_class", "test_per_class", "dims", "separation"},
                                     [&](const std::string& k3, const YAML::Node& v3, const std::string& f3) {
                                       if (k3 == "classes") c.data.blob_classes = as_count(v3, f3);
                                       else if (k3 == "train_per_class") c.data.blob_train_per_class = as_count(v3, f3);
                                       else if (k3 == "test_per_class") c.data.blob_test_per_class = as_count(v3, f3);
                                       else if (k3 == "dims") c.data.blob_dims = as_count(v3, f3);
                                       else c.data.blob_separation = as_double(v3, f3);
                                     });
                        });
             } else if (k == "model") {
               each_key(v, f, {"arch", "hidden", "normalize"},
                        [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                          if (k2 == "arch") {
                            c.model.arch = as_string(v2, f2);
                          } else if (k2 == "normalize") {
                            c.model.normalize = as_bool(v2, f2);
                          } else {
                            if (!v2.IsSequence()) throw ValidationError(f2, "expected a list");
                            c.model.hidden.clear();
                            for (const auto& h : v2) c.model.hidden.push_back(as_count(h, f2));
                          }
                        });
             } else if (k == "train") {
               each_key(v, f,
                        {"epochs", "batch_size", "lr0", "lr_drops", "momentum", "weight_decay", "eval_every",
                         "augment", "dual_epsilon", "second_epsilon", "eval_train_examples", "eval_test_examples",
                         "eval_batch_size"},
                        [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                          TrainSpec& t = c.train;
                          if (k2 == "epochs") t.epochs = static_cast<int>(as_int(v2, f2));
                          else if (k2 == "batch_size") t.batch_size = as_count(v2, f2);
                          else if (k2 == "lr0") t.lr0 = as_float(v2, f2);
                          else if (k2 == "momentum") t.momentum = as_float(v2, f2);
                          else if (k2 == "weight_decay") t.weight_decay = as_float(v2, f2);
                          else if (k2 == "eval_every") t.eval_every = static_cast<int>(as_int(v2, f2));
                          else if (k2 == "dual_epsilon") t.dual_epsilon = as_bool(v2, f2);
                          else if (k2 == "second_epsilon") t.second_epsilon = as_float(v2, f2);
                          else if (k2 == "eval_train_examples") t.eval_train_examples = as_count(v2, f2);
                          else if (k2 == "eval_test_examples") t.eval_test_examples = as_count(v2, f2);
                          else if (k2 == "eval_batch_size") t.eval_batch_size = as_count(v2, f2);
                          else if (k2 == "augment") {
                            each_key(v2, f2, {"pad_crop", "hflip"},
                                     [&](const std::string& k3, const YAML::Node& v3, const std::string& f3) {
                                       if (k3 == "pad_crop") t.augment.pad_crop = as_count(v3, f3);
                                       else t.augment.hflip = as_bool(v3, f3);
                                     });
                          } else {
                            if (v2.IsScalar() && v2.Scalar() == "scaled") {
                              scaled_drops = true;
                            } else if (v2.IsSequence()) {
                              t.lr_drops.clear();
                              for (const auto& d : v2) {
                                if (!d.IsSequence() || d.size() != 2)
                                  throw ValidationError(f2, "each drop must be [epoch, divisor]");
                                t.lr_drops.push_back({static_cast<int>(as_int(d[0], f2)), as_float(d[1], f2)});
                              }
                            } else {
                              throw ValidationError(f2, "expected a list of [epoch, divisor] or 'scaled'");
                            }
                          }
                        });
             } else if (k == "attack") {
               const AttackSpec a = parse_attack(v, f, attack, attack_none, nullptr);
               attack = attack_none ? std::nullopt : std::optional<AttackSpec>(a);
             } else if (k == "eval") {
               each_key(v, f, {"max_examples", "batch_size", "attacks"},
                        [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                          if (k2 == "max_examples") {
                            c.eval.max_examples = as_count(v2, f2);
                          } else if (k2 == "batch_size") {
                            c.eval.batch_size = as_count(v2, f2);
                          } else {
                            if (!v2.IsSequence()) throw ValidationError(f2, "expected a list");
                            c.eval.attacks.clear();
                            for (std::size_t i = 0; i < v2.size(); ++i) {
                              const std::string fi = f2 + "[" + std::to_string(i) + "]";
                              std::string name;
                              bool none = false;
                              const AttackSpec a = parse_attack(v2[i], fi, std::nullopt, none, &name);
                              if (name.empty()) throw ValidationError(fi + ".name", "required");
                              c.eval.attacks.push_back({name, none ? std::nullopt : std::optional<AttackSpec>(a)});
                            }
                          }
                        });
             } else if (k == "purifier") {
               std::optional<float> beta;
               each_key(v, f, {"xi", "beta"}, [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                 if (k2 == "xi") c.purifier.xi = as_float(v2, f2);
                 else beta = as_float(v2, f2);
               });
               c.purifier.beta = beta.value_or(c.purifier.xi);
             } else if (k == "thresholds") {
               each_key(v, f, {"trained_train_min", "other_train_max", "clean_test_min", "trained_test_min"},
                        [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                          OverfitThresholds& t = c.thresholds;
                          if (k2 == "trained_train_min") t.trained_train_min = as_double(v2, f2);
                          else if (k2 == "other_train_max") t.other_train_max = as_double(v2, f2);
                          else if (k2 == "clean_test_min") t.clean_test_min = as_double(v2, f2);
                          else t.trained_test_min = as_double(v2, f2);
                        });
             } else {
               each_key(v, f, {"epsilons", "batch_sizes"},
                        [&](const std::string& k2, const YAML::Node& v2, const std::string& f2) {
                          if (!v2.IsSequence()) throw ValidationError(f2, "expected a list");
                          if (k2 == "epsilons") {
                            c.ablate.epsilons.clear();
                            for (const auto& e : v2) c.ablate.epsilons.push_back(as_float(e, f2));
                          } else {
                            c.ablate.batch_sizes.clear();
                            for (const auto& b : v2) c.ablate.batch_sizes.push_back(as_count(b, f2));
                          }
                        });
             }
           });

  c.train.attack = attack;
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  if (scaled_drops) c.train.lr_drops = scaled_lr_drops(std::max(c.train.epochs, 1));
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_config("", overrides, "<defaults>");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config", "cannot read '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, overrides, path.string());
}

namespace {

void emit_attack(std::ostringstream& os, const std::string& indent, const AttackSpec& a) {
  os << indent << "kind: " << (a.kind == AttackSpec::Kind::fgsm ? "fgsm" : "pgd") << "\n";
  os << indent << "epsilon: " << fmtf(a.epsilon) << "\n";
  os << indent << "alpha: " << fmtf(a.alpha) << "\n";
  os << indent << "steps: " << a.steps << "\n";
  os << indent << "random_init: " << (a.random_init ? "true" : "false") << "\n";
}

}  // namespace

std::string config_to_yaml(const Config& c) {
  std::ostringstream os;
  os << "seed: " << c.seed << "\n";
  os << "output_dir: \"" << c.output_dir << "\"\n";
  os << "threads: " << c.threads << "\n";
  os << "data:\n";
  os << "  name: " << c.data.name << "\n";
  os << "  path: \"" << c.data.path << "\"\n";
  os << "  train_subset: " << c.data.train_subset << "\n";
  os << "  test_subset: " << c.data.test_subset << "\n";
  os << "  blobs:\n";
  os << "    classes: " << c.data.blob_classes << "\n";
  os << "    train_per_class: " << c.data.blob_train_per_class << "\n";
  os << "    test_per_class: " << c.data.blob_test_per_class << "\n";
  os << "    dims: " << c.data.blob_dims << "\n";
  os << "    separation: " << fmtf(c.data.blob_separation) << "\n";
  os << "model:\n";
  os << "  arch: " << c.model.arch << "\n";
  os << "  hidden: [";
  for (std::size_t i = 0; i < c.model.hidden.size(); ++i) os << (i ? ", " : "") << c.model.hidden[i];
  os << "]\n";
  os << "  normalize: " << (c.model.normalize ? "true" : "false") << "\n";
  const TrainSpec& t = c.train;
  os << "train:\n";
  os << "  epochs: " << t.epochs << "\n";
  os << "  batch_size: " << t.batch_size << "\n";
  os << "  lr0: " << fmtf(t.lr0) << "\n";
  os << "  lr_drops: [";
  for (std::size_t i = 0; i < t.lr_drops.size(); ++i)
    os << (i ? ", " : "") << "[" << t.lr_drops[i].epoch << ", " << fmtf(t.lr_drops[i].divisor) << "]";
  os << "]\n";
  os << "  momentum: " << fmtf(t.momentum) << "\n";
  os << "  weight_decay: " << fmtf(t.weight_decay) << "\n";
  os << "  eval_every: " << t.eval_every << "\n";
  os << "  augment:\n";
  os << "    pad_crop: " << t.augment.pad_crop << "\n";
  os << "    hflip: " << (t.augment.hflip ? "true" : "false") << "\n";
  os << "  dual_epsilon: " << (t.dual_epsilon ? "true" : "false") << "\n";
  os << "  second_epsilon: " << fmtf(t.second_epsilon) << "\n";
  os << "  eval_train_examples: " << t.eval_train_examples << "\n";
  os << "  eval_test_examples: " << t.eval_test_examples << "\n";
  os << "  eval_batch_size: " << t.eval_batch_size << "\n";
  os << "attack:\n";
  if (t.attack) emit_attack(os, "  ", *t.attack);
  else os << "  kind: none\n";
  os << "eval:\n";
  os << "  max_examples: " << c.eval.max_examples << "\n";
  os << "  batch_size: " << c.eval.batch_size << "\n";
  os << "  attacks:\n";
  for (const auto& a : c.eval.attacks) {
    os << "    - name: \"" << a.name << "\"\n";
    if (a.attack) emit_attack(os, "      ", *a.attack);
    else os << "      kind: none\n";
  }
  os << "purifier:\n";
  os << "  xi: " << fmtf(c.purifier.xi) << "\n";
  os << "  beta: " << fmtf(c.purifier.beta) << "\n";
  os << "thresholds:\n";
  os << "  trained_train_min: " << fmtf(c.thresholds.trained_train_min) << "\n";
  os << "  other_train_max: " << fmtf(c.thresholds.other_train_max) << "\n";
  os << "  clean_test_min: " << fmtf(c.thresholds.clean_test_min) << "\n";
  os << "  trained_test_min: " << fmtf(c.thresholds.trained_test_min) << "\n";
  os << "ablate:\n";
  os << "  epsilons: [";
  for (std::size_t i = 0; i < c.ablate.epsilons.size(); ++i) os << (i ? ", " : "") << fmtf(c.ablate.epsilons[i]);
  os << "]\n";
  os << "  batch_sizes: [";
  for (std::size_t i = 0; i < c.ablate.batch_sizes.size(); ++i) os << (i ? ", " : "") << c.ablate.batch_sizes[i];
  os << "]\n";
  return os.str();
}

std::filesystem::path echo_config(const Config& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "config.yaml";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "# Effective configuration of this run; pass it back with --config to repeat it.\n" << config_to_yaml(cfg);
  if (!out.flush()) throw Error(path.string() + ": write failed");
  return path;
}

DataSplits load_data(const DataConfig& data, std::uint64_t seed) {
  DataSplits s;
  if (data.name == "blobs") {
    s.train = make_synthetic_blobs(data.blob_classes, data.blob_train_per_class, data.blob_dims, data.blob_separation,
                                   mix64(seed ^ 0x747261696eULL));
    s.test = make_synthetic_blobs(data.blob_classes, data.blob_test_per_class, data.blob_dims, data.blob_separation,
                                  mix64(seed ^ 0x74657374ULL));
    s.train.name = "blobs-train";
    s.test.name = "blobs-test";
  } else if (data.name == "mnist") {
    const std::filesystem::path dir = data.path;
    s.train = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    s.test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    s.train.name = "mnist-train";
    s.test.name = "mnist-test";
  } else if (data.name == "cifar10") {
    s.train = load_cifar10_bin(data.path, Split::train);
    s.test = load_cifar10_bin(data.path, Split::test);
    s.train.name = "cifar10-train";
    s.test.name = "cifar10-test";
  } else {
    throw ValidationError("data.name", "unknown dataset '" + data.name + "'");
  }
  if (data.train_subset) s.train = head(s.train, data.train_subset);
  if (data.test_subset) s.test = head(s.test, data.test_subset);
  return s;
}

Architecture build_architecture(const ModelConfig& model, const Shape& input_shape, std::size_t num_classes,
                                const std::string& dataset_name) {
  Normalization norm;
  const Normalization* np = nullptr;
  if (model.normalize) {
    if (dataset_name.rfind("cifar10", 0) == 0) {
      norm = cifar10_normalization();
      np = &norm;
    } else if (dataset_name.rfind("mnist", 0) == 0) {
      norm = mnist_normalization();
      np = &norm;
    }
  }
  if (model.arch == "small_cnn") return small_cnn_architecture(input_shape, num_classes, np);
  if (model.arch == "mlp") return mlp_architecture(input_shape, model.hidden, num_classes, np);
  if (model.arch == "linear") return linear_architecture(input_shape, num_classes);
  throw ValidationError("model.arch", "unknown architecture '" + model.arch + "'");
}

}  // namespace tpap
