#include "tpap/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "tpap/error.hpp"
#include "tpap/ops.hpp"
#include "tpap/rng.hpp"

namespace tpap {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::normalize: return "normalize";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool2d: return "max_pool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

Normalization cifar10_normalization() {
  return {{0.4914f, 0.4822f, 0.4465f}, {0.2471f, 0.2435f, 0.2616f}};
}

Normalization mnist_normalization() { return {{0.1307f}, {0.3081f}}; }

namespace {

std::string layer_prefix(std::size_t index) { return "layers." + std::to_string(index); }

// Walks the layer list and returns the per-sample shape after each layer.
std::vector<Shape> trace_shapes(const Architecture& arch) {
  if (arch.input_shape.size() != 3)
    throw ShapeError("architecture: input shape must be C,H,W, got " + shape_str(arch.input_shape));
  std::vector<Shape> shapes;
  Shape cur = arch.input_shape;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::string where = "architecture layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + ")";
    auto need_image = [&] {
      if (cur.size() != 3) throw ShapeError(where + ": expects an image, got " + shape_str(cur));
    };
    switch (l.kind) {
      case LayerKind::normalize:
        need_image();
        if (l.mean.size() != cur[0] || l.stddev.size() != cur[0])
          throw ShapeError(where + ": statistics do not match " + std::to_string(cur[0]) + " channels");
        for (float s : l.stddev)
          if (!(s > 0.0f)) throw ShapeError(where + ": stddev must be positive");
        break;
      case LayerKind::conv2d:
        need_image();
        if (l.in != cur[0] || l.out == 0 || l.kernel == 0)
          throw ShapeError(where + ": in=" + std::to_string(l.in) + " out=" + std::to_string(l.out) + " on " +
                           shape_str(cur));
        if (cur[1] + 2 * l.padding < l.kernel || cur[2] + 2 * l.padding < l.kernel)
          throw ShapeError(where + ": kernel larger than padded input " + shape_str(cur));
        cur = {l.out, cur[1] + 2 * l.padding - l.kernel + 1, cur[2] + 2 * l.padding - l.kernel + 1};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::max_pool2d:
        need_image();
        if (l.kernel == 0 || cur[1] < l.kernel || cur[2] < l.kernel)
          throw ShapeError(where + ": window " + std::to_string(l.kernel) + " on " + shape_str(cur));
        cur = {cur[0], cur[1] / l.kernel, cur[2] / l.kernel};
        break;
      case LayerKind::flatten:
        cur = {shape_numel(cur)};
        break;
      case LayerKind::dense:
        if (cur.size() != 1 || l.in != cur[0] || l.out == 0)
          throw ShapeError(where + ": in=" + std::to_string(l.in) + " on " + shape_str(cur));
        cur = {l.out};
        break;
    }
    shapes.push_back(cur);
  }
  if (cur != Shape{arch.num_classes} || arch.num_classes == 0)
    throw ShapeError("architecture: output " + shape_str(cur) + " does not match " +
                     std::to_string(arch.num_classes) + " classes");
  return shapes;
}

std::string floats_text(const std::vector<float>& v) {
  std::string s;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    auto res = std::to_chars(buf, buf + sizeof buf, v[i]);
    s.append(buf, res.ptr);
  }
  return s;
}

std::size_t parse_size(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("architecture: bad integer '" + std::string(s) + "' for " + std::string(what));
  return v;
}

std::vector<float> parse_floats(std::string_view s, std::string_view what) {
  std::vector<float> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const std::string_view tok = s.substr(0, comma);
    float v = 0.0f;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw FormatError("architecture: bad float '" + std::string(tok) + "' for " + std::string(what));
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

void Architecture::validate() const { trace_shapes(*this); }

std::vector<std::pair<std::string, Shape>> Architecture::parameter_shapes() const {
  validate();
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::conv2d) {
      out.emplace_back(layer_prefix(i) + ".weight", Shape{l.out, l.in, l.kernel, l.kernel});
      out.emplace_back(layer_prefix(i) + ".bias", Shape{l.out});
    } else if (l.kind == LayerKind::dense) {
      out.emplace_back(layer_prefix(i) + ".weight", Shape{l.out, l.in});
      out.emplace_back(layer_prefix(i) + ".bias", Shape{l.out});
    }
  }
  return out;
}

std::string Architecture::to_text() const {
  std::ostringstream os;
  os << "arch " << name << '\n';
  os << "input " << input_shape.at(0) << ' ' << input_shape.at(1) << ' ' << input_shape.at(2) << '\n';
  os << "classes " << num_classes << '\n';
  for (const auto& l : layers) {
    os << "layer " << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::normalize:
        os << " mean=" << floats_text(l.mean) << " std=" << floats_text(l.stddev);
        break;
      case LayerKind::conv2d:
        os << " in=" << l.in << " out=" << l.out << " kernel=" << l.kernel << " padding=" << l.padding;
        break;
      case LayerKind::max_pool2d:
        os << " kernel=" << l.kernel;
        break;
      case LayerKind::dense:
        os << " in=" << l.in << " out=" << l.out;
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
    }
    os << '\n';
  }
  return os.str();
}

Architecture Architecture::from_text(std::string_view text) {
  Architecture arch;
  bool have_input = false;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    const std::string at = " (line " + std::to_string(lineno) + ")";
    if (head == "arch") {
      ls >> arch.name;
    } else if (head == "input") {
      std::size_t c = 0, h = 0, w = 0;
      if (!(ls >> c >> h >> w)) throw FormatError("architecture: malformed input line" + at);
      arch.input_shape = {c, h, w};
      have_input = true;
    } else if (head == "classes") {
      if (!(ls >> arch.num_classes)) throw FormatError("architecture: malformed classes line" + at);
    } else if (head == "layer") {
      std::string kind;
      ls >> kind;
      LayerSpec l;
      if (kind == "normalize") l.kind = LayerKind::normalize;
      else if (kind == "conv2d") l.kind = LayerKind::conv2d;
      else if (kind == "relu") l.kind = LayerKind::relu;
      else if (kind == "max_pool2d") l.kind = LayerKind::max_pool2d;
      else if (kind == "flatten") l.kind = LayerKind::flatten;
      else if (kind == "dense") l.kind = LayerKind::dense;
      else throw FormatError("architecture: unknown layer kind '" + kind + "'" + at);
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw FormatError("architecture: expected key=value, got '" + kv + "'" + at);
        const std::string key = kv.substr(0, eq);
        const std::string_view val = std::string_view(kv).substr(eq + 1);
        if (key == "in") l.in = parse_size(val, key);
        else if (key == "out") l.out = parse_size(val, key);
        else if (key == "kernel") l.kernel = parse_size(val, key);
        else if (key == "padding") l.padding = parse_size(val, key);
        else if (key == "mean") l.mean = parse_floats(val, key);
        else if (key == "std") l.stddev = parse_floats(val, key);
        else throw FormatError("architecture: unknown key '" + key + "'" + at);
      }
      arch.layers.push_back(std::move(l));
    } else {
      throw FormatError("architecture: unknown directive '" + head + "'" + at);
    }
  }
  if (!have_input) throw FormatError("architecture: missing input line");
  arch.validate();
  return arch;
}

Architecture mlp_architecture(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                              std::size_t num_classes, const Normalization* norm) {
  Architecture a;
  a.name = "mlp";
  a.input_shape = input_shape;
  a.num_classes = num_classes;
  if (norm) a.layers.push_back({.kind = LayerKind::normalize, .mean = norm->mean, .stddev = norm->stddev});
  a.layers.push_back({.kind = LayerKind::flatten});
  std::size_t width = shape_numel(input_shape);
  for (std::size_t h : hidden) {
    a.layers.push_back({.kind = LayerKind::dense, .in = width, .out = h});
    a.layers.push_back({.kind = LayerKind::relu});
    width = h;
  }
  a.layers.push_back({.kind = LayerKind::dense, .in = width, .out = num_classes});
  a.validate();
  return a;
}

Architecture small_cnn_architecture(const Shape& input_shape, std::size_t num_classes, const Normalization* norm) {
  if (input_shape.size() != 3) throw ShapeError("small_cnn: input shape must be C,H,W");
  Architecture a;
  a.name = "small_cnn";
  a.input_shape = input_shape;
  a.num_classes = num_classes;
  if (norm) a.layers.push_back({.kind = LayerKind::normalize, .mean = norm->mean, .stddev = norm->stddev});
  const std::size_t c = input_shape[0];
  a.layers.push_back({.kind = LayerKind::conv2d, .in = c, .out = 32, .kernel = 3, .padding = 1});
  a.layers.push_back({.kind = LayerKind::relu});
  a.layers.push_back({.kind = LayerKind::conv2d, .in = 32, .out = 32, .kernel = 3, .padding = 1});
  a.layers.push_back({.kind = LayerKind::relu});
  a.layers.push_back({.kind = LayerKind::max_pool2d, .kernel = 2});
  a.layers.push_back({.kind = LayerKind::conv2d, .in = 32, .out = 64, .kernel = 3, .padding = 1});
  a.layers.push_back({.kind = LayerKind::relu});
  a.layers.push_back({.kind = LayerKind::max_pool2d, .kernel = 2});
  a.layers.push_back({.kind = LayerKind::flatten});
  const std::size_t feat = 64 * (input_shape[1] / 4) * (input_shape[2] / 4);
  a.layers.push_back({.kind = LayerKind::dense, .in = feat, .out = num_classes});
  a.validate();
  return a;
}

Architecture linear_architecture(const Shape& input_shape, std::size_t num_classes) {
  Architecture a = mlp_architecture(input_shape, {}, num_classes);
  a.name = "linear";
  return a;
}

Model::Model(Architecture arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
  const Rng root(init_seed);
  std::uint64_t stream = 0;
  std::size_t fan_in = 1;
  for (const auto& [name, shape] : arch_.parameter_shapes()) {
    Rng rng = root.split(stream++);
    // Weights [out, in, ...] precede their bias, which reuses the same fan-in.
    if (shape.size() > 1) fan_in = shape_numel(shape) / shape[0];
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    params_.emplace(name, std::move(t));
  }
}

Model::Model(Architecture arch, ParamMap params) : arch_(std::move(arch)), params_(std::move(params)) {
  const auto expected = arch_.parameter_shapes();
  if (expected.size() != params_.size())
    throw ShapeError("model: expected " + std::to_string(expected.size()) + " parameter tensors, got " +
                     std::to_string(params_.size()));
  for (const auto& [name, shape] : expected) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ShapeError("model: missing parameter '" + name + "'");
    if (it->second.shape() != shape)
      throw ShapeError("model: parameter '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                       shape_str(shape));
  }
}

Var Model::forward(Graph& g, Var input, bool train_params) const {
  auto param = [&](const std::string& name) { return g.leaf(params_.at(name), name, train_params); };
  Var x = input;
  const std::size_t batch = input.shape().at(0);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    const std::string p = layer_prefix(i);
    switch (l.kind) {
      case LayerKind::normalize: {
        std::vector<float> scale(l.mean.size()), shift(l.mean.size());
        for (std::size_t c = 0; c < l.mean.size(); ++c) {
          scale[c] = 1.0f / l.stddev[c];
          shift[c] = -l.mean[c] / l.stddev[c];
        }
        x = ops::channel_affine(x, scale, shift);
        break;
      }
      case LayerKind::conv2d:
        x = ops::conv2d(x, param(p + ".weight"), param(p + ".bias"), l.padding);
        break;
      case LayerKind::relu:
        x = ops::relu(x);
        break;
      case LayerKind::max_pool2d:
        x = ops::max_pool2d(x, l.kernel);
        break;
      case LayerKind::flatten:
        x = ops::reshape(x, {batch, x.value().numel() / std::max<std::size_t>(batch, 1)});
        break;
      case LayerKind::dense:
        x = ops::linear(x, param(p + ".weight"), param(p + ".bias"));
        break;
    }
  }
  return x;
}

std::uint64_t Model::param_checksum() const {
  std::uint64_t h = 0;
  for (const auto& [name, t] : params_) h = mix64(h ^ checksum(t));
  return h;
}

void check_batch_shape(const Model& model, const Tensor& batch, std::string_view op) {
  const Shape& in = model.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2])
    throw ShapeError(std::string(op) + ": batch " + shape_str(batch.shape()) + " does not match model input " +
                     shape_str(in));
}

Tensor forward_logits(const Model& model, const Tensor& batch) {
  check_batch_shape(model, batch, "forward_logits");
  if (batch.dim(0) == 0) return Tensor(Shape{0, model.num_classes()});
  Graph g;
  Var x = g.leaf(batch);
  return model.forward(g, x, false).value();
}

namespace {

void check_labels(const Tensor& logits, std::span<const Label> labels, std::string_view op) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError(std::string(op) + ": logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  for (Label y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1))
      throw ShapeError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                       std::to_string(logits.dim(1)) + ")");
}

}  // namespace

std::vector<double> per_example_cross_entropy(const Tensor& logits, std::span<const Label> labels) {
  check_labels(logits, labels, "cross_entropy");
  const std::size_t classes = logits.dim(1);
  std::vector<double> out(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const float* row = logits.ptr() + r * classes;
    const double m = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(static_cast<double>(row[c]) - m);
    out[r] = m + std::log(s) - static_cast<double>(row[labels[r]]);
  }
  return out;
}

float cross_entropy(const Tensor& logits, std::span<const Label> labels) {
  const auto per = per_example_cross_entropy(logits, labels);
  if (per.empty()) throw ShapeError("cross_entropy: empty batch");
  double total = 0.0;
  for (double v : per) total += v;
  return static_cast<float>(total / static_cast<double>(per.size()));
}

Labels predict_labels(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("predict_labels: logits must be [B, C], got " + shape_str(logits.shape()));
  const std::size_t classes = logits.dim(1);
  Labels out(logits.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    const float* row = logits.ptr() + r * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<Label>(best);
  }
  return out;
}

Tensor input_gradient(const Model& model, const Tensor& batch, std::span<const Label> labels) {
  check_batch_shape(model, batch, "input_gradient");
  Graph g;
  Var x = g.leaf(batch, "input", true);
  Var logits = model.forward(g, x, false);
  Var loss = ops::softmax_cross_entropy(logits, labels);
  return g.backward(loss).at("input");
}

LossAndGrads parameter_gradients(const Model& model, const Tensor& batch, std::span<const Label> labels) {
  check_batch_shape(model, batch, "parameter_gradients");
  Graph g;
  Var x = g.leaf(batch);
  Var logits = model.forward(g, x, true);
  Var loss = ops::softmax_cross_entropy(logits, labels);
  LossAndGrads out;
  out.loss = loss.value()[0];
  out.logits = logits.value();
  out.grads = g.backward(loss);
  return out;
}

}  // namespace tpap
