#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tpap/autodiff.hpp"
#include "tpap/tensor.hpp"

namespace tpap {

enum class LayerKind { normalize, conv2d, relu, max_pool2d, flatten, dense };

std::string_view layer_kind_name(LayerKind kind);

/// One layer of an architecture. Only the fields relevant to `kind` are used:
/// normalize: mean/stddev per channel; conv2d: in/out/kernel/padding;
/// max_pool2d: kernel; dense: in/out.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t padding = 0;
  std::vector<float> mean{};
  std::vector<float> stddev{};

  bool operator==(const LayerSpec&) const = default;
};

/// Per-channel dataset statistics folded into the model as its first layer,
/// so that gradients are taken with respect to raw [0,1] pixels.
struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;
};

Normalization cifar10_normalization();
Normalization mnist_normalization();

/// Architecture descriptor: plain data that can be rebuilt from text.
struct Architecture {
  std::string name;
  Shape input_shape;  // C, H, W
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;

  /// Throws ShapeError unless every layer's shapes compose and the network
  /// maps input_shape to num_classes logits.
  void validate() const;

  /// Ordered (name, shape) list of trainable tensors, e.g. "layers.1.weight".
  std::vector<std::pair<std::string, Shape>> parameter_shapes() const;

  std::string to_text() const;
  /// Inverse of to_text(); rejects unknown layer kinds.
  static Architecture from_text(std::string_view text);

  bool operator==(const Architecture&) const = default;
};

/// Fully connected ReLU network: input -> hidden... -> classes.
Architecture mlp_architecture(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                              std::size_t num_classes, const Normalization* norm = nullptr);

/// conv3x3x32 -> relu -> conv3x3x32 -> relu -> pool2 -> conv3x3x64 -> relu ->
/// pool2 -> dense. Convs use padding 1.
Architecture small_cnn_architecture(const Shape& input_shape, std::size_t num_classes,
                                    const Normalization* norm = nullptr);

/// Single dense layer, logits = W x + b.
Architecture linear_architecture(const Shape& input_shape, std::size_t num_classes);

using ParamMap = std::map<std::string, Tensor>;

/// Parameterized classifier. Parameter names are derived from layer indices
/// and are stable across save/load.
class Model {
 public:
  /// Builds the architecture with seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  /// initialization of weights and biases.
  Model(Architecture arch, std::uint64_t init_seed);
  /// Adopts existing parameters; names and shapes must match the architecture.
  Model(Architecture arch, ParamMap params);

  const Architecture& arch() const noexcept { return arch_; }
  const Shape& input_shape() const noexcept { return arch_.input_shape; }
  std::size_t num_classes() const noexcept { return arch_.num_classes; }

  const ParamMap& params() const noexcept { return params_; }
  ParamMap& mutable_params() noexcept { return params_; }

  /// Records the forward pass into `g`. Parameters enter as named leaves and
  /// require grad only when `train_params` is set.
  Var forward(Graph& g, Var input, bool train_params) const;

  /// Combined checksum of all parameters.
  std::uint64_t param_checksum() const;

 private:
  Architecture arch_;
  ParamMap params_;
};

/// Validates that `batch` is [B, C, H, W] with C, H, W equal to the model input.
void check_batch_shape(const Model& model, const Tensor& batch, std::string_view op);

/// Logits [B, num_classes] for a batch of images.
Tensor forward_logits(const Model& model, const Tensor& batch);

/// Mean softmax cross-entropy; throws on out-of-range labels.
float cross_entropy(const Tensor& logits, std::span<const Label> labels);

/// Per-row cross-entropy in double precision.
std::vector<double> per_example_cross_entropy(const Tensor& logits, std::span<const Label> labels);

/// Row-wise argmax; ties go to the lowest class index.
Labels predict_labels(const Tensor& logits);

/// d CE(model(batch), labels) / d batch, with CE the batch mean.
/// Neither the batch nor the parameters are modified.
Tensor input_gradient(const Model& model, const Tensor& batch, std::span<const Label> labels);

struct LossAndGrads {
  float loss = 0.0f;
  Tensor logits;
  GradMap grads;  // keyed by parameter name
};

/// Mean CE and its gradient with respect to every parameter.
LossAndGrads parameter_gradients(const Model& model, const Tensor& batch, std::span<const Label> labels);

}  // namespace tpap
