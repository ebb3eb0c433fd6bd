#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tpap {

using Shape = std::vector<std::size_t>;

/// Class index in [0, num_classes).
using Label = std::int32_t;
using Labels = std::vector<Label>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major f32 array. Plain value type; differentiation state lives in
/// the Graph that a Tensor is fed into.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor(Shape{1}, std::vector<float>{value}); }
  static Tensor from(std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* ptr() noexcept { return data_.data(); }
  const float* ptr() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Same data viewed with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(float value);

  /// Bitwise equality of shape and payload.
  bool bit_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Elementwise max |a - b|; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);

/// Concatenate along axis 0; trailing dims must match.
Tensor concat_rows(std::span<const Tensor> parts);

/// FNV-1a over the raw bytes of the payload and shape. Used to assert that
/// inputs and parameters are left untouched by read-only operations.
std::uint64_t checksum(const Tensor& t);

}  // namespace tpap
